# at least one agent outputs x
dims: x y z
cube: x[1,*]
