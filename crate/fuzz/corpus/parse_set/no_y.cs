# nobody outputs y
dims: x y z
cube: y[0,0]
