dims: q1
cube: q1[2,*]
