# every agent outputs true
dims: false true
cube: false[0,0]
