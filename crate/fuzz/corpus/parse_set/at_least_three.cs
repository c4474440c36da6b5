# predicate over input states: C(q1) >= 3
dims: q1
cube: q1[3,*]
