# no large and at most two small, or at least three large and no small
dims: small large
cube: small[0,2] large[0,0]
cube: small[0,0] large[3,*]
