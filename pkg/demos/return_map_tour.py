"""Walk a single section point through the closed-form return map and check
each step against the event-driven simulation of the two balls."""

import numpy as np

from fallingballs import SectionPoint, jacobian_dt, map_t, poincare_return, region_of, roof_tau
from fallingballs.core import fixed_point

m = 0.7
p = SectionPoint(0.3, -1.0)

print(f"m = {m}")
print(" k        h           z      region    tau      det DT   |sim - map|")
for k in range(12):
    n = region_of(p, m)
    q = map_t(p, m)
    r = poincare_return(p, m)
    det = np.linalg.det(jacobian_dt(p, m))
    dev = max(abs(r.point.h - q.h), abs(r.point.z - q.z), abs(r.time - roof_tau(p, m)))
    print(f"{k:2d} {p.h:11.7f} {p.z:11.7f} {n:6d} {roof_tau(p, m):9.6f} {det:10.7f} {dev:10.2e}")
    p = q

for n in (0, 1):
    pt, physical = fixed_point(n, m)
    print(f"F_{n} = ({pt.h:.7f}, {pt.z:.7f})  physical={physical}")
