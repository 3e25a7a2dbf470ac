# The stability inequality: the map error of the empirical plan is
# controlled by dual terms that can be computed from the data.

import numpy as np

from otmap.baryproj import stability_report
from otmap.synthetic import coordinate_map, make_separable_problem, sample_pair

problem = make_separable_problem(2, [coordinate_map("cubic"), coordinate_map("tanh", amp=0.5)])
print("Lipschitz constant of the true map:", round(problem.L, 4))

for m, n in [(20, 20), (50, 100), (100, 50), (200, 200)]:
    rep = stability_report(*sample_pair(problem, m, n, (7, m, n)), problem)
    print(f"m={m:3d} n={n:3d}  lhs {rep.lhs:.4f}  rhs {rep.rhs:.4f}  "
          f"(max term {rep.rhs_max_term:.4f}, phi term {rep.rhs_phi_term:.4f})  holds={rep.holds}")
