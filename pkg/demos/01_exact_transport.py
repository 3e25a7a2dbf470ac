# Exact discrete OT between two small clouds, with the dual potentials
# and the barycentric projection that turns the plan into a map.

import numpy as np

from otmap.baryproj import barycentric_projection, map_l2_error
from otmap.ot_core import DiscreteMeasure, brute_force_ot, solve_ot
from otmap.synthetic import make_linear_problem, sample_pair

rng = np.random.default_rng(0)

# two weighted clouds in the plane
src = DiscreteMeasure.normalized(rng.normal(size=(5, 2)), rng.uniform(0.2, 1.0, 5))
tgt = DiscreteMeasure.normalized(rng.normal(size=(4, 2)) + 1.0, rng.uniform(0.2, 1.0, 4))

plan = solve_ot(src, tgt)
print("transport cost <x, y> maximised:", round(plan.cost, 6))
print("brute-force oracle:            ", round(brute_force_ot(src, tgt).cost, 6))

# psi_i + psi*_j >= <x_i, y_j>, with equality on the support of the plan
slack = plan.duals.psi[:, None] + plan.duals.psi_star[None, :] - src.points @ tgt.points.T
print("min slack (should be >= 0):", slack.min())
print("max slack on the plan:     ", np.abs(slack[plan.rows, plan.cols]).max())

# plan -> map: each source atom goes to the conditional mean of its targets
bmap = barycentric_projection(plan)
print("images of the source atoms:\n", bmap.images.round(3))

# on a problem with a known map the projection error can be measured
problem = make_linear_problem(2, np.diag([2.0, 1.0]))
for n in (64, 256, 1024):
    a, b = sample_pair(problem, n, n, (1, n))
    err = map_l2_error(barycentric_projection(solve_ot(a, b, duals=False)), problem.transport)
    print(f"n={n:5d}  squared L2 map error {err:.4f}")
