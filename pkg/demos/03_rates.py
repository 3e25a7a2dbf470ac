# Monte-Carlo convergence rates of the plug-in map estimator, with a
# log-log slope fit against the sample size.

import numpy as np

from otmap.experiments import EstimatorKind, run_rate_experiment
from otmap.synthetic import make_linear_problem

for d, A in [(2, np.diag([2.0, 1.0])), (5, np.diag([2.0, 1.5, 1.0, 1.0, 0.5]))]:
    problem = make_linear_problem(d, A)
    rep = run_rate_experiment(EstimatorKind("discrete-discrete"), problem, [64, 128, 256, 512], reps=8, seed=d)
    print(rep.summary())

# In d=2 the fitted slope comes out steeper than the nominal -1/2: the
# squared error there decays like (log n)/n, which a short grid cannot
# tell apart from a power close to -1.
