# Plug-in Wasserstein barycenter of two measures: push the source atoms
# halfway along the estimated map.

import numpy as np

from otmap.applications import plugin_barycenter
from otmap.ot_core import DiscreteMeasure

two = plugin_barycenter(DiscreteMeasure.uniform(np.array([[0.0], [1.0]])),
                        DiscreteMeasure.uniform(np.array([[0.0], [2.0]])))
print("atoms", two.atoms.ravel(), "weights", two.weights)

# U[0,1] and U[2,4] have barycenter U[1,2.5]
rng = np.random.default_rng(0)
for n in (128, 1024):
    bary = plugin_barycenter(DiscreteMeasure.uniform(rng.uniform(0, 1, (n, 1))),
                             DiscreteMeasure.uniform(rng.uniform(2, 4, (n, 1))))
    a = np.sort(bary.atoms.ravel())
    q = 1.0 + 1.5 * (np.arange(n) + 0.5) / n
    print(f"n={n:5d}  range [{a.min():.3f}, {a.max():.3f}]  W2^2 to U[1,2.5] ~ {np.mean((a - q) ** 2):.2e}")
