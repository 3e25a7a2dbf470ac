# Higher-order Hermite kernels, the positive-part resampler, and the Haar
# wavelet density used by the smoothed estimators.

import numpy as np

from otmap.smoothing import (
    bandwidth,
    fit_kde,
    haar_wavelet_fit,
    hermite_kernel,
    kernel_moments,
    sample_positive_part,
)

for s in range(3):
    k = hermite_kernel(s)
    mom = kernel_moments(k, 2 * s + 3)
    print(f"s={s}  moments 0..{2 * s + 3}: {np.round(mom, 8)}  int|K| = {k.abs_mass:.4f}")

# kernels of order > 2 go negative, so the KDE is clipped and renormalised
rng = np.random.default_rng(3)
data = rng.uniform(size=(500, 2))
print("literal bandwidth rule, n=500, d=2, s=1:", round(bandwidth(500, 2, 1), 3))
kde = fit_kde(data, s=1, h=0.15)
pts, rate = sample_positive_part(kde, 2000, seed=4, return_rate=True)
print(f"resampled {len(pts)} points, acceptance rate {rate:.2f}, mean {pts.mean(axis=0).round(3)}")

# the Haar partial sum is a histogram at resolution J+1
wav = haar_wavelet_fit(data, s=1)
print("Haar level", wav.level, "-> cells of side", 2.0 ** -wav.resolution)
print("wavelet draws:", wav.sample_cells(5, seed=5).round(3))
