"""Plug-in barycenter of two measures and the OT-rank HSIC independence test.

The test maps each sample onto a fresh uniform reference cloud by an exact
assignment and computes the HSIC V-statistic on the matched reference
points.  Under independence the pair of matchings is a uniformly random
pairing of two i.i.d. uniform clouds, so n * statistic has one law for every
pair of continuous marginals and can be tabulated once by simulation.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist, pdist

from otmap.baryproj import BarycentricMap, barycentric_projection
from otmap.ot_core import DiscreteMeasure, solve_ot

__all__ = [
    "BarycenterEstimate",
    "plugin_barycenter",
    "GaussianKernel",
    "median_bandwidth",
    "semi_discrete_rank_map",
    "hsic_statistic",
    "hsic_from_grams",
    "null_statistics",
    "null_quantile",
    "IndepTestResult",
    "indep_test",
    "population_hsic",
    "gaussian_copula_sample",
]


# ---------------------------------------------------------------------------
# barycenter
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BarycenterEstimate:
    atoms: np.ndarray
    weights: np.ndarray

    def measure(self) -> DiscreteMeasure:
        return DiscreteMeasure(self.atoms, self.weights)


def plugin_barycenter(src: DiscreteMeasure, tgt: DiscreteMeasure) -> BarycenterEstimate:
    """(Id/2 + T_hat/2) pushed forward through the source atoms."""
    bmap = barycentric_projection(solve_ot(src, tgt, duals=False))
    atoms = 0.5 * src.points + 0.5 * bmap.images
    return BarycenterEstimate(atoms, src.weights.copy())


# ---------------------------------------------------------------------------
# kernels and rank maps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GaussianKernel:
    """k(a, b) = exp(-|a - b|^2 / (2 sigma^2))."""

    sigma: float

    def gram(self, a: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
        b = a if b is None else b
        return np.exp(-cdist(a, b, "sqeuclidean") / (2.0 * self.sigma**2))

    def __call__(self, a, b) -> np.ndarray:
        a, b = np.atleast_2d(a), np.atleast_2d(b)
        return np.exp(-np.sum((a - b) ** 2, axis=1) / (2.0 * self.sigma**2))

    def key(self) -> str:
        return f"gaussian:{self.sigma!r}"


def median_bandwidth(points: np.ndarray) -> float:
    """Median pairwise distance (the median heuristic)."""
    points = np.atleast_2d(points)
    if points.shape[0] < 2:
        return 1.0
    med = float(np.median(pdist(points)))
    return med if med > 0 else 1.0


def _reference_kernel(d: int, seed: int = 12345, size: int = 1000) -> GaussianKernel:
    """Median heuristic on a fixed uniform reference cloud, so the kernel depends only on d."""
    ref = np.random.default_rng([seed, d]).uniform(size=(size, d))
    return GaussianKernel(median_bandwidth(ref))


def semi_discrete_rank_map(data: DiscreteMeasure, reference_sampler: Callable | None = None, seed=None) -> BarycentricMap:
    """Match the n data atoms to n reference draws by an exact assignment.

    ``reference_sampler(rng, n)`` defaults to U[0,1]^d.
    """
    n, d = data.size, data.dim
    if not data.is_uniform():
        raise ValueError("rank maps need equally weighted data")
    rng = np.random.default_rng(seed)
    ref = reference_sampler(rng, n) if reference_sampler else rng.uniform(size=(n, d))
    ref = np.asarray(ref, dtype=float).reshape(n, -1)
    _, cols = linear_sum_assignment(cdist(data.points, ref, "sqeuclidean"))
    return BarycentricMap(data, ref[cols])


# ---------------------------------------------------------------------------
# statistic
# ---------------------------------------------------------------------------


def hsic_from_grams(K1: np.ndarray, K2: np.ndarray) -> float:
    """n^-2 sum K1 K2 + n^-4 sum K1 sum K2 - 2 n^-3 sum_i (K1 1)_i (K2 1)_i."""
    n = K1.shape[0]
    r1, r2 = K1.sum(axis=1), K2.sum(axis=1)
    return float(np.sum(K1 * K2) / n**2 + r1.sum() * r2.sum() / n**4 - 2.0 * (r1 @ r2) / n**3)


def hsic_statistic(x_map: BarycentricMap, y_map: BarycentricMap, kernel1=None, kernel2=None) -> float:
    a, b = x_map.images, y_map.images
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"paired maps differ in size ({a.shape[0]} vs {b.shape[0]})")
    kernel1 = kernel1 or _reference_kernel(a.shape[1])
    kernel2 = kernel2 or _reference_kernel(b.shape[1])
    return hsic_from_grams(kernel1.gram(a), kernel2.gram(b))


# ---------------------------------------------------------------------------
# null distribution
# ---------------------------------------------------------------------------


def _uniform_sampler(d):
    return lambda rng, n: rng.uniform(size=(n, d))


def null_statistics(n: int, d1: int, d2: int, kernel1, kernel2, draws: int, seed, marginals=None) -> np.ndarray:
    """n * statistic on ``draws`` independent datasets with X independent of Y.

    The whole procedure (fresh references included) is rerun per draw.
    ``marginals=(sx, sy)`` overrides the U[0,1] data laws; by
    distribution-freeness this must not change the result in law.
    """
    sx, sy = marginals or (_uniform_sampler(d1), _uniform_sampler(d2))
    out = np.empty(draws)
    for i, child in enumerate(np.random.SeedSequence(seed).spawn(draws)):
        s_data, s_u, s_v = child.spawn(3)
        rng = np.random.default_rng(s_data)
        x = DiscreteMeasure.uniform(np.asarray(sx(rng, n)).reshape(n, d1))
        y = DiscreteMeasure.uniform(np.asarray(sy(rng, n)).reshape(n, d2))
        tx = semi_discrete_rank_map(x, seed=s_u)
        ty = semi_discrete_rank_map(y, seed=s_v)
        out[i] = n * hsic_statistic(tx, ty, kernel1, kernel2)
    return out


def _cache_path(n, d1, d2, kernel1, kernel2, draws, seed) -> Path | None:
    root = os.environ.get("OTMAP_CACHE_DIR")
    if not root:
        return None
    khash = hashlib.sha256(f"{kernel1.key()}|{kernel2.key()}".encode()).hexdigest()[:16]
    return Path(root) / f"null_n{n}_d{d1}x{d2}_k{khash}_draws{draws}_seed{seed}.json"


def null_quantile(
    n: int, alpha: float, d1: int, d2: int, kernel1=None, kernel2=None, draws: int = 1000, seed: int = 0
) -> float:
    """Upper (1 - alpha) quantile of the universal null law of n * statistic.

    Null samples are cached as JSON under $OTMAP_CACHE_DIR when it is set.
    """
    if draws < 200:
        raise ValueError("need at least 200 null draws")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    kernel1 = kernel1 or _reference_kernel(d1)
    kernel2 = kernel2 or _reference_kernel(d2)
    path = _cache_path(n, d1, d2, kernel1, kernel2, draws, seed)
    stats = None
    if path is not None and path.exists():
        try:
            stats = np.array(json.loads(path.read_text())["null"], dtype=float)
        except (ValueError, KeyError):
            stats = None
    if stats is None:
        stats = null_statistics(n, d1, d2, kernel1, kernel2, draws, seed)
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            payload = {"n": n, "d1": d1, "d2": d2, "kernels": [kernel1.key(), kernel2.key()],
                       "draws": draws, "seed": seed, "null": stats.tolist()}
            tmp = path.with_suffix(".tmp")
            tmp.write_text(json.dumps(payload))
            tmp.replace(path)
    return float(np.quantile(stats, 1.0 - alpha, method="higher"))


# ---------------------------------------------------------------------------
# the test
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IndepTestResult:
    statistic: float
    n_times_stat: float
    critical_value: float
    reject: bool
    alpha: float
    null_draws: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def indep_test(paired_sample, alpha: float = 0.05, config: dict | None = None, seed=0) -> IndepTestResult:
    """Reject independence when n * statistic >= the simulated critical value.

    ``paired_sample`` is (X, Y) with n rows each.  ``config`` may set
    ``null_draws`` (default 1000), ``null_seed`` and ``critical_value``
    (skips the simulation).
    """
    config = dict(config or {})
    x, y = (np.asarray(v, dtype=float) for v in paired_sample)
    x = x.reshape(x.shape[0], -1)
    y = y.reshape(y.shape[0], -1)
    n = x.shape[0]
    if y.shape[0] != n:
        raise ValueError("X and Y must have the same number of rows")
    if n < 5:
        raise ValueError("need at least 5 paired observations")
    d1, d2 = x.shape[1], y.shape[1]
    k1, k2 = _reference_kernel(d1), _reference_kernel(d2)
    draws = int(config.get("null_draws", 1000))
    crit = config.get("critical_value")
    if crit is None:
        crit = null_quantile(n, alpha, d1, d2, k1, k2, draws, int(config.get("null_seed", 0)))
    s_u, s_v = np.random.SeedSequence(seed).spawn(2)
    tx = semi_discrete_rank_map(DiscreteMeasure.uniform(x), seed=s_u)
    ty = semi_discrete_rank_map(DiscreteMeasure.uniform(y), seed=s_v)
    stat = hsic_statistic(tx, ty, k1, k2)
    return IndepTestResult(stat, n * stat, float(crit), bool(n * stat >= crit), float(alpha), draws)


def population_hsic(joint_sampler, kernel1, kernel2, mc_size: int, seed, maps=None) -> tuple[float, float]:
    """Monte-Carlo value and standard error of the population HSIC.

    ``joint_sampler(rng, k)`` returns k i.i.d. pairs (X, Y); ``maps=(T1, T2)``
    are the true rank maps (e.g. marginal CDFs in 1D).  Each term uses four
    independent pairs, averaged over ``mc_size`` quadruples.
    """
    if maps is None:
        raise ValueError("population HSIC needs the true maps T1, T2")
    t1, t2 = maps
    rng = np.random.default_rng(seed)
    draws = []
    for _ in range(4):
        x, y = joint_sampler(rng, mc_size)
        draws.append((np.asarray(t1(x)).reshape(mc_size, -1), np.asarray(t2(y)).reshape(mc_size, -1)))
    (u1, v1), (u2, v2), (u3, v3), (u4, v4) = draws
    a12 = kernel1(u1, u2)
    h = a12 * kernel2(v1, v2) + a12 * kernel2(v3, v4) - 2.0 * a12 * kernel2(v1, v3)
    return float(h.mean()), float(h.std(ddof=1) / np.sqrt(mc_size))


def gaussian_copula_sample(rng: np.random.Generator, n: int, rho: float) -> tuple[np.ndarray, np.ndarray]:
    """1D pair with standard normal marginals and correlation rho."""
    z = rng.standard_normal((n, 2))
    x = z[:, 0]
    y = rho * x + np.sqrt(1.0 - rho * rho) * z[:, 1]
    return x[:, None], y[:, None]
