"""Smoothed density estimators used to build smooth plug-in measures.

Kernel route: a univariate higher-order kernel built from Hermite functions,
tensorised over coordinates; the raw estimate can go negative, so the
usable density is its positive part renormalised, sampled by accept-reject
against the mixture of |K|-shaped bumps centred at the data.

Wavelet route: truncated tensor-Haar series with empirical coefficients on
the unit cube (data are affinely rescaled into it).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
from numpy.polynomial import hermite_e, polynomial

__all__ = [
    "KernelSpec",
    "hermite_kernel",
    "kernel_moments",
    "bandwidth",
    "SmoothedDensity",
    "fit_kde",
    "kde_eval",
    "sample_positive_part",
    "SamplingError",
    "WaveletDensity",
    "wavelet_level",
    "haar_wavelet_fit",
]

_SQRT2PI = math.sqrt(2.0 * math.pi)


class SamplingError(RuntimeError):
    """Accept-reject sampler rejected almost everything."""


def _gauss_legendre(a: float, b: float, panels: int, order: int = 32) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    half = np.diff(edges) / 2
    mid = (edges[:-1] + edges[1:]) / 2
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


@dataclass(frozen=True)
class KernelSpec:
    """Symmetric univariate kernel K(u) = p(u) exp(-u^2/2) / sqrt(2 pi).

    ``poly`` holds the power-basis coefficients of the even polynomial p.
    """

    s: int
    poly: np.ndarray = field(repr=False)
    support_radius: float
    abs_mass: float
    proposal_scale: float = field(repr=False)
    envelope: float = field(repr=False)

    @property
    def order(self) -> int:
        return 2 * self.s + 2

    def __call__(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return polynomial.polyval(u, self.poly) * np.exp(-0.5 * u * u) / _SQRT2PI

    eval = __call__

    def sample_abs(self, rng: np.random.Generator, size) -> np.ndarray:
        """Exact draws from |K| / int |K| by rejection from N(0, sigma^2)."""
        shape = (size,) if np.isscalar(size) else tuple(size)
        total = int(np.prod(shape))
        sig = self.proposal_scale
        out = np.empty(total)
        filled = 0
        while filled < total:
            batch = int(1.3 * (total - filled) * self.envelope / self.abs_mass) + 16
            z = rng.normal(scale=sig, size=batch)
            prop = np.exp(-0.5 * (z / sig) ** 2) / (sig * _SQRT2PI)
            keep = z[rng.uniform(size=batch) * self.envelope * prop < np.abs(self(z))]
            take = min(keep.size, total - filled)
            out[filled : filled + take] = keep[:take]
            filled += take
        return out.reshape(shape)


def _split_nodes(poly: np.ndarray, R: float, panels: int = 8) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre on [-R, R] with breakpoints at the real roots of poly (kinks of |K|)."""
    roots = np.roots(poly[::-1]) if len(poly) > 1 else np.array([])
    real = np.sort(roots[np.abs(roots.imag) < 1e-12].real)
    edges = np.concatenate([[-R], real[(real > -R) & (real < R)], [R]])
    parts = [_gauss_legendre(a, b, panels) for a, b in zip(edges[:-1], edges[1:])]
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def kernel_moments(kernel: KernelSpec, jmax: int, absolute: bool = False) -> np.ndarray:
    """int u^j K(u) du (or int |u|^j |K(u)| du) for j = 0..jmax by Gauss-Legendre."""
    u, w = _split_nodes(kernel.poly, kernel.support_radius + 10.0)
    k = kernel(u)
    if absolute:
        return np.array([np.sum(w * np.abs(u) ** j * np.abs(k)) for j in range(jmax + 1)])
    return np.array([np.sum(w * u**j * k) for j in range(jmax + 1)])


@lru_cache(maxsize=None)
def hermite_kernel(s: int) -> KernelSpec:
    """Order-(2s+2) kernel sum_{m<=2s+2} He_m(0) He_m(u) / m! * phi(u).

    He_m are the probabilists' Hermite polynomials, orthogonal under the
    standard normal density phi, so int u^j K = [j == 0] for j <= 2s+2.
    """
    if s < 0 or int(s) != s:
        raise ValueError("s must be a non-negative integer")
    s = int(s)
    top = 2 * s + 2
    eye = np.eye(top + 1)
    coef = np.array([hermite_e.hermeval(0.0, eye[m]) / math.factorial(m) for m in range(top + 1)])
    poly = hermite_e.herme2poly(coef)
    poly.setflags(write=False)

    def K(u):
        return polynomial.polyval(u, poly) * np.exp(-0.5 * u * u) / _SQRT2PI

    u, w = _split_nodes(poly, 60.0, panels=30)
    w = np.where(u >= 0, w, 0.0)
    tail = np.cumsum((w * np.abs(K(u)))[::-1])[::-1]
    radius = float(u[np.argmax(tail < 0.5e-10)])
    abs_mass = float(2.0 * np.sum(w * np.abs(K(u))))

    grid = np.linspace(0.0, radius + 5.0, 200_001)
    best = (np.inf, 1.0)
    for sig in np.linspace(1.05, 3.0, 40):
        prop = np.exp(-0.5 * (grid / sig) ** 2) / (sig * _SQRT2PI)
        c = float(np.max(np.abs(K(grid)) / prop))
        best = min(best, (c, float(sig)))
    env, sig = best
    spec = KernelSpec(s, poly, radius, abs_mass, sig, 1.01 * env)

    mom = kernel_moments(spec, 2 * s + 1)
    if abs(mom[0] - 1.0) > 1e-6 or np.any(np.abs(mom[1:]) > 1e-6):
        raise ArithmeticError(f"Hermite kernel moment check failed: {mom}")
    return spec


def bandwidth(n: float, d: int, s: int) -> float:
    """h = n^{-1/(d+2s)} log n (natural log)."""
    if n < 2:
        raise ValueError("bandwidth needs n >= 2")
    return float(n ** (-1.0 / (d + 2 * s)) * math.log(n))


@dataclass(frozen=True)
class SmoothedDensity:
    """Product-kernel density estimate of a sample.

    ``mode='raw'`` evaluates the (possibly negative) kernel estimate;
    ``mode='normalized'`` evaluates max(f, 0) / int max(f, 0).
    """

    sample: np.ndarray
    kernel: KernelSpec
    bandwidth: float
    mode: str = "normalized"

    def __post_init__(self):
        x = np.array(self.sample, dtype=float, copy=True)
        if x.ndim == 1:
            x = x[:, None]
        if x.shape[0] == 0:
            raise ValueError("empty sample")
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")
        if self.mode not in ("raw", "normalized"):
            raise ValueError(f"unknown mode {self.mode!r}")
        x.setflags(write=False)
        object.__setattr__(self, "sample", x)

    @property
    def dim(self) -> int:
        return self.sample.shape[1]

    def _sums(self, x, chunk: int = 1 << 21) -> tuple[np.ndarray, np.ndarray]:
        """Signed and absolute kernel sums at the rows of x, in one pass."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.dim:
            raise ValueError(f"query is {x.shape[1]}-d, data are {self.dim}-d")
        m, d, h = self.sample.shape[0], self.dim, self.bandwidth
        signed = np.empty(x.shape[0])
        absolute = np.empty(x.shape[0])
        step = max(1, chunk // m)
        poly = self.kernel.poly
        for s in range(0, x.shape[0], step):
            q = x[s : s + step]
            prod = np.ones((q.shape[0], m))
            sq = np.zeros((q.shape[0], m))
            for k in range(d):
                u = (self.sample[None, :, k] - q[:, None, k]) / h
                prod *= polynomial.polyval(u, poly)
                sq += u * u
            gauss = np.exp(-0.5 * sq)
            signed[s : s + step] = np.einsum("ij,ij->i", prod, gauss)
            absolute[s : s + step] = np.einsum("ij,ij->i", np.abs(prod), gauss)
        scale = m * h**d * _SQRT2PI**d
        return signed / scale, absolute / scale

    def raw(self, x) -> np.ndarray:
        """(1 / (m h^d)) sum_i prod_k K((X_ik - x_k) / h)."""
        return self._sums(x)[0]

    def envelope(self, x) -> np.ndarray:
        """Same sum with |K|; dominates max(raw, 0) and integrates to (int|K|)^d."""
        return self._sums(x)[1]

    def __call__(self, x) -> np.ndarray:
        f = self.raw(x)
        if self.mode == "raw":
            return f
        return np.maximum(f, 0.0) / self.norm_constant

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        r = self.kernel.support_radius * self.bandwidth
        return self.sample.min(axis=0) - r, self.sample.max(axis=0) + r

    @cached_property
    def norm_constant(self) -> float:
        """int max(f_raw, 0): tensor Gauss-Legendre for d <= 3, importance sampling above."""
        if self.dim <= 3:
            return float(grid_integral(lambda z: np.maximum(self.raw(z), 0.0), *self.bounding_box(), self.bandwidth))
        # E_env[f+/env] * (int|K|)^d with draws from the |K| mixture
        rng = np.random.default_rng(0)
        z = self._propose(rng, 200_000)
        raw, env = self._sums(z)
        ratio = np.maximum(raw, 0.0) / env
        return float(ratio.mean() * self.kernel.abs_mass**self.dim)

    def _propose(self, rng: np.random.Generator, count: int) -> np.ndarray:
        idx = rng.integers(0, self.sample.shape[0], size=count)
        noise = self.kernel.sample_abs(rng, (count, self.dim))
        return self.sample[idx] + self.bandwidth * noise


def grid_integral(func, low, high, h: float, max_points: int = 2_000_000) -> float:
    """Tensor composite Gauss-Legendre integral over a box, resolution tied to h."""
    low, high = np.atleast_1d(low), np.atleast_1d(high)
    d = low.size
    per_dim = int(min(np.max(np.ceil((high - low) / h * 8)), max_points ** (1.0 / d)))
    order = 8
    panels = max(1, per_dim // order)
    axes = [_gauss_legendre(lo, hi, panels, order) for lo, hi in zip(low, high)]
    nodes = np.stack(np.meshgrid(*[a[0] for a in axes], indexing="ij"), axis=-1).reshape(-1, d)
    w = axes[0][1]
    for a in axes[1:]:
        w = np.multiply.outer(w, a[1])
    w = w.ravel()
    total = 0.0
    step = 200_000
    for s in range(0, nodes.shape[0], step):
        total += float(w[s : s + step] @ func(nodes[s : s + step]))
    return total


def fit_kde(sample, s: int, h: float | None = None, mode: str = "normalized", scale: float = 1.0) -> SmoothedDensity:
    """KDE with the order-(2s+2) Hermite kernel; default h = scale * bandwidth(m, d, s)."""
    x = np.atleast_2d(np.asarray(sample, dtype=float))
    if x.shape[0] == 1 and x.shape[1] > 1 and np.ndim(sample) == 1:
        x = x.T
    if h is None:
        h = scale * bandwidth(max(x.shape[0], 2), x.shape[1], s)
    return SmoothedDensity(x, hermite_kernel(s), h, mode)


def kde_eval(f: SmoothedDensity, x) -> float | np.ndarray:
    """Evaluate at one point (returns a float) or at rows of an array."""
    x = np.asarray(x, dtype=float)
    if x.ndim <= 1:
        return float(f(x.reshape(1, -1))[0])
    return f(x)


def sample_positive_part(f: SmoothedDensity, count: int, seed, return_rate: bool = False):
    """Draws from max(f, 0) / int max(f, 0) without computing the integral.

    Proposal: pick a data point uniformly, add h * (iid draws from |K|/int|K|)
    per coordinate; its density is envelope / (int|K|)^d and envelope >= f+,
    so accepting with probability f+(z) / envelope(z) is exact.
    """
    if f.mode != "normalized":
        raise ValueError("sampling needs the positive-part normalised mode")
    rng = np.random.default_rng(seed)
    out = np.empty((count, f.dim))
    filled, proposed, accepted = 0, 0, 0
    rate = 1.0 / f.kernel.abs_mass**f.dim
    while filled < count:
        batch = int(1.2 * (count - filled) / max(rate, 1e-3)) + 32
        z = f._propose(rng, batch)
        raw, env = f._sums(z)
        keep = rng.uniform(size=batch) * env < raw
        proposed += batch
        accepted += int(keep.sum())
        rate = accepted / proposed
        if proposed > 10_000 and rate < 1e-3:
            raise SamplingError(f"acceptance rate {rate:.2e} below 1e-3")
        good = z[keep][: count - filled]
        out[filled : filled + good.shape[0]] = good
        filled += good.shape[0]
    return (out, rate) if return_rate else out


# ---------------------------------------------------------------------------
# tensor Haar
# ---------------------------------------------------------------------------


def wavelet_level(n: int, d: int, s: float) -> int:
    """Smallest J with 2^J >= n^{1/(d+2s)}, pulled down to keep 2^J <= n^{1/d}."""
    lo = math.log2(n) / (d + 2 * s) if n > 1 else 0.0
    hi = math.log2(n) / d if n > 1 else 0.0
    J = math.ceil(lo - 1e-12)
    if J > hi + 1e-12:
        J = math.floor(hi + 1e-12)
    return max(J, 0)


def _cell_index(u: np.ndarray, level: int) -> np.ndarray:
    k = np.floor(u * 2**level).astype(np.int64)
    return np.clip(k, 0, 2**level - 1)


def _flat(k: np.ndarray, level: int) -> np.ndarray:
    """Row-major flat index of a d-dim cell multi-index."""
    d = k.shape[1]
    base = 2**level
    return k @ (base ** np.arange(d - 1, -1, -1, dtype=np.int64))


def _type_signs(u: np.ndarray, level: int) -> np.ndarray:
    """Value / 2^{jd/2} of each of the 2^d - 1 tensor detail functions at u."""
    d = u.shape[1]
    half = np.floor(u * 2 ** (level + 1)).astype(np.int64) % 2
    half = np.where(u >= 1.0, 1, half)
    sign = 1 - 2 * half
    masks = np.arange(1, 2**d)
    bits = (masks[:, None] >> np.arange(d)[None, :]) & 1
    # prod over i in mask of sign_i
    return np.prod(np.where(bits[None, :, :] == 1, sign[:, None, :], 1), axis=2)


@dataclass(frozen=True)
class WaveletDensity:
    """Truncated tensor-Haar density estimate on the unit cube.

    The series keeps the constant scaling function and detail levels
    j = 0..level; by telescoping it is the histogram on cells of side
    2^{-(level+1)}.  ``low``/``high`` map data coordinates into [0,1]^d.
    """

    sample: np.ndarray = field(repr=False)
    level: int
    low: np.ndarray
    high: np.ndarray
    scaling: float
    details: tuple[np.ndarray, ...] = field(repr=False)
    mode: str = "normalized"

    @property
    def dim(self) -> int:
        return self.sample.shape[1]

    @property
    def resolution(self) -> int:
        return self.level + 1

    def to_unit(self, x) -> np.ndarray:
        return (np.atleast_2d(x) - self.low) / (self.high - self.low)

    def from_unit(self, u) -> np.ndarray:
        return self.low + np.atleast_2d(u) * (self.high - self.low)

    def series(self, x) -> np.ndarray:
        """Raw truncated series at data-space points, as a density on the unit cube."""
        u = self.to_unit(x)
        inside = np.all((u >= 0) & (u <= 1), axis=1)
        val = np.full(u.shape[0], self.scaling)
        for j, coef in enumerate(self.details):
            k = _flat(_cell_index(u, j), j)
            signs = _type_signs(u, j)
            val += 2.0 ** (j * self.dim / 2) * np.sum(coef[k] * signs, axis=1)
        return np.where(inside, val, 0.0)

    @cached_property
    def cell_density(self) -> np.ndarray:
        """Histogram heights on the level-(J+1) grid, as a density on the unit cube."""
        r = self.resolution
        u = self.to_unit(self.sample)
        counts = np.bincount(_flat(_cell_index(u, r), r), minlength=2 ** (r * self.dim))
        return counts / u.shape[0] * 2.0 ** (r * self.dim)

    def histogram(self, x) -> np.ndarray:
        u = self.to_unit(x)
        inside = np.all((u >= 0) & (u <= 1), axis=1)
        vals = self.cell_density[_flat(_cell_index(u, self.resolution), self.resolution)]
        return np.where(inside, vals, 0.0)

    def __call__(self, x) -> np.ndarray:
        """Density in data coordinates (Jacobian of the rescaling included)."""
        jac = float(np.prod(self.high - self.low))
        f = self.histogram(x) / jac
        if self.mode == "raw":
            return f
        # Haar partial sums are histograms, hence already non-negative with unit mass
        return np.maximum(f, 0.0)

    def sample_cells(self, count: int, seed) -> np.ndarray:
        """Exact draws: pick a cell by its mass, then a uniform point inside."""
        rng = np.random.default_rng(seed)
        r, d = self.resolution, self.dim
        mass = np.maximum(self.cell_density, 0.0)
        cells = rng.choice(mass.size, size=count, p=mass / mass.sum())
        base = 2**r
        k = np.stack([(cells // base ** (d - 1 - i)) % base for i in range(d)], axis=1)
        u = (k + rng.uniform(size=(count, d))) / base
        return self.from_unit(u)


def haar_wavelet_fit(
    sample, d: int | None = None, s: float = 0, n: int | None = None, *,
    level: int | None = None, box=None, mode: str = "normalized",
) -> WaveletDensity:
    """Empirical tensor-Haar coefficients a = mean phi(X_i), b = mean psi(X_i).

    ``n`` only sets the truncation level (default: the sample size);
    ``level`` overrides it outright.
    """
    x = np.array(sample, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] == 0:
        raise ValueError("empty sample")
    if d is not None and x.shape[1] != d:
        raise ValueError(f"sample is {x.shape[1]}-d, expected {d}")
    d = x.shape[1]
    n = x.shape[0] if n is None else int(n)
    if box is None:
        lo, hi = x.min(axis=0), x.max(axis=0)
        span = hi - lo
        pad = np.where(span > 0, 0.5 * span / x.shape[0], 0.5)
        lo, hi = lo - pad, hi + pad
    else:
        lo, hi = (np.broadcast_to(np.asarray(v, dtype=float), (d,)).copy() for v in box)
    J = wavelet_level(n, d, s) if level is None else int(level)
    u = (x - lo) / (hi - lo)
    if np.any(u < 0) or np.any(u > 1):
        raise ValueError("sample falls outside the rescaling box")
    details = []
    for j in range(J + 1):
        k = _flat(_cell_index(u, j), j)
        vals = 2.0 ** (j * d / 2) * _type_signs(u, j)
        coef = np.zeros((2 ** (j * d), 2**d - 1))
        np.add.at(coef, k, vals)
        coef /= x.shape[0]
        coef.setflags(write=False)
        details.append(coef)
    x.setflags(write=False)
    return WaveletDensity(x, J, lo, hi, 1.0, tuple(details), mode)
