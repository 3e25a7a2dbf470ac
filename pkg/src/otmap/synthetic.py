"""Ground-truth transport problems with closed-form maps and potentials.

Two families are provided, both pushing a compactly supported product
measure ``mu`` forward through the gradient of a convex function:

* linear:    T0(x) = A x + b with A symmetric positive definite;
* separable: T0(x)_k = g_k(x_k) with each g_k smooth and increasing.

Each problem knows its Lipschitz constant, the potential ``phi0`` with
``grad phi0 = T0``, the conjugate ``phi0*`` and the true squared
Wasserstein distance, so estimator errors can be evaluated exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, stats

from otmap.ot_core import DiscreteMeasure

__all__ = [
    "ProductMeasure",
    "CoordinateMap",
    "coordinate_map",
    "SyntheticProblem",
    "make_linear_problem",
    "make_separable_problem",
    "sample_pair",
    "problem_from_dict",
]


@dataclass(frozen=True)
class ProductMeasure:
    """Product of independent 1-D laws on a box: uniform or truncated Gaussian."""

    low: tuple[float, ...]
    high: tuple[float, ...]
    family: str = "uniform"
    loc: tuple[float, ...] | None = None
    scale: tuple[float, ...] | None = None

    def __post_init__(self):
        lo, hi = np.atleast_1d(self.low).astype(float), np.atleast_1d(self.high).astype(float)
        if lo.shape != hi.shape or np.any(hi <= lo):
            raise ValueError("box needs matching low/high with high > low")
        object.__setattr__(self, "low", tuple(lo))
        object.__setattr__(self, "high", tuple(hi))
        if self.family not in ("uniform", "truncnorm"):
            raise ValueError(f"unknown family {self.family!r}")
        if self.family == "truncnorm":
            loc = (lo + hi) / 2 if self.loc is None else np.broadcast_to(self.loc, lo.shape)
            sc = (hi - lo) / 4 if self.scale is None else np.broadcast_to(self.scale, lo.shape)
            object.__setattr__(self, "loc", tuple(float(v) for v in loc))
            object.__setattr__(self, "scale", tuple(float(v) for v in sc))

    @classmethod
    def unit_cube(cls, d: int, family: str = "uniform") -> "ProductMeasure":
        return cls((0.0,) * d, (1.0,) * d, family)

    @property
    def dim(self) -> int:
        return len(self.low)

    @property
    def marginals(self) -> list:
        if self.family == "uniform":
            return [stats.uniform(lo, hi - lo) for lo, hi in zip(self.low, self.high)]
        return [
            stats.truncnorm((lo - m) / s, (hi - m) / s, loc=m, scale=s)
            for lo, hi, m, s in zip(self.low, self.high, self.loc, self.scale)
        ]

    def ppf(self, u: np.ndarray) -> np.ndarray:
        u = np.atleast_2d(u)
        if self.family == "uniform":
            lo, hi = np.array(self.low), np.array(self.high)
            return lo + u * (hi - lo)
        return np.column_stack([m.ppf(u[:, k]) for k, m in enumerate(self.marginals)])

    def cdf(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        return np.column_stack([m.cdf(x[:, k]) for k, m in enumerate(self.marginals)])

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.ppf(rng.uniform(size=(size, self.dim)))

    def means(self) -> np.ndarray:
        return np.array([m.mean() for m in self.marginals])

    def variances(self) -> np.ndarray:
        return np.array([m.var() for m in self.marginals])

    def to_dict(self) -> dict:
        out = {"family": self.family, "low": list(self.low), "high": list(self.high)}
        if self.family == "truncnorm":
            out["loc"], out["scale"] = list(self.loc), list(self.scale)
        return out

    @classmethod
    def from_dict(cls, spec: dict) -> "ProductMeasure":
        loc, scale = spec.get("loc"), spec.get("scale")
        return cls(
            tuple(spec["low"]),
            tuple(spec["high"]),
            spec.get("family", "uniform"),
            None if loc is None else tuple(loc),
            None if scale is None else tuple(scale),
        )


@dataclass(frozen=True)
class CoordinateMap:
    """Increasing map g: R -> R with derivative and antiderivative."""

    name: str
    params: dict
    func: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)
    deriv: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)
    antideriv: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)

    def __call__(self, x):
        return self.func(np.asarray(x, dtype=float))

    def inverse(self, y, tol: float = 1e-13) -> np.ndarray:
        """Vectorised bisection for g^{-1}(y)."""
        y = np.asarray(y, dtype=float)
        lo = np.full(y.shape, -1.0)
        hi = np.full(y.shape, 1.0)
        for _ in range(200):
            bad = self.func(lo) > y
            if not bad.any():
                break
            lo = np.where(bad, 2 * lo - 1.0, lo)
        for _ in range(200):
            bad = self.func(hi) < y
            if not bad.any():
                break
            hi = np.where(bad, 2 * hi + 1.0, hi)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            below = self.func(mid) < y
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
            if np.max(hi - lo, initial=0.0) <= tol * max(1.0, float(np.max(np.abs(mid), initial=0.0))):
                break
        return 0.5 * (lo + hi)

    def conjugate(self, y) -> np.ndarray:
        """G*(y) = y g^{-1}(y) - G(g^{-1}(y))."""
        x = self.inverse(y)
        return np.asarray(y) * x - self.antideriv(x)

    def to_dict(self) -> dict:
        return {"name": self.name, "params": dict(self.params)}


def coordinate_map(name: str, **params) -> CoordinateMap:
    """Named increasing maps; these are what problem JSON files refer to."""
    if name == "identity":
        return CoordinateMap(name, {}, lambda x: x, np.ones_like, lambda x: 0.5 * x**2)
    if name == "affine":
        a, c = float(params.get("scale", 1.0)), float(params.get("shift", 0.0))
        if a <= 0:
            raise ValueError("affine map needs scale > 0")
        return CoordinateMap(
            name, {"scale": a, "shift": c},
            lambda x: a * x + c,
            lambda x: np.full_like(x, a),
            lambda x: 0.5 * a * x**2 + c * x,
        )
    if name == "cubic":
        # g(x) = x + coef x^3
        k = float(params.get("coef", 1.0 / 3.0))
        return CoordinateMap(
            name, {"coef": k},
            lambda x: x + k * x**3,
            lambda x: 1.0 + 3.0 * k * x**2,
            lambda x: 0.5 * x**2 + 0.25 * k * x**4,
        )
    if name == "tanh":
        # g(x) = x + amp tanh(x)
        amp = float(params.get("amp", 0.5))
        return CoordinateMap(
            name, {"amp": amp},
            lambda x: x + amp * np.tanh(x),
            lambda x: 1.0 + amp / np.cosh(x) ** 2,
            lambda x: 0.5 * x**2 + amp * np.logaddexp(x, -x) - amp * np.log(2.0),
        )
    raise ValueError(f"unknown coordinate map {name!r}")


@dataclass(frozen=True)
class SyntheticProblem:
    """A source law ``mu`` together with a known optimal map ``T0``."""

    kind: str
    dim: int
    mu: ProductMeasure
    lipschitz: float
    true_w2sq: float
    A: np.ndarray | None = None
    b: np.ndarray | None = None
    maps: tuple[CoordinateMap, ...] | None = None

    @property
    def L(self) -> float:
        return self.lipschitz

    def transport(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.kind == "linear":
            return x @ self.A.T + self.b
        return np.column_stack([g(x[:, k]) for k, g in enumerate(self.maps)])

    __call__ = transport

    def potential(self, x) -> np.ndarray:
        """phi0 with grad phi0 = T0."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.kind == "linear":
            return 0.5 * np.einsum("ij,jk,ik->i", x, self.A, x) + x @ self.b
        return sum(g.antideriv(x[:, k]) for k, g in enumerate(self.maps))

    def conjugate(self, y) -> np.ndarray:
        """phi0*, the Legendre dual of the potential."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        if self.kind == "linear":
            z = y - self.b
            return 0.5 * np.einsum("ij,ij->i", z, np.linalg.solve(self.A, z.T).T)
        return sum(g.conjugate(y[:, k]) for k, g in enumerate(self.maps))

    def conjugate_grad(self, y) -> np.ndarray:
        """grad phi0* = T0^{-1}."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        if self.kind == "linear":
            return np.linalg.solve(self.A, (y - self.b).T).T
        return np.column_stack([g.inverse(y[:, k]) for k, g in enumerate(self.maps)])

    def sample_mu(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.mu.sample(rng, size)

    def is_identity(self) -> bool:
        if self.kind == "linear":
            return bool(np.array_equal(self.A, np.eye(self.dim)) and not np.any(self.b))
        return all(g.name == "identity" for g in self.maps)

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "dim": self.dim, "support": self.mu.to_dict()}
        if self.kind == "linear":
            out["A"] = self.A.tolist()
            out["b"] = self.b.tolist()
        else:
            out["maps"] = [g.to_dict() for g in self.maps]
        return out


def make_linear_problem(d: int, A=None, b=None, support: ProductMeasure | None = None) -> SyntheticProblem:
    """T0(x) = A x + b pushing ``support`` forward (A must be SPD)."""
    A = np.eye(d) if A is None else np.atleast_2d(np.asarray(A, dtype=float))
    b = np.zeros(d) if b is None else np.asarray(b, dtype=float).reshape(d)
    mu = support or ProductMeasure.unit_cube(d)
    if A.shape != (d, d) or mu.dim != d:
        raise ValueError("A, b and support must all be d-dimensional")
    if not np.allclose(A, A.T, atol=1e-12):
        raise ValueError("A must be symmetric")
    try:
        np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise ValueError("A must be positive definite") from exc
    A = A.copy()
    A.setflags(write=False)
    B = np.eye(d) - A
    mean, var = mu.means(), mu.variances()
    resid = B @ mean - b
    true = float(np.trace(B @ np.diag(var) @ B.T) + resid @ resid)
    L = float(np.linalg.eigvalsh(A).max())
    return SyntheticProblem("linear", d, mu, L, true, A=A, b=b)


def make_separable_problem(
    d: int, maps: Sequence[CoordinateMap], support: ProductMeasure | None = None, grid: int = 2001
) -> SyntheticProblem:
    """T0(x)_k = g_k(x_k); each g_k must be increasing on the support."""
    maps = tuple(maps)
    mu = support or ProductMeasure.unit_cube(d)
    if len(maps) != d or mu.dim != d:
        raise ValueError("need one coordinate map per dimension")
    L = 0.0
    true = 0.0
    for g, marg, lo, hi in zip(maps, mu.marginals, mu.low, mu.high):
        t = np.linspace(lo, hi, grid)
        slope = g.deriv(t)
        if np.any(slope <= 0) or np.any(np.diff(g(t)) <= 0):
            raise ValueError(f"coordinate map {g.name} is not increasing on [{lo}, {hi}]")
        L = max(L, float(slope.max()))
        val, _ = integrate.quad(lambda s: (s - float(g(s))) ** 2 * marg.pdf(s), lo, hi, epsabs=1e-14, epsrel=1e-12)
        true += val
    return SyntheticProblem("separable", d, mu, L, float(true), maps=maps)


def sample_pair(problem: SyntheticProblem, m: int, n: int, seed) -> tuple[DiscreteMeasure, DiscreteMeasure]:
    """Empirical measures of X_1..X_m ~ mu and Y_1..Y_n ~ T0#mu, independent."""
    if m < 1 or n < 1:
        raise ValueError("sample sizes must be positive")
    rng = np.random.default_rng(seed)
    x = problem.sample_mu(rng, m)
    y = problem.transport(problem.sample_mu(rng, n))
    return DiscreteMeasure.uniform(x), DiscreteMeasure.uniform(y)


def problem_from_dict(spec: dict) -> SyntheticProblem:
    kind, d = spec["kind"], int(spec["dim"])
    mu = ProductMeasure.from_dict(spec["support"]) if "support" in spec else ProductMeasure.unit_cube(d)
    if kind == "linear":
        return make_linear_problem(d, spec.get("A"), spec.get("b"), mu)
    if kind == "separable":
        maps = [coordinate_map(m["name"], **m.get("params", {})) for m in spec["maps"]]
        return make_separable_problem(d, maps, mu)
    raise ValueError(f"unknown problem kind {kind!r}")
