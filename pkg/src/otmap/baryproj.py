"""Barycentric projection of transport plans and the stability bound.

The stability bound compares the squared L2(mu~) distance between the
barycentric projection and the true map with a right-hand side built from
three finite sums: the two optimal dual potentials (for (mu~, nu~) and for
(mu~, T0#mu~)) integrated against nu~ - T0#mu~, and the true conjugate
potential phi0* integrated against the same signed measure.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from otmap.ot_core import DiscreteMeasure, TransportPlan, solve_ot

__all__ = [
    "BarycentricMap",
    "StabilityReport",
    "barycentric_projection",
    "map_l2_error",
    "discrete_legendre",
    "stability_report",
]

SLACK = 1e-7


@dataclass(frozen=True)
class BarycentricMap:
    """Conditional-mean image of every source atom under a plan."""

    source: DiscreteMeasure
    images: np.ndarray

    def __post_init__(self):
        imgs = np.array(self.images, dtype=float, copy=True)
        imgs.setflags(write=False)
        object.__setattr__(self, "images", imgs)

    def pushforward(self) -> DiscreteMeasure:
        return DiscreteMeasure(self.images, self.source.weights)


def barycentric_projection(plan: TransportPlan) -> BarycentricMap:
    src, tgt = plan.source, plan.target
    mass = np.bincount(plan.rows, weights=plan.masses, minlength=src.size)
    images = np.zeros((src.size, tgt.dim))
    np.add.at(images, plan.rows, plan.masses[:, None] * tgt.points[plan.cols])
    images /= mass[:, None]
    if plan.is_deterministic():
        # exact copies, no 1/w * w round-off
        images[plan.rows] = tgt.points[plan.cols]
    return BarycentricMap(src, images)


def map_l2_error(bmap: BarycentricMap, t0: Callable[[np.ndarray], np.ndarray]) -> float:
    """sum_i w_i ||T_hat(x_i) - T0(x_i)||^2."""
    truth = np.asarray(t0(bmap.source.points), dtype=float).reshape(bmap.images.shape)
    return float(bmap.source.weights @ np.sum((bmap.images - truth) ** 2, axis=1))


def discrete_legendre(psi: np.ndarray, atoms: np.ndarray, y: np.ndarray, chunk: int = 2048) -> np.ndarray:
    """psi*(y) = max_i <x_i, y> - psi(x_i) for a potential known at ``atoms``."""
    y = np.atleast_2d(y)
    out = np.empty(y.shape[0])
    for s in range(0, y.shape[0], chunk):
        out[s : s + chunk] = np.max(y[s : s + chunk] @ atoms.T - psi[None, :], axis=1)
    return out


@dataclass(frozen=True)
class StabilityReport:
    """Both sides of the stability bound on one instance.

    ``rhs_max_term`` is 2 L max(|int psi~* d(nu~ - nubar)|, |int psibar* d(nu~ - nubar)|)
    and ``rhs_phi_term`` is 2 L int phi0* d(nu~ - nubar).
    """

    lhs: float
    rhs_max_term: float
    rhs_phi_term: float
    holds: bool
    lipschitz: float
    dual_terms: tuple[float, float]

    @property
    def rhs(self) -> float:
        return self.rhs_max_term + self.rhs_phi_term


def stability_report(src: DiscreteMeasure, tgt: DiscreteMeasure, problem, plan: TransportPlan | None = None) -> StabilityReport:
    """Evaluate the stability bound exactly as finite sums.

    ``problem`` must provide ``transport`` (T0), ``conjugate`` (phi0*) and
    ``lipschitz``.  Passing ``plan`` evaluates the left side at that plan
    instead of the optimal one (used to show the bound is not vacuous).
    """
    if not hasattr(problem, "conjugate"):
        raise ValueError("problem has no closed-form conjugate potential")
    L = float(problem.lipschitz)
    nubar = DiscreteMeasure(problem.transport(src.points), src.weights)

    opt = solve_ot(src, tgt)
    ref = solve_ot(src, nubar)
    x = src.points

    def dual_term(pots):
        on_tgt = discrete_legendre(pots.psi, x, tgt.points)
        on_bar = discrete_legendre(pots.psi, x, nubar.points)
        return abs(float(tgt.weights @ on_tgt - nubar.weights @ on_bar))

    terms = (dual_term(opt.duals), dual_term(ref.duals))
    phi = float(tgt.weights @ problem.conjugate(tgt.points) - nubar.weights @ problem.conjugate(nubar.points))

    lhs = map_l2_error(barycentric_projection(plan or opt), problem.transport)
    rhs_max = 2.0 * L * max(terms)
    rhs_phi = 2.0 * L * phi
    return StabilityReport(lhs, rhs_max, rhs_phi, bool(lhs <= rhs_max + rhs_phi + SLACK), L, terms)
