"""Plug-in estimators of optimal transport maps via barycentric projection."""

from otmap.ot_core import (
    DiscreteMeasure,
    DualPotentials,
    TransportPlan,
    brute_force_ot,
    cost_matrix,
    solve_ot,
    w2_squared,
)

__version__ = "0.1.0"

__all__ = [
    "DiscreteMeasure",
    "DualPotentials",
    "TransportPlan",
    "brute_force_ot",
    "cost_matrix",
    "solve_ot",
    "w2_squared",
]
