"""Exact discrete optimal transport for the squared Euclidean cost.

General weights go through the transportation network simplex (POT's
``emd``); moderate equal-weight square instances go through a Hungarian-type
assignment solve (``scipy.optimize.linear_sum_assignment``) with dual
potentials recovered by a shortest-path pass.  Potentials are reported in
the convex-conjugate parametrisation: ``psi`` on source atoms and
``psi_star`` on target atoms with ``psi[i] + psi_star[j] >= <x_i, y_j>``.

``brute_force_ot`` is an exhaustive oracle for tiny instances and shares no
code path with :func:`solve_ot`.
"""

from __future__ import annotations

import itertools
import os
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

__all__ = [
    "DiscreteMeasure",
    "DualPotentials",
    "TransportPlan",
    "PlanInvariantError",
    "cost_matrix",
    "solve_ot",
    "brute_force_ot",
    "w2_squared",
    "check_mode",
    "set_check_mode",
]

FEAS_TOL = 1e-9
# above this size the network simplex beats the dense assignment solver
ASSIGNMENT_MAX_ATOMS = 512
GAP_TOL = 1e-7

_check = os.environ.get("OTMAP_CHECK", "") not in ("", "0")


def set_check_mode(flag: bool) -> None:
    """Turn invariant checking of every solve on or off."""
    global _check
    _check = bool(flag)


def check_mode() -> bool:
    return _check


class PlanInvariantError(RuntimeError):
    """A solved plan or its potentials violate a stated invariant."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DiscreteMeasure:
    """Finitely supported probability measure on R^d."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] == 0 or pts.shape[1] == 0:
            raise ValueError("points must be a non-empty (k, d) array")
        w = np.asarray(self.weights, dtype=float).ravel()
        if w.shape[0] != pts.shape[0]:
            raise ValueError(f"{pts.shape[0]} points but {w.shape[0]} weights")
        if not np.all(np.isfinite(pts)) or not np.all(np.isfinite(w)):
            raise ValueError("points and weights must be finite")
        if np.any(w <= 0):
            raise ValueError("weights must be strictly positive (zero-weight atoms are not allowed)")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {w.sum()!r}, expected 1")
        object.__setattr__(self, "points", _readonly(pts))
        object.__setattr__(self, "weights", _readonly(w))

    @classmethod
    def uniform(cls, points) -> "DiscreteMeasure":
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        k = pts.shape[0]
        return cls(pts, np.full(k, 1.0 / k))

    @classmethod
    def normalized(cls, points, weights) -> "DiscreteMeasure":
        """Build from positive weights of any total mass."""
        w = np.asarray(weights, dtype=float)
        return cls(points, w / w.sum())

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def is_uniform(self) -> bool:
        return bool(np.all(self.weights == self.weights[0]))

    def second_moment(self) -> float:
        return float(self.weights @ np.sum(self.points**2, axis=1))

    def __len__(self) -> int:
        return self.size


@dataclass(frozen=True)
class DualPotentials:
    """Optimal convex potential on source atoms and its conjugate on target atoms."""

    psi: np.ndarray
    psi_star: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "psi", _readonly(self.psi))
        object.__setattr__(self, "psi_star", _readonly(self.psi_star))

    def dual_value(self, src: DiscreteMeasure, tgt: DiscreteMeasure) -> float:
        """S(psi) = sum psi dmu + sum psi* dnu."""
        return float(src.weights @ self.psi + tgt.weights @ self.psi_star)


@dataclass(frozen=True)
class TransportPlan:
    """Sparse coupling between ``source`` and ``target``."""

    rows: np.ndarray
    cols: np.ndarray
    masses: np.ndarray
    cost: float
    source: DiscreteMeasure = field(repr=False)
    target: DiscreteMeasure = field(repr=False)
    duals: DualPotentials | None = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "rows", np.asarray(self.rows, dtype=np.intp))
        object.__setattr__(self, "cols", np.asarray(self.cols, dtype=np.intp))
        object.__setattr__(self, "masses", _readonly(self.masses))
        if np.any(self.masses < 0):
            raise PlanInvariantError("negative mass in plan")

    @property
    def entries(self) -> list[tuple[int, int, float]]:
        return [(int(i), int(j), float(q)) for i, j, q in zip(self.rows, self.cols, self.masses)]

    def dense(self) -> np.ndarray:
        G = np.zeros((self.source.size, self.target.size))
        np.add.at(G, (self.rows, self.cols), self.masses)
        return G

    def recomputed_cost(self) -> float:
        diff = self.source.points[self.rows] - self.target.points[self.cols]
        return float(self.masses @ np.sum(diff**2, axis=1))

    def is_deterministic(self) -> bool:
        return np.unique(self.rows).size == self.rows.size

    def check(self, feas_tol: float = FEAS_TOL, gap_tol: float = GAP_TOL) -> None:
        """Raise :class:`PlanInvariantError` on any violated invariant."""
        src, tgt = self.source, self.target
        rs = np.bincount(self.rows, weights=self.masses, minlength=src.size)
        cs = np.bincount(self.cols, weights=self.masses, minlength=tgt.size)
        if np.max(np.abs(rs - src.weights)) > feas_tol:
            raise PlanInvariantError(f"row sums off by {np.max(np.abs(rs - src.weights)):.3e}")
        if np.max(np.abs(cs - tgt.weights)) > feas_tol:
            raise PlanInvariantError(f"column sums off by {np.max(np.abs(cs - tgt.weights)):.3e}")
        if abs(self.recomputed_cost() - self.cost) > feas_tol * max(1.0, abs(self.cost)):
            raise PlanInvariantError("stored cost disagrees with recomputed cost")
        if self.duals is None:
            return
        psi, psi_star = self.duals.psi, self.duals.psi_star
        inner = src.points @ tgt.points.T
        slack = psi[:, None] + psi_star[None, :] - inner
        scale = max(1.0, float(np.max(np.abs(inner))))
        if slack.min() < -feas_tol * scale:
            raise PlanInvariantError(f"dual infeasible by {-slack.min():.3e}")
        support = slack[self.rows[self.masses > 0], self.cols[self.masses > 0]]
        if support.size and np.max(np.abs(support)) > feas_tol * scale:
            raise PlanInvariantError(f"complementary slackness off by {np.max(np.abs(support)):.3e}")
        primal = 0.5 * src.second_moment() + 0.5 * tgt.second_moment() - self.duals.dual_value(src, tgt)
        if abs(primal - 0.5 * self.cost) > gap_tol * max(1.0, abs(self.cost)):
            raise PlanInvariantError(f"duality gap {primal - 0.5 * self.cost:.3e}")


def _check_dims(src: DiscreteMeasure, tgt: DiscreteMeasure) -> None:
    if src.dim != tgt.dim:
        raise ValueError(f"dimension mismatch: source is {src.dim}-d, target is {tgt.dim}-d")


def cost_matrix(src: DiscreteMeasure, tgt: DiscreteMeasure) -> np.ndarray:
    """Dense matrix of squared Euclidean distances between atoms."""
    _check_dims(src, tgt)
    return cdist(src.points, tgt.points, "sqeuclidean")


def _potentials_from_lp(src, tgt, u, v) -> DualPotentials:
    """Map LP duals u_i + v_j <= C_ij to convex-conjugate potentials."""
    x, y = src.points, tgt.points
    psi = 0.5 * (np.sum(x**2, axis=1) - u)
    inner = x @ y.T
    # c-transform both ways: keeps equality on the support, repairs round-off
    psi_star = np.max(inner - psi[:, None], axis=0)
    psi = np.max(inner - psi_star[None, :], axis=1)
    shift = psi[0]
    return DualPotentials(psi - shift, psi_star + shift)


def _assignment_duals(C: np.ndarray, col_of_row: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Duals u, v with u_i + v_j <= C_ij and equality on the optimal assignment.

    v is a shortest-path distance on the column graph with arc weights
    C[r(a), b] - C[r(a), a], r(a) the row assigned to column a; optimality
    rules out negative cycles, so Bellman-Ford terminates.
    """
    n = C.shape[0]
    row_of_col = np.empty(n, dtype=np.intp)
    row_of_col[col_of_row] = np.arange(n)
    W = C[row_of_col, :] - C[row_of_col, np.arange(n)][:, None]
    v = np.zeros(n)
    for _ in range(n + 1):
        nv = np.minimum(v, np.min(v[:, None] + W, axis=0))
        if np.array_equal(nv, v):
            break
        v = nv
    u = C[np.arange(n), col_of_row] - v[col_of_row]
    return u, v


def _pot():
    for key in ("TENSORFLOW", "PYTORCH", "JAX", "CUPY"):
        os.environ.setdefault(f"POT_BACKEND_DISABLE_{key}", "1")
    import ot

    return ot


def solve_ot(src: DiscreteMeasure, tgt: DiscreteMeasure, *, duals: bool = True) -> TransportPlan:
    """Optimal plan for the squared Euclidean cost.

    Set ``duals=False`` to skip the potentials (the plan and cost are
    unchanged); large experiment loops do this.
    """
    _check_dims(src, tgt)
    C = cost_matrix(src, tgt)
    m, n = C.shape
    if m == n and m <= ASSIGNMENT_MAX_ATOMS and src.is_uniform() and tgt.is_uniform():
        rows, cols = linear_sum_assignment(C)
        masses = np.full(m, 1.0 / m)
        pots = None
        if duals:
            u, v = _assignment_duals(C, cols)
            pots = _potentials_from_lp(src, tgt, u, v)
    else:
        ot = _pot()
        G, log = ot.emd(src.weights, tgt.weights, C, numItermax=max(100_000, 50 * m * n), log=True)
        if log.get("warning"):
            raise RuntimeError(f"network simplex did not converge: {log['warning']}")
        rows, cols = np.nonzero(G > 0)
        masses = G[rows, cols]
        pots = _potentials_from_lp(src, tgt, log["u"], log["v"]) if duals else None
    plan = TransportPlan(rows, cols, masses, 0.0, src, tgt, pots)
    plan = TransportPlan(rows, cols, masses, plan.recomputed_cost(), src, tgt, pots)
    if _check:
        plan.check()
    return plan


def w2_squared(src: DiscreteMeasure, tgt: DiscreteMeasure) -> float:
    """Squared 2-Wasserstein distance between two discrete measures."""
    return solve_ot(src, tgt, duals=False).cost


# ---------------------------------------------------------------------------
# exhaustive oracle
# ---------------------------------------------------------------------------

MAX_PERM_ATOMS = 6
MAX_VERTEX_ATOMS = 5


def _prufer_trees(k: int):
    """All labelled trees on k nodes as edge lists (Prufer decoding)."""
    if k == 1:
        yield []
        return
    if k == 2:
        yield [(0, 1)]
        return
    for seq in itertools.product(range(k), repeat=k - 2):
        degree = [1] * k
        for s in seq:
            degree[s] += 1
        edges = []
        for s in seq:
            leaf = min(i for i in range(k) if degree[i] == 1)
            edges.append((leaf, s))
            degree[leaf] -= 1
            degree[s] -= 1
        u, w = [i for i in range(k) if degree[i] == 1]
        edges.append((u, w))
        yield edges


def _rooted_order(k: int, edges) -> list[tuple[int, int]]:
    """(parent, child) pairs in BFS order from node 0."""
    adj = {i: [] for i in range(k)}
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    order, seen, queue = [], {0}, [0]
    while queue:
        p = queue.pop(0)
        for c in adj[p]:
            if c not in seen:
                seen.add(c)
                order.append((p, c))
                queue.append(c)
    return order


def _best_dual_vertex(a, b, C):
    """Maximise the Kantorovich dual over all vertices of its breakpoint arrangement.

    The dual D(f) = a.f + b.min_i(C_ij - f_i) is concave piecewise linear in
    f (with f_0 = 0); every vertex is fixed by m-1 ties f_c - f_p = C_cj - C_pj,
    i.e. by a spanning tree on the rows with one column label per edge.
    """
    m, n = C.shape
    best_val, best_f = -np.inf, None
    labels = np.array(list(itertools.product(range(n), repeat=m - 1)), dtype=np.intp)
    labels = labels.reshape(len(labels), m - 1)
    for edges in _prufer_trees(m):
        order = _rooted_order(m, edges)
        F = np.zeros((labels.shape[0], m))
        for e, (p, c) in enumerate(order):
            j = labels[:, e]
            F[:, c] = F[:, p] + C[c, j] - C[p, j]
        G = np.min(C[None, :, :] - F[:, :, None], axis=1)
        vals = F @ a + G @ b
        k = int(np.argmax(vals))
        if vals[k] > best_val:
            best_val, best_f = float(vals[k]), F[k]
    g = np.min(C - best_f[:, None], axis=0)
    return best_val, best_f, g


def _recover_plan(a, b, tight):
    """Feasible flow on the tight edges by depth-first leaf elimination."""
    m, n = tight.shape
    tol = 1e-12

    @lru_cache(maxsize=None)
    def search(rows, cols, ra, rb):
        act_r = [i for i in range(m) if rows >> i & 1]
        act_c = [j for j in range(n) if cols >> j & 1]
        if not act_r or not act_c:
            if all(ra[i] <= 1e-10 for i in act_r) and all(rb[j] <= 1e-10 for j in act_c):
                return ()
            return None
        for i in act_r:
            for j in act_c:
                if not tight[i, j]:
                    continue
                q = min(ra[i], rb[j])
                nra, nrb = list(ra), list(rb)
                nra[i] -= q
                nrb[j] -= q
                options = []
                if nra[i] <= tol:
                    options.append((rows & ~(1 << i), cols))
                if nrb[j] <= tol:
                    options.append((rows, cols & ~(1 << j)))
                for nr, nc in options:
                    rest = search(nr, nc, tuple(round(v, 14) for v in nra), tuple(round(v, 14) for v in nrb))
                    if rest is not None:
                        return ((i, j, q),) + rest
        return None

    found = search((1 << m) - 1, (1 << n) - 1, tuple(a), tuple(b))
    if found is None:
        raise RuntimeError("no feasible flow on the tight edges")
    return [e for e in found if e[2] > 0]


def brute_force_ot(src: DiscreteMeasure, tgt: DiscreteMeasure) -> TransportPlan:
    """Globally optimal plan by exhaustive search (tiny instances only).

    Equal-weight instances of equal size (at most 6 atoms) enumerate all
    permutations.  Otherwise (at most 5 atoms per side) every vertex of the
    dual polyhedron is enumerated and a primal plan is read off the tight
    edges of the best one.
    """
    _check_dims(src, tgt)
    x, y = src.points, tgt.points
    C = np.sum((x[:, None, :] - y[None, :, :]) ** 2, axis=2)
    m, n = C.shape
    if m == n and src.is_uniform() and tgt.is_uniform() and m <= MAX_PERM_ATOMS:
        perms = np.array(list(itertools.permutations(range(m))), dtype=np.intp)
        costs = C[np.arange(m)[None, :], perms].sum(axis=1) / m
        best = perms[int(np.argmin(costs))]
        plan = TransportPlan(np.arange(m), best, np.full(m, 1.0 / m), 0.0, src, tgt)
        return TransportPlan(plan.rows, plan.cols, plan.masses, plan.recomputed_cost(), src, tgt)
    if m > MAX_VERTEX_ATOMS or n > MAX_VERTEX_ATOMS:
        raise ValueError(f"instance too large for exhaustive search ({m}x{n} atoms)")
    a, b = src.weights, tgt.weights
    if m <= n:
        val, f, g = _best_dual_vertex(a, b, C)
    else:
        val, g, f = _best_dual_vertex(b, a, C.T)
    slack = C - f[:, None] - g[None, :]
    tight = slack <= 1e-9 * max(1.0, float(C.max()))
    entries = _recover_plan(tuple(a.tolist()), tuple(b.tolist()), tight)
    rows = np.array([e[0] for e in entries], dtype=np.intp)
    cols = np.array([e[1] for e in entries], dtype=np.intp)
    masses = np.array([e[2] for e in entries])
    plan = TransportPlan(rows, cols, masses, 0.0, src, tgt)
    return TransportPlan(rows, cols, masses, plan.recomputed_cost(), src, tgt)
