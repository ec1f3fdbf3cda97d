"""Discrete optimal transport and martingale optimal transport.

The MOT linear program for ``mu = sum_i a_i delta_{x_i}`` and
``nu = sum_j b_j delta_{y_j}`` has one variable ``p_ij`` per pair, stored
column-major (``p_ij`` is variable ``j * n_mu + i``), and three row blocks::

    sum_j p_ij            = a_i          i = 1..n_mu
    sum_i p_ij            = b_j          j = 1..n_nu
    sum_j p_ij y_j[k]     = a_i x_i[k]   i = 1..n_mu, one block per coordinate k

Dropping the third block gives the plain OT problem.
"""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.spatial import ConvexHull, QhullError
from scipy.spatial.distance import pdist

from .lp import LpNumericalError, LpProblem, LpSolution, lp_feasible, lp_solve
from .measures import (
    DiscreteCoupling,
    DiscreteMeasure,
    KernelCoupling,
    MeasureError,
    Partition,
    PowerDistance,
    Remainder,
    as_grid,
    discretise_kernel_coupling,
    singleton,
)

MEAN_TOL = 1e-7
WITNESS_TOL = 1e-8
PRUNE_TOL = 1e-14


@dataclass(frozen=True, eq=False)
class MotAssembly:
    problem: LpProblem
    n_mu: int
    n_nu: int
    d: int

    def var(self, i: int, j: int) -> int:
        return j * self.n_mu + i

    def unvec(self, x: np.ndarray) -> np.ndarray:
        """Reshape an LP vector to the ``(n_mu, n_nu)`` transport matrix."""
        return np.asarray(x).reshape(self.n_nu, self.n_mu).T


def _check_pair(mu: DiscreteMeasure, nu: DiscreteMeasure):
    if mu.d != nu.d:
        raise MeasureError(f"dimension mismatch: {mu.d} vs {nu.d}")


def _constraint_matrix(mu: DiscreteMeasure, nu: DiscreteMeasure, martingale: bool):
    n_mu, n_nu, d = len(mu), len(nu), mu.d
    i, j = np.meshgrid(np.arange(n_mu), np.arange(n_nu), indexing="xy")
    i, j = i.ravel(), j.ravel()  # variable order: j-major, i fastest
    col = j * n_mu + i
    rows = [i, n_mu + j]
    cols = [col, col]
    vals = [np.ones(col.size), np.ones(col.size)]
    b = [mu.weights, nu.weights]
    if martingale:
        for k in range(d):
            rows.append(n_mu + n_nu + k * n_mu + i)
            cols.append(col)
            vals.append(nu.points[j, k])
            b.append(mu.weights * mu.points[:, k])
    n_rows = n_mu + n_nu + (d * n_mu if martingale else 0)
    A = sp.csc_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_rows, n_mu * n_nu),
    )
    A.eliminate_zeros()
    return A, np.concatenate(b)


def _cost_vector(mu, nu, cost) -> np.ndarray:
    return cost.matrix(mu.points, nu.points).T.ravel()


def assemble_mot_lp(mu: DiscreteMeasure, nu: DiscreteMeasure, cost) -> MotAssembly:
    _check_pair(mu, nu)
    gap = np.max(np.abs(mu.mean() - nu.mean()))
    if gap > MEAN_TOL:
        warnings.warn(f"means differ by {gap:.3e}; the martingale constraints cannot hold", stacklevel=2)
    A, b = _constraint_matrix(mu, nu, martingale=True)
    return MotAssembly(LpProblem(_cost_vector(mu, nu, cost), A, b), len(mu), len(nu), mu.d)


def _coupling_from_lp(x: np.ndarray, mu: DiscreteMeasure, nu: DiscreteMeasure) -> DiscreteCoupling:
    """Read a transport vector back as a coupling; entries below PRUNE_TOL are dropped and the rest renormalised."""
    n_mu = len(mu)
    nz = np.flatnonzero(x > PRUNE_TOL)
    i, j = nz % n_mu, nz // n_mu
    return DiscreteCoupling(mu.points[i], nu.points[j], x[nz], normalise=True)


def _lp_start(start: DiscreteCoupling | None, mu, nu) -> np.ndarray | None:
    """Place a coupling supported on ``supp(mu) x supp(nu)`` into LP variable order."""
    if start is None:
        return None
    i = _locate(mu.points, start.x)
    j = _locate(nu.points, start.y)
    if i is None or j is None:
        return None
    x = np.zeros(len(mu) * len(nu))
    np.add.at(x, j * len(mu) + i, start.weights)
    return x


def _locate(atoms: np.ndarray, points: np.ndarray) -> np.ndarray | None:
    from scipy.spatial import cKDTree

    dist, idx = cKDTree(atoms).query(points, p=np.inf)
    if np.any(dist > 1e-12):
        return None
    return idx


@dataclass
class MotSolution:
    """Outcome of a discrete MOT solve.  ``in_order`` is False when ``mu`` is not below ``nu`` in convex order."""

    in_order: bool
    value: float | None = None
    coupling: DiscreteCoupling | None = None
    lp: LpSolution | None = field(default=None, repr=False)


def solve_discrete_mot(mu: DiscreteMeasure, nu: DiscreteMeasure, cost,
                       start: DiscreteCoupling | None = None) -> MotSolution:
    """Minimise ``E[c(X, Y)]`` over martingale couplings of ``mu`` and ``nu``.

    ``start``, if given, is a known martingale coupling of the pair; its support
    seeds the simplex basis.
    """
    mu, nu = as_grid(mu), as_grid(nu)
    asm = assemble_mot_lp(mu, nu, cost)
    sol = lp_solve(asm.problem, start=_lp_start(start, mu, nu))
    if not sol.optimal:
        if sol.status.value == "unbounded":
            raise LpNumericalError("MOT problem reported unbounded")
        return MotSolution(False, lp=sol)
    return MotSolution(True, sol.objective, _coupling_from_lp(sol.x, mu, nu), sol)


def solve_discrete_ot(mu: DiscreteMeasure, nu: DiscreteMeasure, cost) -> tuple[float, DiscreteCoupling]:
    """Unconstrained OT by linear programming."""
    mu, nu = as_grid(mu), as_grid(nu)
    _check_pair(mu, nu)
    A, b = _constraint_matrix(mu, nu, martingale=False)
    sol = lp_solve(LpProblem(_cost_vector(mu, nu, cost), A, b))
    if not sol.optimal:
        raise LpNumericalError(f"OT problem reported {sol.status.value}")
    return sol.objective, _coupling_from_lp(sol.x, mu, nu)


def wasserstein_1d(mu: DiscreteMeasure, nu: DiscreteMeasure, p: float = 1.0) -> float:
    """Exact W_p on the line from the quantile functions: ``(int_0^1 |F^-1 - G^-1|^p du)^(1/p)``."""
    x, F = mu.cdf_steps()
    y, G = nu.cdf_steps()
    F, G = F.copy(), G.copy()
    F[-1] = G[-1] = 1.0
    u = np.union1d(F, G)
    du = np.diff(np.concatenate([[0.0], u]))
    qx = x[np.minimum(np.searchsorted(F, u, side="left"), len(x) - 1)]
    qy = y[np.minimum(np.searchsorted(G, u, side="left"), len(y) - 1)]
    return float(np.sum(du * np.abs(qx - qy) ** p) ** (1.0 / p))


def wasserstein_p(mu, nu, p: float = 1.0, method: str = "auto") -> float:
    """W_p with Euclidean ground distance.

    ``method="lp"`` solves the transport LP; ``"quantile"`` uses the exact
    one-dimensional formula; ``"auto"`` picks the latter when ``d == 1``.
    """
    if p < 1:
        raise ValueError("p must be at least 1")
    mu, nu = as_grid(mu), as_grid(nu)
    _check_pair(mu, nu)
    if method == "auto":
        method = "quantile" if mu.d == 1 else "lp"
    if method == "quantile":
        return wasserstein_1d(mu, nu, p)
    value, _ = solve_discrete_ot(mu, nu, PowerDistance(p))
    return max(value, 0.0) ** (1.0 / p)


def check_convex_order(mu, nu) -> tuple[bool, DiscreteCoupling | None]:
    """Strassen check: ``mu <=cx nu`` iff a martingale coupling exists.

    Returns the verdict and, when positive, a martingale coupling as witness.
    """
    mu, nu = as_grid(mu), as_grid(nu)
    _check_pair(mu, nu)
    A, b = _constraint_matrix(mu, nu, martingale=True)
    ok, x = lp_feasible(A, b)
    if not ok:
        return False, None
    witness = _coupling_from_lp(x, mu, nu)
    if witness.martingale_defect() > WITNESS_TOL:
        raise LpNumericalError(f"witness misses the barycentre condition by {witness.martingale_defect():.3e}")
    return True, witness


# ---------------------------------------------------------------------------
# convergence bounds


@dataclass(frozen=True)
class DiameterBound:
    """``value = (sum_cells diam^p * mass)^(1/p)``; ``sup`` is the largest diameter of a charged cell."""

    value: float
    sup: float


def _diameter(points: np.ndarray) -> float:
    if len(points) < 2:
        return 0.0
    if points.shape[1] == 1:
        return float(points.max() - points.min())
    if len(points) > 64:
        # the diameter is attained at extreme points
        try:
            points = points[ConvexHull(points).vertices]
        except QhullError:
            pass
    return float(pdist(points).max())


def diameter_bound(gamma, partition: Partition, p: float = 1.0, side: str = "y") -> DiameterBound:
    """Cell-diameter bound on ``W_p(gamma, proper_barycentric_quantise(gamma, partition))``.

    Each cell contributes the diameter of the atoms it holds, which equals the
    diameter of their closed convex hull.  A coupling may be passed instead of a
    measure; ``side`` then selects its marginal.
    """
    if isinstance(gamma, DiscreteCoupling):
        pts = gamma.y if side == "y" else gamma.x
        gamma = DiscreteMeasure(pts, gamma.weights)
    gamma = as_grid(gamma)
    labels = partition.assign(gamma.points)
    order = np.argsort(labels, kind="stable")
    labels, pts, w = labels[order], gamma.points[order], gamma.weights[order]
    starts = np.flatnonzero(np.r_[True, labels[1:] != labels[:-1]])
    ends = np.r_[starts[1:], len(labels)]
    total, sup = 0.0, 0.0
    for s, e in zip(starts, ends):
        diam = _diameter(pts[s:e])
        total += diam**p * float(np.sum(w[s:e]))
        sup = max(sup, diam)
    return DiameterBound(total ** (1.0 / p), sup)


# ---------------------------------------------------------------------------
# barycentric representation


@dataclass(frozen=True, eq=False)
class BarycentricRepresentation:
    coupling: DiscreteCoupling
    partition: Partition


def represent_as_barycentric(zeta, gamma) -> BarycentricRepresentation | None:
    """Write ``zeta`` as a barycentric quantisation of ``gamma``; None if ``zeta`` is not below ``gamma``.

    The coupling is a Strassen witness for ``zeta <=cx gamma`` and the x-side
    partition isolates each atom of ``zeta``, so quantising with the trivial
    y-side partition gives back ``zeta``.
    """
    zeta, gamma = as_grid(zeta), as_grid(gamma)
    ok, witness = check_convex_order(zeta, gamma)
    if not ok:
        return None
    cells = [singleton(p) for p in zeta.points] + [Remainder()]
    return BarycentricRepresentation(witness, Partition(cells, zeta.d))


# ---------------------------------------------------------------------------
# stability experiment

TABLE_HEADER = ("n", "P_n", "E_pitilde_c", "bound_mu", "bound_nu")


@dataclass(frozen=True)
class StabilityRow:
    n: int
    P_n: float
    E_pitilde_c: float
    bound_mu: float
    bound_nu: float


@dataclass
class StabilityTable:
    rows: list[StabilityRow]
    solutions: list[MotSolution] = field(repr=False, default_factory=list)
    levels: list = field(repr=False, default_factory=list)
    violations: list[str] = field(default_factory=list)

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(TABLE_HEADER)
        for r in self.rows:
            w.writerow([r.n] + [f"{v:.17g}" for v in (r.P_n, r.E_pitilde_c, r.bound_mu, r.bound_nu)])
        return out.getvalue()


def stability_experiment(pi_tilde, cost, seq1: Sequence[Partition], seq2: Sequence[Partition],
                         labels: Sequence[int] | None = None, known_optimum: float | None = None,
                         tol: float = 1e-6, optimum_tol: float = 0.05, p: float = 1.0) -> StabilityTable:
    """Quantise ``pi_tilde`` level by level and solve each discrete MOT.

    Records ``P_n``, ``E^{pi_tilde}[c]`` and the two diameter bounds per level and
    lists every level where ``P_n > E^{pi_tilde}[c] + tol`` or, when
    ``known_optimum`` is given, ``P_n < known_optimum - optimum_tol``.
    """
    from .quantise import barycentric_quantise

    if isinstance(pi_tilde, KernelCoupling):
        if not pi_tilde.martingale:
            raise MeasureError("stability experiment needs a martingale kernel coupling")
        e_cost = pi_tilde.expectation(cost)
        pi = discretise_kernel_coupling(pi_tilde)
    else:
        pi = pi_tilde
        e_cost = pi.expectation(cost)
    if not pi.is_martingale():
        raise MeasureError("input coupling is not a martingale")
    if labels is None:
        labels = [sum(not isinstance(c, Remainder) for c in part.cells) for part in seq1]
    table = StabilityTable(rows=[])
    for n, part1, part2 in zip(labels, seq1, seq2):
        q = barycentric_quantise(pi, part1, part2, p)
        sol = solve_discrete_mot(q.mu_n, q.nu_n, cost, start=q.coupling_n)
        if not sol.in_order:
            raise LpNumericalError(f"quantised pair at n={n} reported out of convex order")
        table.rows.append(StabilityRow(int(n), sol.value, e_cost, q.bound_mu, q.bound_nu))
        table.solutions.append(sol)
        table.levels.append(q)
        if sol.value > e_cost + tol:
            table.violations.append(f"n={n}: P_n={sol.value:.12g} exceeds E[c]={e_cost:.12g}")
        if known_optimum is not None and sol.value < known_optimum - optimum_tol:
            table.violations.append(f"n={n}: P_n={sol.value:.12g} below known optimum {known_optimum}")
    return table
