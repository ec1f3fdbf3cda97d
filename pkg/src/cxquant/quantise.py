"""Quantisers that preserve the convex order, and the partitions they use.

A proper barycentric quantisation replaces a measure by the barycentres of its
restrictions to the cells of one partition.  The barycentric quantisation of a
martingale coupling does the same on the product cells ``P1[i] x P2[j]``,
which keeps the martingale property and hence the convex order between the
two marginals.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .measures import (
    WEIGHT_SUM_TOL,
    Box,
    DiscreteCoupling,
    DiscreteMeasure,
    MeasureError,
    Partition,
    QuadratureMeasure,
    Remainder,
    as_grid,
    interval,
    nearest_site,
)
from .mot import diameter_bound


@dataclass(frozen=True, eq=False)
class QuantisationResult:
    mu_n: DiscreteMeasure
    nu_n: DiscreteMeasure
    coupling_n: DiscreteCoupling
    bound_mu: float
    bound_nu: float


def _grouped_barycentres(labels: np.ndarray, weights: np.ndarray, points: np.ndarray):
    """Mass and barycentre of each nonempty label group, summed in atom order."""
    uniq, inv = np.unique(labels, return_inverse=True)
    inv = inv.ravel()
    mass = np.bincount(inv, weights=weights)
    bary = np.empty((len(uniq), points.shape[1]))
    for k in range(points.shape[1]):
        bary[:, k] = np.bincount(inv, weights=weights * points[:, k]) / mass
    return uniq, inv, mass, bary


def u_quantise(mu, n: int) -> DiscreteMeasure:
    """U-quantisation: mass 1/n at ``n * int_{(i-1)/n}^{i/n} F^{-1}(u) du``.

    For a discrete measure the quantile function is a step function and the
    integrals are evaluated exactly from the overlaps between the quantile
    steps and the slabs.  Quadrature measures flagged ``exact_quantile`` use the
    closed-form integral of their source instead.
    """
    if n < 1:
        raise ValueError("n must be positive")
    if mu.d != 1:
        raise MeasureError("U-quantisation is one-dimensional")
    edges = np.arange(n + 1) / n
    if isinstance(mu, QuadratureMeasure) and mu.exact_quantile:
        x = mu.quantile_integral(edges[:-1], edges[1:]) * n
        return DiscreteMeasure(x[:, None], np.full(n, 1.0 / n), normalise=True)
    grid = as_grid(mu)
    z, F = grid.cdf_steps()
    F = F.copy()
    F[-1] = 1.0
    # cumulative sums carry up to ~len(F) ulps of error; without snapping a
    # far-out atom next to a slab edge leaks a sliver of mass into that slab
    near = np.rint(F * n)
    snap = np.abs(F - near / n) <= 8 * len(F) * np.finfo(float).eps
    F[snap] = near[snap] / n
    F0 = np.concatenate([[0.0], F[:-1]])
    lo, hi = edges[:-1, None], edges[1:, None]
    overlap = np.clip(np.minimum(F[None, :], hi) - np.maximum(F0[None, :], lo), 0.0, None)
    # an atom lying wholly inside a slab contributes its own weight, not a
    # difference of two cumulative sums
    inside = (F0[None, :] >= lo) & (F[None, :] <= hi)
    overlap = np.where(inside, grid.weights[None, :], overlap)
    x = (overlap @ z) / overlap.sum(axis=1)
    return DiscreteMeasure(x[:, None], np.full(n, 1.0 / n), normalise=True)


def proper_barycentric_quantise(gamma, partition: Partition) -> DiscreteMeasure:
    """``sum_j gamma(P_j) delta_{z_j}`` with ``z_j`` the barycentre of gamma on ``P_j``."""
    gamma = as_grid(gamma)
    labels = partition.assign(gamma.points)
    _, _, mass, bary = _grouped_barycentres(labels, gamma.weights, gamma.points)
    return DiscreteMeasure(bary, mass)


def barycentric_quantise(pi: DiscreteCoupling, part1: Partition, part2: Partition,
                         p: float = 1.0) -> QuantisationResult:
    """Quantise a coupling on the product cells of ``part1`` (x side) and ``part2`` (y side).

    ``x_i`` is the barycentre of the first marginal on ``P1[i]``; ``y_ij`` is the
    barycentre of the y-coordinates of the atoms in ``P1[i] x P2[j]``, carrying
    mass ``pi(P1[i] x P2[j])``.  Empty cells are skipped.  The bounds are the
    cell-diameter estimates of the W_p errors of the two marginals.
    """
    li = part1.assign(pi.x)
    lj = part2.assign(pi.y)
    cells_i, _, mass_i, x_bar = _grouped_barycentres(li, pi.weights, pi.x)
    # product cells labelled i * (#P2 + 1) + j, so sorting orders them by (i, j)
    stride = len(part2) + 1
    cells_ij, _, mass_ij, y_bar = _grouped_barycentres(li.astype(np.int64) * stride + lj, pi.weights, pi.y)
    x_of_pair = x_bar[np.searchsorted(cells_i, cells_ij // stride)]

    mu_n = DiscreteMeasure(x_bar, mass_i)
    nu_n = DiscreteMeasure(y_bar, mass_ij)
    coupling_n = DiscreteCoupling(x_of_pair, y_bar, mass_ij)
    mu, nu = DiscreteMeasure(pi.x, pi.weights), DiscreteMeasure(pi.y, pi.weights)
    return QuantisationResult(
        mu_n=mu_n,
        nu_n=nu_n,
        coupling_n=coupling_n,
        bound_mu=diameter_bound(mu, part1, p).value,
        bound_nu=diameter_bound(nu, part2, p).value,
    )


def check_refining(points: np.ndarray, levels: Sequence[Partition]) -> None:
    """Raise unless each level's cell map factors through the next level's.

    Tested on ``points``: two points sharing a cell at level n+1 must share a
    cell at level n.
    """
    prev = None
    for n, part in enumerate(levels):
        lab = part.assign(points)
        if prev is not None:
            _, inv = np.unique(lab, return_inverse=True)
            inv = inv.ravel()
            coarse = np.full(inv.max() + 1, -1)
            coarse[inv] = prev
            if np.any(coarse[inv] != prev):
                raise MeasureError(f"partition level {n} does not refine level {n - 1}")
        prev = lab


def martingale_quantise_sequence(pi: DiscreteCoupling, seq1: Sequence[Partition],
                                 seq2: Sequence[Partition], n_max: int | None = None,
                                 p: float = 1.0, check: bool = True) -> list[QuantisationResult]:
    """Barycentric quantisation of a martingale coupling at every level of two refining sequences."""
    if not pi.is_martingale():
        raise MeasureError(f"input coupling is not a martingale (defect {pi.martingale_defect():.3e})")
    levels = min(len(seq1), len(seq2)) if n_max is None else n_max
    seq1, seq2 = list(seq1)[:levels], list(seq2)[:levels]
    if check:
        check_refining(pi.x, seq1)
        check_refining(pi.y, seq2)
    return [barycentric_quantise(pi, a, b, p) for a, b in zip(seq1, seq2)]


# ---------------------------------------------------------------------------
# partition builders


def build_grid_boxes(lower, upper, per_axis: int) -> Partition:
    """``per_axis**d`` congruent half-open boxes tiling ``[lower, upper)`` plus a remainder cell."""
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    upper = np.atleast_1d(np.asarray(upper, dtype=float))
    if lower.size != upper.size or np.any(upper <= lower):
        raise ValueError("box must be nonempty")
    d = lower.size
    edges = [lo + (hi - lo) * np.arange(per_axis + 1) / per_axis for lo, hi in zip(lower, upper)]
    cells = []
    for idx in np.ndindex(*(per_axis,) * d):
        lo = [edges[a][k] for a, k in enumerate(idx)]
        hi = [edges[a][k + 1] for a, k in enumerate(idx)]
        cells.append(Box(lo, hi, True, False))
    cells.append(Remainder())
    return Partition(cells, d, grid_edges=edges)


def build_dyadic_boxes(lower, upper, level: int) -> Partition:
    """Level-``level`` dyadic subdivision of a box; successive levels refine."""
    if level < 0:
        raise ValueError("level must be nonnegative")
    return build_grid_boxes(lower, upper, 2**level)


def quantile_cuts(mu, n: int) -> np.ndarray:
    """``F^{-1}(i/n)`` for ``i = 1..n-1`` with ``F^{-1}(p) = inf{x : p <= F(x)}``."""
    u = np.arange(1, n) / n
    if isinstance(mu, QuadratureMeasure) and mu.exact_quantile:
        return mu.quantile(u)
    z, F = as_grid(mu).cdf_steps()
    idx = np.searchsorted(F, u - WEIGHT_SUM_TOL, side="left")
    return z[np.minimum(idx, len(z) - 1)]


def build_quantile_cells(mu, n: int) -> Partition:
    """Intervals ``(-inf, q_1], (q_1, q_2], ..., (q_{n-1}, inf)`` at the quantiles ``q_i = F^{-1}(i/n)``.

    Repeated cut points (atoms carrying more than 1/n of the mass) give empty
    intervals, which are dropped.
    """
    if mu.d != 1:
        raise MeasureError("quantile cells are one-dimensional")
    if n < 1:
        raise ValueError("n must be positive")
    cuts = np.concatenate([[-np.inf], np.unique(quantile_cuts(mu, n)), [np.inf]])
    cells = [interval(a, b, False, bool(np.isfinite(b))) for a, b in zip(cuts[:-1], cuts[1:])]
    return Partition(cells, 1)


def build_voronoi_cells(sites) -> Partition:
    sites = np.asarray(sites, dtype=float)
    if len(np.unique(sites.reshape(len(sites), -1), axis=0)) != len(sites):
        raise ValueError("Voronoi sites must be distinct")
    return Partition.voronoi(sites)


def lloyd_sites(mu, k: int, iterations: int = 50, seed: int = 0) -> np.ndarray:
    """Weighted Lloyd iterations from ``k`` distinct atoms picked by a seeded shuffle.

    Sites whose cell empties keep their position.  The result is returned in
    lexicographic order.
    """
    mu = as_grid(mu)
    if k < 1 or k > len(mu):
        raise ValueError(f"k = {k} must be between 1 and the number of atoms ({len(mu)})")
    rng = np.random.default_rng(seed)
    sites = mu.points[np.sort(rng.permutation(len(mu))[:k])].copy()
    for _ in range(iterations):
        lab = nearest_site(sites, mu.points)
        mass = np.bincount(lab, weights=mu.weights, minlength=k)
        live = mass > 0
        for a in range(mu.d):
            s = np.bincount(lab, weights=mu.weights * mu.points[:, a], minlength=k)
            sites[live, a] = s[live] / mass[live]
    return sites[np.lexsort(sites.T[::-1])]
