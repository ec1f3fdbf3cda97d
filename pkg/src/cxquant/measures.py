"""Finitely supported measures, couplings, partitions and quadrature grids.

Points are rows of float arrays of shape ``(k, d)`` with ``1 <= d <= 3``.
All value types are immutable after construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats
from scipy.sparse.csgraph import connected_components
from scipy.sparse import coo_matrix
from scipy.spatial import cKDTree

MERGE_TOL = 1e-12
WEIGHT_SUM_TOL = 1e-12
MARTINGALE_TOL = 1e-9
GAUSSIAN_TRUNCATION = 8.0


class MeasureError(ValueError):
    pass


def as_points(points, d: int | None = None) -> np.ndarray:
    """Coerce ``points`` to a finite float array of shape ``(k, d)``."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1) if d in (None, 1) else arr.reshape(-1, d)
    if arr.ndim != 2:
        raise MeasureError(f"points must be a 2-d array, got shape {arr.shape}")
    if d is not None and arr.shape[1] != d:
        raise MeasureError(f"expected dimension {d}, got {arr.shape[1]}")
    if not 1 <= arr.shape[1] <= 3:
        raise MeasureError(f"dimension must be 1, 2 or 3, got {arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        raise MeasureError("coordinates must be finite")
    return arr


def _merge(points: np.ndarray, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Prune zero weights, sort lexicographically, merge points within MERGE_TOL.

    Groups are connected components of the "closer than MERGE_TOL in max-norm"
    graph.  Each group is represented by its lexicographically smallest point and
    its weights are summed in sorted order, so the result does not depend on the
    input order of the atoms.
    """
    keep = weights > 0
    points, weights = points[keep], weights[keep]
    order = np.lexsort(points.T[::-1]) if len(points) else np.arange(0)
    points, weights = points[order], weights[order]
    if len(points) < 2:
        return points, weights
    pairs = cKDTree(points).query_pairs(MERGE_TOL, p=np.inf, output_type="ndarray")
    if len(pairs) == 0:
        return points, weights
    k = len(points)
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(k, k))
    _, labels = connected_components(graph, directed=False)
    # relabel so groups appear in order of their first (smallest) member
    _, first = np.unique(labels, return_index=True)
    rank = np.empty_like(first)
    rank[np.argsort(first)] = np.arange(len(first))
    group = rank[labels]
    merged_w = np.bincount(group, weights=weights)
    merged_p = points[np.sort(first)]
    return merged_p, merged_w


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """``sum_i weights[i] * delta_{points[i]}`` on R^d."""

    points: np.ndarray
    weights: np.ndarray

    def __init__(self, points, weights, *, normalise: bool = False):
        w = np.asarray(weights, dtype=float).ravel()
        p = as_points(points)
        if p.shape[0] != w.size:
            raise MeasureError(f"{p.shape[0]} points but {w.size} weights")
        if np.any(~np.isfinite(w)) or np.any(w < 0):
            raise MeasureError("weights must be finite and nonnegative")
        p, w = _merge(p, w)
        if w.size == 0:
            raise MeasureError("measure has no atoms with positive weight")
        if normalise:
            w = w / w.sum()
        if abs(w.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise MeasureError(f"weights sum to {w.sum():.17g}, not 1")
        p.flags.writeable = False
        w.flags.writeable = False
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "weights", w)

    @classmethod
    def dirac(cls, point) -> "DiscreteMeasure":
        return cls(as_points(point).reshape(1, -1), [1.0])

    @classmethod
    def uniform(cls, points) -> "DiscreteMeasure":
        p = as_points(points)
        return cls(p, np.full(len(p), 1.0 / len(p)), normalise=True)

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.weights.size

    def mean(self) -> np.ndarray:
        return self.weights @ self.points

    def integrate(self, f: Callable[[np.ndarray], np.ndarray]) -> float:
        return float(self.weights @ f(self.points))

    def cdf_steps(self) -> tuple[np.ndarray, np.ndarray]:
        """For d = 1: sorted atoms and cumulative weights ``F(atom)``."""
        if self.d != 1:
            raise MeasureError("distribution function needs d = 1")
        return self.points[:, 0], np.cumsum(self.weights)

    def allclose(self, other: "DiscreteMeasure", atol: float = 1e-9) -> bool:
        """Atom-for-atom comparison (both are stored in canonical sorted order)."""
        return (
            self.points.shape == other.points.shape
            and np.allclose(self.points, other.points, rtol=0, atol=atol)
            and np.allclose(self.weights, other.weights, rtol=0, atol=atol)
        )

    def __repr__(self) -> str:
        body = ", ".join(
            f"{w:.6g}@{tuple(np.round(p, 6)) if self.d > 1 else round(float(p[0]), 6)}"
            for p, w in zip(self.points[:6], self.weights[:6])
        )
        more = ", ..." if len(self) > 6 else ""
        return f"DiscreteMeasure(d={self.d}, n={len(self)}: {body}{more})"


def barycentre(gamma: DiscreteMeasure) -> np.ndarray:
    return gamma.mean()


@dataclass(frozen=True, eq=False)
class DiscreteCoupling:
    """``sum_k weights[k] * delta_{(x[k], y[k])}`` on R^d x R^d."""

    x: np.ndarray
    y: np.ndarray
    weights: np.ndarray

    def __init__(self, x, y, weights, *, normalise: bool = False):
        x = as_points(x)
        y = as_points(y, x.shape[1])
        w = np.asarray(weights, dtype=float).ravel()
        if not (len(x) == len(y) == w.size):
            raise MeasureError("x, y and weights must have the same length")
        if np.any(~np.isfinite(w)) or np.any(w < 0):
            raise MeasureError("weights must be finite and nonnegative")
        d = x.shape[1]
        xy, w = _merge(np.hstack([x, y]), w)
        if w.size == 0:
            raise MeasureError("coupling has no atoms with positive weight")
        if normalise:
            w = w / w.sum()
        if abs(w.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise MeasureError(f"weights sum to {w.sum():.17g}, not 1")
        x, y = np.ascontiguousarray(xy[:, :d]), np.ascontiguousarray(xy[:, d:])
        for a in (x, y, w):
            a.flags.writeable = False
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "weights", w)

    @classmethod
    def product(cls, mu: DiscreteMeasure, nu: DiscreteMeasure) -> "DiscreteCoupling":
        i, j = np.meshgrid(np.arange(len(mu)), np.arange(len(nu)), indexing="ij")
        w = mu.weights[i.ravel()] * nu.weights[j.ravel()]
        return cls(mu.points[i.ravel()], nu.points[j.ravel()], w, normalise=True)

    @property
    def d(self) -> int:
        return self.x.shape[1]

    def __len__(self) -> int:
        return self.weights.size

    def expectation(self, cost) -> float:
        return float(self.weights @ cost.pairwise(self.x, self.y))

    def martingale_defect(self) -> float:
        """Largest ``|E[Y | X = x] - x|`` over x-atoms and coordinates."""
        xs, inv = np.unique(self.x, axis=0, return_inverse=True)
        inv = inv.ravel()
        mass = np.bincount(inv, weights=self.weights)
        defect = np.zeros_like(xs)
        for k in range(self.d):
            defect[:, k] = np.bincount(inv, weights=self.weights * (self.y[:, k] - self.x[:, k]))
        return float(np.max(np.abs(defect / mass[:, None])))

    def is_martingale(self, tol: float = MARTINGALE_TOL) -> bool:
        return self.martingale_defect() <= tol

    def __repr__(self) -> str:
        return f"DiscreteCoupling(d={self.d}, n={len(self)})"


def marginals(pi: DiscreteCoupling) -> tuple[DiscreteMeasure, DiscreteMeasure]:
    return DiscreteMeasure(pi.x, pi.weights), DiscreteMeasure(pi.y, pi.weights)


# ---------------------------------------------------------------------------
# cost functions


@dataclass(frozen=True)
class PowerDistance:
    """``|x - y|^rho`` (Euclidean), or ``sum_k |x_k - y_k|^rho`` when per-coordinate."""

    rho: float
    per_coordinate: bool = False

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("exponent must be positive")

    def pairwise(self, x, y) -> np.ndarray:
        """Cost of matched rows: ``c(x[k], y[k])``."""
        diff = np.abs(as_points(x) - as_points(y))
        if self.per_coordinate:
            return np.sum(diff**self.rho, axis=1)
        return np.linalg.norm(diff, axis=1) ** self.rho

    def matrix(self, x, y) -> np.ndarray:
        """Cost matrix ``C[i, j] = c(x[i], y[j])``."""
        x, y = as_points(x), as_points(y)
        diff = np.abs(x[:, None, :] - y[None, :, :])
        if self.per_coordinate:
            return np.sum(diff**self.rho, axis=2)
        return np.sqrt(np.sum(diff**2, axis=2)) ** self.rho

    def __call__(self, x, y) -> float:
        return float(self.pairwise(np.atleast_1d(x)[None], np.atleast_1d(y)[None])[0])

    @classmethod
    def parse(cls, spec: str) -> "PowerDistance":
        """Parse ``power:RHO`` or ``power:RHO:percoord``."""
        parts = spec.split(":")
        if parts[0] != "power" or len(parts) not in (2, 3):
            raise ValueError(f"cost spec must be power:RHO[:percoord], got {spec!r}")
        if len(parts) == 3 and parts[2] != "percoord":
            raise ValueError(f"unknown cost flag {parts[2]!r}")
        return cls(float(parts[1]), len(parts) == 3)


# ---------------------------------------------------------------------------
# cells and partitions


def _bounds(values, d: int, fill: float) -> np.ndarray:
    arr = np.array([fill if v is None else v for v in np.ravel(values)], dtype=float)
    if arr.size == 1 and d > 1:
        arr = np.repeat(arr, d)
    if arr.size != d:
        raise MeasureError(f"box bounds must have {d} entries")
    return arr


@dataclass(frozen=True, eq=False)
class Box:
    """Axis-aligned box; by default half-open ``[lower, upper)`` on every axis.

    Infinite bounds are allowed.  ``lower_closed``/``upper_closed`` give the
    closedness of each face.
    """

    lower: np.ndarray
    upper: np.ndarray
    lower_closed: tuple[bool, ...]
    upper_closed: tuple[bool, ...]

    def __init__(self, lower, upper, lower_closed=True, upper_closed=False):
        lo, hi = np.atleast_1d(np.asarray(lower, dtype=float)), np.atleast_1d(np.asarray(upper, dtype=float))
        d = lo.size
        if hi.size != d or not 1 <= d <= 3:
            raise MeasureError("box bounds must have matching dimension 1..3")
        lc = tuple(np.broadcast_to(np.asarray(lower_closed, dtype=bool), (d,)).tolist())
        uc = tuple(np.broadcast_to(np.asarray(upper_closed, dtype=bool), (d,)).tolist())
        if np.any(lo > hi):
            raise MeasureError("box lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "lower_closed", lc)
        object.__setattr__(self, "upper_closed", uc)

    @property
    def d(self) -> int:
        return self.lower.size

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = as_points(points, self.d)
        lc, uc = np.array(self.lower_closed), np.array(self.upper_closed)
        above = np.where(lc, points >= self.lower, points > self.lower)
        below = np.where(uc, points <= self.upper, points < self.upper)
        return np.all(above & below, axis=1)

    def to_json(self) -> dict:
        def enc(a):
            return [None if not np.isfinite(v) else float(v) for v in a]

        return {
            "kind": "box",
            "lower": enc(self.lower),
            "upper": enc(self.upper),
            "lower_closed": list(self.lower_closed),
            "upper_closed": list(self.upper_closed),
        }


def interval(a: float, b: float, left_closed: bool = True, right_closed: bool = False) -> Box:
    """One-dimensional interval between ``a`` and ``b`` with the given closedness."""
    return Box([a], [b], left_closed, right_closed)


def singleton(point) -> Box:
    p = np.atleast_1d(np.asarray(point, dtype=float))
    return Box(p, p, True, True)


def whole_space(d: int) -> Box:
    return Box(np.full(d, -np.inf), np.full(d, np.inf), False, False)


@dataclass(frozen=True, eq=False)
class VoronoiRegion:
    """Points whose nearest site (Euclidean) is ``sites[index]``; ties go to the lowest index."""

    index: int
    sites: np.ndarray

    @property
    def d(self) -> int:
        return self.sites.shape[1]

    def contains(self, points: np.ndarray) -> np.ndarray:
        return nearest_site(self.sites, points) == self.index

    def to_json(self) -> dict:
        return {"kind": "voronoi", "index": int(self.index), "sites": self.sites.tolist()}


@dataclass(frozen=True)
class Remainder:
    """Everything not covered by the other cells of its partition."""

    def to_json(self) -> dict:
        return {"kind": "remainder"}


def nearest_site(sites: np.ndarray, points) -> np.ndarray:
    points = as_points(points, sites.shape[1])
    out = np.empty(len(points), dtype=np.intp)
    chunk = max(1, 2_000_000 // max(1, len(sites)))
    for s in range(0, len(points), chunk):
        block = points[s : s + chunk]
        dist2 = np.sum((block[:, None, :] - sites[None, :, :]) ** 2, axis=2)
        out[s : s + chunk] = np.argmin(dist2, axis=1)
    return out


class PartitionError(MeasureError):
    pass


@dataclass(frozen=True, eq=False)
class Partition:
    """Finite list of disjoint cells.

    At most one ``Remainder`` cell may be present; it holds every point that no
    other cell holds, which makes the partition cover R^d.
    """

    cells: tuple
    d: int
    grid_edges: tuple | None = None

    def __init__(self, cells: Sequence, d: int, grid_edges=None):
        cells = tuple(cells)
        if sum(isinstance(c, Remainder) for c in cells) > 1:
            raise PartitionError("at most one remainder cell")
        for c in cells:
            if not isinstance(c, Remainder) and c.d != d:
                raise PartitionError(f"cell dimension {c.d} does not match partition dimension {d}")
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "d", d)
        # edges of a tensor grid of [lo, hi) boxes listed in C order, then a remainder
        object.__setattr__(self, "grid_edges", None if grid_edges is None else tuple(grid_edges))

    def __len__(self) -> int:
        return len(self.cells)

    @classmethod
    def trivial(cls, d: int) -> "Partition":
        return cls([whole_space(d)], d)

    @classmethod
    def voronoi(cls, sites) -> "Partition":
        sites = as_points(sites)
        sites.flags.writeable = False
        return cls([VoronoiRegion(k, sites) for k in range(len(sites))], sites.shape[1])

    def assign(self, points) -> np.ndarray:
        """Index of the unique cell holding each point.

        Raises ``PartitionError`` naming the first point covered by no cell or by
        more than one cell.
        """
        points = as_points(points, self.d)
        k = len(points)
        if k and self.cells and all(isinstance(c, VoronoiRegion) for c in self.cells):
            return nearest_site(self.cells[0].sites, points)
        if self.grid_edges is not None:
            return self._assign_grid(points)
        count = np.zeros(k, dtype=np.intp)
        index = np.full(k, -1, dtype=np.intp)
        rem = None
        for ci, cell in enumerate(self.cells):
            if isinstance(cell, Remainder):
                rem = ci
                continue
            inside = cell.contains(points)
            count += inside
            index[inside] = ci
        if rem is not None:
            index[count == 0] = rem
            count[count == 0] = 1
        bad = np.flatnonzero(count != 1)
        if bad.size:
            p = points[bad[0]]
            what = "no cell" if count[bad[0]] == 0 else f"{count[bad[0]]} cells"
            raise PartitionError(f"point {p.tolist()} lies in {what}")
        return index

    def _assign_grid(self, points: np.ndarray) -> np.ndarray:
        shape = tuple(len(e) - 1 for e in self.grid_edges)
        idx = np.empty((self.d, len(points)), dtype=np.intp)
        outside = np.zeros(len(points), dtype=bool)
        for a, edges in enumerate(self.grid_edges):
            k = np.searchsorted(edges, points[:, a], side="right") - 1
            outside |= (k < 0) | (k >= shape[a])
            idx[a] = np.clip(k, 0, shape[a] - 1)
        out = np.ravel_multi_index(tuple(idx), shape)
        out[outside] = len(self.cells) - 1
        return out

    def to_json(self) -> dict:
        return {"d": self.d, "cells": [c.to_json() for c in self.cells]}


# ---------------------------------------------------------------------------
# quadrature stand-ins for continuous marginals


@dataclass(frozen=True)
class UniformBox:
    lower: tuple
    upper: tuple
    m: int


@dataclass(frozen=True)
class Gaussian1D:
    mean: float
    variance: float
    m: int
    truncation: float = GAUSSIAN_TRUNCATION


@dataclass(frozen=True)
class Explicit:
    pass


@dataclass(frozen=True, eq=False)
class QuadratureMeasure:
    """A midpoint-rule grid standing in for a continuous law.

    ``exact_quantile`` lets one-dimensional operations use the analytic quantile
    function of the source instead of the grid.
    """

    grid: DiscreteMeasure
    source: object = field(default_factory=Explicit)
    exact_quantile: bool = False

    @property
    def d(self) -> int:
        return self.grid.d

    @classmethod
    def uniform_box(cls, lower, upper, m: int, exact_quantile: bool = False) -> "QuadratureMeasure":
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        axes = [lo + (hi - lo) * (np.arange(m) + 0.5) / m for lo, hi in zip(lower, upper)]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([g.ravel() for g in mesh], axis=1)
        grid = DiscreteMeasure(pts, np.full(len(pts), 1.0 / len(pts)), normalise=True)
        return cls(grid, UniformBox(tuple(lower), tuple(upper), m), exact_quantile)

    @classmethod
    def gaussian(cls, mean: float, variance: float, m: int, truncation: float = GAUSSIAN_TRUNCATION,
                 exact_quantile: bool = False) -> "QuadratureMeasure":
        """Midpoint nodes on ``mean +- truncation * sd``, mirrored so the grid is exactly symmetric."""
        nodes, w = symmetric_gaussian_nodes(variance, m, truncation)
        grid = DiscreteMeasure((mean + nodes)[:, None], w, normalise=True)
        return cls(grid, Gaussian1D(mean, variance, m, truncation), exact_quantile)

    @classmethod
    def explicit(cls, grid: DiscreteMeasure) -> "QuadratureMeasure":
        return cls(grid, Explicit(), False)

    def quantile(self, u) -> np.ndarray:
        """Analytic quantile function (requires a 1-d uniform or Gaussian source)."""
        u = np.asarray(u, dtype=float)
        src = self.source
        if isinstance(src, UniformBox) and len(src.lower) == 1:
            return src.lower[0] + (src.upper[0] - src.lower[0]) * u
        if isinstance(src, Gaussian1D):
            return stats.norm.ppf(u, loc=src.mean, scale=np.sqrt(src.variance))
        raise MeasureError("no analytic quantile for this source")

    def quantile_integral(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """``int_a^b F^{-1}(u) du`` in closed form for uniform and Gaussian sources."""
        src = self.source
        if isinstance(src, UniformBox) and len(src.lower) == 1:
            lo, hi = src.lower[0], src.upper[0]
            return (b - a) * (lo + (hi - lo) * (a + b) / 2)
        if isinstance(src, Gaussian1D):
            sd = np.sqrt(src.variance)
            phi = lambda u: stats.norm.pdf(stats.norm.ppf(u))
            return src.mean * (b - a) + sd * (phi(a) - phi(b))
        raise MeasureError("no analytic quantile for this source")


def symmetric_gaussian_nodes(variance: float, m: int, truncation: float = GAUSSIAN_TRUNCATION):
    """Midpoint nodes and normalised weights of N(0, variance) on ``+-truncation*sd``.

    The positive half is built once and mirrored, so nodes and weights are
    exactly symmetric about zero.
    """
    if not variance > 0:
        raise ValueError("variance must be positive")
    if m < 1:
        raise ValueError("need at least one node")
    sd = np.sqrt(variance)
    h = 2 * truncation * sd / m
    if m % 2:
        half = h * np.arange(1, (m - 1) // 2 + 1)
        nodes = np.concatenate([-half[::-1], [0.0], half])
    else:
        half = h * (np.arange(m // 2) + 0.5)
        nodes = np.concatenate([-half[::-1], half])
    dens = np.exp(-0.5 * (nodes / sd) ** 2)
    return nodes, dens / dens.sum()


def as_grid(mu) -> DiscreteMeasure:
    return mu.grid if isinstance(mu, QuadratureMeasure) else mu


# ---------------------------------------------------------------------------
# kernel couplings


@dataclass(frozen=True, eq=False)
class KernelCoupling:
    """``pi(dx, dy) = marginal(dx) * sum_k w_k(x) delta_{T_k(x)}(dy)``.

    Each kernel entry is a pair ``(weight, map)`` of vectorised callables: the
    weight takes an ``(k, d)`` array to ``(k,)`` values in [0, 1], the map takes
    ``(k, d)`` to ``(k, d)``.
    """

    marginal: QuadratureMeasure
    kernel: tuple
    martingale: bool = False
    martingale_tol: float = MARTINGALE_TOL

    def __post_init__(self):
        object.__setattr__(self, "kernel", tuple(self.kernel))
        x = self.marginal.grid.points
        w = self.weights_at(x)
        if np.any(w < 0) or np.any(w > 1):
            raise MeasureError("kernel weights must lie in [0, 1]")
        if np.max(np.abs(w.sum(axis=0) - 1.0)) > WEIGHT_SUM_TOL:
            raise MeasureError("kernel weights do not sum to 1 at every grid point")
        if self.martingale and self.martingale_defect() > self.martingale_tol:
            raise MeasureError(
                f"kernel barycentre misses x by {self.martingale_defect():.3e}"
            )

    def weights_at(self, x) -> np.ndarray:
        x = as_points(x, self.marginal.d)
        return np.stack([np.broadcast_to(np.asarray(wf(x), dtype=float), (len(x),)) for wf, _ in self.kernel])

    def images_at(self, x) -> np.ndarray:
        x = as_points(x, self.marginal.d)
        return np.stack([as_points(tf(x), x.shape[1]) for _, tf in self.kernel])

    def martingale_defect(self) -> float:
        x = self.marginal.grid.points
        w = self.weights_at(x)
        t = self.images_at(x)
        bary = np.einsum("kn,knd->nd", w, t)
        return float(np.max(np.abs(bary - x)))

    def expectation(self, cost) -> float:
        """``E[c(X, Y)]`` by summation over the grid."""
        x = self.marginal.grid.points
        mu = self.marginal.grid.weights
        w = self.weights_at(x)
        t = self.images_at(x)
        return float(sum(mu @ (w[k] * cost.pairwise(x, t[k])) for k in range(len(self.kernel))))


def discretise_kernel_coupling(pi: KernelCoupling) -> DiscreteCoupling:
    x = pi.marginal.grid.points
    mu = pi.marginal.grid.weights
    w = pi.weights_at(x)
    if np.max(np.abs(w.sum(axis=0) - 1.0)) > WEIGHT_SUM_TOL:
        raise MeasureError("kernel weights do not sum to 1 at every grid point")
    t = pi.images_at(x)
    K = len(pi.kernel)
    xs = np.tile(x, (K, 1))
    ys = t.reshape(-1, x.shape[1])
    ws = (w * mu[None, :]).ravel()
    return DiscreteCoupling(xs, ys, ws)
