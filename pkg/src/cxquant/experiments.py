"""Desk-scale runs of the three worked MOT examples.

1. U[-1, 1] to U[-2, 2] with ``|y - x|^2.3``; input coupling left-curtain (or
   right-curtain, or the optimiser itself); quantile cells on both sides.
2. N(0, 1) to N(0, 2) through ``Y = X + Z``; Voronoi cells from Lloyd sites on
   both sides.
3. U([-1, 1]^2) to U([-2, 2]^2) with ``|x1 - y1|^2.3 + |x2 - y2|^2.3`` and the
   Rademacher optimiser as input; square grid cells on both sides.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from . import couplings
from .measures import DiscreteCoupling, PowerDistance, QuadratureMeasure
from .mot import StabilityTable, stability_experiment
from .quantise import build_grid_boxes, build_quantile_cells, build_voronoi_cells, lloyd_sites

RHO = 2.3
DEFAULT_LEVELS = {1: (5, 10, 20, 50, 100), 2: (5, 10, 20, 30), 3: (5, 10, 20)}
HIST_BINS = 200


@dataclass
class ExampleRun:
    example: int
    table: StabilityTable
    coupling: DiscreteCoupling  # optimiser at the largest level

    def heatmap_csv(self) -> str:
        if self.example == 3:
            return projection_histogram_csv(self.coupling)
        q = self.table.levels[-1]
        return coupling_matrix_csv(self.coupling, q.mu_n.points[:, 0], q.nu_n.points[:, 0])


def example_cost(k: int) -> PowerDistance:
    return PowerDistance(RHO, per_coordinate=(k == 3))


def example_input(k: int, grid: int | None = None, coupling: str = "left"):
    if k == 1:
        make = {
            "left": couplings.left_curtain_uniform,
            "right": couplings.right_curtain_uniform,
            "optimal": couplings.optimal_pm1_uniform,
        }[coupling]
        return make(grid or couplings.DEFAULT_M_1D)
    if k == 2:
        return couplings.gaussian_convolution(m_x=grid or couplings.DEFAULT_M_1D)
    if k == 3:
        return couplings.rademacher_2d_uniform(grid or couplings.DEFAULT_M_2D)
    raise ValueError(f"unknown example {k}")


def example_partitions(k: int, n: int, pi_tilde, seed: int = 0):
    if k == 1:
        nu_ref = QuadratureMeasure.uniform_box([-2.0], [2.0], 2, exact_quantile=True)
        return build_quantile_cells(pi_tilde.marginal, n), build_quantile_cells(nu_ref, n)
    if k == 2:
        cells = build_voronoi_cells(lloyd_sites(pi_tilde.marginal.grid, n, seed=seed))
        return cells, cells
    if k == 3:
        return build_grid_boxes([-1.0, -1.0], [1.0, 1.0], n), build_grid_boxes([-2.0, -2.0], [2.0, 2.0], n)
    raise ValueError(f"unknown example {k}")


def run_example(k: int, levels=None, grid: int | None = None, seed: int = 0,
                coupling: str = "left") -> ExampleRun:
    """Quantise, solve and tabulate example ``k`` at each level ``n`` (cells per side, per axis for k = 3)."""
    levels = tuple(levels or DEFAULT_LEVELS[k])
    pi_tilde = example_input(k, grid, coupling)
    parts = [example_partitions(k, n, pi_tilde, seed) for n in levels]
    known = 1.0 if k == 1 else (2.0 if k == 3 else None)
    table = stability_experiment(
        pi_tilde,
        example_cost(k),
        [a for a, _ in parts],
        [b for _, b in parts],
        labels=levels,
        known_optimum=known,
    )
    return ExampleRun(k, table, table.solutions[-1].coupling)


def coupling_matrix_csv(pi: DiscreteCoupling, xs: np.ndarray, ys: np.ndarray) -> str:
    """Dense weight matrix: one row per x-atom, one column per y-atom, coordinates as labels."""
    mat = np.zeros((len(xs), len(ys)))
    i = np.searchsorted(xs, pi.x[:, 0])
    j = np.searchsorted(ys, pi.y[:, 0])
    np.add.at(mat, (i, j), pi.weights)
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["x\\y"] + [f"{v:.17g}" for v in ys])
    for xv, row in zip(xs, mat):
        w.writerow([f"{xv:.17g}"] + [f"{v:.17g}" for v in row])
    return out.getvalue()


def projection(pi: DiscreteCoupling) -> tuple[np.ndarray, np.ndarray]:
    """``(x2 - x1, y2 - y1)`` for every atom of a planar coupling."""
    return pi.x[:, 1] - pi.x[:, 0], pi.y[:, 1] - pi.y[:, 0]


def projection_histogram(pi: DiscreteCoupling, bins: int = HIST_BINS):
    u, v = projection(pi)
    hist, ue, ve = np.histogram2d(u, v, bins=bins, range=[[-2.0, 2.0], [-4.0, 4.0]], weights=pi.weights)
    return hist, ue, ve


def projection_histogram_csv(pi: DiscreteCoupling, bins: int = HIST_BINS) -> str:
    hist, ue, ve = projection_histogram(pi, bins)
    uc, vc = (ue[:-1] + ue[1:]) / 2, (ve[:-1] + ve[1:]) / 2
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["u\\v"] + [f"{v:.17g}" for v in vc])
    for uv, row in zip(uc, hist):
        w.writerow([f"{uv:.17g}"] + [f"{v:.17g}" for v in row])
    return out.getvalue()


def mass_near_unit_shift(pi: DiscreteCoupling, tol: float = 0.15) -> float:
    """Coupling mass on atoms with ``||y - x| - 1| <= tol``."""
    gap = np.abs(np.abs(pi.y[:, 0] - pi.x[:, 0]) - 1.0)
    return float(pi.weights[gap <= tol].sum())


def mass_near_projection_lines(pi: DiscreteCoupling, tol: float = 0.2) -> float:
    """Mass of projected atoms within Euclidean distance ``tol`` of the lines ``v = u - 2, u, u + 2``."""
    u, v = projection(pi)
    dist = np.min(np.abs((v - u)[:, None] - np.array([-2.0, 0.0, 2.0])[None, :]), axis=1) / np.sqrt(2.0)
    return float(pi.weights[dist <= tol].sum())
