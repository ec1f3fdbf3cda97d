import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cxquant import DiscreteCoupling, DiscreteMeasure

settings.register_profile(
    "repo", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("repo")


def random_martingale_coupling(rng: np.random.Generator, d: int, max_atoms: int = 30) -> DiscreteCoupling:
    """Martingale coupling with at most ``max_atoms`` atoms: each x-atom splits
    into 1..4 images whose weighted mean is exactly recentred on x."""
    xs, ys, ws = [], [], []
    budget = max_atoms
    while budget > 0:
        k = int(rng.integers(1, min(4, budget) + 1))
        x = np.round(rng.uniform(-2, 2, d), 3)
        mass = rng.uniform(0.2, 1.0)
        w = rng.dirichlet(np.ones(k)) * mass
        z = rng.normal(0, 1, (k, d))
        z -= (w / w.sum()) @ z
        for j in range(k):
            xs.append(x)
            ys.append(x + z[j])
            ws.append(w[j])
        budget -= k
        if rng.random() < 0.25:
            break
    ws = np.array(ws)
    return DiscreteCoupling(np.array(xs), np.array(ys), ws / ws.sum())


def random_measure(rng: np.random.Generator, d: int, k: int) -> DiscreteMeasure:
    w = rng.dirichlet(np.ones(k))
    return DiscreteMeasure(rng.normal(0, 1, (k, d)), w / w.sum(), normalise=True)


def convex_order_1d(mu: DiscreteMeasure, nu: DiscreteMeasure, tol: float = 1e-9) -> bool:
    """Independent test of mu <=cx nu on the line: equal means and
    ``E|X - a| <= E|Y - a|`` at every kink ``a`` of either potential function."""
    if abs(mu.mean()[0] - nu.mean()[0]) > tol:
        return False
    a = np.concatenate([mu.points[:, 0], nu.points[:, 0]])
    pot_mu = mu.weights @ np.abs(mu.points[:, [0]] - a[None, :])
    pot_nu = nu.weights @ np.abs(nu.points[:, [0]] - a[None, :])
    return bool(np.all(pot_mu <= pot_nu + tol))


def w_p_1d(mu: DiscreteMeasure, nu: DiscreteMeasure, p: float) -> float:
    """Quantile coupling on the merged grid of cumulative weights."""
    fm = np.cumsum(mu.weights)
    fn = np.cumsum(nu.weights)
    fm[-1] = fn[-1] = 1.0
    grid = np.unique(np.concatenate([[0.0], fm, fn]))
    mid = (grid[:-1] + grid[1:]) / 2
    qm = mu.points[np.minimum(np.searchsorted(fm, mid), len(fm) - 1), 0]
    qn = nu.points[np.minimum(np.searchsorted(fn, mid), len(fn) - 1), 0]
    return float((np.diff(grid) @ np.abs(qm - qn) ** p) ** (1 / p))


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)
