import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import convex_order_1d, random_martingale_coupling, w_p_1d
from cxquant import (
    DiscreteCoupling,
    DiscreteMeasure,
    Partition,
    PowerDistance,
    QuadratureMeasure,
    Remainder,
    assemble_mot_lp,
    barycentric_quantise,
    build_dyadic_boxes,
    build_voronoi_cells,
    check_convex_order,
    diameter_bound,
    interval,
    marginals,
    proper_barycentric_quantise,
    represent_as_barycentric,
    singleton,
    solve_discrete_mot,
    solve_discrete_ot,
    stability_experiment,
    wasserstein_p,
)
from cxquant.mot import TABLE_HEADER

C23 = PowerDistance(2.3)
R1 = Partition.trivial(1)


def dm(points, weights):
    return DiscreteMeasure(np.asarray(points, dtype=float).reshape(len(weights), -1), weights)


MU_CE = dm([-1, 0, 1], [0.25, 0.5, 0.25])
NU_CE = dm([-1, 1], [0.5, 0.5])


# -- assembly ----------------------------------------------------------------------


def test_two_by_two_layout_by_hand():
    x1, x2, y1, y2 = -0.5, 0.5, -1.5, 1.5
    a1, a2, b1, b2 = 0.5, 0.5, 0.5, 0.5
    asm = assemble_mot_lp(dm([x1, x2], [a1, a2]), dm([y1, y2], [b1, b2]), C23)
    A = np.array([
        [1, 0, 1, 0],
        [0, 1, 0, 1],
        [1, 1, 0, 0],
        [0, 0, 1, 1],
        [y1, 0, y2, 0],
        [0, y1, 0, y2],
    ])
    b = np.array([a1, a2, b1, b2, a1 * x1, a2 * x2])
    c = np.array([abs(y1 - x1) ** 2.3, abs(y1 - x2) ** 2.3, abs(y2 - x1) ** 2.3, abs(y2 - x2) ** 2.3])
    assert np.array_equal(asm.problem.A.toarray(), A)
    assert np.array_equal(asm.problem.b, b)
    assert np.array_equal(asm.problem.c, c)
    assert asm.var(1, 0) == 1 and asm.var(0, 1) == 2


def test_dirac_assembly_and_sizes():
    asm = assemble_mot_lp(dm([0.0], [1.0]), dm([0.0], [1.0]), C23)
    assert asm.problem.A.toarray().tolist() == [[1.0], [1.0], [0.0]]
    assert asm.problem.b.tolist() == [1.0, 1.0, 0.0]
    ce = assemble_mot_lp(MU_CE, NU_CE, C23)
    assert (ce.problem.n_rows, ce.problem.n_vars) == (8, 6)
    two_d = assemble_mot_lp(dm([[0, 0], [1, 1]], [0.5, 0.5]), dm([[-1, -1], [0.5, 0.5], [2, 2]], [0.25, 0.5, 0.25]), C23)
    assert two_d.problem.n_rows == 2 + 3 + 2 * 2


def test_assembly_warns_on_different_means():
    with pytest.warns(UserWarning, match="means differ"):
        assemble_mot_lp(dm([0.0], [1.0]), dm([1.0], [1.0]), C23)
    with pytest.raises(ValueError):
        assemble_mot_lp(dm([0.0], [1.0]), dm([[1.0, 0.0]], [1.0]), C23)


# -- MOT / OT ----------------------------------------------------------------------


def test_mot_unique_coupling():
    sol = solve_discrete_mot(dm([1.0], [1.0]), dm([0.0, 2.0], [0.5, 0.5]), C23)
    assert sol.in_order and abs(sol.value - 1.0) <= 1e-9
    assert sol.coupling.y[:, 0].tolist() == [0.0, 2.0]
    assert np.allclose(sol.coupling.weights, 0.5, atol=1e-12)


@given(st.integers(0, 2**31 - 1), st.integers(1, 2))
def test_mot_identity_is_zero(seed, d):
    mu = DiscreteMeasure(np.random.default_rng(seed).normal(size=(5, d)), np.full(5, 0.2))
    sol = solve_discrete_mot(mu, mu, C23)
    assert sol.in_order and abs(sol.value) <= 1e-12


def test_mot_reports_out_of_order():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert not solve_discrete_mot(NU_CE, MU_CE, C23).in_order
        assert not solve_discrete_mot(dm([0.0], [1.0]), dm([1.0], [1.0]), C23).in_order


@given(st.integers(0, 2**31 - 1), st.integers(1, 2))
def test_mot_above_ot(seed, d):
    pi = random_martingale_coupling(np.random.default_rng(seed), d, 12)
    mu, nu = marginals(pi)
    sol = solve_discrete_mot(mu, nu, C23)
    ot, _ = solve_discrete_ot(mu, nu, C23)
    assert sol.in_order and sol.value >= ot - 1e-9
    assert sol.value <= pi.expectation(C23) + 1e-9
    assert sol.coupling.is_martingale(1e-8)


def test_wasserstein_examples():
    assert wasserstein_p(dm([0.0], [1.0]), dm([1.0], [1.0]), 1) == 1.0
    assert wasserstein_p(dm([0.0], [1.0]), NU_CE, 1) == 1.0
    half = dm([0.0, 1.0], [0.5, 0.5])
    assert wasserstein_p(half, half, 2) == 0.0
    with pytest.raises(ValueError):
        wasserstein_p(half, half, 0.5)


@given(st.integers(0, 2**31 - 1), st.sampled_from([1.0, 2.0, 3.0]))
def test_wasserstein_routes_agree(seed, p):
    rng = np.random.default_rng(seed)
    mu = DiscreteMeasure(rng.normal(size=(6, 1)), rng.dirichlet(np.ones(6)), normalise=True)
    nu = DiscreteMeasure(rng.normal(size=(4, 1)), rng.dirichlet(np.ones(4)), normalise=True)
    lp = wasserstein_p(mu, nu, p, method="lp")
    qf = wasserstein_p(mu, nu, p, method="quantile")
    assert lp == pytest.approx(qf, abs=1e-9)
    assert qf == pytest.approx(w_p_1d(mu, nu, p), abs=1e-12)


@given(st.integers(0, 2**31 - 1), st.integers(1, 2), st.sampled_from([1.0, 2.0]))
def test_wasserstein_below_any_coupling_cost(seed, d, p):
    rng = np.random.default_rng(seed)
    pi = DiscreteCoupling(rng.normal(size=(8, d)), rng.normal(size=(8, d)), rng.dirichlet(np.ones(8)), normalise=True)
    mu, nu = marginals(pi)
    lp_norm = pi.expectation(PowerDistance(p)) ** (1 / p)
    assert wasserstein_p(mu, nu, p) <= lp_norm + 1e-9


# -- convex order ---------------------------------------------------------------


def test_convex_order_examples():
    ok, w = check_convex_order(MU_CE, NU_CE)
    assert ok and w.is_martingale(1e-8)
    a, b = marginals(w)
    assert a.allclose(MU_CE, 1e-9) and b.allclose(NU_CE, 1e-9)
    # the witness is the kernel x=0 -> (delta_-1 + delta_1)/2
    at0 = w.x[:, 0] == 0.0
    assert np.allclose(np.sort(w.weights[at0]), [0.25, 0.25], atol=1e-9)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert check_convex_order(dm([0.0], [1.0]), dm([1.0], [1.0])) == (False, None)
    assert check_convex_order(NU_CE, dm([0.0], [1.0])) == (False, None)


def small_pair(rng):
    grid = np.arange(-16, 17) / 8
    k = int(rng.integers(1, 5))
    mu = DiscreteMeasure(rng.choice(grid, k)[:, None], rng.integers(1, 5, k) / 1.0, normalise=True)
    if rng.random() < 0.5:
        # spread every atom symmetrically: stays in order
        s = 1 / 8 * rng.integers(1, 8)
        nu_pts = np.concatenate([mu.points[:, 0] - s, mu.points[:, 0] + s])
        nu_w = np.concatenate([mu.weights, mu.weights]) / 2
        nu = DiscreteMeasure(nu_pts[:, None], nu_w, normalise=True)
    else:
        j = int(rng.integers(1, 5))
        nu = DiscreteMeasure(rng.choice(grid, j)[:, None], rng.integers(1, 5, j) / 1.0, normalise=True)
    return mu, nu


def test_strassen_soundness_against_potential_functions():
    rng = np.random.default_rng(17)
    seen = {True: 0, False: 0}
    a_grid = np.arange(-160, 161) / 8
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for _ in range(150):
            mu, nu = small_pair(rng)
            ok, w = check_convex_order(mu, nu)
            assert ok == convex_order_1d(mu, nu)
            seen[ok] += 1
            if ok:
                assert w.is_martingale(1e-8)
            else:
                f_mu = mu.weights @ np.abs(mu.points - a_grid[None, :])
                f_nu = nu.weights @ np.abs(nu.points - a_grid[None, :])
                assert np.any(f_mu > f_nu + 1e-9)
    assert seen[True] > 20 and seen[False] > 20


# -- bounds -------------------------------------------------------------------------


def test_diameter_bound_examples():
    g = dm([-1.0, 0.5, 2.0], [0.2, 0.3, 0.5])
    assert diameter_bound(g, R1).value == 3.0
    sing = Partition([singleton(v) for v in (-1.0, 0.5, 2.0)], 1)
    assert diameter_bound(g, sing).value == 0.0
    u = QuadratureMeasure.uniform_box([-1.0], [1.0], 1000).grid
    halves = Partition([interval(-1.0, 0.0), interval(0.0, 1.0)], 1)
    b = diameter_bound(u, halves, 1)
    # atoms of each half span 0.998
    assert b.value == pytest.approx(0.998, abs=1e-12) and b.sup == pytest.approx(0.998, abs=1e-12)
    w1 = wasserstein_p(u, proper_barycentric_quantise(u, halves), 1)
    assert w1 == pytest.approx(0.25, abs=1e-3) and w1 <= b.value


@given(st.integers(0, 2**31 - 1), st.integers(1, 2), st.sampled_from([1.0, 2.0]))
def test_bound_validity(seed, d, p):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, 20))
    g = DiscreteMeasure(rng.uniform(-1, 1, (k, d)), rng.dirichlet(np.ones(k)), normalise=True)
    part = build_voronoi_cells(rng.uniform(-1, 1, (int(rng.integers(1, 6)), d)))
    z = proper_barycentric_quantise(g, part)
    b = diameter_bound(g, part, p)
    assert wasserstein_p(g, z, p) <= b.value + 1e-9
    assert b.value <= b.sup + 1e-12


def test_diameter_of_large_planar_cell_uses_hull():
    rng = np.random.default_rng(0)
    pts = rng.uniform(-1, 1, (500, 2))
    g = DiscreteMeasure(pts, np.full(500, 1 / 500), normalise=True)
    from scipy.spatial.distance import pdist

    assert diameter_bound(g, Partition.trivial(2)).value == pytest.approx(pdist(pts).max(), abs=1e-12)


def test_bound_on_coupling_sides():
    pi = DiscreteCoupling([[0.0], [0.0]], [[-1.0], [1.0]], [0.5, 0.5])
    assert diameter_bound(pi, R1, side="y").value == 2.0
    assert diameter_bound(pi, R1, side="x").value == 0.0


# -- barycentric representation -----------------------------------------------------


def test_represent_dirac_at_barycentre():
    g = dm([-1.0, 0.0, 4.0], [0.25, 0.5, 0.25])
    rep = represent_as_barycentric(dm([0.75], [1.0]), g)
    q = barycentric_quantise(rep.coupling, rep.partition, R1)
    assert q.mu_n.allclose(dm([0.75], [1.0]), 1e-9)
    assert q.nu_n.points.tolist() == [[0.75]]


def test_represent_counterexample():
    rep = represent_as_barycentric(MU_CE, NU_CE)
    q = barycentric_quantise(rep.coupling, rep.partition, R1)
    assert q.mu_n.allclose(MU_CE, 1e-9)
    cells = Partition([interval(-np.inf, 0.0, False, False), singleton(0.0), interval(0.0, np.inf, False, False)], 1)
    assert np.array_equal(rep.partition.assign(MU_CE.points), cells.assign(MU_CE.points))
    assert represent_as_barycentric(NU_CE, MU_CE) is None


@given(st.integers(0, 2**31 - 1), st.integers(1, 2))
def test_represent_round_trip(seed, d):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, 6))
    g = DiscreteMeasure(rng.uniform(-1, 1, (k, d)), rng.dirichlet(np.ones(k)), normalise=True)
    zeta = proper_barycentric_quantise(g, build_voronoi_cells(rng.uniform(-1, 1, (int(rng.integers(1, 4)), d))))
    rep = represent_as_barycentric(zeta, g)
    assert rep is not None
    q = barycentric_quantise(rep.coupling, rep.partition, Partition.trivial(d))
    assert q.mu_n.allclose(zeta, 1e-9)


# -- stability ----------------------------------------------------------------------


def test_stability_trivial_and_csv():
    pi = DiscreteCoupling([[0.0]], [[0.0]], [1.0])
    table = stability_experiment(pi, C23, [R1, R1], [R1, R1], labels=[1, 2])
    assert [r.P_n for r in table.rows] == [0.0, 0.0]
    assert [r.E_pitilde_c for r in table.rows] == [0.0, 0.0]
    lines = table.to_csv().splitlines()
    assert lines[0] == ",".join(TABLE_HEADER) == "n,P_n,E_pitilde_c,bound_mu,bound_nu"
    assert lines[1] == "1,0,0,0,0"


def test_stability_flags_and_fine_levels():
    rng = np.random.default_rng(8)
    pi = random_martingale_coupling(rng, 1, 20)
    seq = [build_dyadic_boxes([-4.0], [4.0], k) for k in range(4)] + [Partition([singleton(v) for v in np.unique(pi.y)] + [Remainder()], 1)]
    seq1 = seq[:-1] + [Partition([singleton(v) for v in np.unique(pi.x)] + [Remainder()], 1)]
    table = stability_experiment(pi, C23, seq1, seq, labels=range(5))
    e = pi.expectation(C23)
    flagged = {int(v.split(":")[0][2:]) for v in table.violations}
    assert flagged == {r.n for r in table.rows if r.P_n > e + 1e-6}
    # once every atom has its own cell the quantised coupling is pi itself
    assert table.rows[-1].P_n <= e + 1e-9
    assert table.rows[-1].bound_mu == 0.0 and table.rows[-1].bound_nu == 0.0


def test_stability_rejects_non_martingale():
    with pytest.raises(ValueError):
        stability_experiment(DiscreteCoupling([[0.0]], [[1.0]], [1.0]), C23, [R1], [R1])
