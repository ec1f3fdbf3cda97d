import itertools

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from cxquant import LpProblem, LpStatus, lp_feasible, lp_solve
from cxquant.lp import LpNumericalError


def transport_rows(n: int, m: int):
    """Row- and column-sum constraints of an n x m plan, variables in column-major order."""
    A = np.zeros((n + m, n * m))
    for j in range(m):
        for i in range(n):
            A[i, j * n + i] = 1.0
            A[n + j, j * n + i] = 1.0
    return A


def test_trivial_optimal():
    sol = lp_solve(LpProblem([1.0, 0.0], [[1.0, 1.0]], [1.0]))
    assert sol.status is LpStatus.OPTIMAL
    assert sol.objective == 0.0 and sol.x.tolist() == [0.0, 1.0]


def test_trivial_infeasible():
    assert lp_solve(LpProblem([0.0], [[1.0]], [-1.0])).status is LpStatus.INFEASIBLE


def test_trivial_unbounded():
    assert lp_solve(LpProblem([-1.0], [[0.0]], [0.0])).status is LpStatus.UNBOUNDED


def test_problem_validation():
    with pytest.raises(ValueError):
        LpProblem([1.0, 2.0], [[1.0]], [1.0])
    with pytest.raises(ValueError):
        LpProblem([1.0], [[np.inf]], [1.0])
    with pytest.raises(ValueError):
        LpProblem([1.0], [[1.0]], [1.0, 2.0])


def test_feasibility_examples():
    A = transport_rows(2, 2)
    ok, x = lp_feasible(A, [0.5, 0.5, 0.5, 0.5])
    assert ok and np.allclose(A @ x, 0.5) and np.all(x >= 0)
    ok, x = lp_feasible(A, [0.5, 0.5, 1.0, 1.0])
    assert not ok and x is None


def test_counterexample_martingale_system_is_feasible():
    xs, ys = np.array([-1.0, 0.0, 1.0]), np.array([-1.0, 1.0])
    a, b = np.array([0.25, 0.5, 0.25]), np.array([0.5, 0.5])
    A = np.vstack([transport_rows(3, 2), np.hstack([np.diag(np.full(3, y)) for y in ys])])
    rhs = np.concatenate([a, b, a * xs])
    ok, x = lp_feasible(A, rhs)
    assert ok
    assert np.max(np.abs(A @ x - rhs)) <= 1e-8 * (1 + np.max(np.abs(rhs)))


def assignment_oracle(C):
    n = C.shape[0]
    return min(sum(C[i, s[i]] for i in range(n)) for s in itertools.permutations(range(n))) / n


@pytest.mark.parametrize("pricing", ["hybrid", "bland"])
def test_uniform_transport_matches_permutations(pricing):
    rng = np.random.default_rng(11)
    for _ in range(25):
        n = int(rng.integers(1, 7))
        C = rng.uniform(0, 10, (n, n))
        c = C.T.ravel()  # column-major
        sol = lp_solve(LpProblem(c, transport_rows(n, n), np.full(2 * n, 1.0 / n)), pricing=pricing)
        assert sol.optimal
        assert abs(sol.objective - assignment_oracle(C)) <= 1e-9


@given(st.integers(0, 2**31 - 1))
def test_optimality_certificate_and_contract(seed):
    rng = np.random.default_rng(seed)
    n, m = int(rng.integers(1, 6)), int(rng.integers(1, 6))
    a, b = rng.dirichlet(np.ones(n)), rng.dirichlet(np.ones(m))
    c = rng.normal(size=n * m)
    sol = lp_solve(LpProblem(c, transport_rows(n, m), np.concatenate([a, b])))
    assert sol.optimal
    assert np.all(sol.x >= -1e-9)
    assert sol.residual <= 1e-8 * (1 + max(a.max(), b.max()))
    assert np.all(sol.reduced_costs >= -1e-9)


def test_redundant_and_sign_flipped_rows():
    # duplicate row, a negated row and a zero row
    A = np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [-1.0, 0.0, -1.0], [0.0, 0.0, 0.0]])
    sol = lp_solve(LpProblem([1.0, 2.0, 3.0], A, [2.0, 2.0, -3.0, 0.0]))
    assert sol.optimal and sol.objective == pytest.approx(1.0 * 2 + 3.0 * 1)
    assert lp_solve(LpProblem([1.0, 0.0, 0.0], A, [2.0, 2.0, -3.0, 1.0])).status is LpStatus.INFEASIBLE


def test_warm_start_gives_same_value():
    rng = np.random.default_rng(5)
    n = 6
    C = rng.uniform(0, 1, (n, n))
    prob = LpProblem(C.T.ravel(), transport_rows(n, n), np.full(2 * n, 1 / n))
    start = np.eye(n).T.ravel() / n
    assert lp_solve(prob, start=start).objective == pytest.approx(lp_solve(prob).objective, abs=1e-12)


def test_deterministic_bitwise():
    rng = np.random.default_rng(9)
    prob = LpProblem(rng.normal(size=20), transport_rows(4, 5), np.concatenate([np.full(4, 0.25), np.full(5, 0.2)]))
    s1, s2 = lp_solve(prob), lp_solve(prob)
    assert s1.x.tobytes() == s2.x.tobytes() and s1.iterations == s2.iterations
    assert np.array_equal(s1.basis, s2.basis)


def test_sparse_input_and_text_round_trip():
    A = sp.csr_matrix(transport_rows(2, 3))
    prob = LpProblem([1.0, 2.0, 3.0, 4.0, 5.0, 6.0], A, [0.5, 0.5, 0.2, 0.3, 0.5])
    back = LpProblem.from_text(prob.to_text())
    assert np.array_equal(back.c, prob.c) and np.array_equal(back.b, prob.b)
    assert np.array_equal(back.A.toarray(), prob.A.toarray())
    assert lp_solve(back).objective == lp_solve(prob).objective


def test_iteration_limit_raises():
    rng = np.random.default_rng(2)
    prob = LpProblem(rng.normal(size=36), transport_rows(6, 6), np.full(12, 1 / 6))
    with pytest.raises(LpNumericalError):
        lp_solve(prob, max_iter=1)


def test_unknown_pricing_rule():
    with pytest.raises(ValueError):
        lp_solve(LpProblem([1.0], [[1.0]], [1.0]), pricing="steepest")
