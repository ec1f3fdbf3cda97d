"""Standard-form linear programming: ``min c @ x  s.t.  A @ x = b, x >= 0``.

The engine is a two-phase revised simplex.  The basis is kept as a sparse LU
factorisation followed by one eta column per pivot; it is refactorised every
``REFACTOR_EVERY`` pivots and before any status is reported.  Bland's rule (alone, or as the fallback of a most-negative-reduced-cost
rule during degenerate stalls) guarantees termination on the highly degenerate
transport polytopes this package produces.

Everything here is deterministic: identical inputs give identical pivot
sequences and bitwise identical outputs.
"""

from __future__ import annotations

import enum
import io
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

PIVOT_TOL = 1e-10
OPTIMALITY_TOL = 1e-9
FEASIBILITY_TOL = 1e-9
RESIDUAL_TOL = 1e-8
REFACTOR_EVERY = 100
DEGENERATE_RUN = 50
PRICING_RULES = ("hybrid", "bland")


class LpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


class LpNumericalError(RuntimeError):
    """The simplex lost accuracy or hit its iteration cap."""


@dataclass(frozen=True, eq=False)
class LpProblem:
    """An LP in standard form.

    ``A`` may be a dense array or any scipy sparse matrix; it is stored as CSC.
    """

    c: np.ndarray
    A: sp.csc_matrix
    b: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).ravel()
        b = np.asarray(self.b, dtype=float).ravel()
        A = sp.csc_matrix(self.A, dtype=float)
        if A.shape != (b.size, c.size):
            raise ValueError(
                f"constraint matrix has shape {A.shape}, expected ({b.size}, {c.size})"
            )
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(b)) and np.all(np.isfinite(A.data))):
            raise ValueError("LP data must be finite")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "A", A)

    @property
    def n_vars(self) -> int:
        return self.c.size

    @property
    def n_rows(self) -> int:
        return self.b.size

    def to_text(self) -> str:
        """Plain-text dump: objective row, then one ``coeffs | rhs`` line per row."""
        out = io.StringIO()
        out.write(" ".join(f"{v:.17g}" for v in self.c) + "\n")
        dense = self.A.toarray()
        for row, rhs in zip(dense, self.b):
            out.write(" ".join(f"{v:.17g}" for v in row) + f" | {rhs:.17g}\n")
        return out.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "LpProblem":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        c = np.array([float(v) for v in lines[0].split()])
        rows, rhs = [], []
        for ln in lines[1:]:
            coeffs, r = ln.split("|")
            rows.append([float(v) for v in coeffs.split()])
            rhs.append(float(r))
        A = np.array(rows, dtype=float).reshape(len(rows), c.size)
        return cls(c, A, np.array(rhs))


@dataclass
class LpSolution:
    status: LpStatus
    x: np.ndarray | None = None
    objective: float = float("nan")
    residual: float = float("nan")
    iterations: int = 0
    basis: np.ndarray | None = field(default=None, repr=False)
    reduced_costs: np.ndarray | None = field(default=None, repr=False)

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


class _Simplex:
    """Working state of one solve.

    Variables ``0..n-1`` are structural, ``n..n+m-1`` are artificial (one per
    row, column ``e_k``).  Artificials never re-enter once they leave.  For the
    Bland ordering artificials rank below every structural variable, so they
    are preferred when breaking ratio-test ties.

    The basis ``B = B0 E1 ... Ek`` is held as a sparse LU factorisation of
    ``B0`` and the list of eta columns of ``E1 .. Ek``.
    """

    def __init__(self, problem: LpProblem, max_iter: int | None, pricing: str = "hybrid"):
        if pricing not in PRICING_RULES:
            raise ValueError(f"pricing must be one of {PRICING_RULES}")
        self.pricing = pricing
        self.m, self.n = problem.n_rows, problem.n_vars
        sign = np.where(problem.b < 0, -1.0, 1.0)
        self.sign = sign
        self.A = sp.csc_matrix(sp.diags(sign) @ problem.A)
        self.At = self.A.T.tocsr()
        self.b = problem.b * sign
        nonzero = self.b[self.b > 0]
        self.b_floor = min(1.0, float(nonzero.min())) if nonzero.size else 1.0
        self.c = problem.c
        self.basis = np.arange(self.n, self.n + self.m)
        self.lu = None
        self.etas: list[tuple[int, np.ndarray]] = []
        self.xB = self.b.copy()
        self.iterations = 0
        self.since_refactor = 0
        self.max_iter = max_iter if max_iter is not None else 50 * (self.m + self.n) + 1000

    # -- helpers -------------------------------------------------------------
    def _column(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        if j < self.n:
            lo, hi = self.A.indptr[j], self.A.indptr[j + 1]
            return self.A.indices[lo:hi], self.A.data[lo:hi]
        return np.array([j - self.n]), np.array([1.0])

    def solve(self, a: np.ndarray) -> np.ndarray:
        """``B^{-1} a``."""
        v = self.lu.solve(a) if self.lu is not None else a.copy()
        for r, d in self.etas:
            t = v[r] / d[r]
            if t != 0.0:
                v -= t * d
            v[r] = t
        return v

    def solve_t(self, c: np.ndarray) -> np.ndarray:
        """``c B^{-1}`` (as a 1-d array)."""
        u = np.array(c, dtype=float)
        for r, d in reversed(self.etas):
            u[r] -= (u @ d - u[r]) / d[r]
        return self.lu.solve(u, trans="T") if self.lu is not None else u

    def _ftran(self, j: int) -> np.ndarray:
        rows, vals = self._column(j)
        a = np.zeros(self.m)
        a[rows] = vals
        return self.solve(a)

    def _order_key(self, var: np.ndarray) -> np.ndarray:
        return np.where(var >= self.n, var - self.n - self.m, var)

    def refactor(self):
        struct = self.basis < self.n
        cols = [self.A[:, self.basis[struct]]]
        art = self.basis[~struct] - self.n
        E = sp.csc_matrix((np.ones(art.size), (art, np.arange(art.size))), shape=(self.m, art.size))
        B = sp.hstack(cols + [E], format="csc")
        perm = np.concatenate([np.flatnonzero(struct), np.flatnonzero(~struct)])
        B = B[:, np.argsort(perm)]
        try:
            self.lu = spla.splu(sp.csc_matrix(B), permc_spec="COLAMD")
        except RuntimeError as exc:
            raise LpNumericalError("basis matrix became singular") from exc
        self.etas = []
        self.xB = self.solve(self.b)
        if not np.all(np.isfinite(self.xB)) or np.max(np.abs(B @ self.xB - self.b), initial=0.0) > 1e-7 * (
            1.0 + float(np.max(np.abs(self.b), initial=0.0))
        ):
            raise LpNumericalError("basis matrix became singular")
        self.xB[(self.xB < 0) & (self.xB > -FEASIBILITY_TOL)] = 0.0
        self.since_refactor = 0

    def _replace(self, r: int, q: int, d: np.ndarray):
        self.etas.append((r, d))
        self.basis[r] = q
        self.since_refactor += 1

    def pivot(self, r: int, q: int, d: np.ndarray):
        theta = self.xB[r] / d[r]
        self.xB -= theta * d
        self.xB[r] = theta
        np.maximum(self.xB, 0.0, out=self.xB)
        self._replace(r, q, d)
        self.iterations += 1
        if self.since_refactor >= REFACTOR_EVERY:
            self.refactor()

    def reduced_costs(self, cost: np.ndarray) -> np.ndarray:
        y = self.solve_t(cost[self.basis])
        return cost[: self.n] - self.At @ y

    # -- main loop -----------------------------------------------------------
    def run(self, cost: np.ndarray) -> str:
        """Iterate with ``cost`` (length n+m) until optimal or unbounded.

        With ``pricing="bland"`` every pivot follows Bland's rule.  With
        ``"hybrid"`` the entering variable has the most negative reduced cost
        and ratio ties go to the largest pivot element, except that after
        ``DEGENERATE_RUN`` consecutive degenerate pivots Bland's rule takes over
        until the objective moves again.  Cycling needs an unbroken run of
        degenerate pivots, which Bland's rule ends, so both modes terminate.
        """
        verified = False
        degenerate = 0
        while True:
            if self.iterations >= self.max_iter:
                raise LpNumericalError(f"iteration limit {self.max_iter} reached")
            r_cost = self.reduced_costs(cost)
            struct = self.basis[self.basis < self.n]
            r_cost[struct] = 0.0
            bland = self.pricing == "bland" or degenerate >= DEGENERATE_RUN
            if bland:
                candidates = np.flatnonzero(r_cost < -OPTIMALITY_TOL)
                q = int(candidates[0]) if candidates.size else -1
            else:
                q = int(np.argmin(r_cost))
                if r_cost[q] >= -OPTIMALITY_TOL:
                    q = -1
            if q < 0:
                if verified or self.since_refactor == 0:
                    return "optimal"
                # certify against a freshly rebuilt inverse
                self.refactor()
                verified = True
                continue
            verified = False
            d = self._ftran(q)
            eligible = np.flatnonzero(d > PIVOT_TOL * max(1.0, float(np.max(np.abs(d), initial=0.0))))
            if eligible.size == 0:
                return "unbounded"
            ratios = self.xB[eligible] / d[eligible]
            theta = ratios.min()
            # the tie window scales with the data so tiny right-hand sides stay feasible
            ties = eligible[ratios <= theta + 1e-12 * max(self.b_floor, abs(theta))]
            if bland:
                r = int(ties[np.argmin(self._order_key(self.basis[ties]))])
            else:
                r = int(ties[np.argmax(d[ties])])
            degenerate = degenerate + 1 if self.xB[r] <= 0.0 else 0
            self.pivot(r, q, d)

    def drive_out_artificials(self):
        """Pivot basic artificials out at zero level; report redundant rows."""
        redundant = []
        for r in range(self.m):
            if self.basis[r] < self.n:
                continue
            e = np.zeros(self.m)
            e[r] = 1.0
            alpha = self.At @ self.solve_t(e)
            alpha[self.basis[self.basis < self.n]] = 0.0
            mag = np.abs(alpha)
            best = int(np.argmax(mag)) if mag.size else 0
            if mag.size == 0 or mag[best] <= 1e-9:
                redundant.append(r)
                continue
            self.pivot(r, best, self._ftran(best))
        return redundant

    def drop_rows(self, rows: list[int]):
        """Delete redundant rows whose artificial is still basic."""
        if not rows:
            return
        keep = np.ones(self.m, dtype=bool)
        keep[rows] = False
        if np.any(self.basis[~keep] < self.n) or np.any(self.basis[keep] >= self.n):
            raise LpNumericalError("cannot drop rows: basis still holds artificials")
        self.A = sp.csc_matrix(self.A[keep])
        self.At = self.A.T.tocsr()
        self.b = self.b[keep]
        self.basis = self.basis[keep]
        self.m = int(keep.sum())
        self.refactor()

    def crash(self, support: np.ndarray):
        """Bring the columns in ``support`` into the basis in place of artificials."""
        for j in support:
            d = self._ftran(int(j))
            art = self.basis >= self.n
            mag = np.where(art, np.abs(d), 0.0)
            r = int(np.argmax(mag))
            if mag[r] <= 1e-7:
                continue
            self._replace(r, int(j), d)
            if self.since_refactor >= REFACTOR_EVERY:
                self.refactor()
        self.refactor()


def _finish(s: _Simplex, problem: LpProblem, status: LpStatus) -> LpSolution:
    x = np.zeros(s.n)
    struct = s.basis < s.n
    x[s.basis[struct]] = s.xB[struct]
    residual = float(np.max(np.abs(problem.A @ x - problem.b), initial=0.0))
    return LpSolution(
        status=status,
        x=x,
        objective=float(problem.c @ x),
        residual=residual,
        iterations=s.iterations,
        basis=s.basis.copy(),
        reduced_costs=s.reduced_costs(np.concatenate([problem.c, np.zeros(s.m)])),
    )


def _phase_one(s: _Simplex, start: np.ndarray | None) -> bool:
    if start is not None:
        support = np.flatnonzero(np.asarray(start) > 0)
        s.crash(support)
        if np.any(s.xB < -FEASIBILITY_TOL):
            # the crashed basis is not primal feasible; fall back to a cold start
            s.basis = np.arange(s.n, s.n + s.m)
            s.refactor()
    cost = np.concatenate([np.zeros(s.n), np.ones(s.m)])
    s.run(cost)
    infeas = float(np.sum(s.xB[s.basis >= s.n]))
    return infeas <= FEASIBILITY_TOL * (1.0 + float(np.max(np.abs(s.b), initial=0.0)))


def lp_solve(problem: LpProblem, start=None, max_iter: int | None = None,
             pricing: str = "hybrid") -> LpSolution:
    """Solve ``problem``.

    Infeasible and unbounded problems are reported through ``status``; an
    exception is raised only for numerical breakdown.  ``start`` may be a
    known feasible point, whose support seeds the initial basis.
    """
    s = _Simplex(problem, max_iter, pricing)
    if s.m == 0:
        if np.any(problem.c < 0):
            return LpSolution(LpStatus.UNBOUNDED)
        return LpSolution(LpStatus.OPTIMAL, np.zeros(s.n), 0.0, 0.0)
    if not _phase_one(s, start):
        return LpSolution(LpStatus.INFEASIBLE, iterations=s.iterations)
    s.drop_rows(s.drive_out_artificials())
    s.refactor()
    cost = np.concatenate([problem.c, np.zeros(s.m)])
    outcome = s.run(cost)
    if outcome == "unbounded":
        return LpSolution(LpStatus.UNBOUNDED, iterations=s.iterations)
    sol = _finish(s, problem, LpStatus.OPTIMAL)
    if sol.residual > RESIDUAL_TOL * (1.0 + float(np.max(np.abs(problem.b), initial=0.0))):
        raise LpNumericalError(f"primal residual {sol.residual:.3e} exceeds tolerance")
    return sol


def lp_feasible(A, b, start=None, pricing: str = "hybrid") -> tuple[bool, np.ndarray | None]:
    """Phase one only: is ``{x >= 0 : A x = b}`` nonempty?  Returns a witness."""
    A = sp.csc_matrix(A, dtype=float)
    problem = LpProblem(np.zeros(A.shape[1]), A, b)
    s = _Simplex(problem, None, pricing)
    if s.m == 0:
        return True, np.zeros(s.n)
    if not _phase_one(s, start):
        return False, None
    sol = _finish(s, problem, LpStatus.OPTIMAL)
    if sol.residual > RESIDUAL_TOL * (1.0 + float(np.max(np.abs(problem.b), initial=0.0))):
        raise LpNumericalError(f"primal residual {sol.residual:.3e} exceeds tolerance")
    return True, sol.x
