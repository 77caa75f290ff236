"""Dense two-phase primal simplex for equality-form linear programs.

    minimize  c @ x   subject to  A @ x = b,  x >= 0

Pricing is Dantzig's most-negative reduced cost; after a run of degenerate
pivots the solver switches to Bland's rule until the objective moves again,
which rules out cycling. Rows are kept exactly as given so every dual
multiplier maps to the caller's constraint.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalBreakdown

PIVOT_TOL = 1e-9
BREAKDOWN_TOL = 1e-11
COST_TOL = 1e-10
FEAS_TOL = 1e-9


class LpStatus(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"


@dataclass(frozen=True)
class LinearProgram:
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        A = np.asarray(self.A, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if A.ndim != 2:
            A = A.reshape(len(b), len(c))
        if A.shape != (len(b), len(c)):
            raise ValueError(f"constraint matrix {A.shape} does not match b {b.shape}, c {c.shape}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b)) and np.all(np.isfinite(c))):
            raise ValueError("linear program has non-finite entries")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape


@dataclass
class LpSolution:
    status: LpStatus
    x: np.ndarray | None = None
    y: np.ndarray | None = None
    value: float = float("nan")
    iterations: int = 0
    basis: list[int] = field(default_factory=list)

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL

    def dual_value(self, lp: LinearProgram) -> float:
        return float(lp.b @ self.y)

    def residuals(self, lp: LinearProgram) -> dict[str, float]:
        """Primal feasibility, dual feasibility, complementary slackness, duality gap."""
        reduced = lp.c - lp.A.T @ self.y
        return {
            "primal": float(np.max(np.abs(lp.A @ self.x - lp.b), initial=0.0)),
            "dual": float(max(0.0, -np.min(reduced, initial=0.0))),
            "complementarity": float(np.abs(self.x @ reduced)),
            "gap": float(abs(lp.c @ self.x - lp.b @ self.y)),
        }


class _Tableau:
    def __init__(self, A: np.ndarray, b: np.ndarray):
        m, n = A.shape
        self.m, self.n = m, n
        T = np.zeros((m + 1, n + m + 1))
        T[:m, :n] = A
        T[:m, n : n + m] = np.eye(m)
        T[:m, -1] = b
        self.T = T
        self.basis = list(range(n, n + m))
        self.iterations = 0

    def pivot(self, row: int, col: int) -> None:
        T = self.T
        T[row] /= T[row, col]
        factor = T[:, col].copy()
        factor[row] = 0.0
        T -= np.outer(factor, T[row])
        T[:, col] = 0.0
        T[row, col] = 1.0
        self.basis[row] = col
        self.iterations += 1

    def _leaving_row(self, col: int, bland: bool) -> int | None:
        a = self.T[: self.m, col]
        rhs = self.T[: self.m, -1]
        eligible = np.flatnonzero(a > PIVOT_TOL)
        if eligible.size == 0:
            return None
        ratios = np.maximum(rhs[eligible], 0.0) / a[eligible]
        best = ratios.min()
        ties = eligible[ratios <= best + 1e-12 * max(1.0, best)]
        if bland:
            return int(min(ties, key=lambda r: self.basis[r]))
        return int(ties[np.argmax(a[ties])])

    def run(self, allowed: np.ndarray, max_iter: int) -> str:
        """Pivot until optimal ('optimal') or an unbounded ray appears ('unbounded')."""
        cost = self.T[self.m]
        bland = False
        stall = 0
        stall_limit = max(10, self.m // 2)
        while self.iterations < max_iter:
            reduced = cost[allowed]
            candidates = allowed[reduced < -COST_TOL]
            if candidates.size == 0:
                return "optimal"
            if bland:
                order = np.sort(candidates)
            else:
                order = candidates[np.argsort(cost[candidates], kind="stable")]
            chosen = None
            suspicious = False
            for col in order:
                row = self._leaving_row(col, bland)
                if row is not None:
                    chosen = (row, int(col))
                    break
                column = self.T[: self.m, col]
                if np.any(column > BREAKDOWN_TOL):
                    suspicious = True
                    continue
                return "unbounded"
            if chosen is None:
                if suspicious and not bland:
                    bland = True
                    continue
                raise NumericalBreakdown("only pivots below 1e-9 remain after Bland fallback")
            row, col = chosen
            before = self.T[self.m, -1]
            self.pivot(row, col)
            if abs(self.T[self.m, -1] - before) <= 1e-14:
                stall += 1
                if stall >= stall_limit:
                    bland = True
            else:
                stall = 0
                bland = False
        raise NumericalBreakdown(f"simplex did not terminate within {max_iter} pivots")


def solve_lp(lp: LinearProgram, max_iter: int = 200_000) -> LpSolution:
    """Solve ``lp`` and return primal/dual solutions from the final basis.

    Infeasible and unbounded problems are reported through ``status``.
    """
    m, n = lp.shape
    sign = np.where(lp.b < 0, -1.0, 1.0)
    A = lp.A * sign[:, None]
    b = lp.b * sign
    tab = _Tableau(A, b)
    T = tab.T

    # phase 1: minimize the sum of artificials
    T[m, :n] = -A.sum(axis=0)
    T[m, -1] = -b.sum()
    tab.run(np.arange(n), max_iter)
    if -T[m, -1] > FEAS_TOL * max(1.0, np.abs(b).max(initial=0.0)):
        return LpSolution(LpStatus.INFEASIBLE, iterations=tab.iterations)

    for row in range(m):
        if tab.basis[row] >= n:
            entries = np.abs(T[row, :n])
            col = int(np.argmax(entries)) if n else -1
            if n and entries[col] > PIVOT_TOL:
                tab.pivot(row, col)
            # otherwise the row is redundant and its artificial stays basic at zero

    # phase 2
    cost_ext = np.concatenate([lp.c, np.zeros(m)])
    cb = cost_ext[tab.basis]
    T[m, :] = 0.0
    T[m, : n + m] = cost_ext - cb @ T[:m, : n + m]
    T[m, -1] = -cb @ T[:m, -1]
    if tab.run(np.arange(n), max_iter) == "unbounded":
        return LpSolution(LpStatus.UNBOUNDED, iterations=tab.iterations)

    full = np.hstack([A, np.eye(m)])
    B = full[:, tab.basis]
    cb = cost_ext[tab.basis]
    try:
        xb = np.linalg.solve(B, b)
        y = np.linalg.solve(B.T, cb)
    except np.linalg.LinAlgError:
        xb = T[:m, -1].copy()
        y = -T[m, n : n + m]
    x_full = np.zeros(n + m)
    x_full[tab.basis] = np.where(np.abs(xb) < 1e-13, 0.0, xb)
    x = np.maximum(x_full[:n], 0.0)
    y = y * sign
    return LpSolution(
        LpStatus.OPTIMAL,
        x=x,
        y=y,
        value=float(lp.c @ x),
        iterations=tab.iterations,
        basis=list(tab.basis),
    )


def transport_lp(p: np.ndarray, q: np.ndarray, cost: np.ndarray) -> tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    """Classical discrete OT between weight vectors p, q.

    Returns ``(value, plan, u, v)`` with ``u``, ``v`` the marginal duals.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    k, l = len(p), len(q)
    A = np.zeros((k + l, k * l))
    for i in range(k):
        A[i, i * l : (i + 1) * l] = 1.0
    for j in range(l):
        A[k + j, j::l] = 1.0
    sol = solve_lp(LinearProgram(np.asarray(cost, dtype=float).ravel(), A, np.concatenate([p, q])))
    if not sol.optimal:
        raise NumericalBreakdown(f"transport LP returned {sol.status.value}")
    return sol.value, sol.x.reshape(k, l), sol.y[:k], sol.y[k:]
