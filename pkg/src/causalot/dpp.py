"""Dynamic programming for bicausal and causal transport.

Bicausal: a plain backward induction over pairs of histories, each step a
small classical transport problem between the two one-step kernels.

Causal (Markov source, semiseparable cost): the state after t stages is the
y-history together with the conditional law ``m`` of x_t given it. The
stage problem couples the mixture ``m @ P_t`` with the next y-kernel and pays
the stage cost plus the continuation, which is convex and piecewise linear in
the kernel. It is solved by Kelley's cutting-plane method; cuts on each
continuation are kept in a pool shared by every call, so repeated
evaluations get cheaper. A Frank-Wolfe solver is available for comparison.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .causal_ot import TransportPlan
from .costs import CostKind, CostSpec
from .errors import (
    NonConvergence,
    NotMarkov,
    NotSemiseparable,
    SolverFailure,
    StageLimitExceeded,
    WrongStageCount,
)
from .lp import LinearProgram, solve_lp, transport_lp
from .measures import Distribution1D, Path, PathMeasure, structure_flags, to_increments
from .ot1d import monotone_coupling

MAX_CAUSAL_STAGES = 3
CUT_TOL = 1e-10
KELLEY_MAX_ITER = 500


@dataclass(frozen=True)
class BicausalResult:
    value: float
    plan: TransportPlan
    values: list[dict[tuple[Path, Path], float]]

    def __iter__(self):
        return iter((self.value, self.plan))


def _last_stage_split(cost: CostSpec, xh: Path, yh: Path) -> tuple[float, Callable[[float], float]]:
    """Cost of the history pair and the convex function of a - b left for the last step."""
    h = cost.difference
    t = len(xh)
    if cost.kind is CostKind.INCREMENT_SEPARABLE:
        dx, dy = to_increments(xh) if xh else (), to_increments(yh) if yh else ()
        head = math.fsum(h[s](dx[s] - dy[s]) for s in range(t))
        shift = xh[-1] - yh[-1] if t else 0.0
        return head, lambda d: h[t](d - shift)
    return math.fsum(h[s](xh[s] - yh[s]) for s in range(t)), h[t]


def bicausal_dpp(mu: PathMeasure, nu: PathMeasure, cost: CostSpec) -> BicausalResult:
    """Backward induction V_t(xh, yh) = min over couplings of the kernels of E[V_{t+1}].

    ``values[t]`` maps history pairs of length t to V_t; the plan glues the
    optimal one-step couplings together from the root.
    """
    if mu.num_stages != nu.num_stages:
        raise WrongStageCount(f"mu has {mu.num_stages} stages, nu has {nu.num_stages}")
    n = mu.num_stages
    values: list[dict[tuple[Path, Path], float]] = [dict() for _ in range(n + 1)]
    kernels: dict[tuple[Path, Path], list[tuple[float, float, float]]] = {}
    for x in mu.paths:
        for y in nu.paths:
            values[n][(x, y)] = cost(x, y)

    last_monotone = cost.is_difference_convex and cost.num_stages == n
    for t in range(n - 1, -1, -1):
        for xh in mu.histories(t):
            p = mu.conditional(xh)
            for yh in nu.histories(t):
                q = nu.conditional(yh)
                if t == n - 1 and last_monotone:
                    coupling = monotone_coupling(p, q)
                    head, last = _last_stage_split(cost, xh, yh)
                    value = head + coupling.cost(last)
                    kern = list(coupling.atoms)
                else:
                    C = np.array([[values[t + 1][(xh + (a,), yh + (b,))] for b in q.values] for a in p.values])
                    value, plan, _, _ = transport_lp(np.array(p.weights), np.array(q.weights), C)
                    kern = [
                        (a, b, float(plan[i, j]))
                        for i, a in enumerate(p.values)
                        for j, b in enumerate(q.values)
                        if plan[i, j] > 1e-14
                    ]
                values[t][(xh, yh)] = float(value)
                kernels[(xh, yh)] = kern

    layer = {((), ()): 1.0}
    for t in range(n):
        nxt: dict[tuple[Path, Path], float] = defaultdict(float)
        for (xh, yh), w in layer.items():
            for a, b, v in kernels[(xh, yh)]:
                nxt[(xh + (a,), yh + (b,))] += w * v
        layer = nxt
    return BicausalResult(values[0][((), ())], TransportPlan.from_atoms(layer.items()), values)


@dataclass
class FrankWolfeResult:
    x: np.ndarray
    value: float
    gap: float
    iterations: int
    converged: bool
    history: list[float] = field(default_factory=list)


def frank_wolfe(
    objective: Callable[[np.ndarray], tuple[float, np.ndarray]],
    lmo: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    tol: float = 1e-6,
    max_iter: int = 10_000,
) -> FrankWolfeResult:
    """Conditional gradient with the open-loop step 2/(k+2).

    ``objective`` returns value and (sub)gradient; ``lmo(g)`` returns a vertex
    minimizing ``g @ s``. An iterate is accepted only if it does not increase
    the objective, so ``history`` is non-increasing.
    """
    x = np.asarray(x0, dtype=float)
    fx, gx = objective(x)
    history = [fx]
    gap = math.inf
    for k in range(max_iter):
        s = lmo(gx)
        gap = float(gx @ (x - s))
        if gap < tol:
            return FrankWolfeResult(x, fx, gap, k, True, history)
        step = 2.0 / (k + 2.0)
        cand = x + step * (s - x)
        fc, gc = objective(cand)
        if fc <= fx:
            x, fx, gx = cand, fc, gc
            history.append(fx)
    return FrankWolfeResult(x, fx, gap, max_iter, False, history)


@dataclass
class _CutPool:
    """Affine minorants ``V(m) >= g @ m`` (the offset is folded into g since sum(m) = 1)."""

    cuts: list[np.ndarray] = field(default_factory=list)

    def add(self, g: np.ndarray) -> bool:
        for c in self.cuts:
            if np.allclose(c, g, rtol=0.0, atol=1e-12):
                return False
        self.cuts.append(g)
        return True


class CausalRecursion:
    """Evaluator of the causal value functions V_t(yh; m) for a Markov source.

    ``m`` is a probability vector over the support of x_t (``supports[t-1]``);
    at t = 0 it is the single entry ``[1.0]``. ``stage_value`` returns the
    value together with a subgradient in ``m``.
    """

    def __init__(
        self,
        mu: PathMeasure,
        nu: PathMeasure,
        cost: CostSpec,
        method: str = "cutting_plane",
        tol: float = CUT_TOL,
        max_iter: int = KELLEY_MAX_ITER,
        fw_tol: float = 1e-6,
        fw_max_iter: int = 10_000,
    ):
        if mu.num_stages != nu.num_stages:
            raise WrongStageCount(f"mu has {mu.num_stages} stages, nu has {nu.num_stages}")
        if mu.num_stages > MAX_CAUSAL_STAGES:
            raise StageLimitExceeded(f"causal recursion supports N <= {MAX_CAUSAL_STAGES}, got {mu.num_stages}")
        if not cost.is_semiseparable:
            raise NotSemiseparable(f"causal recursion needs a semiseparable cost, got {cost.kind.value}")
        if not structure_flags(mu).is_markov:
            raise NotMarkov("causal recursion needs a Markov source measure")
        if method not in ("cutting_plane", "frank_wolfe"):
            raise ValueError(f"unknown method {method!r}")
        self.mu, self.nu, self.cost = mu, nu, cost
        self.n = mu.num_stages
        self.method = method
        self.tol, self.max_iter = tol, max_iter
        self.fw_tol, self.fw_max_iter = fw_tol, fw_max_iter
        self.supports = [mu.stage_marginal(t + 1).values for t in range(self.n)]
        self.transitions = self._transitions()
        self._pools: dict[tuple[int, Path], _CutPool] = defaultdict(_CutPool)
        self._cache: dict[tuple[int, Path, tuple[float, ...]], tuple[float, np.ndarray]] = {}
        self.evaluations = 0

    def _transitions(self) -> list[np.ndarray]:
        """P_t maps laws of x_t to laws of x_{t+1}; P_0 is the 1 x |supp x_1| row of mu_1."""
        out = [np.array([self.mu.stage_marginal(1).weights])]
        for t in range(1, self.n):
            src, dst = self.supports[t - 1], self.supports[t]
            P = np.zeros((len(src), len(dst)))
            reps = {h[-1]: h for h in self.mu.histories(t)}
            col = {v: j for j, v in enumerate(dst)}
            for i, v in enumerate(src):
                law = self.mu.conditional(reps[v])
                for a, w in zip(law.values, law.weights):
                    P[i, col[a]] = w
            out.append(P)
        return out

    def _stage_cost(self, t: int, yh: Path, q: Distribution1D) -> np.ndarray:
        return np.array(
            [[self.cost.stage_term(t, a, yh + (b,)) for b in q.values] for a in self.supports[t]]
        )

    def value(self) -> float:
        return self.stage_value(0, (), np.array([1.0]))[0]

    def stage_value(self, t: int, yh: Path, m: np.ndarray) -> tuple[float, np.ndarray]:
        m = np.asarray(m, dtype=float)
        key = (t, tuple(yh), tuple(np.round(m, 15)))
        if key in self._cache:
            return self._cache[key]
        self.evaluations += 1
        q = self.nu.conditional(yh)
        mix = m @ self.transitions[t]
        C = self._stage_cost(t, tuple(yh), q)
        if t == self.n - 1:
            val, _, u, _ = transport_lp(mix, np.array(q.weights), C)
            out = (float(val), self.transitions[t] @ u)
        elif self.method == "cutting_plane":
            out = self._kelley(t, tuple(yh), mix, q, C)
        else:
            out = self._frank_wolfe(t, tuple(yh), mix, q, C)
        self._cache[key] = out
        return out

    def _continuation(self, t: int, yh: Path, q: Distribution1D, gamma: np.ndarray):
        """Sum over b of q_b V_{t+1}(yh+b; gamma[:, b] / q_b), with per-column subgradients."""
        total = []
        grads = np.zeros_like(gamma)
        for j, (b, qb) in enumerate(zip(q.values, q.weights)):
            col = np.maximum(gamma[:, j], 0.0)
            m_next = col / col.sum()
            v, g = self.stage_value(t + 1, yh + (b,), m_next)
            total.append(qb * v)
            # homogeneous minorant: q V(col / q) >= (g + v - g @ m_next) @ col
            grads[:, j] = g + (v - g @ m_next)
        return math.fsum(total), grads

    def _kelley(self, t: int, yh: Path, mix: np.ndarray, q: Distribution1D, C: np.ndarray):
        k, l = C.shape
        nv = k * l
        qw = np.array(q.weights)
        pools = [self._pools[(t + 1, yh + (b,))] for b in q.values]
        lower = self._lower_bound(t + 1)
        best_ub = math.inf
        for _ in range(self.max_iter):
            n_cuts = sum(len(p.cuts) for p in pools)
            ncols = nv + l + n_cuts
            A = np.zeros((k + l + n_cuts, ncols))
            for i in range(k):
                A[i, i * l : (i + 1) * l] = 1.0
            for j in range(l):
                A[k + j, j:nv:l] = 1.0
            row = k + l
            slack = nv + l
            for j, pool in enumerate(pools):
                for g in pool.cuts:
                    # s_j - (g - lower) @ gamma[:, j] - slack = 0, theta_j = q_j lower + s_j
                    A[row, j:nv:l] = -(g - lower)
                    A[row, nv + j] = 1.0
                    A[row, slack] = -1.0
                    row += 1
                    slack += 1
            c = np.concatenate([C.ravel(), np.ones(l), np.zeros(n_cuts)])
            b = np.concatenate([mix, qw, np.zeros(n_cuts)])
            sol = solve_lp(LinearProgram(c, A, b))
            if not sol.optimal:
                raise SolverFailure(f"cutting-plane master at stage {t} returned {sol.status.value}")
            gamma = sol.x[:nv].reshape(k, l)
            lb = sol.value + lower
            cont, grads = self._continuation(t, yh, q, gamma)
            ub = float(np.sum(C * gamma)) + cont
            best_ub = min(best_ub, ub)
            if best_ub - lb <= self.tol * max(1.0, abs(lb)):
                return lb, self.transitions[t] @ sol.y[:k]
            added = False
            for j, pool in enumerate(pools):
                if qw[j] > 0.0:
                    added |= pool.add(grads[:, j])
            if not added:
                raise NonConvergence(f"cutting planes stalled at stage {t} with gap {best_ub - lb:.3e}")
        raise NonConvergence(f"cutting planes did not close the gap at stage {t} in {self.max_iter} rounds")

    def _lower_bound(self, t: int) -> float:
        """Crude lower bound on V_t: stagewise minima of the cost over all supports."""
        total = 0.0
        for s in range(t, self.n):
            ys = self.nu.histories(s + 1)
            total += min(self.cost.stage_term(s, a, y) for a in self.supports[s] for y in ys)
        return total

    def _frank_wolfe(self, t: int, yh: Path, mix: np.ndarray, q: Distribution1D, C: np.ndarray):
        qw = np.array(q.weights)
        k, l = C.shape

        def objective(x: np.ndarray):
            gamma = x.reshape(k, l)
            cont, grads = self._continuation(t, yh, q, gamma)
            return float(np.sum(C * gamma)) + cont, (C + grads).ravel()

        def lmo(g: np.ndarray) -> np.ndarray:
            return transport_lp(mix, qw, g.reshape(k, l))[1].ravel()

        res = frank_wolfe(objective, lmo, np.outer(mix, qw).ravel(), self.fw_tol, self.fw_max_iter)
        if not res.converged:
            raise NonConvergence(
                f"Frank-Wolfe gap {res.gap:.3e} above {self.fw_tol} after {res.iterations} iterations at stage {t}"
            )
        # the subgradient in m comes from the linearized problem at the final iterate
        _, g = objective(res.x)
        _, _, u, _ = transport_lp(mix, qw, g.reshape(k, l))
        return res.value, self.transitions[t] @ u


def causal_dpp(mu: PathMeasure, nu: PathMeasure, cost: CostSpec, method: str = "cutting_plane") -> float:
    """Value of the causal problem through the quasi-Markov recursion."""
    return CausalRecursion(mu, nu, cost, method=method).value()


def cdf_dominance_check(mu: PathMeasure, nu: PathMeasure) -> bool:
    """For each y_1 and each grid point z, F_{mu^{x1}}(z) - F_{nu^{y1}}(z) keeps one sign over x_1."""
    if mu.num_stages != 2 or nu.num_stages != 2:
        raise WrongStageCount("cdf dominance is defined for two-stage measures")
    grid = sorted(set(mu.stage_marginal(2).values) | set(nu.stage_marginal(2).values))
    for yh in nu.histories(1):
        g = nu.conditional(yh)
        for z in grid:
            diffs = [mu.conditional(xh).cdf(z) - g.cdf(z) for xh in mu.histories(1)]
            if max(diffs) > 1e-12 and min(diffs) < -1e-12:
                return False
    return True
