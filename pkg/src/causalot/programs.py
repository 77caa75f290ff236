"""Multistage stochastic programs on scenario trees and the inequalities around them.

A program is ``H = sum_t H_t(x_1..x_t, u_t)``. The control u_t is decided at
the tree node x_1..x_{t-1}, before x_t is revealed, so the stages decouple:
each node minimizes the conditional expectation of H_t over u_t.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .causal_ot import Mode, solve
from .costs import abs_separable, power_separable, sq_euclidean_separable
from .errors import NotProduct, ParameterOutOfRange, UnboundedBelow, WrongStageCount
from .knothe import kr_coupling
from .measures import (
    InequalityConstants,
    Path,
    PathMeasure,
    entropy_chain,
    exp_constants,
    lip_constant,
    relative_entropy,
    structure_flags,
)
from .ot1d import ot1d_cost, square

REPORT_TOL = 1e-9
CONTROL_TOL = 1e-8
A_GRID = tuple(2.0**k for k in range(-4, 5))

Objective = Callable[[Path, float], float]


@dataclass(frozen=True)
class ControlSet:
    """Finite grid of controls, or an interval (possibly unbounded) with declared convexity."""

    grid: tuple[float, ...] | None = None
    interval: tuple[float, float] | None = None
    convex: bool = False

    def __post_init__(self):
        if (self.grid is None) == (self.interval is None):
            raise ValueError("a control set is either a grid or an interval")
        if self.grid is not None and not self.grid:
            raise ValueError("empty control grid")
        if self.interval is not None and not self.interval[0] <= self.interval[1]:
            raise ValueError(f"empty control interval {self.interval}")

    @classmethod
    def of_grid(cls, values: Sequence[float]) -> "ControlSet":
        return cls(grid=tuple(sorted(float(v) for v in values)))

    @classmethod
    def of_interval(cls, lo: float, hi: float, convex: bool = True) -> "ControlSet":
        return cls(interval=(float(lo), float(hi)), convex=convex)


@dataclass(frozen=True)
class StagewiseProgram:
    objectives: tuple[Objective, ...]
    controls: tuple[ControlSet, ...]
    lipschitz: float = 1.0
    concave_in_x: bool = False

    def __post_init__(self):
        if len(self.objectives) != len(self.controls):
            raise ValueError("one control set per stage objective")
        if self.lipschitz < 0:
            raise ParameterOutOfRange("Lipschitz constant must be nonnegative")

    @property
    def num_stages(self) -> int:
        return len(self.objectives)

    @property
    def convex_in_u(self) -> bool:
        return all(c.interval is not None and c.convex for c in self.controls)


@dataclass(frozen=True)
class ProgramValue:
    value: float
    controls: dict[tuple[int, Path], float]


def _node_minimize(h: Objective, node: Path, law, controls: ControlSet) -> tuple[float, float]:
    paths = [node + (a,) for a in law.values]
    weights = np.asarray(law.weights)

    def expected(u: float) -> float:
        return float(weights @ np.array([h(p, u) for p in paths]))

    if controls.grid is not None:
        vals = [expected(u) for u in controls.grid]
        k = int(np.argmin(vals))
        return vals[k], controls.grid[k]

    lo, hi = controls.interval
    span = max(1.0, max(abs(v) for v in law.values))
    box_lo = lo if math.isfinite(lo) else min(law.values) - 16.0 * span
    box_hi = hi if math.isfinite(hi) else max(law.values) + 16.0 * span
    scan = np.linspace(box_lo, box_hi, 257)
    vals = np.array([expected(u) for u in scan])
    k = int(np.argmin(vals))
    best_u, best = float(scan[k]), float(vals[k])
    if controls.convex:
        res = minimize_scalar(expected, bounds=(box_lo, box_hi), method="bounded", options={"xatol": CONTROL_TOL})
        if res.fun < best:
            best_u, best = float(res.x), float(res.fun)
    edge = 1e-6 * (box_hi - box_lo)
    if (not math.isfinite(lo) and best_u - box_lo <= edge) or (not math.isfinite(hi) and box_hi - best_u <= edge):
        raise UnboundedBelow(f"objective keeps decreasing towards an infinite control bound at node {node}")
    return best, best_u


def eval_program(eta: PathMeasure, prog: StagewiseProgram) -> ProgramValue:
    """v(eta) = sum over nodes of node mass times the node's optimal expected stage cost."""
    if prog.num_stages != eta.num_stages:
        raise WrongStageCount(f"program has {prog.num_stages} stages, measure has {eta.num_stages}")
    total = []
    controls: dict[tuple[int, Path], float] = {}
    for t in range(eta.num_stages):
        for node, mass in eta.prefix_masses(t).items():
            best, u = _node_minimize(prog.objectives[t], node, eta.conditional(node), prog.controls[t])
            total.append(mass * best)
            controls[(t + 1, node)] = u
    return ProgramValue(math.fsum(total), controls)


@dataclass(frozen=True)
class InequalityReport:
    w1_bc: float
    entropy: float
    constants: InequalityConstants
    bound: float
    slack: float
    holds: bool
    bound_squared_a: float
    holds_squared_a: bool
    tol: float = REPORT_TOL


def transport_info_report(
    mu: PathMeasure, nu: PathMeasure, a: Sequence[float] | None = None, tol: float = REPORT_TOL
) -> InequalityReport:
    """W_{1,bc}(mu, nu) against K sqrt(Ent(nu | mu)) with tight (EXP)/(LIP) constants.

    Without ``a`` each a_t is picked from 2^-4..2^4 to minimize (1 + lambda_t) / a_t,
    i.e. stage t's contribution to K.
    """
    n = mu.num_stages
    w1 = solve(mu, nu, abs_separable(n), Mode.BICAUSAL).value
    ent = relative_entropy(nu, mu)
    C = lip_constant(mu)
    if a is None:
        table = {s: exp_constants(mu, [s] * n) for s in A_GRID}
        a = [min(A_GRID, key=lambda s: (1.0 + table[s][t]) / s) for t in range(n)]
        lam = [table[a[t]][t] for t in range(n)]
    else:
        a = [float(v) for v in a]
        lam = exp_constants(mu, a)
    constants = InequalityConstants.assemble(a, lam, C)
    if math.isinf(ent):
        return InequalityReport(w1, ent, constants, math.inf, math.inf, True, math.inf, True, tol)
    bound = constants.K * math.sqrt(max(ent, 0.0))
    bound_squared_a = constants.K_squared_a * math.sqrt(max(ent, 0.0))
    return InequalityReport(
        w1, ent, constants, bound, bound - w1, bound - w1 >= -tol, bound_squared_a, bound_squared_a - w1 >= -tol, tol
    )


@dataclass(frozen=True)
class DiscrepancyReport:
    lhs: float
    rhs: float
    ok: bool
    entropy_rhs: float
    tol: float = REPORT_TOL


def discrepancy_bound_check(mu: PathMeasure, nu: PathMeasure, prog: StagewiseProgram, tol: float = REPORT_TOL) -> DiscrepancyReport:
    """|v(mu) - v(nu)| against r W_{1,bc}(mu, nu) and the entropic bound r K sqrt(Ent)."""
    lhs = abs(eval_program(mu, prog).value - eval_program(nu, prog).value)
    report = transport_info_report(mu, nu, tol=tol)
    rhs = prog.lipschitz * report.w1_bc
    return DiscrepancyReport(lhs, rhs, lhs <= rhs + tol, prog.lipschitz * report.bound, tol)


def _check_t(t: float) -> float:
    t = float(t)
    if not 0.0 <= t <= 1.0:
        raise ParameterOutOfRange(f"interpolation time {t} outside [0, 1]")
    return t


def lex_interpolate(mu: PathMeasure, nu: PathMeasure, t: float) -> PathMeasure:
    """Push the KR coupling forward under (x, y) -> (1 - t) x + t y."""
    t = _check_t(t)
    acc: dict[Path, float] = defaultdict(float)
    for (x, y), w in kr_coupling(mu, nu).atoms:
        if t == 0.0:
            z = x
        elif t == 1.0:
            z = y
        else:
            z = tuple((1.0 - t) * a + t * b for a, b in zip(x, y))
        acc[z] += w
    items = sorted(acc.items())
    return PathMeasure(tuple(p for p, _ in items), tuple(w for _, w in items))


def speed_profile(mu: PathMeasure, nu: PathMeasure, p: float, grid: Sequence[float]) -> list[float]:
    """W_{p,bc}(mu, [mu, nu]_t)^p along the interpolation; equals t^p times the endpoint value."""
    if p < 1:
        raise ParameterOutOfRange(f"exponent p = {p} must be at least 1")
    if not structure_flags(mu).is_product:
        raise NotProduct("constant speed needs a source that is the product of its marginals")
    cost = sq_euclidean_separable(mu.num_stages) if p == 2 else power_separable(mu.num_stages, p)
    return [solve(mu, lex_interpolate(mu, nu, t), cost, Mode.BICAUSAL).value for t in grid]


@dataclass(frozen=True)
class ConcavityReport:
    grid: tuple[float, ...]
    values: tuple[float, ...]
    concave: bool
    worst: float
    hypotheses_satisfied: bool
    tol: float = 1e-7


def concavity_profile(
    prog: StagewiseProgram, mu: PathMeasure, nu: PathMeasure, grid: Sequence[float], tol: float = 1e-7
) -> ConcavityReport:
    """v([mu, nu]_t) on the grid and a midpoint-concavity test on consecutive triples.

    For uneven grids the middle value is compared with the chord through its
    neighbours.
    """
    grid = tuple(_check_t(t) for t in grid)
    values = tuple(eval_program(lex_interpolate(mu, nu, t), prog).value for t in grid)
    worst = 0.0
    for i in range(1, len(grid) - 1):
        l, m, r = grid[i - 1], grid[i], grid[i + 1]
        chord = values[i - 1] + (values[i + 1] - values[i - 1]) * (m - l) / (r - l)
        worst = min(worst, values[i] - chord)
    hyp = structure_flags(mu).is_product and prog.concave_in_x and prog.convex_in_u
    return ConcavityReport(grid, values, worst >= -tol, worst, hyp, tol)


@dataclass(frozen=True)
class TensorizationReport:
    lhs: float
    rhs: float
    equal: bool
    entropy_total: float | None
    entropy_chain_sum: float | None
    entropy_equal: bool | None
    tol: float = 1e-8


def tensorization_identity_check(mu: PathMeasure, nu: PathMeasure, tol: float = 1e-8) -> TensorizationReport:
    """Bicausal W2^2 from a two-stage product source splits into one-dimensional pieces.

    The entropy chain rule is checked too when nu is absolutely continuous
    with respect to mu.
    """
    if mu.num_stages != 2 or nu.num_stages != 2:
        raise WrongStageCount("the tensorization identity is stated for two stages")
    if not structure_flags(mu).is_product:
        raise NotProduct("the tensorization identity needs a product source")
    lhs = solve(mu, nu, sq_euclidean_separable(2), Mode.BICAUSAL).value
    mu1, mu2 = mu.stage_marginal(1), mu.stage_marginal(2)
    nu1 = nu.stage_marginal(1)
    rhs = ot1d_cost(mu1, nu1, square) + math.fsum(
        w * ot1d_cost(mu2, nu.conditional((y,)), square) for y, w in zip(nu1.values, nu1.weights)
    )
    ent = chain = None
    ent_ok = None
    if nu.is_dominated_by(mu):
        ent = relative_entropy(nu, mu)
        chain = math.fsum(entropy_chain(nu, mu))
        ent_ok = abs(ent - chain) < tol
    return TensorizationReport(lhs, rhs, abs(lhs - rhs) < tol, ent, chain, ent_ok, tol)
