"""Classical, causal and bicausal transport between path measures as LPs.

Plans live on the full product of the two supports, variable ``i * |nu| + j``
carrying the mass of ``(mu.paths[i], nu.paths[j])``. Causality is imposed
through the linearized kernel identity

    mu(xh) * g[xh + (a,); yh] - mu(xh + (a,)) * g[xh; yh] = 0

for every stage t < N, positive-mass histories xh, yh of length t and
successor a of xh, where ``g[.;.]`` is the mass of all atoms extending both
prefixes. Bicausality adds the same rows with the roles of x and y swapped.
"""

from __future__ import annotations

import enum
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .costs import CostSpec
from .errors import MarginalMismatch, NotCausal, NotMarkov, SolverFailure, WrongMode, WrongStageCount
from .lp import LinearProgram, LpStatus, solve_lp
from .measures import Path, PathMeasure, structure_flags

CAUSAL_TOL = 1e-9
MARGINAL_TOL = 1e-9
PLAN_ZERO = 1e-14

RowKey = tuple[int, Path, Path, float]


class Mode(str, enum.Enum):
    CLASSICAL = "classical"
    CAUSAL = "causal"
    BICAUSAL = "bicausal"


@dataclass(frozen=True)
class TransportPlan:
    """Finitely supported coupling; atoms are ((x-path, y-path), weight)."""

    atoms: tuple[tuple[tuple[Path, Path], float], ...]

    @classmethod
    def from_atoms(cls, atoms: Iterable[tuple[tuple, float]] | Mapping[tuple, float]) -> "TransportPlan":
        if isinstance(atoms, Mapping):
            atoms = atoms.items()
        acc: dict[tuple[Path, Path], float] = defaultdict(float)
        for (x, y), w in atoms:
            acc[(tuple(map(float, x)), tuple(map(float, y)))] += float(w)
        return cls(tuple(sorted((k, w) for k, w in acc.items() if w > 0.0)))

    @classmethod
    def product(cls, mu: PathMeasure, nu: PathMeasure) -> "TransportPlan":
        return cls.from_atoms(((x, y), p * q) for x, p in mu.atoms() for y, q in nu.atoms())

    @classmethod
    def identity(cls, mu: PathMeasure) -> "TransportPlan":
        return cls.from_atoms(((x, x), p) for x, p in mu.atoms())

    def __len__(self) -> int:
        return len(self.atoms)

    def __iter__(self):
        return iter(self.atoms)

    @property
    def num_stages(self) -> int:
        return len(self.atoms[0][0][0])

    def total_mass(self) -> float:
        return math.fsum(w for _, w in self.atoms)

    def as_dict(self) -> dict[tuple[Path, Path], float]:
        return dict(self.atoms)

    def x_marginal(self) -> dict[Path, float]:
        acc: dict[Path, float] = defaultdict(float)
        for (x, _), w in self.atoms:
            acc[x] += w
        return dict(acc)

    def y_marginal(self) -> dict[Path, float]:
        acc: dict[Path, float] = defaultdict(float)
        for (_, y), w in self.atoms:
            acc[y] += w
        return dict(acc)

    def swapped(self) -> "TransportPlan":
        return TransportPlan.from_atoms(((y, x), w) for (x, y), w in self.atoms)

    def cost(self, cost: CostSpec) -> float:
        return math.fsum(w * cost(x, y) for (x, y), w in self.atoms)

    def allclose(self, other: "TransportPlan", tol: float = 1e-9) -> bool:
        a, b = self.as_dict(), other.as_dict()
        return all(abs(a.get(k, 0.0) - b.get(k, 0.0)) <= tol for k in set(a) | set(b))


@dataclass(frozen=True)
class DualCertificate:
    phi: dict[Path, float]
    psi: dict[Path, float]
    causality_multipliers: dict[RowKey, float]
    anticausality_multipliers: dict[RowKey, float]

    def marginal_value(self, mu: PathMeasure, nu: PathMeasure) -> float:
        """Sum of phi d mu + psi d nu; causality rows have zero right-hand side."""
        return math.fsum(
            [self.phi[x] * w for x, w in mu.atoms()] + [self.psi[y] * w for y, w in nu.atoms()]
        )


@dataclass(frozen=True)
class CausalityReport:
    ok: bool
    worst: float
    witness: tuple | None
    tol: float = CAUSAL_TOL


@dataclass(frozen=True)
class Solution:
    mode: Mode
    value: float
    plan: TransportPlan
    dual: DualCertificate
    diagnostics: dict = field(default_factory=dict)
    check: CausalityReport | None = None


@dataclass(frozen=True)
class ConstraintRows:
    keys: list[RowKey]
    matrix: np.ndarray


def _kernel_rows(src: PathMeasure, other: PathMeasure, src_is_x: bool) -> ConstraintRows:
    """Rows saying the src-kernel of the plan given both histories is the src kernel."""
    n = src.num_stages
    n_src, n_other = len(src), len(other)
    keys: list[RowKey] = []
    rows: list[np.ndarray] = []
    for t in range(1, n):
        src_groups: dict[Path, list[int]] = defaultdict(list)
        for i, p in enumerate(src.paths):
            src_groups[p[:t]].append(i)
        other_groups: dict[Path, list[int]] = defaultdict(list)
        for j, p in enumerate(other.paths):
            other_groups[p[:t]].append(j)
        for sh in sorted(src_groups):
            idx = src_groups[sh]
            mass = src.prefix_masses(t)[sh]
            succ = src.successor_masses(sh)
            # the rows of a group add up to zero, so the last successor is implied
            successors = sorted(succ)[:-1]
            nexts = np.array([src.paths[i][t] for i in idx])
            for oh in sorted(other_groups):
                jdx = other_groups[oh]
                for a in successors:
                    coef = mass * (nexts == a).astype(float) - succ[a]
                    if not np.any(coef):
                        continue
                    row = np.zeros(n_src * n_other)
                    for i, c in zip(idx, coef):
                        if src_is_x:
                            row[i * n_other + np.asarray(jdx)] = c
                        else:
                            row[np.asarray(jdx) * n_src + i] = c
                    rows.append(row)
                    keys.append((t, sh, oh, a) if src_is_x else (t, oh, sh, a))
    matrix = np.array(rows) if rows else np.zeros((0, n_src * n_other))
    return ConstraintRows(keys, matrix)


def causality_rows(mu: PathMeasure, nu: PathMeasure) -> ConstraintRows:
    """Linearized causality rows over the product support (x from mu, y from nu).

    Keys are ``(t, x-history, y-history, successor of the x-history)``.
    """
    _same_stages(mu, nu)
    return _kernel_rows(mu, nu, src_is_x=True)


def anticausality_rows(mu: PathMeasure, nu: PathMeasure) -> ConstraintRows:
    """Causality rows of the swapped plan; keys end with a successor of the y-history."""
    _same_stages(mu, nu)
    return _kernel_rows(nu, mu, src_is_x=False)


def _same_stages(mu: PathMeasure, nu: PathMeasure) -> None:
    if mu.num_stages != nu.num_stages:
        raise WrongStageCount(f"mu has {mu.num_stages} stages, nu has {nu.num_stages}")


def marginal_rows(mu: PathMeasure, nu: PathMeasure) -> np.ndarray:
    k, l = len(mu), len(nu)
    A = np.zeros((k + l, k * l))
    for i in range(k):
        A[i, i * l : (i + 1) * l] = 1.0
    for j in range(l):
        A[k + j, j::l] = 1.0
    return A


def solve(mu: PathMeasure, nu: PathMeasure, cost: CostSpec, mode: Mode | str = Mode.CAUSAL) -> Solution:
    """Optimal value, plan and dual certificate of the transport problem in ``mode``."""
    mode = Mode(mode)
    _same_stages(mu, nu)
    k, l = len(mu), len(nu)
    blocks = [marginal_rows(mu, nu)]
    causal = anti = ConstraintRows([], np.zeros((0, k * l)))
    if mode is not Mode.CLASSICAL:
        causal = causality_rows(mu, nu)
        blocks.append(causal.matrix)
    if mode is Mode.BICAUSAL:
        anti = anticausality_rows(mu, nu)
        blocks.append(anti.matrix)
    A = np.vstack(blocks)
    b = np.concatenate([mu.weights, nu.weights, np.zeros(A.shape[0] - k - l)])
    c = cost.matrix(mu.paths, nu.paths).ravel()
    lp = LinearProgram(c, A, b)
    sol = solve_lp(lp)
    if sol.status is not LpStatus.OPTIMAL:
        # mu (x) nu is always feasible and costs are finite, so this is a solver defect
        raise SolverFailure(f"{mode.value} transport LP returned {sol.status.value}")

    plan = TransportPlan.from_atoms(
        ((mu.paths[i], nu.paths[j]), sol.x[i * l + j])
        for i in range(k)
        for j in range(l)
        if sol.x[i * l + j] > PLAN_ZERO
    )
    y = sol.y
    n_causal = len(causal.keys)
    dual = DualCertificate(
        phi=dict(zip(mu.paths, map(float, y[:k]))),
        psi=dict(zip(nu.paths, map(float, y[k : k + l]))),
        causality_multipliers=dict(zip(causal.keys, map(float, y[k + l : k + l + n_causal]))),
        anticausality_multipliers=dict(zip(anti.keys, map(float, y[k + l + n_causal :]))),
    )
    residuals = sol.residuals(lp)
    diagnostics = {
        "variables": k * l,
        "rows": A.shape[0],
        "causality_rows": n_causal,
        "anticausality_rows": len(anti.keys),
        "iterations": sol.iterations,
        **residuals,
    }
    check = None
    if mode is Mode.CAUSAL:
        check = is_causal(plan, mu, nu)
    elif mode is Mode.BICAUSAL:
        check = is_bicausal(plan, mu, nu)
    return Solution(mode, sol.value, plan, dual, diagnostics, check)


def _check_marginals(plan: TransportPlan, mu: PathMeasure, nu: PathMeasure) -> None:
    for got, want, name in ((plan.x_marginal(), mu.as_dict(), "x"), (plan.y_marginal(), nu.as_dict(), "y")):
        for path in set(got) | set(want):
            if abs(got.get(path, 0.0) - want.get(path, 0.0)) > MARGINAL_TOL:
                raise MarginalMismatch(
                    f"{name}-marginal of the plan gives {got.get(path, 0.0)!r} to {path}, "
                    f"measure gives {want.get(path, 0.0)!r}"
                )


def _kernel_violation(plan: TransportPlan, mu: PathMeasure, tol: float) -> CausalityReport:
    n = plan.num_stages
    worst, witness = 0.0, None
    for t in range(1, n):
        joint: dict[tuple[Path, Path], float] = defaultdict(float)
        ext: dict[tuple[Path, Path], dict[float, float]] = defaultdict(lambda: defaultdict(float))
        for (x, y), w in plan.atoms:
            joint[(x[:t], y[:t])] += w
            ext[(x[:t], y[:t])][x[t]] += w
        for (xh, yh), mass in joint.items():
            law = mu.conditional(xh)
            seen = ext[(xh, yh)]
            for a in set(law.values) | set(seen):
                gap = abs(seen.get(a, 0.0) - law.weight_of(a) * mass)
                if gap > worst:
                    worst, witness = gap, (t, xh, yh, a)
    return CausalityReport(worst <= tol, worst, witness, tol)


def is_causal(plan: TransportPlan, mu: PathMeasure, nu: PathMeasure, tol: float = CAUSAL_TOL) -> CausalityReport:
    """Check that, given both histories, the plan moves x like mu does.

    The violation of a row is measured in mass: ``|g[xh + (a,); yh] - mu^xh(a) g[xh; yh]|``.
    """
    _same_stages(mu, nu)
    _check_marginals(plan, mu, nu)
    return _kernel_violation(plan, mu, tol)


def is_bicausal(plan: TransportPlan, mu: PathMeasure, nu: PathMeasure, tol: float = CAUSAL_TOL) -> CausalityReport:
    forward = is_causal(plan, mu, nu, tol)
    backward = _kernel_violation(plan.swapped(), nu, tol)
    if backward.worst > forward.worst:
        witness = ("anticausal",) + backward.witness
        worst = backward.worst
    else:
        witness = None if forward.witness is None else ("causal",) + forward.witness
        worst = forward.worst
    return CausalityReport(forward.ok and backward.ok, worst, witness, tol)


def quasi_markov_projection(plan: TransportPlan, mu: PathMeasure, nu: PathMeasure) -> TransportPlan:
    """Rebuild a causal plan from its kernels given (x_t, y_1..y_t).

    The result has the same marginals, is causal, and has the same cost as the
    input for semiseparable costs when mu is Markov.
    """
    if not is_causal(plan, mu, nu).ok:
        raise NotCausal("quasi-Markov projection needs a causal plan")
    if not structure_flags(mu).is_markov:
        raise NotMarkov("quasi-Markov projection needs a Markov source measure")
    n = plan.num_stages
    layer: dict[tuple[Path, Path], float] = defaultdict(float)
    for (x, y), w in plan.atoms:
        layer[(x[:1], y[:1])] += w
    for t in range(1, n):
        joint: dict[tuple[float, Path], dict[tuple[float, float], float]] = defaultdict(lambda: defaultdict(float))
        for (x, y), w in plan.atoms:
            joint[(x[t - 1], y[:t])][(x[t], y[t])] += w
        nxt: dict[tuple[Path, Path], float] = defaultdict(float)
        for (xh, yh), w in layer.items():
            law = joint[(xh[-1], yh)]
            total = math.fsum(law.values())
            for (a, b), v in law.items():
                nxt[(xh + (a,), yh + (b,))] += w * v / total
        layer = nxt
    return TransportPlan.from_atoms(layer.items())


@dataclass(frozen=True)
class MongeReport:
    map: dict[Path, Path] | None
    adapted: bool

    @property
    def is_map(self) -> bool:
        return self.map is not None


def monge_check(plan: TransportPlan) -> MongeReport:
    """Detect whether the plan is induced by a map x -> y, and if so whether it is adapted."""
    image: dict[Path, Path] = {}
    for (x, y), _ in plan.atoms:
        if image.setdefault(x, y) != y:
            return MongeReport(None, False)
    n = plan.num_stages
    adapted = True
    for t in range(1, n + 1):
        seen: dict[Path, Path] = {}
        for x, y in image.items():
            if seen.setdefault(x[:t], y[:t]) != y[:t]:
                adapted = False
                break
        if not adapted:
            break
    return MongeReport(image, adapted)


def reverse_multiplier_report(solution: Solution) -> dict[str, float]:
    if solution.mode is not Mode.BICAUSAL:
        raise WrongMode(f"reverse multipliers exist only in bicausal mode, got {solution.mode.value}")
    mult = solution.dual.anticausality_multipliers
    return {
        "max_abs_anticausal_multiplier": max((abs(v) for v in mult.values()), default=0.0),
        "rows": len(mult),
    }
