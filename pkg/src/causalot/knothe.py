"""Knothe-Rosenblatt rearrangement between path measures.

In coupling form, stage t draws a fresh uniform U_t and sets
``x_t = F^{-1}_{mu^{x_1..x_{t-1}}}(U_t)``, ``y_t = F^{-1}_{nu^{y_1..y_{t-1}}}(U_t)``.
Because U_t is independent of the past, the coupled pair at each history is
the monotone coupling of the two conditional laws, and the plan is the
product of these one-step couplings.

In map form the source is a product of histograms (atomless), and the stage
map is ``x_t -> F^{-1}_{target}(F_{mu_t}(x_t))`` given the target history.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .causal_ot import TransportPlan, _check_marginals, is_bicausal
from .errors import EmptySupport, UnnormalizedWeights
from .measures import INPUT_TOL, Distribution1D, Path, PathMeasure, from_increments, product_measure
from .ot1d import monotone_coupling

PUSH_TOL = 1e-12


def kr_coupling(mu: PathMeasure, nu: PathMeasure) -> TransportPlan:
    """Knothe-Rosenblatt coupling with independent uniforms per stage."""
    layer: dict[tuple[Path, Path], float] = {((), ()): 1.0}
    for _ in range(mu.num_stages):
        nxt: dict[tuple[Path, Path], float] = defaultdict(float)
        for (xh, yh), w in layer.items():
            for a, b, v in monotone_coupling(mu.conditional(xh), nu.conditional(yh)).atoms:
                nxt[(xh + (a,), yh + (b,))] += w * v
        layer = nxt
    return TransportPlan.from_atoms(layer.items())


def increments_kr(mu: PathMeasure, nu: PathMeasure) -> TransportPlan:
    """KR coupling computed in increment coordinates and mapped back to paths."""
    plan = kr_coupling(mu.increments(), nu.increments())
    return TransportPlan.from_atoms(((from_increments(x), from_increments(y)), w) for (x, y), w in plan.atoms)


def _monotone_support(pairs: Sequence[tuple[float, float]]) -> bool:
    """No two points (x, y), (x', y') with x < x' and y > y'."""
    return not any(x1 < x2 and y1 > y2 for x1, y1 in pairs for x2, y2 in pairs)


def is_itt(plan: TransportPlan) -> bool:
    """Stage-1 pairs and every conditional one-step pair set have monotone support."""
    groups: dict[tuple[Path, Path], set[tuple[float, float]]] = defaultdict(set)
    for (x, y), w in plan.atoms:
        if w <= 0.0:
            continue
        for t in range(plan.num_stages):
            groups[(x[:t], y[:t])].add((x[t], y[t]))
    return all(_monotone_support(list(g)) for g in groups.values())


def kr_uniqueness_check(mu: PathMeasure, nu: PathMeasure, candidate: TransportPlan, tol: float = 1e-9) -> bool:
    """True iff the candidate is a bicausal increasing triangular plan equal to the KR coupling.

    A candidate that is not bicausal or not ITT is outside the uniqueness
    statement and yields False.
    """
    _check_marginals(candidate, mu, nu)
    if not (is_bicausal(candidate, mu, nu).ok and is_itt(candidate)):
        return False
    return candidate.allclose(kr_coupling(mu, nu), tol)


@dataclass(frozen=True)
class Condition44Report:
    holds: bool
    worst: float
    witness: tuple | None


def _ordered_pairs(m: PathMeasure, t: int):
    groups: dict[Path, list[Path]] = defaultdict(list)
    for h in m.histories(t + 1):
        groups[h[:t]].append(h)
    for prefix, hs in groups.items():
        hs.sort()
        for i in range(len(hs)):
            for j in range(i + 1, len(hs)):
                yield prefix, hs[i], hs[j]


def condition_44_check(mu: PathMeasure, nu: PathMeasure) -> Condition44Report:
    """Monotone-regression condition on sibling kernels of mu and nu.

    For each prefix length t = 0..N-2 and sibling histories (p, x) < (p, x')
    of mu and (q, y) < (q, y') of nu, require
    (F_{mu^{p,x'}}(u) - F_{mu^{p,x}}(u)) (F_{nu^{q,y'}}(u) - F_{nu^{q,y}}(u)) >= 0
    on the grid of all support values u.
    """
    worst, witness = 0.0, None
    n = mu.num_stages
    for t in range(n - 1):
        grid = sorted(set(mu.stage_marginal(t + 2).values) | set(nu.stage_marginal(t + 2).values))
        mu_pairs = list(_ordered_pairs(mu, t))
        nu_pairs = list(_ordered_pairs(nu, t))
        for _, h, h2 in mu_pairs:
            fm = np.array([mu.conditional(h2).cdf(u) - mu.conditional(h).cdf(u) for u in grid])
            for _, g, g2 in nu_pairs:
                fn = np.array([nu.conditional(g2).cdf(u) - nu.conditional(g).cdf(u) for u in grid])
                prod = fm * fn
                k = int(np.argmin(prod))
                if prod[k] < worst:
                    worst, witness = float(prod[k]), (t, h, h2, g, g2, grid[k])
    return Condition44Report(worst >= -1e-12, worst, witness)


@dataclass(frozen=True)
class HistogramStage:
    """Piecewise-uniform density: mass ``masses[i]`` spread over [breaks[i], breaks[i+1])."""

    breaks: tuple[float, ...]
    masses: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "masses", tuple(float(m) for m in self.masses))
        if len(self.breaks) != len(self.masses) + 1 or not self.masses:
            raise ValueError("need one more breakpoint than masses")
        if any(b <= a for a, b in zip(self.breaks, self.breaks[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        if any(m < 0.0 for m in self.masses):
            raise UnnormalizedWeights("negative histogram mass")
        total = math.fsum(self.masses)
        if total <= 0.0:
            raise EmptySupport("histogram has no mass")
        if abs(total - 1.0) > INPUT_TOL:
            raise UnnormalizedWeights(f"histogram masses sum to {total!r}")
        object.__setattr__(self, "breaks", tuple(float(b) for b in self.breaks))
        scale = 1.0 if abs(total - 1.0) <= 1e-12 else total
        object.__setattr__(self, "masses", tuple(m / scale for m in self.masses))

    @property
    def levels(self) -> np.ndarray:
        return np.concatenate([[0.0], np.minimum(np.cumsum(self.masses), 1.0)])

    def cdf(self, x: float) -> float:
        br = self.breaks
        if x <= br[0]:
            return 0.0
        if x >= br[-1]:
            return 1.0
        i = int(np.searchsorted(br, x, side="right")) - 1
        return float(self.levels[i] + self.masses[i] * (x - br[i]) / (br[i + 1] - br[i]))

    def quantile(self, u: float) -> float:
        """Smallest x with F(x) >= u (left endpoint of flat stretches)."""
        lv = self.levels
        if u <= 0.0:
            return self.breaks[0]
        i = int(np.searchsorted(lv, u, side="left")) - 1
        i = min(max(i, 0), len(self.masses) - 1)
        while self.masses[i] == 0.0 and i + 1 < len(self.masses):
            i += 1
        frac = (u - lv[i]) / self.masses[i]
        return float(self.breaks[i] + min(max(frac, 0.0), 1.0) * (self.breaks[i + 1] - self.breaks[i]))

    def mass_between(self, lo: float, hi: float) -> float:
        return self.cdf(hi) - self.cdf(lo)

    def discretize(self, cells: int) -> Distribution1D:
        """Atoms at the midpoints of ``cells`` equal sub-cells of every interval."""
        pairs = []
        for i, m in enumerate(self.masses):
            if m == 0.0:
                continue
            lo, hi = self.breaks[i], self.breaks[i + 1]
            width = (hi - lo) / cells
            pairs.extend((lo + (k + 0.5) * width, m / cells) for k in range(cells))
        return Distribution1D.from_pairs(pairs)


@dataclass(frozen=True)
class HistogramProductMeasure:
    stages: tuple[HistogramStage, ...]

    @property
    def num_stages(self) -> int:
        return len(self.stages)

    @classmethod
    def uniform(cls, n: int, lo: float = 0.0, hi: float = 1.0) -> "HistogramProductMeasure":
        return cls(tuple(HistogramStage((lo, hi), (1.0,)) for _ in range(n)))

    def to_path_measure(self, cells: int = 1) -> PathMeasure:
        return product_measure([s.discretize(cells) for s in self.stages])


@dataclass(frozen=True)
class MapCell:
    """x in [x_lo, x_hi] maps affinely onto [y_lo, y_hi]; a step when y_lo == y_hi."""

    x_lo: float
    x_hi: float
    y_lo: float
    y_hi: float
    mass: float

    def __call__(self, x: float) -> float:
        if self.y_lo == self.y_hi or self.x_hi == self.x_lo:
            return self.y_lo
        return self.y_lo + (x - self.x_lo) * (self.y_hi - self.y_lo) / (self.x_hi - self.x_lo)


@dataclass(frozen=True)
class AdaptedMapTable:
    """Stage t: target history (length t) -> cells partitioning the source support.

    For histogram targets the map does not depend on the history and the only
    key is the empty tuple.
    """

    stages: tuple[dict[Path, tuple[MapCell, ...]], ...]
    history_free: bool = False

    def cells(self, t: int, y_history: Path) -> tuple[MapCell, ...]:
        return self.stages[t][() if self.history_free else tuple(y_history)]

    def apply(self, x: Sequence[float]) -> Path:
        y: Path = ()
        for t, xt in enumerate(x):
            for cell in self.cells(t, y):
                if cell.x_lo <= xt <= cell.x_hi:
                    y = y + (float(cell(xt)),)
                    break
            else:
                raise ValueError(f"x_{t + 1} = {xt} outside the source support")
        return y

    def is_monotone(self) -> bool:
        for stage in self.stages:
            for cells in stage.values():
                ys = [(c.y_lo, c.y_hi) for c in sorted(cells, key=lambda c: c.x_lo)]
                flat = [v for pair in ys for v in pair]
                if any(b < a for a, b in zip(flat, flat[1:])):
                    return False
        return True


def _stage_cells_atomic(src: HistogramStage, target: Distribution1D) -> tuple[MapCell, ...]:
    cells = []
    lo_level = 0.0
    for y, cum, w in zip(target.values, target.cumulative, target.weights):
        hi_level = min(float(cum), 1.0)
        cells.append(MapCell(src.quantile(lo_level), src.quantile(hi_level), y, y, w))
        lo_level = hi_level
    last = cells[-1]
    cells[-1] = MapCell(last.x_lo, src.breaks[-1], last.y_lo, last.y_hi, last.mass)
    first = cells[0]
    cells[0] = MapCell(src.breaks[0], first.x_hi, first.y_lo, first.y_hi, first.mass)
    return tuple(cells)


def _stage_cells_histogram(src: HistogramStage, target: HistogramStage) -> tuple[MapCell, ...]:
    levels = np.union1d(src.levels, target.levels)
    cells = []
    for lo, hi in zip(levels, levels[1:]):
        if hi - lo <= 1e-15:
            continue
        cells.append(MapCell(src.quantile(lo), src.quantile(hi), target.quantile(lo), target.quantile(hi), float(hi - lo)))
    return tuple(cells)


def kr_map(mu: HistogramProductMeasure, nu: PathMeasure | HistogramProductMeasure) -> AdaptedMapTable:
    """Knothe-Rosenblatt map from an atomless product source as a threshold table."""
    if isinstance(nu, HistogramProductMeasure):
        stages = tuple({(): _stage_cells_histogram(s, g)} for s, g in zip(mu.stages, nu.stages))
        return AdaptedMapTable(stages, history_free=True)
    stages = []
    for t, src in enumerate(mu.stages):
        stages.append({yh: _stage_cells_atomic(src, nu.conditional(yh)) for yh in nu.histories(t)})
    return AdaptedMapTable(tuple(stages))


def map_pushforward(table: AdaptedMapTable, mu: HistogramProductMeasure) -> PathMeasure:
    """Image of the product source under an atomic-target map, from cell masses."""
    if table.history_free:
        raise ValueError("pushforward as atoms needs an atomic target")
    layer: dict[Path, float] = {(): 1.0}
    for t, src in enumerate(mu.stages):
        nxt: dict[Path, float] = defaultdict(float)
        for yh, w in layer.items():
            for cell in table.cells(t, yh):
                mass = src.mass_between(cell.x_lo, cell.x_hi)
                if mass > 0.0:
                    nxt[yh + (cell.y_lo,)] += w * mass
        layer = nxt
    items = sorted(layer.items())
    return PathMeasure(tuple(p for p, _ in items), tuple(w for _, w in items))


def pushforward_matches(table: AdaptedMapTable, mu: HistogramProductMeasure, nu, tol: float = PUSH_TOL) -> bool:
    """Check T_* mu = nu on the cell decomposition."""
    if isinstance(nu, HistogramProductMeasure):
        for stage, src, tgt in zip(table.stages, mu.stages, nu.stages):
            for cell in stage[()]:
                if abs(src.mass_between(cell.x_lo, cell.x_hi) - tgt.mass_between(cell.y_lo, cell.y_hi)) > tol:
                    return False
        return True
    image = map_pushforward(table, mu).as_dict()
    target = nu.as_dict()
    return all(abs(image.get(p, 0.0) - target.get(p, 0.0)) <= tol for p in set(image) | set(target))
