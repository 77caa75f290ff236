"""Transport costs between paths, tagged with their structural form.

The tag decides which algorithms apply: the causal recursion needs a
semiseparable cost, the Knothe-Rosenblatt optimality results need separable
(or increment-separable) costs of the form ``h_t(x_t - y_t)`` with ``h_t``
convex. Convexity is declared by the caller and never verified.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import NotSemiseparable
from .measures import Path, to_increments
from .ot1d import absolute, power, square


class CostKind(str, enum.Enum):
    GENERAL = "general"
    SEMISEPARABLE = "semiseparable"
    SEPARABLE = "separable"
    INCREMENT_SEPARABLE = "increment_separable"


@dataclass(frozen=True)
class CostSpec:
    """Cost c(x, y) on pairs of N-step paths.

    ``terms`` depends on ``kind``:

    * GENERAL: unused, ``function(x, y)`` is the whole cost;
    * SEMISEPARABLE: ``terms[t](x_t, (y_1, ..., y_t))``;
    * SEPARABLE: ``terms[t](x_t, y_t)``;
    * INCREMENT_SEPARABLE: ``terms[0](x_1, y_1)`` then ``terms[t](dx_t, dy_t)``.

    ``difference`` optionally declares ``terms[t](a, b) == difference[t](a - b)``
    with each ``difference[t]`` convex.
    """

    kind: CostKind
    terms: tuple[Callable, ...] = ()
    function: Callable[[Path, Path], float] | None = None
    difference: tuple[Callable[[float], float], ...] | None = None
    name: str = "custom"

    def __call__(self, x: Sequence[float], y: Sequence[float]) -> float:
        x, y = tuple(x), tuple(y)
        if self.kind is CostKind.GENERAL:
            return float(self.function(x, y))
        if self.kind is CostKind.SEMISEPARABLE:
            return math.fsum(c(x[t], y[: t + 1]) for t, c in enumerate(self.terms))
        if self.kind is CostKind.SEPARABLE:
            return math.fsum(c(x[t], y[t]) for t, c in enumerate(self.terms))
        dx, dy = to_increments(x), to_increments(y)
        return math.fsum(c(dx[t], dy[t]) for t, c in enumerate(self.terms))

    @property
    def num_stages(self) -> int | None:
        return len(self.terms) if self.kind is not CostKind.GENERAL else None

    @property
    def is_semiseparable(self) -> bool:
        return self.kind in (CostKind.SEMISEPARABLE, CostKind.SEPARABLE)

    @property
    def is_difference_convex(self) -> bool:
        return self.difference is not None

    def stage_term(self, t: int, x_t: float, y_history: Sequence[float]) -> float:
        """Stage-t term c_t(x_t, y_1..y_t) of a semiseparable cost (t is 0-based)."""
        if self.kind is CostKind.SEMISEPARABLE:
            return float(self.terms[t](x_t, tuple(y_history)))
        if self.kind is CostKind.SEPARABLE:
            return float(self.terms[t](x_t, y_history[-1]))
        raise NotSemiseparable(f"cost {self.name!r} of kind {self.kind.value} has no stage terms")

    def matrix(self, xs: Sequence[Path], ys: Sequence[Path]) -> np.ndarray:
        return np.array([[self(x, y) for y in ys] for x in xs], dtype=float)

    def on_increments(self) -> "CostSpec":
        """The separable cost seen in increment coordinates (increment-separable only)."""
        if self.kind is not CostKind.INCREMENT_SEPARABLE:
            raise ValueError("only increment-separable costs have an increment form")
        return CostSpec(CostKind.SEPARABLE, self.terms, difference=self.difference, name=self.name + "@increments")


def general(function: Callable[[Path, Path], float], name: str = "general") -> CostSpec:
    return CostSpec(CostKind.GENERAL, function=function, name=name)


def semiseparable(terms: Sequence[Callable], name: str = "semiseparable") -> CostSpec:
    return CostSpec(CostKind.SEMISEPARABLE, tuple(terms), name=name)


def separable(terms: Sequence[Callable], name: str = "separable") -> CostSpec:
    return CostSpec(CostKind.SEPARABLE, tuple(terms), name=name)


def difference_separable(hs: Sequence[Callable[[float], float]], name: str = "difference") -> CostSpec:
    """Separable cost sum_t h_t(x_t - y_t) with h_t declared convex."""
    hs = tuple(hs)
    terms = tuple(_diff_term(h) for h in hs)
    return CostSpec(CostKind.SEPARABLE, terms, difference=hs, name=name)


def increment_separable(hs: Sequence[Callable[[float], float]], name: str = "increments") -> CostSpec:
    """h_1(x_1 - y_1) + sum_t h_t((x_t - x_{t-1}) - (y_t - y_{t-1})), h_t declared convex."""
    hs = tuple(hs)
    terms = tuple(_diff_term(h) for h in hs)
    return CostSpec(CostKind.INCREMENT_SEPARABLE, terms, difference=hs, name=name)


def _diff_term(h: Callable[[float], float]) -> Callable[[float, float], float]:
    def term(a: float, b: float) -> float:
        return h(a - b)

    return term


def _neq(x: Path, y: Path) -> float:
    return 0.0 if x == y else 1.0


def indicator_neq() -> CostSpec:
    """1 if the two paths differ anywhere, else 0."""
    return general(_neq, name="indicator_neq")


def sq_euclidean_separable(n: int) -> CostSpec:
    return difference_separable([square] * n, name="sq_euclidean_separable")


def abs_separable(n: int) -> CostSpec:
    return difference_separable([absolute] * n, name="abs_separable")


def power_separable(n: int, p: float) -> CostSpec:
    return difference_separable([power(p)] * n, name=f"power_separable[{p:g}]")


def increments_sq(n: int) -> CostSpec:
    return increment_separable([square] * n, name="increments_sq")


def table(values: Mapping[tuple[Path, Path], float], default: float | None = None) -> CostSpec:
    """General cost read from an explicit table over pairs of paths."""
    lookup = {(tuple(map(float, x)), tuple(map(float, y))): float(v) for (x, y), v in values.items()}

    def function(x: Path, y: Path) -> float:
        try:
            return lookup[(x, y)]
        except KeyError:
            if default is None:
                raise KeyError(f"cost table has no entry for {x} -> {y}") from None
            return default

    spec = general(function, name="table")
    object.__setattr__(spec, "_table", lookup)
    return spec
