"""Exact optimal transport on the line.

Couplings are built from the common refinement of the two cumulative weight
sequences, i.e. ``(F_p^{-1}(U), F_q^{-1}(U))`` for a single uniform ``U``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .measures import Distribution1D

# cells of the uniform partition thinner than this come from rounding of equal
# cumulative sums and carry no mass
_SLIVER = 1e-15


@dataclass(frozen=True)
class Coupling1D:
    atoms: tuple[tuple[float, float, float], ...]

    def cost(self, c: Callable[[float], float]) -> float:
        return math.fsum(w * c(x - y) for x, y, w in self.atoms)

    def x_marginal(self) -> Distribution1D:
        return Distribution1D.from_pairs((x, w) for x, _, w in self.atoms)

    def y_marginal(self) -> Distribution1D:
        return Distribution1D.from_pairs((y, w) for _, y, w in self.atoms)

    def as_dict(self) -> dict[tuple[float, float], float]:
        return {(x, y): w for x, y, w in self.atoms}


def monotone_coupling(p: Distribution1D, q: Distribution1D) -> Coupling1D:
    """Comonotone (quantile) coupling of two finite laws."""
    cp = np.minimum(p.cumulative, 1.0)
    cq = np.minimum(q.cumulative, 1.0)
    cp[-1] = cq[-1] = 1.0
    levels = np.union1d(cp, cq)
    atoms = []
    lo = 0.0
    i = j = 0
    for hi in levels:
        width = hi - lo
        if width > _SLIVER:
            # quantiles on the open cell (lo, hi] are constant
            while cp[i] < hi and i < len(cp) - 1:
                i += 1
            while cq[j] < hi and j < len(cq) - 1:
                j += 1
            atoms.append((p.values[i], q.values[j], float(width)))
        lo = hi
    merged: dict[tuple[float, float], float] = {}
    for x, y, w in atoms:
        merged[(x, y)] = merged.get((x, y), 0.0) + w
    return Coupling1D(tuple((x, y, w) for (x, y), w in sorted(merged.items())))


def ot1d_cost(p: Distribution1D, q: Distribution1D, c: Callable[[float], float]) -> float:
    """Cost of the monotone coupling under c(x - y); optimal when c is convex."""
    return monotone_coupling(p, q).cost(c)


def w1(p: Distribution1D, q: Distribution1D) -> float:
    """Integral of |F_p - F_q| over the line, summed exactly between breakpoints."""
    grid = np.union1d(p.values, q.values)
    if len(grid) < 2:
        return 0.0
    fp = np.array([p.cdf(z) for z in grid[:-1]])
    fq = np.array([q.cdf(z) for z in grid[:-1]])
    return float(math.fsum(np.abs(fp - fq) * np.diff(grid)))


def square(d: float) -> float:
    return d * d


def absolute(d: float) -> float:
    return abs(d)


def power(p: float) -> Callable[[float], float]:
    def c(d: float) -> float:
        return abs(d) ** p

    c.__name__ = f"abs_pow_{p:g}"
    return c
