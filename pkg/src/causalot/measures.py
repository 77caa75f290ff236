"""Finitely supported path measures and their disintegrations.

A :class:`PathMeasure` is a probability on ``N``-step real paths with finitely
many atoms. Conditional one-step laws are only defined on histories of
positive mass; every "almost surely" statement becomes "for every
positive-mass history".
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from functools import cached_property
from itertools import combinations
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import (
    EmptySupport,
    NotAbsolutelyContinuous,
    RaggedPaths,
    StageOutOfRange,
    UnnormalizedWeights,
)

Path = tuple[float, ...]

INPUT_TOL = 1e-9
EXACT_TOL = 1e-12


def _merge_pairs(pairs: Iterable[tuple[float, float]]) -> dict[float, float]:
    acc: dict[float, float] = defaultdict(float)
    for value, weight in pairs:
        acc[float(value)] += float(weight)
    return acc


@dataclass(frozen=True)
class Distribution1D:
    """Finitely supported law on the real line, sorted by value."""

    values: tuple[float, ...]
    weights: tuple[float, ...]

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[float, float]] | Mapping[float, float]) -> "Distribution1D":
        if isinstance(pairs, Mapping):
            pairs = pairs.items()
        acc = _merge_pairs(pairs)
        items = sorted((v, w) for v, w in acc.items() if w > 0.0)
        if not items:
            raise EmptySupport("distribution has no positive mass")
        total = math.fsum(w for _, w in items)
        return cls(tuple(v for v, _ in items), tuple(w / total for _, w in items))

    @classmethod
    def point_mass(cls, value: float) -> "Distribution1D":
        return cls((float(value),), (1.0,))

    def __len__(self) -> int:
        return len(self.values)

    @cached_property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.weights)

    def cdf(self, z: float) -> float:
        idx = int(np.searchsorted(self.values, z, side="right"))
        return 0.0 if idx == 0 else float(min(self.cumulative[idx - 1], 1.0))

    def quantile(self, u: float) -> float:
        """Left-continuous generalized inverse ``inf{y : F(y) >= u}``."""
        idx = int(np.searchsorted(self.cumulative, u, side="left"))
        return self.values[min(idx, len(self.values) - 1)]

    def weight_of(self, value: float) -> float:
        idx = int(np.searchsorted(self.values, value))
        if idx < len(self.values) and self.values[idx] == value:
            return self.weights[idx]
        return 0.0

    def mean(self) -> float:
        return float(np.dot(self.values, self.weights))

    def as_dict(self) -> dict[float, float]:
        return dict(zip(self.values, self.weights))

    def allclose(self, other: "Distribution1D", tol: float = EXACT_TOL) -> bool:
        if self.values != other.values:
            return False
        return all(abs(a - b) <= tol for a, b in zip(self.weights, other.weights))


@dataclass(frozen=True)
class Kernel:
    """One-step conditional laws at stage ``t``: history of length t -> law of x_{t+1}."""

    stage: int
    laws: Mapping[Path, Distribution1D]

    def __getitem__(self, history: Sequence[float]) -> Distribution1D:
        return self.laws[tuple(history)]

    def __iter__(self):
        return iter(self.laws)

    def __len__(self) -> int:
        return len(self.laws)

    def items(self):
        return self.laws.items()


@dataclass(frozen=True)
class StructureFlags:
    is_markov: bool
    is_product: bool
    has_independent_increments: bool


@dataclass(frozen=True)
class PathMeasure:
    """Probability measure with finitely many atoms on R^N.

    Build instances with :func:`build_path_measure`, which validates and
    canonicalizes (merges duplicates, sorts paths lexicographically).
    """

    paths: tuple[Path, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        if not self.paths:
            raise EmptySupport("path measure has no atoms")
        n = len(self.paths[0])
        if n == 0 or any(len(p) != n for p in self.paths):
            raise RaggedPaths("all paths must share the same positive length")

    @property
    def num_stages(self) -> int:
        return len(self.paths[0])

    def __len__(self) -> int:
        return len(self.paths)

    def atoms(self) -> list[tuple[Path, float]]:
        return list(zip(self.paths, self.weights))

    def as_dict(self) -> dict[Path, float]:
        return dict(zip(self.paths, self.weights))

    def weight_of(self, path: Sequence[float]) -> float:
        return self._index.get(tuple(path), 0.0)

    @cached_property
    def _index(self) -> dict[Path, float]:
        return dict(zip(self.paths, self.weights))

    @cached_property
    def _prefix_tables(self) -> list[dict[Path, float]]:
        tables: list[dict[Path, float]] = []
        for t in range(self.num_stages + 1):
            acc: dict[Path, float] = defaultdict(float)
            for path, w in zip(self.paths, self.weights):
                acc[path[:t]] += w
            tables.append(dict(acc))
        return tables

    @cached_property
    def _successor_tables(self) -> list[dict[Path, dict[float, float]]]:
        tables = []
        for t in range(self.num_stages):
            acc: dict[Path, dict[float, float]] = defaultdict(lambda: defaultdict(float))
            for path, w in zip(self.paths, self.weights):
                acc[path[:t]][path[t]] += w
            tables.append({h: dict(s) for h, s in acc.items()})
        return tables

    def prefix_masses(self, t: int) -> dict[Path, float]:
        """Mass of every positive-mass prefix of length ``t`` (0 <= t <= N)."""
        if not 0 <= t <= self.num_stages:
            raise StageOutOfRange(f"prefix length {t} outside 0..{self.num_stages}")
        return self._prefix_tables[t]

    def histories(self, t: int) -> list[Path]:
        return sorted(self.prefix_masses(t))

    def successor_masses(self, history: Sequence[float]) -> dict[float, float]:
        """Joint mass of (history, a) for every successor value a."""
        history = tuple(history)
        return self._successor_tables[len(history)][history]

    @cached_property
    def _conditionals(self) -> dict[Path, Distribution1D]:
        out = {}
        for t in range(self.num_stages):
            for h, succ in self._successor_tables[t].items():
                total = self._prefix_tables[t][h]
                items = sorted(succ.items())
                out[h] = Distribution1D(
                    tuple(v for v, _ in items), tuple(w / total for _, w in items)
                )
        return out

    def conditional(self, history: Sequence[float]) -> Distribution1D:
        """Law of the next coordinate given a positive-mass history."""
        return self._conditionals[tuple(history)]

    def stage_marginal(self, t: int) -> Distribution1D:
        """Law of the coordinate x_t, 1-based."""
        if not 1 <= t <= self.num_stages:
            raise StageOutOfRange(f"stage {t} outside 1..{self.num_stages}")
        return Distribution1D.from_pairs((p[t - 1], w) for p, w in zip(self.paths, self.weights))

    def marginal(self, t: int) -> "PathMeasure":
        """Law of the first ``t`` coordinates."""
        if not 1 <= t <= self.num_stages:
            raise StageOutOfRange(f"stage {t} outside 1..{self.num_stages}")
        items = sorted(self.prefix_masses(t).items())
        return PathMeasure(tuple(p for p, _ in items), tuple(w for _, w in items))

    def map_paths(self, fn) -> "PathMeasure":
        """Push forward under a path map; coinciding images are merged."""
        acc: dict[Path, float] = defaultdict(float)
        for p, w in zip(self.paths, self.weights):
            acc[tuple(float(v) for v in fn(p))] += w
        items = sorted(acc.items())
        return PathMeasure(tuple(p for p, _ in items), tuple(w for _, w in items))

    def increments(self) -> "PathMeasure":
        return self.map_paths(to_increments)

    def allclose(self, other: "PathMeasure", tol: float = EXACT_TOL) -> bool:
        """Same support path by path, weights within ``tol``."""
        if self.paths != other.paths:
            return False
        return all(abs(a - b) <= tol for a, b in zip(self.weights, other.weights))

    def is_dominated_by(self, other: "PathMeasure") -> bool:
        return all(other.weight_of(p) > 0.0 for p in self.paths)


def to_increments(path: Sequence[float]) -> Path:
    """(x1, x2, ..., xN) -> (x1, x2 - x1, ..., xN - x_{N-1})."""
    return (path[0],) + tuple(path[i] - path[i - 1] for i in range(1, len(path)))


def from_increments(path: Sequence[float]) -> Path:
    return tuple(float(v) for v in np.cumsum(path)) if len(path) > 1 else (float(path[0]),)


def build_path_measure(
    raw_atoms: Iterable[tuple[Sequence[float], float]] | Mapping[Sequence[float], float],
) -> PathMeasure:
    """Validate raw ``(path, weight)`` pairs and return a canonical PathMeasure.

    Duplicated paths are merged, zero weights dropped. Weights must add up to
    one within 1e-9; a residual above 1e-12 is then renormalized away.
    """
    if isinstance(raw_atoms, Mapping):
        raw_atoms = raw_atoms.items()
    acc: dict[Path, float] = defaultdict(float)
    length = None
    for path, weight in raw_atoms:
        path = tuple(float(v) for v in path)
        weight = float(weight)
        if not all(math.isfinite(v) for v in path) or not math.isfinite(weight):
            raise ValueError(f"non-finite entry in atom {path!r}: {weight!r}")
        if length is None:
            length = len(path)
        if len(path) != length or length == 0:
            raise RaggedPaths(f"path {path!r} has length {len(path)}, expected {length}")
        if weight < 0.0:
            raise UnnormalizedWeights(f"negative weight {weight} on path {path!r}")
        acc[path] += weight
    items = sorted((p, w) for p, w in acc.items() if w > 0.0)
    if not items:
        raise EmptySupport("no atom carries positive weight")
    total = math.fsum(w for _, w in items)
    if abs(total - 1.0) > INPUT_TOL:
        raise UnnormalizedWeights(f"weights sum to {total!r}, expected 1 within {INPUT_TOL}")
    # weights already normalized to internal precision are kept bit-for-bit so that
    # parsing is idempotent
    scale = 1.0 if abs(total - 1.0) <= EXACT_TOL else total
    return PathMeasure(tuple(p for p, _ in items), tuple(w / scale for _, w in items))


def product_measure(stages: Sequence[Distribution1D]) -> PathMeasure:
    """mu_1 (x) ... (x) mu_N as a PathMeasure."""
    atoms: list[tuple[Path, float]] = [((), 1.0)]
    for law in stages:
        atoms = [(p + (v,), w * q) for p, w in atoms for v, q in zip(law.values, law.weights)]
    return build_path_measure(atoms)


def disintegrate(m: PathMeasure, t: int) -> tuple[PathMeasure, Kernel]:
    """Split m into the law of its first t coordinates and the kernel of x_{t+1}."""
    if not 1 <= t <= m.num_stages - 1:
        raise StageOutOfRange(f"disintegration stage {t} outside 1..{m.num_stages - 1}")
    kernel = Kernel(t, {h: m.conditional(h) for h in m.histories(t)})
    return m.marginal(t), kernel


def _kernels_agree(laws: Iterable[Distribution1D]) -> bool:
    laws = list(laws)
    return all(laws[0].allclose(other) for other in laws[1:])


def _is_product(m: PathMeasure) -> bool:
    for t in range(1, m.num_stages):
        if not _kernels_agree(m.conditional(h) for h in m.histories(t)):
            return False
    return True


def structure_flags(m: PathMeasure) -> StructureFlags:
    markov = True
    for t in range(2, m.num_stages):
        groups: dict[float, list[Distribution1D]] = defaultdict(list)
        for h in m.histories(t):
            groups[h[-1]].append(m.conditional(h))
        if not all(_kernels_agree(g) for g in groups.values()):
            markov = False
            break
    return StructureFlags(
        is_markov=markov,
        is_product=_is_product(m),
        has_independent_increments=_is_product(m.increments()),
    )


def _entropy_1d(p: Distribution1D, q: Distribution1D) -> float:
    total = 0.0
    for v, w in zip(p.values, p.weights):
        ref = q.weight_of(v)
        if ref <= 0.0:
            return math.inf
        total += w * math.log(w / ref)
    return total


def relative_entropy(nu: PathMeasure, mu: PathMeasure) -> float:
    """Ent(nu | mu); +inf unless nu is absolutely continuous w.r.t. mu."""
    terms = []
    for path, w in zip(nu.paths, nu.weights):
        ref = mu.weight_of(path)
        if ref <= 0.0:
            return math.inf
        terms.append(w * math.log(w / ref))
    return math.fsum(terms)


def entropy_chain(nu: PathMeasure, mu: PathMeasure) -> list[float]:
    """Stagewise terms of the chain rule for Ent(nu | mu).

    Term ``t`` (0-based) is the nu-average over histories ``h`` of length t of
    Ent(nu^h | mu^h); the terms sum to :func:`relative_entropy`.
    """
    if nu.num_stages != mu.num_stages:
        raise StageOutOfRange("measures have different numbers of stages")
    if not nu.is_dominated_by(mu):
        raise NotAbsolutelyContinuous("nu charges a path outside supp(mu)")
    terms = []
    for t in range(nu.num_stages):
        acc = []
        for h, mass in nu.prefix_masses(t).items():
            acc.append(mass * _entropy_1d(nu.conditional(h), mu.conditional(h)))
        terms.append(math.fsum(acc))
    return terms


def lip_ratios(mu: PathMeasure) -> list[tuple[float, int, Path, Path]]:
    """All ratios W1(mu^h, mu^h') / |h - h'|_1 over distinct positive-mass history pairs."""
    from .ot1d import w1

    out = []
    for t in range(1, mu.num_stages):
        for h, g in combinations(mu.histories(t), 2):
            dist = sum(abs(a - b) for a, b in zip(h, g))
            out.append((w1(mu.conditional(h), mu.conditional(g)) / dist, t, h, g))
    return out


def lip_constant(mu: PathMeasure) -> float:
    """Smallest C with W1(mu^h, mu^h') <= C |h - h'|_1 on positive-mass histories."""
    ratios = lip_ratios(mu)
    return max((r[0] for r in ratios), default=0.0)


def exp_constants(mu: PathMeasure, a: Sequence[float]) -> list[float]:
    """Smallest lambda_t with E[exp(a_t x_t^2) | history] <= exp(lambda_t) for every history."""
    if len(a) != mu.num_stages:
        raise StageOutOfRange(f"need {mu.num_stages} exponents, got {len(a)}")
    if any(not (ai > 0) for ai in a):
        raise ValueError("exponents a_t must be positive")
    lam = []
    for t in range(mu.num_stages):
        best = -math.inf
        for h in mu.histories(t):
            law = mu.conditional(h)
            vals = np.asarray(law.values)
            best = max(best, float(logsumexp(a[t] * vals**2, b=np.asarray(law.weights))))
        lam.append(best)
    return lam


@dataclass(frozen=True)
class InequalityConstants:
    """Constants of the bicausal transport-information inequality.

    ``K`` is the constant actually used for the bound. It carries ``a_t`` to
    the first power, which is the scaling under which the one-step
    T1 inequality is valid. ``K_squared_a`` keeps the squared-``a_t``
    expression for comparison; it is not scale invariant and can fail
    (see the README).
    """

    a: tuple[float, ...]
    lam: tuple[float, ...]
    C: float
    K: float
    K_squared_a: float

    @classmethod
    def assemble(cls, a: Sequence[float], lam: Sequence[float], C: float) -> "InequalityConstants":
        n = len(a)
        # index N-j runs from N down to 1 as j runs over 0..N-1
        terms = [(1.0 + C) ** (2 * j) * (1.0 + lam[n - j - 1]) for j in range(n)]
        k = math.sqrt(2.0 * math.fsum(term / a[n - j - 1] for j, term in enumerate(terms)))
        k_squared_a = math.sqrt(2.0 * math.fsum(term / a[n - j - 1] ** 2 for j, term in enumerate(terms)))
        return cls(tuple(a), tuple(lam), float(C), k, k_squared_a)
