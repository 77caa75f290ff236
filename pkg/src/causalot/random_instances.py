"""Seeded generators of small test instances.

Path coordinates are multiples of 1/4 so sums, differences and increments
are exact in floating point; atom merging by exact equality is then safe.
"""

from __future__ import annotations

import numpy as np

from .measures import Distribution1D, PathMeasure, build_path_measure, from_increments, product_measure

GRID = np.arange(-8, 9) / 4.0


def _weights(rng: np.random.Generator, k: int) -> np.ndarray:
    w = rng.integers(1, 10, size=k).astype(float)
    return w / w.sum()


def _values(rng: np.random.Generator, k: int, grid: np.ndarray = GRID) -> list[float]:
    return sorted(float(v) for v in rng.choice(grid, size=k, replace=False))


def random_law(rng: np.random.Generator, max_atoms: int = 3, grid: np.ndarray = GRID) -> Distribution1D:
    k = int(rng.integers(1, max_atoms + 1))
    return Distribution1D(tuple(_values(rng, k, grid)), tuple(_weights(rng, k)))


def random_tree(rng: np.random.Generator, n: int, max_branch: int = 3) -> PathMeasure:
    """Arbitrary scenario tree: every node draws its own successor law."""
    atoms = [((), 1.0)]
    for _ in range(n):
        nxt = []
        for path, w in atoms:
            law = random_law(rng, max_branch)
            nxt.extend((path + (v,), w * p) for v, p in zip(law.values, law.weights))
        atoms = nxt
    return build_path_measure(atoms)


def random_product(rng: np.random.Generator, n: int, max_branch: int = 3) -> PathMeasure:
    return product_measure([random_law(rng, max_branch) for _ in range(n)])


def random_markov(rng: np.random.Generator, n: int, max_branch: int = 3) -> PathMeasure:
    """Markov chain with a random kernel per stage and state."""
    first = random_law(rng, max_branch)
    atoms = [((v,), w) for v, w in zip(first.values, first.weights)]
    for _ in range(1, n):
        kernels: dict[float, Distribution1D] = {}
        nxt = []
        for path, w in atoms:
            law = kernels.setdefault(path[-1], random_law(rng, max_branch))
            nxt.extend((path + (v,), w * p) for v, p in zip(law.values, law.weights))
        atoms = nxt
    return build_path_measure(atoms)


def random_independent_increments(rng: np.random.Generator, n: int, max_branch: int = 3) -> PathMeasure:
    steps = random_product(rng, n, max_branch)
    return steps.map_paths(from_increments)


def reweighted(rng: np.random.Generator, mu: PathMeasure, keep_all: bool = False) -> PathMeasure:
    """A measure absolutely continuous w.r.t. mu (random weights on a random subset of its atoms)."""
    k = len(mu)
    mask = np.ones(k, dtype=bool) if keep_all else rng.random(k) < 0.7
    if not mask.any():
        mask[int(rng.integers(k))] = True
    w = np.where(mask, rng.integers(1, 10, size=k), 0).astype(float)
    return build_path_measure(zip(mu.paths, w / w.sum()))


def random_pair(rng: np.random.Generator, max_stages: int = 3, max_branch: int = 3) -> tuple[PathMeasure, PathMeasure]:
    n = int(rng.integers(1, max_stages + 1))
    return random_tree(rng, n, max_branch), random_tree(rng, n, max_branch)


def dominance_instance(rng: np.random.Generator, max_branch: int = 3) -> tuple[PathMeasure, PathMeasure]:
    """Two-stage pair whose conditional CDFs are ordered as in the dominance check.

    The mu-kernels share a support and the nu-kernels live either entirely
    above or entirely below it, so every difference of CDFs has a fixed sign.
    """
    inner = np.arange(-2, 3) / 4.0
    outer_hi = np.arange(3, 9) / 4.0
    outer_lo = -outer_hi
    mu_atoms = []
    first = random_law(rng, max_branch)
    for v, w in zip(first.values, first.weights):
        law = random_law(rng, max_branch, inner)
        mu_atoms.extend(((v, a), w * p) for a, p in zip(law.values, law.weights))
    nu_atoms = []
    first = random_law(rng, max_branch)
    for v, w in zip(first.values, first.weights):
        grid = outer_hi if rng.random() < 0.5 else outer_lo
        law = random_law(rng, max_branch, grid)
        nu_atoms.extend(((v, b), w * p) for b, p in zip(law.values, law.weights))
    return build_path_measure(mu_atoms), build_path_measure(nu_atoms)
