import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from causalot import costs
from causalot.causal_ot import Mode, TransportPlan, is_bicausal, solve
from causalot.errors import UnnormalizedWeights
from causalot.knothe import (
    HistogramProductMeasure,
    HistogramStage,
    condition_44_check,
    increments_kr,
    is_itt,
    kr_coupling,
    kr_map,
    kr_uniqueness_check,
    map_pushforward,
    pushforward_matches,
)
from causalot.random_instances import random_independent_increments, random_pair, random_product, random_tree

from cases import BINARY_BICAUSAL_PLAN, BINARY_MU, BINARY_NU, NONPRODUCT_MU, NONPRODUCT_NU

seeds = st.integers(0, 2**32 - 1)


def test_kr_on_binary_tree_is_listed_bicausal_plan():
    plan = kr_coupling(BINARY_MU, BINARY_NU)
    assert plan.allclose(BINARY_BICAUSAL_PLAN, 1e-12)
    assert is_itt(plan)


def test_kr_on_nonproduct_source():
    plan = kr_coupling(NONPRODUCT_MU, NONPRODUCT_NU)
    assert plan.cost(costs.sq_euclidean_separable(2)) == pytest.approx(2.72, abs=1e-12)
    assert condition_44_check(NONPRODUCT_MU, NONPRODUCT_NU).holds


@settings(max_examples=30, deadline=None)
@given(seeds, st.sampled_from([1.0, 1.5, 2.0]))
def test_kr_optimal_for_product_source(seed, p):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 4))
    mu, nu = random_product(rng, n), random_tree(rng, n)
    cost = costs.power_separable(n, p)
    kr = kr_coupling(mu, nu)
    assert kr.cost(cost) == pytest.approx(solve(mu, nu, cost, Mode.CAUSAL).value, abs=1e-9)


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_increments_kr_optimal(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 4))
    mu, nu = random_independent_increments(rng, n), random_tree(rng, n)
    cost = costs.increments_sq(n)
    plan = increments_kr(mu, nu)
    assert is_bicausal(plan, mu, nu).ok
    assert plan.cost(cost) == pytest.approx(solve(mu, nu, cost, Mode.BICAUSAL).value, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_kr_structure(seed):
    mu, nu = random_pair(np.random.default_rng(seed))
    plan = kr_coupling(mu, nu)
    assert is_bicausal(plan, mu, nu).ok and is_itt(plan)
    assert kr_uniqueness_check(mu, nu, plan)


def test_uniqueness_rejects_non_itt():
    product = TransportPlan.product(BINARY_MU, BINARY_NU)
    assert not is_itt(product)
    assert not kr_uniqueness_check(BINARY_MU, BINARY_NU, product)


def test_condition_44_fails_when_kernels_cross():
    from causalot.measures import build_path_measure

    mu = build_path_measure({(0, 0): 0.25, (0, 1): 0.25, (1, 0): 0.4, (1, 1): 0.1})
    nu = build_path_measure({(0, 0): 0.4, (0, 1): 0.1, (1, 0): 0.25, (1, 1): 0.25})
    rep = condition_44_check(mu, nu)
    assert not rep.holds and rep.worst < 0 and rep.witness is not None


def test_histogram_stage():
    s = HistogramStage((0, 1, 3), (0.5, 0.5))
    assert s.breaks == (0.0, 1.0, 3.0)
    assert s.cdf(0.5) == 0.25 and s.cdf(2.0) == 0.75
    assert s.quantile(0.75) == pytest.approx(2.0)
    assert s.mass_between(0.5, 2.0) == pytest.approx(0.5)
    d = s.discretize(2)
    assert d.values == (0.25, 0.75, 1.5, 2.5)
    with pytest.raises(ValueError):
        HistogramStage((0, 0), (1,))
    with pytest.raises(UnnormalizedWeights):
        HistogramStage((0, 1), (0.5,))


def test_kr_map_uniform_to_binary_tree():
    mu = HistogramProductMeasure.uniform(2)
    table = kr_map(mu, BINARY_MU)
    cells = table.cells(0, ())
    assert [(c.x_lo, c.x_hi, c.y_lo) for c in cells] == [(0.0, pytest.approx(0.6), -1.0), (pytest.approx(0.6), 1.0, 1.0)]
    assert table.apply((0.1, 0.9)) == (-1.0, 1.0)
    assert table.is_monotone()
    assert pushforward_matches(table, mu, BINARY_MU)
    assert map_pushforward(table, mu).allclose(BINARY_MU)


def test_kr_map_histogram_target():
    mu = HistogramProductMeasure.uniform(2)
    nu = HistogramProductMeasure((HistogramStage((0, 1, 2), (0.25, 0.75)), HistogramStage((-1, 1), (1.0,))))
    table = kr_map(mu, nu)
    assert table.history_free and table.is_monotone()
    assert pushforward_matches(table, mu, nu)
    assert table.apply((0.25, 0.5)) == (pytest.approx(1.0), pytest.approx(0.0))


def test_histogram_to_path_measure():
    m = HistogramProductMeasure.uniform(2).to_path_measure(2)
    assert len(m) == 4 and m.weight_of((0.25, 0.75)) == pytest.approx(0.25)
