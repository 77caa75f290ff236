import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from causalot import costs
from causalot.causal_ot import (
    Mode,
    TransportPlan,
    anticausality_rows,
    causality_rows,
    is_bicausal,
    is_causal,
    monge_check,
    quasi_markov_projection,
    reverse_multiplier_report,
    solve,
)
from causalot.errors import MarginalMismatch, NotCausal, NotMarkov, NotSemiseparable, WrongMode, WrongStageCount
from causalot.measures import build_path_measure
from causalot.random_instances import random_markov, random_pair, random_tree

from cases import (
    BINARY_BICAUSAL_PLAN,
    BINARY_CAUSAL_PLAN,
    BINARY_MU,
    BINARY_NU,
    NONPRODUCT_BICAUSAL_PLAN,
    NONPRODUCT_CAUSAL_PLAN,
    NONPRODUCT_MU,
    NONPRODUCT_NU,
    swap_pair,
)

seeds = st.integers(0, 2**32 - 1)


def test_binary_tree_values():
    cost = costs.indicator_neq()
    values = {m: solve(BINARY_MU, BINARY_NU, cost, m).value for m in Mode}
    assert values[Mode.CLASSICAL] == pytest.approx(0.11, abs=1e-9)
    assert values[Mode.CAUSAL] == pytest.approx(0.15, abs=1e-9)
    assert values[Mode.BICAUSAL] == pytest.approx(0.19, abs=1e-9)


def test_binary_tree_listed_plans():
    assert is_causal(BINARY_CAUSAL_PLAN, BINARY_MU, BINARY_NU).ok
    assert not is_bicausal(BINARY_CAUSAL_PLAN, BINARY_MU, BINARY_NU).ok
    assert is_bicausal(BINARY_BICAUSAL_PLAN, BINARY_MU, BINARY_NU).ok


def test_nonproduct_listed_plans():
    cost = costs.sq_euclidean_separable(2)
    assert is_causal(NONPRODUCT_CAUSAL_PLAN, NONPRODUCT_MU, NONPRODUCT_NU).ok
    assert NONPRODUCT_CAUSAL_PLAN.cost(cost) == pytest.approx(2.528, abs=1e-12)
    assert is_bicausal(NONPRODUCT_BICAUSAL_PLAN, NONPRODUCT_MU, NONPRODUCT_NU).ok
    assert NONPRODUCT_BICAUSAL_PLAN.cost(cost) == pytest.approx(2.72, abs=1e-12)


def test_reverse_multipliers_nonzero():
    sol = solve(BINARY_MU, BINARY_NU, costs.indicator_neq(), Mode.BICAUSAL)
    rep = reverse_multiplier_report(sol)
    assert rep["max_abs_anticausal_multiplier"] > 1e-6
    with pytest.raises(WrongMode):
        reverse_multiplier_report(solve(BINARY_MU, BINARY_NU, costs.indicator_neq(), Mode.CAUSAL))


def test_no_causal_monge_map():
    mu, nu, plan = swap_pair()
    sol = solve(mu, nu, costs.indicator_neq(), "causal")
    assert not monge_check(sol.plan).is_map
    report = monge_check(plan)
    assert report.is_map and not report.adapted
    assert not is_causal(plan, mu, nu).ok
    assert monge_check(TransportPlan.identity(mu)).adapted


def test_product_plan_is_bicausal():
    plan = TransportPlan.product(NONPRODUCT_MU, NONPRODUCT_NU)
    assert is_bicausal(plan, NONPRODUCT_MU, NONPRODUCT_NU).ok


def test_marginal_mismatch_raises():
    plan = TransportPlan.identity(BINARY_MU)
    with pytest.raises(MarginalMismatch):
        is_causal(plan, BINARY_MU, BINARY_NU)


def test_stage_mismatch_raises():
    with pytest.raises(WrongStageCount):
        solve(BINARY_MU, build_path_measure({(0,): 1.0}), costs.indicator_neq())


def test_rows_shapes():
    rows = causality_rows(BINARY_MU, BINARY_NU)
    assert rows.matrix.shape[1] == len(BINARY_MU) * len(BINARY_NU)
    assert len(rows.keys) == rows.matrix.shape[0]
    assert np.all(np.any(rows.matrix != 0, axis=1))
    # x-history of length 1 (2 choices) times y-history of length 1 (2) times
    # successors of x_2 except the last (1)
    assert len(rows.keys) == 2 * 2 * 1
    assert anticausality_rows(BINARY_MU, BINARY_NU).matrix.shape[1] == rows.matrix.shape[1]


def test_single_stage_has_no_causality_rows():
    mu = build_path_measure({(0,): 0.5, (1,): 0.5})
    assert len(causality_rows(mu, mu).keys) == 0
    v = [solve(mu, mu, costs.abs_separable(1), m).value for m in Mode]
    assert v == pytest.approx([0.0, 0.0, 0.0])


@settings(max_examples=25, deadline=None)
@given(seeds)
def test_value_ordering_and_duality(seed):
    rng = np.random.default_rng(seed)
    mu, nu = random_pair(rng, 3, 3)
    cost = costs.sq_euclidean_separable(mu.num_stages)
    sols = [solve(mu, nu, cost, m) for m in Mode]
    assert sols[0].value <= sols[1].value + 1e-9 <= sols[2].value + 2e-9
    for s in sols:
        assert abs(s.dual.marginal_value(mu, nu) - s.value) <= 1e-9
        assert s.diagnostics["primal"] <= 1e-9 and s.diagnostics["gap"] <= 1e-9
    assert sols[1].check.ok and sols[2].check.ok


@settings(max_examples=25, deadline=None)
@given(seeds)
def test_optimal_plans_pass_checkers(seed):
    rng = np.random.default_rng(seed)
    mu, nu = random_pair(rng, 3, 3)
    sol = solve(mu, nu, costs.indicator_neq(), Mode.BICAUSAL)
    assert is_causal(sol.plan, mu, nu).ok
    assert is_causal(sol.plan.swapped(), nu, mu).ok


@settings(max_examples=25, deadline=None)
@given(seeds)
def test_quasi_markov_projection_preserves_cost(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 4))
    mu, nu = random_markov(rng, n), random_tree(rng, n)
    cost = costs.sq_euclidean_separable(n)
    sol = solve(mu, nu, cost, Mode.CAUSAL)
    proj = quasi_markov_projection(sol.plan, mu, nu)
    assert is_causal(proj, mu, nu).ok
    assert proj.cost(cost) == pytest.approx(sol.value, abs=1e-9)


def test_quasi_markov_projection_rejects():
    with pytest.raises(NotCausal):
        mu, nu, plan = swap_pair()
        quasi_markov_projection(plan, mu, nu)
    mu = build_path_measure({(0, 0, 0): 0.25, (0, 1, 1): 0.25, (1, 1, 0): 0.25, (1, 0, 1): 0.25})
    with pytest.raises(NotMarkov):
        quasi_markov_projection(TransportPlan.identity(mu), mu, mu)


def test_cost_kinds():
    sq = costs.sq_euclidean_separable(2)
    assert sq((0, 1), (1, 3)) == 5.0
    assert sq.stage_term(1, 1.0, (0.0, 3.0)) == 4.0
    inc = costs.increments_sq(2)
    assert inc((0, 1), (1, 3)) == 1.0 + 1.0
    with pytest.raises(NotSemiseparable):
        inc.stage_term(0, 0.0, (0.0,))
    assert inc.on_increments()((0, 1), (1, 2)) == 1.0 + 1.0
    t = costs.table({((0,), (1,)): 2.0}, default=0.5)
    assert t((0,), (1,)) == 2.0 and t((1,), (1,)) == 0.5
    strict = costs.table({((0,), (1,)): 2.0})
    with pytest.raises(KeyError):
        strict((1,), (1,))
    assert costs.indicator_neq()((1, 2), (1, 2)) == 0.0
