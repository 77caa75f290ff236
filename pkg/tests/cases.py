"""Worked instances shared by the unit and acceptance tests."""

from __future__ import annotations

from importlib import resources

from causalot.causal_ot import TransportPlan
from causalot.measures import build_path_measure

FIXTURES = resources.files("causalot") / "fixtures"


def fixture_path(name: str) -> str:
    return str(FIXTURES / name)


# Two-period binary tree, product source, indicator cost.
BINARY_MU = build_path_measure({(1, 1): 0.16, (1, -1): 0.24, (-1, 1): 0.24, (-1, -1): 0.36})
BINARY_NU = build_path_measure({(1, 1): 0.25, (1, -1): 0.25, (-1, 1): 0.25, (-1, -1): 0.25})
BINARY_CAUSAL_PLAN = TransportPlan.from_atoms(
    {
        ((1, 1), (1, 1)): 0.16,
        ((1, -1), (1, -1)): 0.24,
        ((-1, 1), (1, 1)): 0.03,
        ((-1, 1), (1, -1)): 0.01,
        ((-1, 1), (-1, 1)): 0.2,
        ((-1, -1), (1, 1)): 0.06,
        ((-1, -1), (-1, 1)): 0.05,
        ((-1, -1), (-1, -1)): 0.25,
    }
)
BINARY_BICAUSAL_PLAN = TransportPlan.from_atoms(
    {
        ((1, 1), (1, 1)): 0.16,
        ((1, -1), (1, 1)): 0.04,
        ((1, -1), (1, -1)): 0.2,
        ((-1, 1), (1, 1)): 0.04,
        ((-1, 1), (-1, 1)): 0.2,
        ((-1, -1), (1, 1)): 0.01,
        ((-1, -1), (1, -1)): 0.05,
        ((-1, -1), (-1, 1)): 0.05,
        ((-1, -1), (-1, -1)): 0.25,
    }
)

# Non-product source, quadratic separable cost.
NONPRODUCT_MU = build_path_measure(
    {(1, 2): 0.18, (1, 0): 0.24, (1, -2): 0.18, (-1, 2): 0.08, (-1, 0): 0.12, (-1, -2): 0.2}
)
NONPRODUCT_NU = build_path_measure({(1, 2): 0.1, (1, -2): 0.26, (-1, 2): 0.16, (-1, -2): 0.48})
NONPRODUCT_CAUSAL_PLAN = TransportPlan.from_atoms(
    {
        ((1, 0), (1, -2)): 0.144,
        ((1, 0), (-1, 2)): 0.008,
        ((1, 0), (-1, -2)): 0.088,
        ((1, 2), (1, 2)): 0.1,
        ((1, 2), (1, -2)): 0.008,
        ((1, 2), (-1, 2)): 0.072,
        ((1, -2), (1, -2)): 0.108,
        ((1, -2), (-1, -2)): 0.072,
        ((-1, 0), (-1, -2)): 0.12,
        ((-1, 2), (-1, 2)): 0.08,
        ((-1, -2), (-1, -2)): 0.2,
    }
)
NONPRODUCT_BICAUSAL_PLAN = TransportPlan.from_atoms(
    {
        ((1, 0), (1, -2)): 0.144,
        ((1, 0), (-1, -2)): 0.096,
        ((1, 2), (1, 2)): 0.1,
        ((1, 2), (1, -2)): 0.008,
        ((1, 2), (-1, 2)): 0.06,
        ((1, 2), (-1, -2)): 0.012,
        ((1, -2), (1, -2)): 0.108,
        ((1, -2), (-1, -2)): 0.072,
        ((-1, 0), (-1, 2)): 0.02,
        ((-1, 0), (-1, -2)): 0.1,
        ((-1, 2), (-1, 2)): 0.08,
        ((-1, -2), (-1, -2)): 0.2,
    }
)


def swap_pair(a=(0.1, 0.2, 0.3, 0.4)):
    """Source, target and the classical Monge plan that swaps the two middle atoms."""
    a1, a2, a3, a4 = a
    mu = build_path_measure({(1, 2): a1, (1, 0): a2, (-1, 0): a3, (-1, -2): a4})
    nu = build_path_measure({(1, 2): a1, (1, 0): a3, (-1, 0): a2, (-1, -2): a4})
    plan = TransportPlan.from_atoms(
        {((1, 2), (1, 2)): a1, ((1, 0), (-1, 0)): a2, ((-1, 0), (1, 0)): a3, ((-1, -2), (-1, -2)): a4}
    )
    return mu, nu, plan
