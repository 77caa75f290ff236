"""Invariant suite run by ``causalot validate`` on a single instance."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

from .causal_ot import Mode, TransportPlan, is_bicausal, solve
from .costs import CostSpec
from .dpp import MAX_CAUSAL_STAGES, bicausal_dpp, causal_dpp
from .errors import CausalOTError
from .knothe import is_itt, kr_coupling, kr_uniqueness_check
from .measures import EXACT_TOL, PathMeasure, disintegrate, entropy_chain, relative_entropy, structure_flags
from .programs import tensorization_identity_check, transport_info_report

DEFAULT_TOLS = {
    "exact": EXACT_TOL,
    "lp": 1e-9,
    "ordering": 1e-9,
    "bicausal_dpp": 1e-8,
    "causal_dpp": 1e-5,
    "entropy_chain": 1e-10,
    "inequality": 1e-9,
    "tensorization": 1e-8,
}


@dataclass
class Check:
    name: str
    ok: bool
    tol: float | None = None
    detail: dict = field(default_factory=dict)
    skipped: str | None = None

    def as_dict(self) -> dict:
        out = {"name": self.name, "ok": self.ok}
        if self.skipped:
            out["skipped"] = self.skipped
        if self.tol is not None:
            out["tol"] = self.tol
        out.update(self.detail)
        return out


def _recomposition(m: PathMeasure, tol: float) -> tuple[bool, float]:
    worst = 0.0
    for t in range(1, m.num_stages):
        prefix, kernel = disintegrate(m, t)
        target = m.prefix_masses(t + 1)
        for h, w in prefix.atoms():
            law = kernel[h]
            for v, p in zip(law.values, law.weights):
                worst = max(worst, abs(w * p - target[h + (v,)]))
    return worst <= tol, worst


def run_suite(mu: PathMeasure, nu: PathMeasure, cost: CostSpec, tols: dict[str, float] | None = None) -> list[Check]:
    tols = {**DEFAULT_TOLS, **(tols or {})}
    checks: list[Check] = []

    def guarded(name: str, fn: Callable[[], Check]) -> None:
        try:
            checks.append(fn())
        except CausalOTError as exc:
            checks.append(Check(name, False, detail={"error": f"{type(exc).__name__}: {exc}"}))

    for label, m in (("mu", mu), ("nu", nu)):
        ok, worst = _recomposition(m, tols["exact"])
        checks.append(Check(f"recomposition[{label}]", ok, tols["exact"], {"worst": worst}))

    sols = {mode: solve(mu, nu, cost, mode) for mode in Mode}
    v = [sols[m].value for m in Mode]
    checks.append(
        Check(
            "value_ordering",
            v[0] <= v[1] + tols["ordering"] and v[1] <= v[2] + tols["ordering"],
            tols["ordering"],
            {"classical": v[0], "causal": v[1], "bicausal": v[2]},
        )
    )
    for mode, sol in sols.items():
        gap = abs(sol.dual.marginal_value(mu, nu) - sol.value)
        checks.append(Check(f"duality[{mode.value}]", gap <= tols["lp"], tols["lp"], {"gap": gap}))
        if sol.check is not None:
            checks.append(Check(f"plan_feasible[{mode.value}]", sol.check.ok, sol.check.tol, {"worst": sol.check.worst}))
    indep = is_bicausal(TransportPlan.product(mu, nu), mu, nu)
    checks.append(Check("product_plan_bicausal", indep.ok, indep.tol, {"worst": indep.worst}))

    def dpp_bicausal() -> Check:
        val = bicausal_dpp(mu, nu, cost).value
        diff = abs(val - v[2])
        return Check("bicausal_dpp", diff <= tols["bicausal_dpp"], tols["bicausal_dpp"], {"dpp": val, "lp": v[2]})

    guarded("bicausal_dpp", dpp_bicausal)

    flags = structure_flags(mu)
    if not flags.is_markov:
        checks.append(Check("causal_dpp", True, skipped="source is not Markov"))
    elif not cost.is_semiseparable:
        checks.append(Check("causal_dpp", True, skipped=f"cost kind {cost.kind.value} is not semiseparable"))
    elif mu.num_stages > MAX_CAUSAL_STAGES:
        checks.append(Check("causal_dpp", True, skipped=f"more than {MAX_CAUSAL_STAGES} stages"))
    else:

        def dpp_causal() -> Check:
            val = causal_dpp(mu, nu, cost)
            diff = abs(val - v[1])
            return Check("causal_dpp", diff <= tols["causal_dpp"], tols["causal_dpp"], {"dpp": val, "lp": v[1]})

        guarded("causal_dpp", dpp_causal)

    kr = kr_coupling(mu, nu)
    kb = is_bicausal(kr, mu, nu)
    checks.append(Check("kr_bicausal", kb.ok, kb.tol, {"worst": kb.worst}))
    checks.append(Check("kr_itt", is_itt(kr)))
    checks.append(Check("kr_uniqueness", kr_uniqueness_check(mu, nu, kr), 1e-9))

    if nu.is_dominated_by(mu):
        chain = math.fsum(entropy_chain(nu, mu))
        ent = relative_entropy(nu, mu)
        checks.append(
            Check("entropy_chain", abs(chain - ent) <= tols["entropy_chain"], tols["entropy_chain"], {"chain": chain, "entropy": ent})
        )
        rep = transport_info_report(mu, nu, tol=tols["inequality"])
        checks.append(
            Check("transport_information", rep.holds, tols["inequality"], {"w1_bc": rep.w1_bc, "bound": rep.bound, "slack": rep.slack})
        )
    else:
        checks.append(Check("entropy_chain", True, skipped="nu is not absolutely continuous w.r.t. mu"))
        checks.append(Check("transport_information", True, skipped="entropy is infinite"))

    if mu.num_stages == 2 and flags.is_product:
        rep = tensorization_identity_check(mu, nu, tol=tols["tensorization"])
        checks.append(Check("tensorization", rep.equal, rep.tol, {"lhs": rep.lhs, "rhs": rep.rhs}))
    else:
        checks.append(Check("tensorization", True, skipped="needs a two-stage product source"))
    return checks
