"""Command-line front end.

Exit codes: 0 success, 2 unreadable or invalid input, 3 solver failure,
4 a checked invariant does not hold.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path as FsPath

import yaml

from . import __version__
from .causal_ot import Mode, is_bicausal, is_causal, reverse_multiplier_report, solve
from .checks import DEFAULT_TOLS, run_suite
from .costs import CostSpec
from .dpp import MAX_CAUSAL_STAGES, CausalRecursion, bicausal_dpp
from .errors import (
    CausalOTError,
    NonConvergence,
    NumericalBreakdown,
    ParameterOutOfRange,
    ParseError,
    SolverFailure,
)
from .io import COST_KINDS, CostDoc, Document, load_document, parse_document, serialize_document
from .knothe import HistogramProductMeasure, condition_44_check, is_itt, kr_coupling, kr_map, pushforward_matches
from .measures import EXACT_TOL, PathMeasure, structure_flags
from .programs import (
    concavity_profile,
    discrepancy_bound_check,
    eval_program,
    lex_interpolate,
    speed_profile,
    transport_info_report,
)

EXIT_OK, EXIT_PARSE, EXIT_SOLVER, EXIT_INVARIANT = 0, 2, 3, 4


class InvariantViolation(Exception):
    def __init__(self, report: dict):
        self.report = report
        super().__init__("invariant violated")


def _clean(obj):
    """JSON/YAML friendly copy: tuples become lists, non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return "inf" if obj > 0 else ("-inf" if obj < 0 else "nan")
    if hasattr(obj, "item") and not isinstance(obj, (str, bytes)):
        return _clean(obj.item())
    return obj


def _emit(report: dict, as_json: bool) -> None:
    data = _clean(report)
    if as_json:
        json.dump(data, sys.stdout, indent=2)
        sys.stdout.write("\n")
    else:
        sys.stdout.write(yaml.safe_dump(data, sort_keys=False, default_flow_style=None, width=100))


def _parse_list(text: str, what: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise ParameterOutOfRange(f"{what} must be a list of numbers, got {text!r}") from None


def _cost(doc: Document, override: str | None, default: str | None = None) -> tuple[CostSpec, str]:
    if override:
        if override in COST_KINDS and override not in ("table", "power_separable"):
            return CostDoc(override).build(doc.stages), override
        other = load_document(override)
        if other.cost is None:
            raise ParseError(f"{override} has no 'cost' section")
        return other.cost.build(doc.stages), other.cost.kind
    if doc.cost is not None:
        return doc.cost.build(doc.stages), doc.cost.kind
    if default is not None:
        return CostDoc(default).build(doc.stages), default
    raise ParseError("no cost given: add a 'cost' section or pass --cost")


def _pair(doc: Document, cells: int) -> tuple[PathMeasure, PathMeasure]:
    doc.require("mu", "nu")
    return doc.path_measure("mu", cells), doc.path_measure("nu", cells)


def _path_row(x, y, w) -> dict:
    return {"x": list(x), "y": list(y), "w": w}


def cmd_solve(doc: Document, args) -> dict:
    mu, nu = _pair(doc, args.cells)
    cost, cost_name = _cost(doc, args.cost)
    tol = args.tol if args.tol is not None else DEFAULT_TOLS["lp"]
    sol = solve(mu, nu, cost, args.mode)
    dual_value = sol.dual.marginal_value(mu, nu)
    dual = {
        "phi": [[list(x), v] for x, v in sol.dual.phi.items()],
        "psi": [[list(y), v] for y, v in sol.dual.psi.items()],
        "dual_value": dual_value,
        "duality_gap": abs(dual_value - sol.value),
        "causality_rows": len(sol.dual.causality_multipliers),
        "anticausality_rows": len(sol.dual.anticausality_multipliers),
    }
    if sol.mode is Mode.BICAUSAL:
        dual["max_abs_anticausal_multiplier"] = reverse_multiplier_report(sol)["max_abs_anticausal_multiplier"]
    verification = {}
    if sol.mode is not Mode.CLASSICAL:
        c = is_causal(sol.plan, mu, nu)
        verification["causal"] = {"ok": c.ok, "worst": c.worst}
    if sol.mode is Mode.BICAUSAL:
        b = is_bicausal(sol.plan, mu, nu)
        verification["bicausal"] = {"ok": b.ok, "worst": b.worst}
    ok = dual["duality_gap"] <= tol and all(v["ok"] for v in verification.values())
    report = {
        "command": "solve",
        "mode": sol.mode.value,
        "cost": cost_name,
        "value": sol.value,
        "plan": [_path_row(x, y, w) for (x, y), w in sol.plan.atoms],
        "dual": dual,
        "verification": verification,
        "diagnostics": sol.diagnostics,
        "tolerances": {"duality_gap": tol, "causality": 1e-9},
        "summary": {"ok": ok, "mode": sol.mode.value, "value": sol.value},
    }
    if not ok:
        raise InvariantViolation(report)
    return report


def cmd_kr(doc: Document, args) -> dict:
    doc.require("mu", "nu")
    if isinstance(doc.mu, HistogramProductMeasure):
        table = kr_map(doc.mu, doc.nu)
        push = pushforward_matches(table, doc.mu, doc.nu)
        mono = table.is_monotone()
        stages = []
        for stage in table.stages:
            stages.append(
                [
                    {"y_history": list(h), "cells": [[c.x_lo, c.x_hi, c.y_lo, c.y_hi, c.mass] for c in cells]}
                    for h, cells in stage.items()
                ]
            )
        ok = push and mono
        report = {
            "command": "kr",
            "form": "map",
            "cells": "[x_lo, x_hi, y_lo, y_hi, mass]",
            "stages": stages,
            "checks": {"pushforward": push, "monotone": mono},
            "tolerances": {"pushforward": 1e-12},
            "summary": {"ok": ok},
        }
    else:
        mu, nu = _pair(doc, args.cells)
        plan = kr_coupling(mu, nu)
        bic = is_bicausal(plan, mu, nu)
        itt = is_itt(plan)
        cond = condition_44_check(mu, nu)
        checks = {"bicausal": bic.ok, "itt": itt, "condition_44": cond.holds}
        tol = args.tol if args.tol is not None else DEFAULT_TOLS["lp"]
        extra = {}
        if doc.cost is not None or args.cost:
            cost, name = _cost(doc, args.cost)
            extra = {"cost": name, "plan_cost": plan.cost(cost)}
            if cond.holds and cost.is_difference_convex:
                value = solve(mu, nu, cost, Mode.BICAUSAL).value
                extra["bicausal_value"] = value
                checks["kr_optimal"] = abs(value - extra["plan_cost"]) <= tol
        ok = bic.ok and itt and checks.get("kr_optimal", True)
        report = {
            "command": "kr",
            "form": "coupling",
            "plan": [_path_row(x, y, w) for (x, y), w in plan.atoms],
            **extra,
            "checks": checks,
            "tolerances": {"causality": bic.tol, "kr_optimal": tol},
            "summary": {"ok": ok, **({"plan_cost": extra["plan_cost"]} if extra else {})},
        }
    if not report["summary"]["ok"]:
        raise InvariantViolation(report)
    return report


def cmd_nested(doc: Document, args) -> dict:
    mu, nu = _pair(doc, args.cells)
    cost, name = _cost(doc, args.cost, default="abs_separable")
    tol_b = args.tol if args.tol is not None else DEFAULT_TOLS["bicausal_dpp"]
    tol_c = args.tol if args.tol is not None else DEFAULT_TOLS["causal_dpp"]
    dpp = bicausal_dpp(mu, nu, cost)
    lp_b = solve(mu, nu, cost, Mode.BICAUSAL).value
    report = {
        "command": "nested",
        "cost": name,
        "bicausal": {"dpp": dpp.value, "lp": lp_b, "ok": abs(dpp.value - lp_b) <= tol_b},
    }
    flags = structure_flags(mu)
    if flags.is_markov and cost.is_semiseparable and mu.num_stages <= MAX_CAUSAL_STAGES:
        rec = CausalRecursion(mu, nu, cost)
        val = rec.value()
        lp_c = solve(mu, nu, cost, Mode.CAUSAL).value
        report["causal"] = {"dpp": val, "lp": lp_c, "ok": abs(val - lp_c) <= tol_c, "evaluations": rec.evaluations}
    else:
        report["causal"] = {"skipped": "needs a Markov source, a semiseparable cost and at most 3 stages"}
    ok = report["bicausal"]["ok"] and report["causal"].get("ok", True)
    report["tolerances"] = {"bicausal": tol_b, "causal": tol_c}
    report["summary"] = {"ok": ok, "nested_distance": dpp.value}
    if not ok:
        raise InvariantViolation(report)
    return report


def cmd_inequality(doc: Document, args) -> dict:
    mu, nu = _pair(doc, args.cells)
    a = _parse_list(args.a, "--a") if args.a else None
    if a is not None and len(a) != mu.num_stages:
        raise ParameterOutOfRange(f"--a needs {mu.num_stages} values")
    tol = args.tol if args.tol is not None else DEFAULT_TOLS["inequality"]
    rep = transport_info_report(mu, nu, a, tol=tol)
    k = rep.constants
    report = {
        "command": "inequality",
        "w1_bc": rep.w1_bc,
        "entropy": rep.entropy,
        "constants": {"a": k.a, "lambda": k.lam, "C": k.C, "K": k.K},
        "bound": rep.bound,
        "slack": rep.slack,
        "holds": rep.holds,
        "squared_a_variant": {"K": k.K_squared_a, "bound": rep.bound_squared_a, "holds": rep.holds_squared_a},
        "tolerances": {"slack": tol},
        "summary": {"ok": rep.holds, "slack": rep.slack},
    }
    if not rep.holds:
        raise InvariantViolation(report)
    return report


def cmd_interpolate(doc: Document, args) -> dict:
    mu, nu = _pair(doc, args.cells)
    ts = _parse_list(args.t, "--t")
    if not ts:
        raise ParameterOutOfRange("--t needs at least one time")
    p = args.p if args.p is not None else 2.0
    curve = []
    for t in ts:
        m = lex_interpolate(mu, nu, t)
        curve.append({"t": t, "atoms": [[list(x), w] for x, w in m.atoms()]})
    endpoints = {
        "t0_is_mu": lex_interpolate(mu, nu, 0.0).allclose(mu),
        "t1_is_nu": lex_interpolate(mu, nu, 1.0).allclose(nu),
    }
    tol = args.tol if args.tol is not None else 1e-7
    report = {"command": "interpolate", "curve": curve, "checks": {"endpoints": endpoints}}
    ok = all(endpoints.values())
    if structure_flags(mu).is_product:
        grid = sorted(set(ts) | {1.0})
        prof = speed_profile(mu, nu, p, grid)
        end = prof[grid.index(1.0)]
        worst = max(abs(v - t**p * end) for v, t in zip(prof, grid))
        report["checks"]["constant_speed"] = {"p": p, "grid": grid, "values": prof, "worst": worst, "ok": worst <= tol}
        ok = ok and worst <= tol
    else:
        report["checks"]["constant_speed"] = {"skipped": "source is not the product of its marginals"}
    if doc.program is not None:
        conc = concavity_profile(doc.program.build(), mu, nu, sorted(ts), tol=tol)
        entry = {"values": conc.values, "worst": conc.worst, "concave": conc.concave, "hypotheses_satisfied": conc.hypotheses_satisfied}
        report["checks"]["concavity"] = entry
        if conc.hypotheses_satisfied:
            ok = ok and conc.concave
    report["tolerances"] = {"endpoints": EXACT_TOL, "constant_speed": tol, "concavity": tol}
    report["summary"] = {"ok": ok}
    if not ok:
        raise InvariantViolation(report)
    return report


def cmd_program(doc: Document, args) -> dict:
    doc.require("program", "mu")
    prog = doc.program.build()
    mu = doc.path_measure("mu", args.cells)
    res_mu = eval_program(mu, prog)
    report = {
        "command": "program",
        "v_mu": res_mu.value,
        "controls_mu": [{"stage": t, "node": list(h), "u": u} for (t, h), u in res_mu.controls.items()],
    }
    ok = True
    if doc.nu is not None:
        nu = doc.path_measure("nu", args.cells)
        res_nu = eval_program(nu, prog)
        tol = args.tol if args.tol is not None else DEFAULT_TOLS["lp"]
        disc = discrepancy_bound_check(mu, nu, prog, tol=tol)
        report["v_nu"] = res_nu.value
        report["discrepancy"] = {"lhs": disc.lhs, "rhs": disc.rhs, "entropy_rhs": disc.entropy_rhs, "ok": disc.ok}
        report["tolerances"] = {"discrepancy": tol}
        ok = disc.ok
    report["summary"] = {"ok": ok, "v_mu": res_mu.value, **({"v_nu": report["v_nu"]} if "v_nu" in report else {})}
    if not ok:
        raise InvariantViolation(report)
    return report


def cmd_validate(doc: Document, args) -> dict:
    mu, nu = _pair(doc, args.cells)
    cost, name = _cost(doc, args.cost, default="sq_euclidean_separable")
    tols = {k: args.tol for k in DEFAULT_TOLS} if args.tol is not None else None
    checks = [c.as_dict() for c in run_suite(mu, nu, cost, tols)]
    roundtrip = parse_document(serialize_document(doc)) == doc
    checks.append({"name": "document_roundtrip", "ok": roundtrip})
    failed = [c["name"] for c in checks if not c["ok"]]
    report = {
        "command": "validate",
        "cost": name,
        "checks": checks,
        "summary": {"ok": not failed, "passed": len(checks) - len(failed), "failed": failed},
    }
    if failed:
        raise InvariantViolation(report)
    return report


COMMANDS = {
    "solve": cmd_solve,
    "kr": cmd_kr,
    "nested": cmd_nested,
    "inequality": cmd_inequality,
    "interpolate": cmd_interpolate,
    "program": cmd_program,
    "validate": cmd_validate,
}

HELP = {
    "solve": "classical, causal or bicausal transport with dual certificate",
    "kr": "Knothe-Rosenblatt coupling (atomic source) or map (histogram source)",
    "nested": "bicausal and causal dynamic programming against the LP",
    "inequality": "bicausal W1 against the entropic bound",
    "interpolate": "lexicographic displacement interpolation",
    "program": "value of the stagewise program under mu (and nu)",
    "validate": "run the invariant suite on an instance",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="causalot", description="Causal and bicausal optimal transport between path measures.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=HELP[name])
        p.add_argument("document", help="instance document (YAML)")
        p.add_argument("--json", action="store_true", help="machine-readable output")
        p.add_argument("--tol", type=float, help="tolerance for the reported comparisons")
        p.add_argument("--cost", help="builtin cost name or a document with a cost section")
        p.add_argument("--cells", type=int, default=1, help="cells per histogram interval when atoms are needed")
        if name == "solve":
            p.add_argument("--mode", choices=[m.value for m in Mode], default="causal")
        if name == "interpolate":
            p.add_argument("--t", required=True, help="times in [0, 1], comma or space separated")
            p.add_argument("--p", type=float, help="exponent of the speed profile (default 2)")
        if name == "inequality":
            p.add_argument("--a", help="per-stage exponents a_t (default: grid search)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        doc = load_document(args.document)
        report = COMMANDS[args.command](doc, args)
    except ParseError as exc:
        print(f"{args.document}: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ParameterOutOfRange as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (SolverFailure, NumericalBreakdown, NonConvergence) as exc:
        print(f"solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except InvariantViolation as exc:
        _emit(exc.report, args.json)
        print(f"{args.command}: invariant violated", file=sys.stderr)
        return EXIT_INVARIANT
    except CausalOTError as exc:
        print(f"{args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    _emit(report, args.json)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
