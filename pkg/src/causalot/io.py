"""Versioned YAML documents describing an instance.

    version: 1
    stages: 2
    mu:
      atoms:
        - [[1, 1], 0.16]
        - [[1, -1], 0.24]
    nu:
      histogram:               # product of piecewise-uniform stages
        - {breaks: [0, 1], masses: [1]}
        - {breaks: [0, 1], masses: [1]}
    cost:
      kind: sq_euclidean_separable
      payload: {}
    program:
      lipschitz: 1
      concave_in_x: false
      stages:
        - control: {grid: [-1, 0, 1]}
          objective: {builtin: abs_dev}

Every validation error carries the line of the offending node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path as FsPath
from typing import Any

import yaml
from yaml.constructor import SafeConstructor
from yaml.nodes import MappingNode, Node, ScalarNode, SequenceNode

from . import costs as costs_mod
from .costs import CostSpec
from .errors import CausalOTError, ParseError
from .knothe import HistogramProductMeasure, HistogramStage
from .measures import PathMeasure, build_path_measure
from .programs import ControlSet, StagewiseProgram

FORMAT_VERSION = 1
COST_KINDS = ("indicator_neq", "sq_euclidean_separable", "abs_separable", "increments_sq", "power_separable", "table")
OBJECTIVE_BUILTINS = ("abs_dev", "sq_dev", "concave_quadratic", "zero")


@dataclass(frozen=True)
class CostDoc:
    kind: str
    payload: dict = field(default_factory=dict)

    def build(self, n: int) -> CostSpec:
        if self.kind == "indicator_neq":
            return costs_mod.indicator_neq()
        if self.kind == "sq_euclidean_separable":
            return costs_mod.sq_euclidean_separable(n)
        if self.kind == "abs_separable":
            return costs_mod.abs_separable(n)
        if self.kind == "increments_sq":
            return costs_mod.increments_sq(n)
        if self.kind == "power_separable":
            return costs_mod.power_separable(n, float(self.payload["p"]))
        entries = {(tuple(x), tuple(y)): v for x, y, v in self.payload["entries"]}
        return costs_mod.table(entries, self.payload.get("default"))


@dataclass(frozen=True)
class StageDoc:
    control: dict
    objective: dict


@dataclass(frozen=True)
class ProgramDoc:
    stages: tuple[StageDoc, ...]
    lipschitz: float = 1.0
    concave_in_x: bool = False

    def build(self) -> StagewiseProgram:
        controls, objectives = [], []
        for st in self.stages:
            if "grid" in st.control:
                controls.append(ControlSet.of_grid(st.control["grid"]))
            else:
                lo, hi = st.control["interval"]
                controls.append(ControlSet.of_interval(lo, hi, bool(st.control.get("convex", False))))
            objectives.append(_objective(st.objective))
        return StagewiseProgram(tuple(objectives), tuple(controls), float(self.lipschitz), bool(self.concave_in_x))


def _objective(spec: dict):
    if "table" in spec:
        table = {(float(x), float(u)): float(v) for x, u, v in spec["table"]}

        def from_table(path, u):
            return table[(path[-1], u)]

        return from_table
    name = spec["builtin"]
    scale = float(spec.get("scale", 1.0))
    if name == "abs_dev":
        return lambda path, u: scale * abs(path[-1] - u)
    if name == "sq_dev":
        return lambda path, u: scale * (u - path[-1]) ** 2
    if name == "concave_quadratic":
        return lambda path, u: scale * (u * u - 2.0 * u * path[-1] - abs(path[-1]))
    return lambda path, u: 0.0


Measure = PathMeasure | HistogramProductMeasure


@dataclass(frozen=True)
class Document:
    stages: int
    mu: Measure | None = None
    nu: Measure | None = None
    cost: CostDoc | None = None
    program: ProgramDoc | None = None
    version: int = FORMAT_VERSION

    def require(self, *names: str) -> None:
        for name in names:
            if getattr(self, name) is None:
                raise ParseError(f"document has no '{name}' section")

    def path_measure(self, name: str, cells: int = 1) -> PathMeasure:
        """The named measure as atoms; histograms are discretized at cell midpoints."""
        self.require(name)
        m = getattr(self, name)
        return m.to_path_measure(cells) if isinstance(m, HistogramProductMeasure) else m


def _line(node: Node) -> int:
    return node.start_mark.line + 1


_constructor = SafeConstructor()


def _value(node: Node) -> Any:
    return _constructor.construct_object(node, deep=True)


def _mapping(node: Node, what: str) -> dict[str, Node]:
    if not isinstance(node, MappingNode):
        raise ParseError(f"{what} must be a mapping", _line(node))
    out = {}
    for k, v in node.value:
        key = _value(k)
        if not isinstance(key, str):
            raise ParseError(f"{what} keys must be strings", _line(k))
        if key in out:
            raise ParseError(f"duplicate key '{key}' in {what}", _line(k))
        out[key] = v
    return out


def _sequence(node: Node, what: str) -> list[Node]:
    if not isinstance(node, SequenceNode):
        raise ParseError(f"{what} must be a list", _line(node))
    return list(node.value)


def _real(node: Node, what: str, finite: bool = True) -> float:
    if not isinstance(node, ScalarNode):
        raise ParseError(f"{what} must be a number", _line(node))
    v = _value(node)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ParseError(f"{what} must be a number, got {node.value!r}", _line(node))
    if finite and not math.isfinite(v):
        raise ParseError(f"{what} must be finite", _line(node))
    return float(v)


def _int(node: Node, what: str) -> int:
    v = _value(node) if isinstance(node, ScalarNode) else None
    if isinstance(v, bool) or not isinstance(v, int):
        raise ParseError(f"{what} must be an integer", _line(node))
    return v


def _known_keys(m: dict[str, Node], allowed: tuple[str, ...], what: str) -> None:
    for key, node in m.items():
        if key not in allowed:
            raise ParseError(f"unknown key '{key}' in {what}", _line(node))


def _measure(node: Node, name: str, stages: int) -> Measure:
    m = _mapping(node, name)
    _known_keys(m, ("atoms", "histogram"), name)
    if ("atoms" in m) == ("histogram" in m):
        raise ParseError(f"{name} needs exactly one of 'atoms' or 'histogram'", _line(node))
    if "atoms" in m:
        raw = []
        for atom in _sequence(m["atoms"], f"{name}.atoms"):
            pair = _sequence(atom, "atom")
            if len(pair) != 2:
                raise ParseError("atom must be [[path...], weight]", _line(atom))
            path = tuple(_real(v, "path coordinate") for v in _sequence(pair[0], "path"))
            if len(path) != stages:
                raise ParseError(f"path has {len(path)} coordinates, document declares {stages} stages", _line(pair[0]))
            raw.append((path, _real(pair[1], "weight")))
        try:
            return build_path_measure(raw)
        except (CausalOTError, ValueError) as exc:
            raise ParseError(f"{name}: {exc}", _line(m["atoms"])) from exc
    hist = []
    seq = _sequence(m["histogram"], f"{name}.histogram")
    if len(seq) != stages:
        raise ParseError(f"histogram has {len(seq)} stages, document declares {stages}", _line(m["histogram"]))
    for st in seq:
        sm = _mapping(st, "histogram stage")
        _known_keys(sm, ("breaks", "masses"), "histogram stage")
        try:
            breaks = tuple(_real(v, "breakpoint") for v in _sequence(sm["breaks"], "breaks"))
            masses = tuple(_real(v, "mass") for v in _sequence(sm["masses"], "masses"))
            hist.append(HistogramStage(breaks, masses))
        except KeyError as exc:
            raise ParseError(f"histogram stage is missing {exc}", _line(st)) from exc
        except (CausalOTError, ValueError) as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(f"{name}: {exc}", _line(st)) from exc
    return HistogramProductMeasure(tuple(hist))


def _cost(node: Node, stages: int) -> CostDoc:
    m = _mapping(node, "cost")
    _known_keys(m, ("kind", "payload"), "cost")
    if "kind" not in m:
        raise ParseError("cost needs a 'kind'", _line(node))
    kind = _value(m["kind"])
    if kind not in COST_KINDS:
        raise ParseError(f"unknown cost kind {kind!r}; expected one of {', '.join(COST_KINDS)}", _line(m["kind"]))
    payload: dict = {}
    if "payload" in m:
        pm = _mapping(m["payload"], "cost payload")
        if kind == "power_separable":
            if "p" not in pm:
                raise ParseError("power_separable needs payload.p", _line(m["payload"]))
            p = _real(pm["p"], "p")
            if p < 1:
                raise ParseError("power_separable needs p >= 1", _line(pm["p"]))
            payload["p"] = p
        elif kind == "table":
            entries = []
            for e in _sequence(pm.get("entries", m["payload"]), "table entries"):
                parts = _sequence(e, "table entry")
                if len(parts) != 3:
                    raise ParseError("table entry must be [[x path], [y path], value]", _line(e))
                x = tuple(_real(v, "x coordinate") for v in _sequence(parts[0], "x path"))
                y = tuple(_real(v, "y coordinate") for v in _sequence(parts[1], "y path"))
                if len(x) != stages or len(y) != stages:
                    raise ParseError("table paths must have one coordinate per stage", _line(e))
                entries.append((list(x), list(y), _real(parts[2], "cost value")))
            payload["entries"] = entries
            if "default" in pm:
                payload["default"] = _real(pm["default"], "default")
        elif pm:
            raise ParseError(f"cost kind {kind} takes no payload", _line(m["payload"]))
    if kind == "power_separable" and "p" not in payload:
        raise ParseError("power_separable needs payload.p", _line(node))
    if kind == "table" and "entries" not in payload:
        raise ParseError("table cost needs payload.entries", _line(node))
    return CostDoc(kind, payload)


def _program(node: Node, stages: int) -> ProgramDoc:
    m = _mapping(node, "program")
    _known_keys(m, ("stages", "lipschitz", "concave_in_x"), "program")
    if "stages" not in m:
        raise ParseError("program needs 'stages'", _line(node))
    seq = _sequence(m["stages"], "program.stages")
    if len(seq) != stages:
        raise ParseError(f"program has {len(seq)} stages, document declares {stages}", _line(m["stages"]))
    out = []
    for st in seq:
        sm = _mapping(st, "program stage")
        _known_keys(sm, ("control", "objective"), "program stage")
        if "control" not in sm or "objective" not in sm:
            raise ParseError("program stage needs 'control' and 'objective'", _line(st))
        cm = _mapping(sm["control"], "control")
        _known_keys(cm, ("grid", "interval", "convex"), "control")
        if ("grid" in cm) == ("interval" in cm):
            raise ParseError("control needs exactly one of 'grid' or 'interval'", _line(sm["control"]))
        if "grid" in cm:
            grid = [_real(v, "control value") for v in _sequence(cm["grid"], "grid")]
            if not grid:
                raise ParseError("empty control grid", _line(cm["grid"]))
            control: dict = {"grid": grid}
        else:
            bounds = [_real(v, "interval bound", finite=False) for v in _sequence(cm["interval"], "interval")]
            if len(bounds) != 2 or not bounds[0] <= bounds[1]:
                raise ParseError("interval must be [lo, hi] with lo <= hi", _line(cm["interval"]))
            control = {"interval": bounds, "convex": bool(_value(cm["convex"])) if "convex" in cm else False}
        om = _mapping(sm["objective"], "objective")
        _known_keys(om, ("builtin", "table", "scale"), "objective")
        if ("builtin" in om) == ("table" in om):
            raise ParseError("objective needs exactly one of 'builtin' or 'table'", _line(sm["objective"]))
        if "builtin" in om:
            name = _value(om["builtin"])
            if name not in OBJECTIVE_BUILTINS:
                raise ParseError(f"unknown objective {name!r}; expected one of {', '.join(OBJECTIVE_BUILTINS)}", _line(om["builtin"]))
            objective: dict = {"builtin": name}
            if "scale" in om:
                objective["scale"] = _real(om["scale"], "scale")
        else:
            if "grid" not in control:
                raise ParseError("table objectives need grid controls", _line(om["table"]))
            rows = []
            for e in _sequence(om["table"], "objective table"):
                parts = [_real(v, "table value") for v in _sequence(e, "objective table row")]
                if len(parts) != 3:
                    raise ParseError("objective table rows are [x_t, u, value]", _line(e))
                rows.append(parts)
            objective = {"table": rows}
        out.append(StageDoc(control, objective))
    lip = _real(m["lipschitz"], "lipschitz") if "lipschitz" in m else 1.0
    if lip < 0:
        raise ParseError("lipschitz must be nonnegative", _line(m["lipschitz"]))
    concave = bool(_value(m["concave_in_x"])) if "concave_in_x" in m else False
    return ProgramDoc(tuple(out), lip, concave)


def parse_document(text: str) -> Document:
    try:
        root = yaml.compose(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        raise ParseError(f"invalid YAML: {exc.problem}", mark.line + 1 if mark else None) from exc
    if root is None:
        raise ParseError("empty document", 1)
    m = _mapping(root, "document")
    _known_keys(m, ("version", "stages", "mu", "nu", "cost", "program"), "document")
    if "version" not in m:
        raise ParseError("document needs a 'version'", _line(root))
    version = _int(m["version"], "version")
    if version != FORMAT_VERSION:
        raise ParseError(f"unsupported document version {version}", _line(m["version"]))
    if "stages" not in m:
        raise ParseError("document needs 'stages'", _line(root))
    stages = _int(m["stages"], "stages")
    if stages < 1:
        raise ParseError("stages must be positive", _line(m["stages"]))
    return Document(
        stages=stages,
        mu=_measure(m["mu"], "mu", stages) if "mu" in m else None,
        nu=_measure(m["nu"], "nu", stages) if "nu" in m else None,
        cost=_cost(m["cost"], stages) if "cost" in m else None,
        program=_program(m["program"], stages) if "program" in m else None,
        version=version,
    )


def load_document(path: str | FsPath) -> Document:
    try:
        text = FsPath(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from exc
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path} is not UTF-8") from exc
    return parse_document(text)


class _Flow(list):
    """Sequence written on one line."""


class _Dumper(yaml.SafeDumper):
    def ignore_aliases(self, data):
        return True


_Dumper.add_representer(_Flow, lambda d, v: d.represent_sequence("tag:yaml.org,2002:seq", v, flow_style=True))


def _measure_data(m: Measure) -> dict:
    if isinstance(m, HistogramProductMeasure):
        return {"histogram": [{"breaks": _Flow(s.breaks), "masses": _Flow(s.masses)} for s in m.stages]}
    return {"atoms": [_Flow([list(p), w]) for p, w in m.atoms()]}


def _flow_values(d: dict) -> dict:
    return {k: _Flow(v) if isinstance(v, list) else v for k, v in d.items()}


def document_data(doc: Document) -> dict:
    data: dict = {"version": doc.version, "stages": doc.stages}
    if doc.mu is not None:
        data["mu"] = _measure_data(doc.mu)
    if doc.nu is not None:
        data["nu"] = _measure_data(doc.nu)
    if doc.cost is not None:
        payload = dict(doc.cost.payload)
        if "entries" in payload:
            payload["entries"] = [_Flow(e) for e in payload["entries"]]
        data["cost"] = {"kind": doc.cost.kind, "payload": payload}
    if doc.program is not None:
        data["program"] = {
            "lipschitz": doc.program.lipschitz,
            "concave_in_x": doc.program.concave_in_x,
            "stages": [
                {"control": _flow_values(s.control), "objective": _flow_values(s.objective)}
                for s in doc.program.stages
            ],
        }
    return data


def serialize_document(doc: Document) -> str:
    """YAML text; floats are written with repr so they parse back bit-for-bit."""
    return yaml.dump(document_data(doc), Dumper=_Dumper, sort_keys=False, default_flow_style=False, allow_unicode=True)
