"""Scenario files: JSON schema, parsing and object construction."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field

import jsonschema
import numpy as np

from . import expr as ex
from .chart import Chart, MetricField, SplitDistribution
from .errors import ConfigurationError, ExpressionError, RicciForgeError
from .solutions import (FAMILY_CATALOG, SolutionFamily, Theorem1Params, Theorem2Params,
                        Theorem3Params, Theorem4iParams, Theorem4Params)

SCHEMA_VERSION = 1

TASKS = ("curvature", "conformal-check", "verify-solution", "classify-singularity",
         "pde-residual", "variation", "identity-check", "bending")

# tasks that need chart + metric (+ split); the others take a family
GEOMETRY_TASKS = ("curvature", "conformal-check", "variation", "identity-check", "bending")
FAMILY_TASKS = ("verify-solution", "classify-singularity", "pde-residual")

_expr = {"anyOf": [{"type": "number"}, {"type": "object", "required": ["op"]}]}
_vec = {"type": "array", "items": {"type": "number"}}

SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["version", "task"],
    "additionalProperties": False,
    "properties": {
        "version": {"const": SCHEMA_VERSION},
        "task": {"enum": list(TASKS)},
        "name": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
        "tolerance": {"type": "number", "exclusiveMinimum": 0},
        "chart": {
            "type": "object",
            "required": ["kind", "n", "p1"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["box", "torus", "half-space"]},
                "n": {"type": "integer", "minimum": 2},
                "p1": {"type": "integer", "minimum": 1},
                "lo": _vec, "hi": _vec, "periods": _vec,
            },
        },
        "metric": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["euclidean", "hyperbolic", "conformal", "diagonal", "general"]},
                "scale": _expr,
                "entries": {"type": "array", "items": _expr},
                "matrix": {"type": "array", "items": {"type": "array", "items": _expr}},
            },
        },
        "split": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"graph": {"type": "array", "items": _vec}},
        },
        "family": {
            "type": "object",
            "required": ["tag", "case", "params"],
            "additionalProperties": False,
            "properties": {
                "tag": {"enum": sorted(FAMILY_CATALOG)},
                "case": {"enum": ["a", "b"]},
                "ambient": {"enum": ["euclidean", "hyperbolic"]},
                "params": {"type": "object"},
            },
        },
        "params": {"type": "object"},
    },
    "allOf": [
        {"if": {"properties": {"task": {"enum": list(GEOMETRY_TASKS)}}},
         "then": {"required": ["chart", "metric"]}},
        {"if": {"properties": {"task": {"enum": list(FAMILY_TASKS)}}},
         "then": {"required": ["family"]}},
    ],
}


class ScenarioError(RicciForgeError):
    """The scenario failed validation; ``pointer`` locates the offending node."""

    def __init__(self, message: str, pointer: str = "/"):
        self.pointer = pointer or "/"
        super().__init__(f"{message} (at {self.pointer})")


def _pointer(path) -> str:
    return "/" + "/".join(str(p) for p in path) if path else "/"


@dataclass(frozen=True)
class Scenario:
    """One task with its inputs; kept as validated JSON so it round-trips exactly."""

    task: str
    chart: dict | None = None
    metric: dict | None = None
    split: dict | None = None
    family: dict | None = None
    params: dict = field(default_factory=dict)
    tolerance: float | None = None
    seed: int | None = None
    name: str | None = None
    version: int = SCHEMA_VERSION

    @classmethod
    def from_json(cls, doc: dict) -> "Scenario":
        validate(doc)
        keys = ("task", "chart", "metric", "split", "family", "params", "tolerance", "seed",
                "name", "version")
        kw = {k: copy.deepcopy(doc[k]) for k in keys if k in doc}
        sc = cls(**kw)
        sc.check_expressions()
        return sc

    @classmethod
    def loads(cls, text: str) -> "Scenario":
        return cls.from_json(json.loads(text))

    def to_json(self) -> dict:
        out = {"version": self.version, "task": self.task}
        for k in ("name", "seed", "tolerance", "chart", "metric", "split", "family"):
            v = getattr(self, k)
            if v is not None:
                out[k] = copy.deepcopy(v)
        if self.params:
            out["params"] = copy.deepcopy(self.params)
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)

    # -- construction ------------------------------------------------------

    def check_expressions(self) -> None:
        """Parse every expression once so malformed nodes fail before any work."""
        if self.metric is not None:
            build_metric(self.metric, build_chart(self.chart))
        if self.chart is not None:
            build_split(self.split, build_chart(self.chart))
        if self.family is not None:
            build_family(self.family)
        for key in ("phi", "u", "expect_k12"):
            if isinstance(self.params.get(key), (dict, int, float)):
                parse_expr(self.params[key], f"/params/{key}")

    def build_chart(self) -> Chart:
        return build_chart(self.chart)

    def build_metric(self) -> MetricField:
        return build_metric(self.metric, self.build_chart())

    def build_split(self) -> SplitDistribution:
        return build_split(self.split, self.build_chart())

    def build_family(self) -> SolutionFamily:
        return build_family(self.family)


def validate(doc) -> None:
    v = jsonschema.Draft7Validator(SCHEMA)
    errors = sorted(v.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise ScenarioError(e.message, _pointer(e.absolute_path))


def load(path) -> list[Scenario]:
    """A scenario file holds one scenario object or a JSON array of them."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as err:
        raise ScenarioError(f"invalid JSON: {err.msg} (line {err.lineno})", "/") from err
    if isinstance(doc, list):
        out = []
        for i, d in enumerate(doc):
            try:
                out.append(Scenario.from_json(d))
            except ScenarioError as err:
                raise ScenarioError(str(err).rsplit(" (at ", 1)[0], f"/{i}{err.pointer.rstrip('/')}") from err
        return out
    return [Scenario.from_json(doc)]


def parse_expr(node, pointer: str) -> ex.Expr:
    try:
        return ex.from_json(node, pointer)
    except ExpressionError as err:
        raise ScenarioError(str(err).rsplit(" (at ", 1)[0], err.pointer) from err


def _wrap(fn, pointer: str):
    try:
        return fn()
    except ConfigurationError as err:
        raise ScenarioError(str(err), pointer) from err


def build_chart(spec: dict) -> Chart:
    kind, n, p1 = spec["kind"], spec["n"], spec["p1"]
    if kind == "torus":
        return _wrap(lambda: Chart.torus(n, p1, spec.get("periods")), "/chart")
    if kind == "half-space":
        return _wrap(lambda: Chart.half_space(n, p1), "/chart")
    return _wrap(lambda: Chart.box(n, p1, spec.get("lo"), spec.get("hi")), "/chart")


def _check_indices(e: ex.Expr, n: int, pointer: str) -> ex.Expr:
    bad = [i for i in ex.variables(e) if i >= n]
    if bad:
        raise ScenarioError(f"coordinate index {max(bad)} out of range for n={n}", pointer)
    return e


def build_metric(spec: dict, chart: Chart) -> MetricField:
    kind, n = spec["kind"], chart.n
    if kind == "euclidean":
        return MetricField.euclidean(chart)
    if kind == "hyperbolic":
        return MetricField.conformal(chart, ex.Coord(n - 1), "hyperbolic")
    if kind == "conformal":
        if "scale" not in spec:
            raise ScenarioError("conformal metric needs 'scale'", "/metric")
        F = _check_indices(parse_expr(spec["scale"], "/metric/scale"), n, "/metric/scale")
        return MetricField.conformal(chart, F)
    if kind == "diagonal":
        ent = spec.get("entries")
        if not isinstance(ent, list) or len(ent) != n:
            raise ScenarioError(f"diagonal metric needs {n} entries", "/metric/entries")
        es = [_check_indices(parse_expr(e, f"/metric/entries/{i}"), n, f"/metric/entries/{i}")
              for i, e in enumerate(ent)]
        return MetricField.diagonal(chart, es)
    mat = spec.get("matrix")
    if not isinstance(mat, list) or len(mat) != n or any(len(r) != n for r in mat):
        raise ScenarioError(f"general metric needs an {n}x{n} matrix", "/metric/matrix")
    m = [[_check_indices(parse_expr(e, f"/metric/matrix/{i}/{j}"), n, f"/metric/matrix/{i}/{j}")
          for j, e in enumerate(row)] for i, row in enumerate(mat)]
    return MetricField.general(chart, m)


def build_split(spec: dict | None, chart: Chart) -> SplitDistribution:
    graph = None if spec is None else spec.get("graph")
    return _wrap(lambda: SplitDistribution(chart, None if graph is None else np.asarray(graph, float)),
                 "/split/graph")


# -- families ------------------------------------------------------------------

_PARAM_KEYS = {
    "theorem1": ("p1", "p2", "a1", "a2", "b", "c"),
    "theorem2": ("p1", "p2", "k", "U"),
    "theorem3": ("p1", "p2", "k", "delta", "v", "w"),
    "theorem4-i": ("p1", "p2", "varphi"),
    "theorem4-ii": ("p1", "p2", "U", "a", "b", "eps"),
}
_EXPR_KEYS = {"U", "v", "w", "varphi"}


def build_family(spec: dict) -> SolutionFamily:
    tag = spec["tag"]
    p = spec["params"]
    keys = _PARAM_KEYS[tag]
    missing = [k for k in keys if k not in p and not (tag == "theorem4-ii" and k == "eps")]
    if missing:
        raise ScenarioError(f"missing family parameter {missing[0]!r}", "/family/params")
    extra = sorted(set(p) - set(keys))
    if extra:
        raise ScenarioError(f"unknown family parameter {extra[0]!r}", f"/family/params/{extra[0]}")
    kw = {}
    for k in keys:
        if k not in p:
            continue
        v = p[k]
        ptr = f"/family/params/{k}"
        if k in _EXPR_KEYS:
            if tag == "theorem4-ii":
                if not isinstance(v, list):
                    raise ScenarioError("U must be a list of expressions", ptr)
                v = tuple(parse_expr(u, f"{ptr}/{i}") for i, u in enumerate(v))
            else:
                v = parse_expr(v, ptr)
        elif k == "b" and tag == "theorem1":
            v = tuple(v)
        kw[k] = v
    cls = {"theorem1": Theorem1Params, "theorem2": Theorem2Params, "theorem3": Theorem3Params,
           "theorem4-i": Theorem4iParams, "theorem4-ii": Theorem4Params}[tag]
    try:
        params = cls(**kw)
        return SolutionFamily(tag, spec["case"], params, spec.get("ambient", "euclidean"))
    except (ConfigurationError, TypeError) as err:
        raise ScenarioError(str(err), "/family") from err


def family_to_json(fam: SolutionFamily) -> dict:
    out = {}
    for k in _PARAM_KEYS[fam.tag]:
        v = getattr(fam.params, k)
        if isinstance(v, ex.Expr):
            v = v.to_json()
        elif isinstance(v, tuple):
            v = [u.to_json() if isinstance(u, ex.Expr) else u for u in v]
        out[k] = v
    return {"tag": fam.tag, "case": fam.case, "ambient": fam.ambient, "params": out}
