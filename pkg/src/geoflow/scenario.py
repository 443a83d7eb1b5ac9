"""Scenario files: JSON documents declaring a system and what to do with it.

A scenario names a manifold, a metric from the catalog (or custom
expression entries), and one system: a first-order field, a raw force, or
a Lagrangian ``(b, V)``.  Expressions use ``t``, ``q1..qd`` and, for
forces, ``v1..vd``, plus any names in ``params``.  See ``SCHEMA`` for the
full layout; ``load_scenario`` validates a file against it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
from jsonschema import Draft202012Validator

from .bounds import GrowthFunction, Sampler
from .expressions import Expression, coordinate_names
from .flows import ForceField
from .manifolds import ChartManifold
from .mechanics import LagrangianSystem, el_force_field, from_expressions as lagrangian_from
from .metric import MetricField, catalog

_EXPR = {"type": ["string", "number"]}
_VECTOR = {"type": "array", "items": {"type": "number"}, "minItems": 1}
_EXPR_VECTOR = {"type": "array", "items": _EXPR, "minItems": 1}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["name", "seed", "manifold", "metric", "system", "initial", "horizon"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string", "minLength": 1},
        "description": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "manifold": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["euclidean", "torus", "sphere"]},
                "dimension": {"type": "integer", "minimum": 1},
                "periods": {"type": "array", "items": {"type": "number",
                                                       "exclusiveMinimum": 0}},
            },
        },
        "metric": {
            "type": "object",
            "required": ["name"],
            "additionalProperties": False,
            "properties": {
                "name": {"enum": ["euclidean", "conformal-exp", "conformal-poly", "sphere",
                                  "flat-torus", "custom"]},
                "params": {"type": "object", "additionalProperties": {"type": "number"}},
                "entries": {"type": "array", "items": _EXPR_VECTOR},
                "analytic": {"type": "boolean"},
            },
        },
        "params": {"type": "object", "additionalProperties": {"type": "number"}},
        "basepoint": _VECTOR,
        "system": {
            "type": "object",
            "required": ["type"],
            "additionalProperties": False,
            "properties": {
                "type": {"enum": ["first-order", "force", "lagrangian"]},
                "field": _EXPR_VECTOR,
                "force": _EXPR_VECTOR,
                "two_form": {"type": "array", "items": _EXPR_VECTOR},
                "friction": _EXPR,
                "domain": _EXPR,
                "one_form": _EXPR_VECTOR,
                "potential": _EXPR,
                "analytic": {"type": "boolean"},
            },
        },
        "initial": {
            "type": "object",
            "required": ["q0"],
            "additionalProperties": False,
            "properties": {
                "t0": {"type": "number"},
                "q0": _VECTOR,
                "v0": _VECTOR,
            },
        },
        "horizon": {"type": "number", "exclusiveMinimum": 0},
        "direction": {"enum": ["forward", "backward"]},
        "growth": {
            "oneOf": [
                {"const": "fitted"},
                {"type": "number", "minimum": 1},
                {"type": "object", "additionalProperties": False,
                 "properties": {"kind": {"enum": ["constant", "log", "loglog"]},
                                "c": {"type": "number", "minimum": 1}}},
            ]
        },
        "window": {"type": "number", "exclusiveMinimum": 0},
        "K": {"type": "number", "exclusiveMinimum": 0},
        "beta": {"type": "number", "exclusiveMinimum": 0},
        "sampler": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "count": {"type": "integer", "minimum": 1},
                "v_box": {"type": "number", "minimum": 0},
                "q_box": {"type": "array", "minItems": 2, "maxItems": 2,
                          "items": {"type": ["number", "array"]}},
                "stress_radii": {"type": "array", "items": {"type": "number",
                                                            "exclusiveMinimum": 0}},
                "stress": {"type": "boolean"},
            },
        },
        "certify": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "hypotheses": {"type": "array", "items": {
                    "enum": ["metric-growth-R", "metric-growth-R2", "wintner", "force-growth",
                             "lagrangian"]}},
                "direction": {"enum": ["both", "forward"]},
            },
        },
        "lift": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["null", "spacelike", "timelike"]},
                "tdot": {"type": "number"},
                "y0": {"type": "number"},
                "interval": {"type": "number", "exclusiveMinimum": 0},
                "tolerance": {"type": "number", "exclusiveMinimum": 0},
                "null_samples": {"type": "integer", "minimum": 1},
            },
        },
        "verify": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "trajectory": {"type": "string"},
                "distance": {"type": "array", "items": {"enum": ["erx", "ers"]}},
                "envelope": {"type": "boolean"},
            },
        },
    },
}

_VALIDATOR = Draft202012Validator(SCHEMA)


class ScenarioError(ValueError):
    """A scenario file is malformed; the message names the offending field."""


def _path(err) -> str:
    parts = [str(p) for p in err.absolute_path]
    return ".".join(parts) if parts else "<root>"


def validate(doc: dict, source: str = "<scenario>") -> None:
    errors = sorted(_VALIDATOR.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        e = errors[0]
        raise ScenarioError(f"{source}: field {_path(e)}: {e.message}")


@dataclass(frozen=True, eq=False)
class Scenario:
    """A validated scenario with its mathematical objects built."""

    doc: dict
    source: str
    manifold: ChartManifold
    metric: MetricField
    params: dict
    basepoint: np.ndarray
    kind: str
    nu: Optional[object] = None
    force: Optional[ForceField] = None
    lagrangian: Optional[LagrangianSystem] = None
    domain: Optional[object] = None
    extras: dict = field(default_factory=dict)

    @property
    def name(self) -> str:
        return self.doc["name"]

    @property
    def seed(self) -> int:
        return int(self.doc["seed"])

    @property
    def dimension(self) -> int:
        return self.manifold.dimension

    @property
    def t0(self) -> float:
        return float(self.doc["initial"].get("t0", 0.0))

    @property
    def q0(self) -> np.ndarray:
        return np.asarray(self.doc["initial"]["q0"], dtype=float)

    @property
    def v0(self) -> np.ndarray:
        v0 = self.doc["initial"].get("v0")
        return np.zeros(self.dimension) if v0 is None else np.asarray(v0, dtype=float)

    @property
    def horizon(self) -> float:
        return float(self.doc["horizon"])

    @property
    def direction(self) -> str:
        return self.doc.get("direction", "forward")

    @property
    def window(self) -> float:
        """Certification window ``r``; defaults to ``|t0| + horizon``."""
        return float(self.doc.get("window", abs(self.t0) + self.horizon))

    @property
    def K(self) -> float:
        return float(self.doc.get("K", 1.0))

    @property
    def beta(self) -> float:
        return float(self.doc.get("beta", 6.0))

    @property
    def growth_spec(self):
        return self.doc.get("growth", 1.0)

    @property
    def growth(self) -> Optional[GrowthFunction]:
        opts = self.growth_spec
        return None if opts == "fitted" else GrowthFunction.from_dict(opts)

    @property
    def second_order_force(self) -> Optional[ForceField]:
        if self.kind == "force":
            return self.force
        if self.kind == "lagrangian":
            return el_force_field(self.lagrangian)
        return None

    def sampler(self, seed: int | None = None, count: int | None = None) -> Sampler:
        opts = dict(self.doc.get("sampler", {}))
        kw = {"seed": self.seed if seed is None else seed}
        if "count" in opts:
            kw["count"] = opts["count"]
        if count is not None:
            kw["count"] = count
        if "v_box" in opts:
            kw["v_box"] = float(opts["v_box"])
        if "q_box" in opts:
            kw["q_box"] = tuple(opts["q_box"])
        if "stress_radii" in opts:
            kw["stress_radii"] = tuple(float(r) for r in opts["stress_radii"])
        if "stress" in opts:
            kw["stress"] = bool(opts["stress"])
        return Sampler(**kw)

    def with_overrides(self, seed: int | None = None) -> "Scenario":
        if seed is None:
            return self
        doc = dict(self.doc)
        doc["seed"] = int(seed)
        return replace(self, doc=doc)


def _manifold(spec) -> ChartManifold:
    kind = spec["kind"]
    if kind == "euclidean":
        return ChartManifold.euclidean(int(spec.get("dimension", 1)))
    if kind == "torus":
        if "periods" not in spec:
            raise ScenarioError("field manifold.periods: required for a torus")
        return ChartManifold.torus(spec["periods"])
    return ChartManifold.sphere()


def _vector_field(texts, names, params, d, what):
    if len(texts) != d:
        raise ScenarioError(f"field system.{what}: needs {d} components, got {len(texts)}")
    exprs = [Expression.parse(e, names, params) for e in texts]

    def fn(*args):
        arrays = [np.asarray(a, dtype=float) for a in args]
        flat = [arrays[0]]
        for a in arrays[1:]:
            flat.extend(a[..., i] for i in range(d))
        return np.stack([e(*flat) for e in exprs], axis=-1)

    return fn


def _scalar_field(text, names, params, d):
    expr = Expression.parse(text, names, params)

    def fn(*args):
        arrays = [np.asarray(a, dtype=float) for a in args]
        flat = [arrays[0]]
        for a in arrays[1:]:
            flat.extend(a[..., i] for i in range(d))
        return expr(*flat)

    return fn


def build(doc: dict, source: str = "<scenario>") -> Scenario:
    """Validate ``doc`` and construct the objects it declares."""
    validate(doc, source)
    try:
        return _build(doc, source)
    except ScenarioError as exc:
        raise ScenarioError(f"{source}: {exc}") from None
    except ValueError as exc:
        raise ScenarioError(f"{source}: {exc}") from None


def _build(doc, source) -> Scenario:
    man = _manifold(doc["manifold"])
    d = man.dimension
    params = dict(doc.get("params", {}))
    mspec = doc["metric"]
    metric = catalog(mspec["name"], man, {**params, **mspec.get("params", {})},
                     mspec.get("entries"), bool(mspec.get("analytic", False)))
    basepoint = np.asarray(doc.get("basepoint", man.default_basepoint()), dtype=float)
    if basepoint.shape != (d,):
        raise ScenarioError(f"field basepoint: needs {d} coordinates")
    man.check(basepoint)
    init = doc["initial"]
    if len(init["q0"]) != d:
        raise ScenarioError(f"field initial.q0: needs {d} coordinates")
    if "v0" in init and len(init["v0"]) != d:
        raise ScenarioError(f"field initial.v0: needs {d} coordinates")
    man.check(init["q0"])

    sysdoc = doc["system"]
    kind = sysdoc["type"]
    tq = ["t"] + coordinate_names("q", d)
    tqv = tq + coordinate_names("v", d)
    domain = None
    if "domain" in sysdoc:
        dom = _scalar_field(sysdoc["domain"], tq, params, d)
        domain = lambda t, q: bool(np.all(dom(t, q) > 0))
    kw = {}
    if kind == "first-order":
        if "field" not in sysdoc:
            raise ScenarioError("field system.field: required for a first-order system")
        kw["nu"] = _vector_field(sysdoc["field"], tq, params, d, "field")
    elif kind == "force":
        if "force" not in sysdoc:
            raise ScenarioError("field system.force: required for a force system")
        two = None
        if "two_form" in sysdoc:
            rows = sysdoc["two_form"]
            if len(rows) != d or any(len(r) != d for r in rows):
                raise ScenarioError(f"field system.two_form: needs a {d}x{d} matrix")
            row_fns = [_vector_field(r, tq, params, d, "two_form") for r in rows]
            two = lambda t, q: np.stack([f(t, q) for f in row_fns], axis=-2)
        fric = None
        if "friction" in sysdoc:
            fric = _scalar_field(sysdoc["friction"], tqv, params, d)
        kw["force"] = ForceField(_vector_field(sysdoc["force"], tqv, params, d, "force"),
                                 two_form_part=two, friction_part=fric, domain=domain)
    else:
        kw["lagrangian"] = lagrangian_from(metric, sysdoc.get("one_form"),
                                           sysdoc.get("potential"), params,
                                           analytic=bool(sysdoc.get("analytic", True)),
                                           name=doc["name"])
    return Scenario(doc, source, man, metric, params, basepoint, kind, domain=domain, **kw)


def load_scenario(path) -> Scenario:
    """Read, validate and build a scenario file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"{path}: cannot read scenario: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ScenarioError(f"{path}: top level must be a JSON object")
    return build(doc, str(path))


def fixtures_dir() -> Path:
    return Path(__file__).parent / "fixtures"


def fixture_paths() -> list[Path]:
    return sorted(fixtures_dir().glob("*.json"))


def dumps(obj) -> str:
    """Deterministic JSON text used for every report."""
    return json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    return obj
