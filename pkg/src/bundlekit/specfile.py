"""JSON spec files: strict schema, loading into library objects."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from . import catalog
from .bundle import (BundleError, BundleSpec, GaugeTransformation, GroupDescriptor, Hop, Section,
                     pullback_bundle, tangent_bundle, whitney_sum, GROUP_KINDS, FIBERS)
from .connection import ALGEBRA_CHECKS, ConnectionSpec, GaugeField
from .expr import ExprError
from .forms import FormError, LocalForm
from .geometry import Atlas, AtlasError, atlas_from_dict, catalog_atlas
from .transport import Curve

SPEC_VERSION = 1

_EXPR = {"type": "string", "minLength": 1}
_ROW = {"type": "array", "items": _EXPR, "minItems": 1}
_MATRIX = {"type": "array", "items": _ROW, "minItems": 1}
_NAME = {"type": "string", "pattern": r"^[A-Za-z_][A-Za-z0-9_]*$"}
_NUMBER = {"type": "number"}


def _obj(props: dict, required=(), **extra) -> dict:
    out = {"type": "object", "properties": props, "additionalProperties": False}
    if required:
        out["required"] = list(required)
    out.update(extra)
    return out


_FORM = {"type": "object",
         "propertyNames": {"pattern": r"^(1|d[A-Za-z_][A-Za-z0-9_]*(\^d[A-Za-z_][A-Za-z0-9_]*)*)$"},
         "additionalProperties": {"oneOf": [_EXPR, _MATRIX]}}
_PER_CHART_FORM = {"type": "object", "additionalProperties": _FORM}
_PER_CHART_MATRIX = {"type": "object", "additionalProperties": _MATRIX}

_ATLAS = {"oneOf": [
    {"type": "string"},
    _obj({"name": {"type": "string"},
          "orientable": {"type": "boolean"},
          "charts": {"type": "array", "minItems": 1, "items": _obj({
              "name": _NAME,
              "coordinates": {"type": "array", "items": _NAME, "minItems": 1, "maxItems": 4},
              "box": {"type": "array", "items": {"type": "array", "items": _NUMBER,
                                                 "minItems": 2, "maxItems": 2}},
              "conditions": {"type": "array", "items": _EXPR}},
              ["name", "coordinates", "box"])},
          "overlaps": {"type": "array", "items": _obj({
              "from": _NAME, "to": _NAME,
              "maps": {"type": "array", "items": _EXPR, "minItems": 1},
              "conditions": {"type": "array", "items": _EXPR}},
              ["from", "to", "maps"])}},
         ["name", "charts"]),
]}

_BUNDLE_REF = {"oneOf": [{"type": "string"}, {"type": "object"}]}

SCHEMA = _obj({
    "specVersion": {"const": SPEC_VERSION},
    "name": {"type": "string"},
    "description": {"type": "string"},
    "atlas": _ATLAS,
    "group": _obj({"kind": {"enum": list(GROUP_KINDS)},
                   "n": {"type": "integer", "minimum": 1}}, ["kind", "n"]),
    "fiber": {"enum": list(FIBERS)},
    "field": {"enum": ["real", "complex"]},
    "transitions": {"type": "object",
                    "propertyNames": {"pattern": r"^[A-Za-z_][A-Za-z0-9_]*,[A-Za-z_][A-Za-z0-9_]*$"},
                    "additionalProperties": _MATRIX},
    "construction": {"oneOf": [
        _obj({"kind": {"const": "tangent"}}, ["kind"]),
        _obj({"kind": {"const": "whitney"},
              "summands": {"type": "array", "items": _BUNDLE_REF, "minItems": 2}},
             ["kind", "summands"]),
        _obj({"kind": {"const": "pullback"}, "of": _BUNDLE_REF,
              "assignment": {"type": "object", "additionalProperties": _obj({
                  "chart": _NAME, "maps": {"type": "array", "items": _EXPR, "minItems": 1}},
                  ["chart", "maps"])}},
             ["kind", "of", "assignment"]),
    ]},
    "connection": _obj({"forms": _PER_CHART_FORM,
                        "algebra": {"enum": list(ALGEBRA_CHECKS)},
                        "torsion_free": {"type": "boolean"}}, ["forms"]),
    "gauge_field": _obj({"q": _NUMBER, "unitary": {"type": "boolean"},
                         "potential": _PER_CHART_FORM}, ["potential"]),
    "sections": {"type": "array", "items": _obj({
        "name": {"type": "string"},
        "kind": {"enum": ["vector", "adjoint", "principal"]},
        "components": {"type": "object",
                       "additionalProperties": {"oneOf": [_ROW, _MATRIX]}}},
        ["name", "kind", "components"])},
    "gauge_transformations": {"type": "array", "items": _obj({
        "name": {"type": "string"},
        "kind": {"enum": ["neighborhood", "automorphism"]},
        "gamma": _PER_CHART_MATRIX,
        "gamma_inv": _PER_CHART_MATRIX}, ["name", "gamma"])},
    "curves": {"type": "array", "items": _obj({
        "name": {"type": "string"},
        "v0": {"type": "array", "items": _NUMBER},
        "segments": {"type": "array", "minItems": 1, "items": _obj({
            "chart": _NAME, "t0": _NUMBER, "t1": _NUMBER,
            "coords": {"type": "array", "items": _EXPR, "minItems": 1}},
            ["chart", "t0", "t1", "coords"])}},
        ["name", "segments"])},
    "loops": {"type": "array", "items": _obj({
        "name": {"type": "string"},
        "hops": {"type": "array", "minItems": 1, "items": _obj({
            "from": _NAME, "to": _NAME,
            "at": {"type": "array", "items": _NUMBER, "minItems": 1}},
            ["from", "to", "at"])}},
        ["name", "hops"])},
    "tasks": _obj({
        "chern": _obj({"resolution": {"type": "integer", "minimum": 4}}),
        "total_curvature": _obj({"resolution": {"type": "integer", "minimum": 4}}),
    }),
}, ["specVersion", "atlas"],
    allOf=[{"not": {"required": ["connection", "gauge_field"]}},
           {"not": {"required": ["transitions", "construction"]}}])


class SpecError(Exception):
    """Schema or consistency problem in a spec document (CLI exit code 2)."""


@dataclass
class LoadedSpec:
    name: str
    doc: dict
    atlas: Atlas
    bundle: BundleSpec
    connection: ConnectionSpec | None = None
    gauge_field: GaugeField | None = None
    sections: list = field(default_factory=list)
    gauge_transformations: list = field(default_factory=list)
    curves: dict = field(default_factory=dict)
    curve_v0: dict = field(default_factory=dict)
    loops: dict = field(default_factory=dict)
    tasks: dict = field(default_factory=dict)

    @property
    def description(self) -> str:
        return self.doc.get("description", "")


def validate_document(doc) -> None:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        where = "/".join(str(p) for p in e.absolute_path) or "(root)"
        raise SpecError(f"schema violation at {where}: {e.message}")


def _atlas(ref) -> Atlas:
    return catalog_atlas(ref) if isinstance(ref, str) else atlas_from_dict(ref)


def _resolve(ref) -> dict:
    if isinstance(ref, str):
        return catalog.get(ref)
    return ref


def _bundle(doc: dict, atlas: Atlas) -> BundleSpec:
    name = doc.get("name", "spec")
    cons = doc.get("construction")
    if cons is None:
        if "group" not in doc:
            raise SpecError("a spec needs either 'group' with 'transitions' or a 'construction'")
        group = GroupDescriptor(doc["group"]["kind"], doc["group"]["n"])
        trans = {}
        for key, m in doc.get("transitions", {}).items():
            i, j = key.split(",")
            trans[(i, j)] = m
        return BundleSpec(name, atlas, group, trans, fiber=doc.get("fiber", "vector"),
                          field=doc.get("field", "real" if group.is_real else "complex"))
    if cons["kind"] == "tangent":
        return tangent_bundle(atlas, name)
    if cons["kind"] == "whitney":
        parts = [load_document(_resolve(r)).bundle for r in cons["summands"]]
        out = parts[0]
        for p in parts[1:]:
            out = whitney_sum(out, p)
        out.name = name
        return out
    base = load_document(_resolve(cons["of"])).bundle
    assignment = {k: (v["chart"], v["maps"]) for k, v in cons["assignment"].items()}
    return pullback_bundle(base, atlas, assignment, name=name)


def _matrix_form(chart: str, coords, doc: dict, n: int) -> LocalForm:
    fixed = {}
    for key, val in doc.items():
        if isinstance(val, str):
            if n != 1:
                raise SpecError(f"form on chart {chart}: scalar entry needs a rank-1 bundle")
            val = [[val]]
        fixed[key] = val
    return LocalForm.from_dict(chart, coords, fixed, (n, n), degree=1)


def _forms(section: dict, atlas: Atlas, n: int) -> dict:
    out = {}
    for chart, doc in section.items():
        ch = atlas.chart(chart)
        out[chart] = _matrix_form(chart, ch.coordinates, doc, n)
    return out


def load_document(doc: dict) -> LoadedSpec:
    """Schema-validate and build; any failure becomes :class:`SpecError`."""
    validate_document(doc)
    try:
        return _load(doc)
    except SpecError:
        raise
    except (BundleError, ExprError, FormError, AtlasError) as exc:
        raise SpecError(str(exc)) from exc
    except (KeyError, ValueError, TypeError, ArithmeticError) as exc:
        raise SpecError(f"{type(exc).__name__}: {exc}") from exc


def _load(doc: dict) -> LoadedSpec:
    atlas = _atlas(doc["atlas"])
    bundle = _bundle(doc, atlas)
    n = bundle.rank
    out = LoadedSpec(doc.get("name", "spec"), doc, atlas, bundle, tasks=doc.get("tasks", {}))
    if "connection" in doc:
        c = doc["connection"]
        forms = _forms(c["forms"], atlas, n)
        out.connection = ConnectionSpec(out.name, bundle, forms, c.get("algebra", "none"),
                                        c.get("torsion_free"))
    if "gauge_field" in doc:
        g = doc["gauge_field"]
        out.gauge_field = GaugeField(out.name, bundle, _forms(g["potential"], atlas, n),
                                     float(g.get("q", 1.0)), bool(g.get("unitary", True)))
        out.connection = out.gauge_field.connection()
    for s in doc.get("sections", []):
        comps = {c: np.asarray(v, dtype=object) for c, v in s["components"].items()}
        out.sections.append(Section(s["name"], s["kind"], comps))
    for g in doc.get("gauge_transformations", []):
        out.gauge_transformations.append(GaugeTransformation(
            g["name"], dict(g["gamma"]), g.get("kind", "neighborhood"),
            dict(g.get("gamma_inv", {}))))
    for cdoc in doc.get("curves", []):
        curve = Curve.from_dict(cdoc)
        if curve.name in out.curves:
            raise SpecError(f"duplicate curve name {curve.name!r}")
        out.curves[curve.name] = curve
        if "v0" in cdoc:
            out.curve_v0[curve.name] = cdoc["v0"]
    for ldoc in doc.get("loops", []):
        out.loops[ldoc["name"]] = [Hop(h["from"], h["to"], tuple(h["at"])) for h in ldoc["hops"]]
    return out


def load(ref: str) -> LoadedSpec:
    """Load ``catalog:NAME`` or a JSON file path."""
    if ref.startswith("catalog:"):
        try:
            doc = catalog.get(ref[len("catalog:"):])
        except catalog.CatalogError as exc:
            raise SpecError(str(exc)) from None
        return load_document(doc)
    path = Path(ref)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise SpecError(f"cannot read {ref}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"{ref}: invalid JSON ({exc})") from None
    return load_document(doc)
