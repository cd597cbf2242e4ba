import copy
import json
import re

import pytest

from bundlekit import catalog
from bundlekit.specfile import SpecError, load, load_document, validate_document


@pytest.mark.parametrize("name", catalog.names())
def test_catalog_documents_are_schema_valid(name):
    validate_document(catalog.get(name))
    spec = load(f"catalog:{name}")
    assert spec.name == name


def test_monopole_aliases():
    assert load("catalog:monopole-m2").doc == load("catalog:monopole--2").doc
    assert load("catalog:monopole-3").bundle.rank == 1


@pytest.mark.parametrize("patch, where", [
    ({"colour": "red"}, "(root)"),
    ({"group": {"kind": "Z2", "n": 1, "order": 2}}, "group"),
    ({"specVersion": 2}, "specVersion"),
    ({"group": {"kind": "SU(7)", "n": 1}}, "group/kind"),
])
def test_schema_rejects(patch, where):
    doc = {**catalog.get("mobius"), **patch}
    with pytest.raises(SpecError, match=re.escape(f"schema violation at {where}:")):
        validate_document(doc)


def test_connection_and_gauge_field_exclusive():
    doc = copy.deepcopy(catalog.get("monopole-1"))
    doc["connection"] = {"forms": {"N": {}, "S": {}}}
    with pytest.raises(SpecError):
        load_document(doc)


def test_transitions_and_construction_exclusive():
    doc = copy.deepcopy(catalog.get("mobius-sum"))
    doc["transitions"] = {}
    with pytest.raises(SpecError):
        load_document(doc)


def test_bad_expression_is_spec_error():
    doc = copy.deepcopy(catalog.get("mobius"))
    doc["transitions"]["A,B"] = [["sin(a"]]
    with pytest.raises(SpecError):
        load_document(doc)


def test_unknown_catalog_entry():
    with pytest.raises(SpecError, match="unknown catalog entry"):
        load("catalog:klein-bottle")


def test_missing_and_invalid_files(tmp_path):
    with pytest.raises(SpecError, match="cannot read"):
        load(str(tmp_path / "nope.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(SpecError, match="invalid JSON"):
        load(str(bad))


def test_inline_atlas_round_trip(tmp_path):
    doc = {"specVersion": 1, "name": "segment",
           "atlas": {"name": "two-intervals", "charts": [
               {"name": "L", "coordinates": ["x"], "box": [[0, 2]]},
               {"name": "R", "coordinates": ["y"], "box": [[1, 3]]}],
               "overlaps": [{"from": "L", "to": "R", "maps": ["x"]},
                            {"from": "R", "to": "L", "maps": ["y"]}]},
           "group": {"kind": "U(1)", "n": 1},
           "transitions": {"L,R": [["exp(i*x)"]]},
           "gauge_field": {"potential": {"L": {}, "R": {"dy": "-1"}}}}
    path = tmp_path / "seg.json"
    path.write_text(json.dumps(doc))
    spec = load(str(path))
    assert set(spec.bundle.transitions) == {("L", "R"), ("R", "L")}
    assert spec.gauge_field is not None and spec.connection.algebra == "anti-hermitian"


def test_user_catalog_shadows_builtin(tmp_path, monkeypatch):
    doc = copy.deepcopy(catalog.get("mobius"))
    doc["description"] = "local copy"
    (tmp_path / "mobius.json").write_text(json.dumps(doc))
    (tmp_path / "mine.json").write_text(json.dumps({**doc, "name": "mine"}))
    monkeypatch.setenv("BUNDLEKIT_CATALOG_DIR", str(tmp_path))
    assert catalog.get("mobius")["description"] == "local copy"
    assert "mine" in catalog.names()
    entry = next(e for e in catalog.listing() if e["name"] == "mine")
    assert entry["source"] == "user"
