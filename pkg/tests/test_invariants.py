import csv
import io
import math

import numpy as np
import pytest

from bundlekit.bundle import GroupDescriptor, tangent_bundle, trivial_bundle
from bundlekit.connection import ConnectionSpec, gauge_transform_potential, zero_connection
from bundlekit.forms import LocalForm
from bundlekit.geometry import sphere_atlas, torus_atlas
from bundlekit.invariants import (InvariantError, chern_number, curvature_density, disk_rule,
                                  field_csv, full_report, total_curvature)
from bundlekit.specfile import load, load_document

import oracles

MONOPOLES = (-2, -1, 0, 1, 2)


def _oracle_levi_civita(radius):
    tb = tangent_bundle(sphere_atlas())
    docs = oracles.levi_civita_documents(radius)
    forms = {c: LocalForm.from_dict(c, tb.atlas.chart(c).coordinates, docs[c], (2, 2))
             for c in ("N", "S")}
    return ConnectionSpec(f"lc-r{radius}", tb, forms, "antisymmetric", torsion_free=True)


def test_disk_rule_area_and_moment():
    pts, w = disk_rule(32)
    assert math.isclose(w.sum(), math.pi, rel_tol=1e-14)
    # integral of r^2 over the unit disk is pi/2
    assert math.isclose((w * (pts ** 2).sum(axis=1)).sum(), math.pi / 2, rel_tol=1e-13)


@pytest.mark.parametrize("n", MONOPOLES)
def test_chern_numbers(n):
    rep = chern_number(load(f"catalog:monopole-{n}").gauge_field, 128)
    assert rep.nearest == n and rep.deviation <= 1e-3 and rep.passed
    assert abs(rep.imaginary) <= 1e-12


def test_trivial_bundle_chern_zero():
    conn = zero_connection(trivial_bundle(sphere_atlas(), GroupDescriptor("U(1)")))
    assert chern_number(conn).raw == 0.0


def test_per_chart_split_sums():
    rep = chern_number(load("catalog:monopole-1").gauge_field)
    assert math.isclose(sum(rep.per_chart.values()), rep.raw, rel_tol=1e-15)
    # each hemisphere carries half the flux
    for v in rep.per_chart.values():
        assert abs(v - 0.5) <= 1e-12


def test_chern_gauge_invariance():
    rng = np.random.default_rng(20240607)
    gf = load("catalog:monopole-1").gauge_field
    base = chern_number(gf).deviation
    for _ in range(20):
        moved = gauge_transform_potential(gf, oracles.random_phase_gauge(rng, gf.bundle.atlas))
        assert abs(chern_number(moved).deviation - base) <= 1e-9


def test_chern_additivity_of_fixtures():
    for a, b in [(1, 1), (2, -1), (-2, -2)]:
        ca = chern_number(load(f"catalog:monopole-{a}").gauge_field).raw
        cb = chern_number(load(f"catalog:monopole-{b}").gauge_field).raw
        assert abs(ca + cb - (a + b)) <= 2e-3


@pytest.mark.parametrize("n", [1, -2, 2])
def test_chern_refinement(n):
    gf = load(f"catalog:monopole-{n}").gauge_field
    devs = [chern_number(gf, r).deviation for r in (64, 128, 256)]
    # already at rounding level: allow noise-sized increases only
    assert devs[1] <= devs[0] + 1e-12 and devs[2] <= devs[1] + 1e-12
    assert max(devs) <= 1e-12


def test_chern_rejects_non_u1():
    with pytest.raises(InvariantError, match="U\\(1\\)"):
        chern_number(load("catalog:tangent-sphere").connection)
    with pytest.raises(InvariantError, match="sphere"):
        chern_number(zero_connection(trivial_bundle(torus_atlas(), GroupDescriptor("U(1)"))))


def test_gauss_bonnet_catalog():
    tc = total_curvature(load("catalog:tangent-sphere").connection)
    assert abs(tc["value"] - 4 * math.pi) <= 1e-3 and tc["status"] == "PASS"
    assert tc["value"] == math.fsum(tc["perChart"].values())


@pytest.mark.parametrize("radius", [1.0, 2.0])
def test_gauss_bonnet_from_metric_oracle(radius):
    tc = total_curvature(_oracle_levi_civita(radius))
    assert abs(tc["value"] - 4 * math.pi) <= 1e-3


def test_curvature_density_matches_metric():
    conn = load("catalog:tangent-sphere").connection
    _, _, area = oracles.round_sphere(1.0)
    pts = conn.bundle.atlas.sample_chart("N", 64)
    # K = 1, so K sqrt(g) is the area density
    np.testing.assert_allclose(curvature_density(conn, "N", pts), area(pts[:, 0], pts[:, 1]),
                               rtol=1e-10)


def test_total_curvature_refuses_torsion():
    conn = load("catalog:tangent-sphere").connection
    forms = dict(conn.forms)
    forms["N"] = forms["N"] + LocalForm.from_dict("N", ("u", "v"),
                                                  {"dv": [["1", "0"], ["0", "0"]]}, (2, 2))
    with pytest.raises(InvariantError, match="torsion"):
        total_curvature(ConnectionSpec("twisted", conn.bundle, forms))


def test_field_csv_monopole():
    text = field_csv(load("catalog:monopole-1"), n=11)
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0][:3] == ["chart", "u", "v"]
    assert {r[0] for r in rows[1:]} == {"N", "S"}
    assert all(len(r) == len(rows[0]) for r in rows)


def test_field_csv_curvature_density():
    rows = list(csv.reader(io.StringIO(field_csv(load("catalog:tangent-sphere"), n=9))))
    assert rows[0] == ["chart", "u", "v", "value"]
    r = next(r for r in rows[1:] if r[0] == "N" and float(r[1]) == 0 and float(r[2]) == 0)
    assert float(r[3]) == pytest.approx(4.0)  # sqrt(g) at the pole of the unit sphere


def test_field_csv_needs_connection():
    with pytest.raises(InvariantError):
        field_csv(load("catalog:mobius-sum"))


def test_report_mobius():
    doc = full_report(load("catalog:mobius"), samples=64)
    assert doc["status"] == "PASS"
    cocycle = next(r for r in doc["reports"] if r["subject"].startswith("cocycle"))
    assert cocycle["status"] == "PASS"
    assert doc["computations"]["loopClass"]["around"]["re"] == [[-1.0]]


def test_report_monopole():
    doc = full_report(load("catalog:monopole-1"), samples=64)
    assert doc["status"] == "PASS" and doc["computations"]["chern"]["nearest"] == 1


def test_report_tangent_sphere():
    doc = full_report(load("catalog:tangent-sphere"), samples=64)
    conn = next(r for r in doc["reports"] if r["subject"].startswith("connection"))
    checks = {c["name"]: c for c in conn["checks"]}
    assert checks["torsion"]["status"] == "PASS" and checks["torsion"]["residual"] <= 1e-9
    assert checks["bianchi-2"]["status"] == "PASS"
    assert abs(doc["computations"]["totalCurvature"]["value"] - 4 * math.pi) <= 1e-3


def test_report_broken_spec_names_worst_point():
    doc = load("catalog:monopole-1").doc
    doc = {**doc, "name": "broken", "transitions": dict(doc["transitions"])}
    key = next(iter(doc["transitions"]))
    doc["transitions"][key] = [[f"-({doc['transitions'][key][0][0]})"]]
    rep = full_report(load_document(doc), samples=64)
    assert rep["status"] == "FAIL"
    cocycle = next(r for r in rep["reports"] if r["subject"].startswith("cocycle"))
    failing = [c for c in cocycle["checks"] if c["status"] == "FAIL"]
    assert failing and all(c["worst"]["coordinates"] for c in failing)


def test_report_threads_identical():
    spec = load("catalog:tangent-sphere")
    a = full_report(spec, samples=32, step=1e-2, resolution=32)
    b = full_report(spec, samples=32, step=1e-2, resolution=32, threads=4)
    assert a == b
