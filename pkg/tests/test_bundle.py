import math

import numpy as np
import pytest

from bundlekit.bundle import (BundleError, BundleSpec, GaugeError, GaugeTransformation,
                              GroupDescriptor, Hop, Section, apply_gauge, check_gauge,
                              check_section, loop_class, pullback_bundle, tangent_bundle,
                              transform_section, trivial_bundle, validate_cocycle, whitney_sum)
from bundlekit.geometry import catalog_atlas, circle_atlas, sphere_atlas, torus_atlas
from bundlekit.specfile import load

MOBIUS_HOPS = [Hop("A", "B", (math.pi / 2,)), Hop("B", "A", (3 * math.pi / 2,))]


@pytest.fixture(scope="module")
def mobius():
    return load("catalog:mobius").bundle


def _eval_all(spec, pts=16):
    out = {}
    for i, j in spec.atlas.overlap_pairs():
        p = spec.atlas.sample_overlap(i, j, pts)
        out[(i, j)] = spec.eval_transition(i, j, p)
    return out


def _random_phase(rng, atlas):
    gamma = {}
    for c, ch in atlas.charts.items():
        x, y = ch.coordinates
        a, b, k = map(float, rng.uniform(-2, 2, size=3))
        gamma[c] = [[f"exp(i*({a!r}*{x} + {b!r}*{y}^2 + {k!r}))"]]
    return GaugeTransformation("phase", gamma)


def _random_unitary(rng, atlas):
    gamma = {}
    for c, ch in atlas.charts.items():
        x, y = ch.coordinates
        a, b, p = map(float, rng.uniform(-1.5, 1.5, size=3))
        ang = f"({a!r}*sin({x}) + {b!r}*cos({y}))"
        ph = f"exp(i*{p!r}*{x})"
        gamma[c] = [[f"cos{ang}*{ph}", f"-sin{ang}"],
                    [f"sin{ang}*{ph}", f"cos{ang}"]]
    return GaugeTransformation("rot", gamma)


@pytest.mark.parametrize("name", ["mobius", "mobius-sum", "mobius-double", "tangent-sphere",
                                  "torus-su2"] + [f"monopole-{n}" for n in (-2, -1, 0, 1, 2)])
def test_catalog_cocycles(name):
    rep = validate_cocycle(load(f"catalog:{name}").bundle)
    assert rep.passed and rep.max_residual() <= 1e-10


def test_mobius_signs(mobius):
    # the smooth sign factor is exact up to one rounding
    assert validate_cocycle(mobius).max_residual() <= 1e-15
    values = _eval_all(mobius)
    assert {round(float(v.real), 12) for m in values.values() for v in m.ravel()} == {1.0, -1.0}


def test_trivial_bundle_residuals_zero():
    spec = trivial_bundle(torus_atlas(), GroupDescriptor("U(n)", 2))
    assert validate_cocycle(spec).max_residual() == 0.0


def test_monopole_membership():
    rep = validate_cocycle(load("catalog:monopole-2").bundle)
    assert rep["membership"].residual <= 1e-12


def test_tangent_bundle_transition_is_jacobian():
    sph = sphere_atlas()
    tb = tangent_bundle(sph)
    p = sph.sample_overlap("N", "S", 8)
    q = sph.overlap_apply("N", "S", p)
    # g_NS is d x_N / d x_S, the inverse of the N->S Jacobian
    np.testing.assert_allclose(tb.eval_transition("N", "S", p) @ sph.jacobian("N", "S", p),
                               np.broadcast_to(np.eye(2), (8, 2, 2)), atol=1e-12)
    np.testing.assert_allclose(tb.eval_transition("S", "N", q), sph.jacobian("N", "S", p),
                               atol=1e-12)


def test_rejects_wrong_shape():
    with pytest.raises(BundleError):
        BundleSpec("bad", circle_atlas(), GroupDescriptor("Z2"), {("A", "B"): [["1", "0"]]})


def test_broken_transition_fails_with_location():
    good = load("catalog:monopole-1").bundle
    trans = dict(good.transitions)
    trans[("N", "S")] = -trans[("N", "S")]
    bad = BundleSpec("broken", good.atlas, good.group, trans, field="complex")
    rep = validate_cocycle(bad)
    assert not rep.passed
    assert rep["inverse"].residual == pytest.approx(2.0)
    assert rep["inverse"].worst["chart"] in ("N", "S")
    assert set(rep["inverse"].worst["coordinates"]) <= {"u", "v", "s", "t"}


# sections

def test_zero_section_passes(mobius):
    rep = check_section(mobius, Section("zero", "vector", {"A": ["0"], "B": ["0"]}))
    assert rep.passed and rep.max_residual() == 0.0


def test_incompatible_mobius_section(mobius):
    rep = check_section(mobius, Section("v", "vector", {"A": ["0.7"], "B": ["0.7"]}))
    assert not rep.passed
    assert rep.max_residual() == pytest.approx(1.4)
    assert rep.failures()[0].worst is not None


def test_monopole_zero_constant_section():
    spec = load("catalog:monopole-0").bundle
    assert check_section(spec, Section("c", "vector", {"N": ["1"], "S": ["1"]})).passed


def test_section_follows_gauge():
    rng = np.random.default_rng(11)
    spec = load("catalog:torus-su2").bundle
    sec = Section("c", "vector", {c: ["0.3", "1 - 0.2*i"] for c in spec.atlas.charts})
    for _ in range(5):
        gt = _random_unitary(rng, spec.atlas)
        moved = apply_gauge(spec, gt)
        assert check_section(moved, transform_section(sec, gt)).passed


# gauge transformations

def test_identity_gauge_keeps_transitions(mobius):
    gt = GaugeTransformation("id", {"A": [["1"]], "B": [["1"]]}, kind="automorphism")
    assert check_gauge(mobius, gt).passed
    before, after = _eval_all(mobius), _eval_all(apply_gauge(mobius, gt))
    for k in before:
        np.testing.assert_array_equal(before[k], after[k])


def test_global_phase_keeps_monopole_transitions():
    spec = load("catalog:monopole-1").bundle
    gt = GaugeTransformation("c", {"N": [["exp(0.4*i)"]], "S": [["exp(0.4*i)"]]})
    before, after = _eval_all(spec), _eval_all(apply_gauge(spec, gt))
    for k in before:
        np.testing.assert_allclose(after[k], before[k], atol=1e-15)


def test_mobius_automorphism_constraint(mobius):
    gt = load("catalog:mobius").gauge_transformations[0]
    rep = check_gauge(mobius, gt)
    assert rep.passed and rep["automorphism"].residual <= 1e-9


def test_neighborhood_gauge_violating_automorphism_constraint(mobius):
    gt = GaugeTransformation("mixed", {"A": [["1"]], "B": [["-1"]]}, kind="automorphism")
    assert not check_gauge(mobius, gt)["automorphism"].passed


def test_non_group_gauge_rejected():
    spec = load("catalog:monopole-1").bundle
    gt = GaugeTransformation("big", {"N": [["2"]], "S": [["2"]]})
    with pytest.raises(GaugeError):
        apply_gauge(spec, gt)


@pytest.mark.parametrize("name", ["monopole-1", "monopole--2"])
def test_cocycle_invariant_under_random_gauges(name):
    rng = np.random.default_rng(2024)
    spec = load(f"catalog:{name}").bundle
    for _ in range(50):
        gt = _random_phase(rng, spec.atlas)
        assert check_gauge(spec, gt, 32).passed
        rep = validate_cocycle(apply_gauge(spec, gt), 32)
        assert rep.max_residual() <= 1e-10


def test_nonabelian_gauges_preserve_cocycle():
    rng = np.random.default_rng(3)
    spec = load("catalog:torus-su2").bundle
    for _ in range(10):
        rep = validate_cocycle(apply_gauge(spec, _random_unitary(rng, spec.atlas)), 32)
        assert rep.max_residual() <= 1e-10


# constructions

def test_whitney_trivial_sum():
    t = trivial_bundle(circle_atlas(), GroupDescriptor("GL(n,R)", 1))
    s = whitney_sum(t, t)
    for m in _eval_all(s).values():
        np.testing.assert_array_equal(m, np.broadcast_to(np.eye(2), m.shape))


def test_whitney_mobius_pair_orientable(mobius):
    s = whitney_sum(mobius, mobius)
    assert validate_cocycle(s).passed
    for m in _eval_all(s).values():
        np.testing.assert_allclose(np.linalg.det(m), 1.0)


def test_whitney_mobius_trivial_dets(mobius):
    t = trivial_bundle(circle_atlas(), GroupDescriptor("GL(n,R)", 1))
    dets = np.concatenate([np.linalg.det(m).real for m in _eval_all(whitney_sum(mobius, t)).values()])
    assert set(np.round(dets, 12)) == {-1.0, 1.0}


def test_whitney_needs_common_atlas(mobius):
    with pytest.raises(BundleError):
        whitney_sum(mobius, trivial_bundle(sphere_atlas(), GroupDescriptor("Z2")))


def test_pullback_by_identity(mobius):
    pb = pullback_bundle(mobius, circle_atlas(), {"A": ("A", ["a"]), "B": ("B", ["b"])})
    before, after = _eval_all(mobius), _eval_all(pb)
    for k in before:
        np.testing.assert_array_equal(before[k], after[k])


def test_pullback_by_constant_map_is_trivial(mobius):
    pb = pullback_bundle(mobius, circle_atlas(), {"A": ("A", ["0.1"]), "B": ("A", ["0.1"])})
    np.testing.assert_array_equal(loop_class(pb, MOBIUS_HOPS), [[1.0]])


def test_pullback_assignment_gap(mobius):
    with pytest.raises(BundleError, match="assignment"):
        pullback_bundle(mobius, circle_atlas(), {"A": ("A", ["a"])})
    with pytest.raises(BundleError, match="outside"):
        pullback_bundle(mobius, circle_atlas(), {"A": ("A", ["2*a"]), "B": ("B", ["b"])})


def test_loop_classes():
    assert loop_class(load("catalog:mobius").bundle, MOBIUS_HOPS)[0, 0] == -1
    dbl = load("catalog:mobius-double")
    assert loop_class(dbl.bundle, dbl.loops["around"])[0, 0] == 1
    sm = load("catalog:mobius-sum")
    np.testing.assert_array_equal(loop_class(sm.bundle, sm.loops["around"]), -np.eye(2))


def test_trivial_loop_class():
    t = trivial_bundle(circle_atlas(), GroupDescriptor("Z2"))
    assert loop_class(t, MOBIUS_HOPS)[0, 0] == 1


def test_loop_class_rejects_open_itinerary(mobius):
    with pytest.raises(BundleError, match="not closed"):
        loop_class(mobius, MOBIUS_HOPS[:1] + [Hop("A", "B", (math.pi / 2,))])


def test_loop_class_rejects_varying_transitions():
    spec = load("catalog:monopole-1").bundle
    with pytest.raises(BundleError, match="locally constant"):
        loop_class(spec, [Hop("N", "S", (1.0, 0.0)), Hop("S", "N", (1.0, 0.0))])


def test_circle12_is_catalog():
    assert len(catalog_atlas("circle12").charts) == 12
