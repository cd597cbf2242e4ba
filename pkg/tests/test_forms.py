import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bundlekit.forms import (FormError, LocalForm, bracket_wedge, exterior_derivative,
                             exterior_derivative_fd, parse_index, pullback, transform_components,
                             wedge)
from bundlekit.geometry import sphere_atlas

XYZ = ("x", "y", "z")
PTS = np.random.default_rng(5).uniform(-0.8, 0.8, size=(12, 3))


def form(doc, coords=XYZ, shape=(), degree=None):
    return LocalForm.from_dict("P", coords, doc, shape, degree)


def close(a, b, pts=PTS, tol=1e-10):
    return np.max(np.abs(a.evaluate(pts) - b.evaluate(pts)), initial=0.0) <= tol


# small random smooth coefficient expressions
_atoms = st.sampled_from(["x", "y", "z", "1", "2", "0.5"])
_coef = st.recursive(
    _atoms,
    lambda inner: st.one_of(
        st.tuples(inner, st.sampled_from(["+", "-", "*"]), inner).map(lambda t: f"({t[0]} {t[1]} {t[2]})"),
        st.tuples(st.sampled_from(["sin", "cos", "exp"]), inner).map(lambda t: f"{t[0]}({t[1]})"),
    ),
    max_leaves=5)


@st.composite
def random_form(draw, degree):
    from itertools import combinations
    keys = ["^".join("d" + XYZ[k] for k in I) or "1" for I in combinations(range(3), degree)]
    chosen = draw(st.lists(st.sampled_from(keys), min_size=1, unique=True))
    return form({k: draw(_coef) for k in chosen}, degree=degree)


def test_product_rule_example():
    f = form({"1": "x^2*y"})
    assert close(exterior_derivative(f), form({"dx": "2*x*y", "dy": "x^2"}))


def test_d_of_x_dy():
    assert close(exterior_derivative(form({"dy": "x"})), form({"dx^dy": "1"}))


def test_wedge_self_vanishes():
    dx = form({"dx": "1"})
    assert not wedge(dx, dx).components


def test_index_parsing_sign():
    assert parse_index("dy^dx", XYZ) == ((0, 1), -1)
    with pytest.raises(FormError):
        parse_index("dx^dx", XYZ)
    with pytest.raises(FormError):
        parse_index("dw", XYZ)


def test_matrix_wedge_is_commutator():
    A = np.array([[0.0, 1.0], [2.0, 0.5]])
    B = np.array([[1.0, -1.0], [0.0, 3.0]])
    w = form({"dx": A.tolist(), "dy": B.tolist()}, ("x", "y"), (2, 2))
    got = wedge(w, w).evaluate([[0.1, 0.2]])[0, 0]
    np.testing.assert_allclose(got, A @ B - B @ A, atol=1e-15)


def test_bracket_wedge_doubles_wedge_for_one_forms():
    A = [["x", "1"], ["0", "y"]]
    B = [["y", "0"], ["x*y", "2"]]
    w = form({"dx": A, "dy": B}, ("x", "y"), (2, 2))
    pts = PTS[:, :2]
    assert close(bracket_wedge(w, w), wedge(w, w).scale(2), pts)


def test_commuting_bracket_vanishes():
    D1 = [[1.0, 0.0], [0.0, 2.0]]
    D2 = [[3.0, 0.0], [0.0, -1.0]]
    a = form({"dx": D1}, ("x", "y"), (2, 2))
    b = form({"dy": D2}, ("x", "y"), (2, 2))
    assert bracket_wedge(a, b).max_abs(PTS[:, :2]) == 0.0


def test_circle_pullback_doubles():
    dth = LocalForm.from_dict("C", ("th",), {"dth": "1"})
    pb = pullback(dth, ["2*t"], ("t",))
    np.testing.assert_allclose(pb.evaluate([[0.3]])[0, 0], 2.0)


def test_pullback_agrees_with_component_transform():
    sph = sphere_atlas()
    w = LocalForm.from_dict("S", ("s", "t"), {"ds": "s*t", "dt": "exp(s)"})
    om = sph.overlap("N", "S")
    pb = pullback(w, om, ("u", "v"))
    pts = sph.sample_overlap("N", "S", 20)
    image = sph.overlap_apply("N", "S", pts)
    expected = transform_components(w.evaluate(image), sph.jacobian("N", "S", pts), 1)
    np.testing.assert_allclose(pb.evaluate(pts), expected, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 1).flatmap(random_form))
def test_d_squared_is_zero(f):
    assert exterior_derivative(exterior_derivative(f)).max_abs(PTS) <= 1e-9


@settings(max_examples=60, deadline=None)
@given(random_form(1), random_form(1))
def test_leibniz(a, b):
    lhs = exterior_derivative(wedge(a, b))
    rhs = wedge(exterior_derivative(a), b) - wedge(a, exterior_derivative(b))
    assert close(lhs, rhs, tol=1e-8)


@settings(max_examples=40, deadline=None)
@given(random_form(1))
def test_pullback_commutes_with_d(f):
    maps = ["x*y", "sin(z)", "x + y^2"]
    lhs = exterior_derivative(pullback(f, maps, XYZ))
    rhs = pullback(exterior_derivative(f), maps, XYZ)
    assert close(lhs, rhs, tol=1e-8)


@settings(max_examples=40, deadline=None)
@given(random_form(1))
def test_symbolic_d_matches_finite_differences(f):
    sym = exterior_derivative(f).evaluate(PTS)
    fd = exterior_derivative_fd(f, PTS)
    scale = 1 + np.max(np.abs(sym), initial=0.0)
    assert np.max(np.abs(sym - fd), initial=0.0) <= 1e-6 * scale
