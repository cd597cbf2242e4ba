import cmath
import math

import numpy as np
import pytest
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st

from bundlekit.expr import (BinOp, Call, Const, DomainError, ExprError, ExprSyntaxError, Neg,
                            Num, Pow, UnboundCoordinateError, Var, differentiate, evaluate,
                            evaluate_real, fold, free_coordinates, parse, substitute,
                            to_string)


def ev(text, **b):
    return evaluate(parse(text), b)


class TestParse:
    def test_pythagorean_identity(self):
        for x in np.linspace(-3, 3, 7):
            assert abs(ev("sin(x)^2 + cos(x)^2", x=x) - 1) < 1e-15

    def test_imaginary_unit(self):
        assert ev("i*i") == -1

    def test_zero_case(self):
        assert ev("2*(1 - cos(t))", t=0.0) == 0

    def test_precedence(self):
        assert ev("2 + 3*4^2") == 50
        assert ev("-2^2") == -4
        assert ev("2^3^2") == 512
        assert ev("8/4/2") == 1
        assert ev("1 - 2 - 3") == -4

    def test_whitespace_insensitive(self):
        assert parse(" x  *  ( y+1 ) ") == parse("x*(y+1)")

    def test_syntax_error_offset_and_expected(self):
        with pytest.raises(ExprSyntaxError) as ei:
            parse("x + * y")
        assert ei.value.offset == 4
        assert ei.value.expected

    def test_unbalanced(self):
        with pytest.raises(ExprSyntaxError):
            parse("(x + 1")

    def test_unknown_function(self):
        with pytest.raises(ExprError, match="unknown function"):
            parse("foo(x)")

    def test_unknown_identifier_is_fine_at_parse_time(self):
        assert free_coordinates(parse("whatever + 1")) == {"whatever"}

    def test_exponent_must_be_constant(self):
        with pytest.raises(ExprSyntaxError):
            parse("x^y")
        assert ev("x^(-2)", x=2.0) == 0.25
        assert ev("x^0.5", x=4.0) == 2

    def test_utf8_bytes_offset(self):
        with pytest.raises(ExprSyntaxError) as ei:
            parse("x + é")
        assert ei.value.offset == 4


class TestDifferentiate:
    def test_power_rule(self):
        d = differentiate(parse("x^2"), "x")
        assert abs(evaluate(d, {"x": 3.0}) - 6) < 1e-15

    def test_absent_coordinate(self):
        assert differentiate(parse("sin(y)"), "x") == Num(0.0)

    def test_chain_rule_at_origin(self):
        assert evaluate(differentiate(parse("exp(3*t)"), "t"), {"t": 0.0}) == 3

    def test_atan2(self):
        e = parse("atan2(y, x)")
        dx = evaluate(differentiate(e, "x"), {"x": 1.0, "y": 1.0})
        dy = evaluate(differentiate(e, "y"), {"x": 1.0, "y": 1.0})
        assert abs(dx + 0.5) < 1e-15 and abs(dy - 0.5) < 1e-15

    def test_only_original_coordinates(self):
        e = parse("x*log(y) + sqrt(x)")
        for c in ("x", "y", "z"):
            assert free_coordinates(differentiate(e, c)) <= free_coordinates(e)


class TestEvaluate:
    def test_product(self):
        assert ev("x*y", x=2, y=3) == 6

    def test_principal_sqrt(self):
        assert ev("sqrt(-1)") == 1j

    def test_unbound(self):
        with pytest.raises(UnboundCoordinateError, match="'x'"):
            ev("x")

    def test_atan2_rejects_complex(self):
        with pytest.raises(DomainError):
            ev("atan2(i, 1)")

    def test_real_context_rejects_imaginary(self):
        with pytest.raises(DomainError):
            evaluate_real(parse("sqrt(x)"), {"x": -1.0})
        assert evaluate_real(parse("sqrt(x)"), {"x": 4.0}) == 2.0

    def test_vectorized_matches_scalar(self):
        e = parse("sin(x)*exp(y) - x^3/(1 + y^2)")
        xs = np.linspace(-1, 1, 11)
        ys = np.linspace(0, 2, 11)
        vec = evaluate(e, {"x": xs, "y": ys})
        for k in range(11):
            assert vec[k] == evaluate(e, {"x": xs[k], "y": ys[k]})

    def test_deterministic(self):
        e = parse("cosh(x)*tan(x/3) + log(2 + x)")
        a = evaluate(e, {"x": 0.37})
        b = evaluate(e, {"x": 0.37})
        assert a == b

    def test_constants(self):
        assert ev("pi") == math.pi
        assert ev("exp(i*pi)") == pytest.approx(-1)


class TestFold:
    def test_literal_arithmetic(self):
        assert fold(parse("2*3 + 4")) == Num(10.0)

    def test_nested_constant_subexpressions_fold_alike(self):
        a = fold(parse("x*(2*3)"))
        b = fold(parse("x*((1 + 1)*(1 + 2))"))
        assert a == b


# ---------------------------------------------------------------------------
# random expressions
# ---------------------------------------------------------------------------

leaves = st.one_of(
    st.sampled_from([Var("x"), Var("y")]),
    st.floats(-3, 3, allow_nan=False).map(lambda v: Num(round(v, 3))),
    st.just(Const("pi")),
)


def _extend(children):
    return st.one_of(
        st.tuples(st.sampled_from("+-*/"), children, children).map(
            lambda t: BinOp(t[0], t[1], t[2])),
        children.map(Neg),
        st.tuples(children, st.sampled_from([2.0, 3.0, -1.0, 0.5])).map(
            lambda t: Pow(t[0], t[1])),
        st.tuples(st.sampled_from(["sin", "cos", "exp", "sqrt", "log", "sinh", "cosh", "tan"]),
                  children).map(lambda t: Call(t[0], (t[1],))),
    )


exprs = st.recursive(leaves, _extend, max_leaves=8)
points = st.tuples(st.floats(-2, 2), st.floats(-2, 2))


@settings(max_examples=1000, deadline=None, suppress_health_check=list(HealthCheck))
@given(exprs, points)
def test_derivative_matches_central_difference(e, p):
    x, y = p
    h = 1e-5
    with np.errstate(all="ignore"):
        f = lambda xv: evaluate(e, {"x": xv, "y": y})
        try:
            v = f(x)
            fd = (f(x + h) - f(x - h)) / (2 * h)
            fd2 = (f(x + 2 * h) - f(x - 2 * h)) / (4 * h)
        except (DomainError, ZeroDivisionError, OverflowError):
            assume(False)
    assume(all(cmath.isfinite(z) for z in (v, fd, fd2)))
    assume(abs(v) < 1e4 and abs(fd) < 1e4)
    # stay away from branch cuts and poles: the two stencils must agree closely
    assume(abs(fd - fd2) <= 1e-7 * (1 + abs(fd)))
    with np.errstate(all="ignore"):
        d = evaluate(differentiate(e, "x"), {"x": x, "y": y})
    # overflow in intermediate terms right next to a pole
    assume(cmath.isfinite(d) and abs(d) < 1e4)
    assert abs(d - fd) <= 1e-6 * (1 + abs(d))


@settings(max_examples=500, deadline=None)
@given(exprs)
def test_print_parse_round_trip(e):
    e = fold(e)
    assert parse(to_string(e)) == e


@settings(max_examples=300, deadline=None)
@given(exprs)
def test_fold_is_idempotent(e):
    assert fold(fold(e)) == fold(e)


@settings(max_examples=200, deadline=None)
@given(exprs, points)
def test_substitution_matches_binding(e, p):
    s = substitute(e, {"x": parse("2*y")})
    with np.errstate(all="ignore"):
        try:
            a = evaluate(s, {"y": p[1]})
            b = evaluate(e, {"x": 2 * p[1], "y": p[1]})
        except (DomainError, ZeroDivisionError, OverflowError):
            assume(False)
    assume(cmath.isfinite(a) and cmath.isfinite(b))
    assert a == pytest.approx(b, rel=1e-12, abs=1e-12)
