import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from canard.expr import (
    Binary,
    Const,
    ExprDomainError,
    ExprSyntaxError,
    NonDifferentiableError,
    SystemDef,
    Unary,
    UndeclaredNameError,
    Var,
    evaluate,
    evaluate_with_gradient,
    parse,
    substitute,
    to_source,
    to_string,
)

from conftest import TEMPLATOR_CONSTANTS, TEMPLATOR_F, VDP_F


def test_parse_vdp():
    e = parse(VDP_F)
    assert evaluate(e, {"x": 1.0, "y": -2 / 3, "z": 0.0}) == pytest.approx(0.0, abs=1e-15)


def test_precedence():
    assert evaluate(parse("-2^2"), {}) == -4
    assert evaluate(parse("2^3^2"), {}) == 512
    assert evaluate(parse("8/4/2"), {}) == 1
    assert evaluate(parse("1 - 2 - 3"), {}) == -4
    assert evaluate(parse("2^-1"), {}) == 0.5
    assert evaluate(parse("2^10"), {}) == 1024


def test_integer_literal_stays_exact():
    e = parse("x^3")
    assert isinstance(e, Binary) and e.right == Const(3)
    assert isinstance(e.right.value, int)


def test_syntax_error_at_end():
    with pytest.raises(ExprSyntaxError) as info:
        parse("x + ")
    assert info.value.offset == 4


def test_syntax_error_offset_is_bytes():
    # "é" is two bytes in UTF-8
    with pytest.raises(ExprSyntaxError) as info:
        parse("x + é")
    assert info.value.offset == 4
    with pytest.raises(ExprSyntaxError):
        parse("(x + y")


def test_undeclared_name():
    with pytest.raises(UndeclaredNameError) as info:
        parse("k_u*y^2")
    assert info.value.name == "k_u"
    assert parse("k_u*y^2", ("x", "y", "z", "k_u")) is not None


def test_domain_errors_name_node():
    with pytest.raises(ExprDomainError, match="sqrt"):
        evaluate(parse("sqrt(x - 2)"), {"x": 1.0})
    with pytest.raises(ExprDomainError):
        evaluate(parse("log(x)"), {"x": 0.0})
    with pytest.raises(ExprDomainError):
        evaluate(parse("1/x"), {"x": 0.0})
    with pytest.raises(ExprDomainError):
        evaluate(parse("x^0.5"), {"x": -1.0})
    assert evaluate(parse("x^3"), {"x": -2.0}) == -8


def test_templator_nullcline_point():
    # y^2 = q x / ((K + x)(k_u + k_T x)) at x = sqrt(2)/100 with K = 0.02
    sys = SystemDef.from_strings(TEMPLATOR_F, "z", TEMPLATOR_CONSTANTS)
    assert abs(sys.eval_F(0.0141421, 4.1421, 0.0)) < 1e-3


def test_vdp_gradient_examples():
    sys = SystemDef.from_strings(VDP_F, "eps*(z - x)", {"eps": 0.05})
    v, g = sys.grad_F(2.0, 0.0, 0.0)
    assert v == pytest.approx(-2 / 3)
    assert g == pytest.approx((-3.0, 1.0, 0.0))
    assert sys.grad_F(1.0, 0.3, 0.0)[1][0] == 0.0
    for x in (-1.0, 0.3, 4.0):
        assert sys.grad_G(x, 1.0, 2.0)[1] == pytest.approx((-0.05, 0.0, 0.05))


def test_abs_at_zero_not_differentiable():
    with pytest.raises(NonDifferentiableError):
        evaluate_with_gradient(parse("abs(x)"), {"x": 0.0, "y": 0.0, "z": 0.0})
    assert evaluate_with_gradient(parse("abs(x)"), {"x": -2.0, "y": 0.0, "z": 0.0})[1][0] == -1.0


def test_vectorized_evaluation_matches_scalar():
    e = parse("sin(x)*y^2 - exp(z/3)")
    xs = np.linspace(-1, 1, 7)
    vec = evaluate(e, {"x": xs, "y": 0.5, "z": 1.0})
    assert np.array_equal(vec, [evaluate(e, {"x": float(v), "y": 0.5, "z": 1.0}) for v in xs])


def test_substitute_shift():
    e = parse("eps*(z - x)", ("x", "y", "z", "eps"))
    shifted = substitute(e, "z", parse("z + 0.25"))
    env = {"x": 0.1, "y": 0.0, "z": 0.3, "eps": 2.0}
    assert evaluate(shifted, env) == pytest.approx(2.0 * (0.55 - 0.1))


def test_to_source_matches_evaluate():
    e = parse(TEMPLATOR_F, ("x", "y", "z", *TEMPLATOR_CONSTANTS))
    src = to_source(e, TEMPLATOR_CONSTANTS)
    env = {"x": 0.3, "y": 1.7, "z": 0.0, **TEMPLATOR_CONSTANTS}
    got = eval(src, {"math": math}, {"x": 0.3, "y": 1.7, "z": 0.0})
    assert got == pytest.approx(evaluate(e, env), rel=1e-14)


# ---- properties

NAMES = ("x", "y", "z")

leaves = st.one_of(
    st.sampled_from([Var(n) for n in NAMES]),
    st.integers(0, 9).map(Const),
    st.floats(0.0, 10.0, allow_nan=False).map(lambda v: Const(round(v, 3))),
)


def _trees(children):
    return st.one_of(
        st.builds(Unary, st.sampled_from(["neg", "sin", "cos", "exp", "abs"]), children),
        st.builds(Binary, st.sampled_from(["+", "-", "*", "/", "^"]), children, children),
    )


expressions = st.recursive(leaves, _trees, max_leaves=12)


@given(expressions)
@settings(max_examples=300, deadline=None)
def test_print_parse_round_trip(e):
    assert parse(to_string(e)) == e


# smooth trees: polynomial and trigonometric, no division or general powers
smooth_leaves = st.one_of(
    st.sampled_from([Var(n) for n in NAMES]),
    st.floats(-2.0, 2.0, allow_nan=False).map(lambda v: Const(round(v, 2)) if v >= 0 else Unary("neg", Const(round(-v, 2)))),
)


def _smooth(children):
    return st.one_of(
        st.builds(Unary, st.sampled_from(["neg", "sin", "cos"]), children),
        st.builds(Binary, st.sampled_from(["+", "-", "*"]), children, children),
        st.builds(lambda c, k: Binary("^", c, Const(k)), children, st.integers(0, 3)),
    )


smooth = st.recursive(smooth_leaves, _smooth, max_leaves=8)
points = st.tuples(*[st.floats(-1.5, 1.5, allow_nan=False)] * 3)


@given(smooth, points)
@settings(max_examples=300, deadline=None)
def test_gradient_matches_central_difference(e, p):
    env = dict(zip(NAMES, p))
    _, grad = evaluate_with_gradient(e, env)
    h = 1e-5
    for i, name in enumerate(NAMES):
        up = dict(env, **{name: env[name] + h})
        dn = dict(env, **{name: env[name] - h})
        fd = (evaluate(e, up) - evaluate(e, dn)) / (2 * h)
        assert abs(grad[i] - fd) <= max(1e-6 * abs(grad[i]), 1e-9) or abs(grad[i] - fd) <= 1e-6 * abs(fd)


@given(smooth, points)
@settings(max_examples=100, deadline=None)
def test_evaluation_is_deterministic(e, p):
    env = dict(zip(NAMES, p))
    a, b = evaluate(e, env), evaluate(e, env)
    assert np.float64(a).tobytes() == np.float64(b).tobytes()
