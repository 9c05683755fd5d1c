import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from foliation_lab.expr import (EvaluationError, ParseError, diff, evaluate, gradient, lambdify, parse,
                                simplify, substitute, to_text, var, variables)

from conftest import fd_gradient

N = 3

leaf = st.one_of(st.sampled_from([f"x{j}" for j in range(1, N + 1)]),
                 st.integers(0, 9).map(str),
                 st.sampled_from(["0.5", "1.25", "pi"]))


def _node(children):
    binary = st.tuples(children, st.sampled_from(["+", "-", "*"]), children).map(lambda t: f"({t[0]} {t[1]} {t[2]})")
    unary = st.tuples(st.sampled_from(["sin", "cos", "exp"]), children).map(lambda t: f"{t[0]}({t[1]})")
    power = st.tuples(children, st.integers(0, 3)).map(lambda t: f"({t[0]})^{t[1]}")
    neg = children.map(lambda c: f"-({c})")
    return st.one_of(binary, unary, power, neg)


expr_text = st.recursive(leaf, _node, max_leaves=8)
point = st.lists(st.floats(-1.0, 1.0), min_size=N, max_size=N)


@settings(max_examples=150, deadline=None)
@given(expr_text, point)
def test_print_parse_roundtrip_is_exact(text, p):
    e = parse(text, N)
    again = parse(to_text(e), N)
    assert again == e
    a, b = evaluate(e, p), evaluate(again, p)
    assert a == b or (math.isnan(a) and math.isnan(b))


@settings(max_examples=150, deadline=None)
@given(expr_text, point)
def test_simplify_preserves_value(text, p):
    e = parse(text, N)
    a = evaluate(e, p)
    b = evaluate(simplify(e), p)
    assert b == pytest.approx(a, rel=1e-9, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(expr_text, point)
def test_derivative_matches_central_differences(text, p):
    e = parse(text, N)
    if abs(evaluate(e, p)) > 1e6:
        return
    g = [evaluate(d, p) for d in gradient(e, N)]
    fd = fd_gradient(lambda x: evaluate(e, x), p, h=1e-5)
    assert np.allclose(g, fd, rtol=1e-5, atol=1e-5 * (1 + max(abs(v) for v in g)))


def test_lambdify_agrees_with_evaluate():
    e = parse("exp(x1)*cos(x2) - log(x3) + x1^(1/3)", 3)
    rng = np.random.default_rng(0)
    X = rng.uniform(0.2, 2.0, (50, 3))
    X[:, 0] *= np.where(rng.random(50) < 0.5, -1, 1)
    fn = lambdify(e, 3)
    got = np.asarray(fn(*X.T), float)
    want = np.array([evaluate(e, x) for x in X])
    assert np.allclose(got, want, rtol=1e-13)
    scalar = lambdify(e, 3, backend="math")
    assert scalar(*X[0]) == pytest.approx(want[0], rel=1e-13)


def test_odd_root_of_negative_is_real():
    assert evaluate(parse("x1^(1/3)", 1), [-8.0]) == pytest.approx(-2.0)
    assert evaluate(parse("(-8)^(1/3)", 1), [0.0]) == pytest.approx(-2.0)


def test_bare_rational_exponent_reads_as_power():
    assert parse("x1^1/2", 1) == parse("x1^(1/2)", 1)


def test_pi_constant_and_custom_names():
    assert evaluate(parse("pi", 1), [0.0]) == math.pi
    e = parse("a*b + a", 2, names={"a": 1, "b": 2})
    assert evaluate(e, [2.0, 3.0]) == 8.0
    assert to_text(e, ["a", "b"]) == "a*b + a"


@pytest.mark.parametrize("text,col", [("sin(", 5), ("x1 x2", 4), ("x3", 1), ("y+1", 1), ("2^-1", 3)])
def test_parse_errors_carry_position(text, col):
    with pytest.raises(ParseError) as err:
        parse(text, 2)
    assert err.value.line == 1
    assert err.value.col == col


def test_parse_error_line_numbers():
    with pytest.raises(ParseError) as err:
        parse("x1 +\n  * x2", 2)
    assert err.value.line == 2


@pytest.mark.parametrize("text", ["log(x1 - 2)", "1/(x1 - 1)"])
def test_evaluation_outside_domain(text):
    with pytest.raises(EvaluationError):
        evaluate(parse(text, 1), [1.0])


def test_derivatives_by_hand():
    assert simplify(diff(parse("x1^3", 1), 1)) == simplify(parse("3*x1^2", 1))
    d = diff(parse("exp(x1)*sin(x2)", 2), 2)
    assert evaluate(d, [0.3, 0.7]) == pytest.approx(math.exp(0.3) * math.cos(0.7))
    assert simplify(diff(parse("x2", 2), 1)) == simplify(parse("0", 2))


def test_substitute_and_variables():
    e = parse("x1*x2 + x3", 3)
    assert variables(e) == {1, 2, 3}
    s = substitute(e, {3: parse("x1", 3)})
    assert variables(s) == {1, 2}
    assert evaluate(s, [2.0, 5.0, 100.0]) == 12.0
    assert var(2) == parse("x2", 2)
