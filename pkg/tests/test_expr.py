import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isaacslab import (ArityError, EvaluationError, ExpressionSyntaxError, UnknownIdentifierError,
                       eval_expression, evaluate, parse_expression, to_source, variables)
from isaacslab.expr import BinOp, Call, Neg, Num, Var


@pytest.mark.parametrize("src, env, expected", [
    ("u1 + v1", {"u1": 0.5, "v1": -0.5}, 0.0),
    ("0.5*x1^2", {"x1": 2}, 2.0),
    ("cos(x1)", {"x1": 0}, 1.0),
    ("x1*t", {"x1": 3, "t": 2}, 6.0),
    ("min(u1, v1)", {"u1": 1, "v1": -1}, -1.0),
    ("max(u1, v1)", {"u1": 1, "v1": -1}, 1.0),
    ("-x1^2", {"x1": 3}, -9.0),
    ("2^3^2", {}, 512.0),
    ("2^-1", {}, 0.5),
    ("8/4/2", {}, 1.0),
    ("1-2-3", {}, -4.0),
    ("sqrt(abs(x1)) + tanh(0) + exp(0) + sin(0)", {"x1": -4}, 3.0),
    ("1e-3 * 2", {}, 0.002),
])
def test_examples(src, env, expected):
    assert eval_expression(parse_expression(src), env) == pytest.approx(expected, abs=1e-15)


def test_division_by_zero_is_a_fault():
    with pytest.raises(EvaluationError) as info:
        eval_expression(parse_expression("1/x1"), {"x1": 0.0})
    assert info.value.point is not None


def test_unbound_variable():
    with pytest.raises(EvaluationError):
        eval_expression(parse_expression("x1 + x2"), {"x1": 1.0})


def test_overflow_is_a_fault():
    with pytest.raises(EvaluationError):
        eval_expression(parse_expression("exp(x1)"), {"x1": 1000.0})


@pytest.mark.parametrize("src, offset", [("1 +", 3), ("x1 * (2", 7), ("2 $ 3", 2), ("", 0)])
def test_syntax_error_offsets(src, offset):
    with pytest.raises(ExpressionSyntaxError) as info:
        parse_expression(src)
    assert info.value.offset == offset


def test_offset_is_in_bytes():
    with pytest.raises(ExpressionSyntaxError) as info:
        parse_expression("é + ")
    # the identifier check fails on the two-byte character at byte 0
    assert info.value.offset == 0


def test_unknown_identifier_and_arity():
    with pytest.raises(UnknownIdentifierError):
        parse_expression("y1 + 1")
    with pytest.raises(UnknownIdentifierError):
        parse_expression("log(x1)")
    with pytest.raises(ArityError):
        parse_expression("min(x1)")
    with pytest.raises(ArityError):
        parse_expression("cos(x1, x2)")
    with pytest.raises(ExpressionSyntaxError):
        parse_expression("cos x1")


def test_variables_and_vectorised_eval():
    e = parse_expression("u1 * x2 + t")
    assert variables(e) == {"u1", "x2", "t"}
    out = evaluate(e, {"u1": np.array([1.0, 2.0]), "x2": 3.0, "t": 1.0})
    assert np.array_equal(out, [4.0, 7.0])


names = st.sampled_from(["t", "x1", "x2", "u1", "v1"])
leaves = st.one_of(
    st.builds(Num, st.floats(min_value=0, max_value=1e6, allow_nan=False).map(lambda v: float(v))),
    st.builds(Var, names),
)


def _tree(children):
    return st.one_of(
        st.builds(Neg, children),
        st.builds(BinOp, st.sampled_from(["+", "-", "*", "/", "^"]), children, children),
        st.builds(lambda f, a: Call(f, (a,)), st.sampled_from(["sin", "cos", "exp", "abs", "sqrt", "tanh"]), children),
        st.builds(lambda f, a, b: Call(f, (a, b)), st.sampled_from(["min", "max"]), children, children),
    )


exprs = st.recursive(leaves, _tree, max_leaves=12)


@settings(max_examples=300, deadline=None)
@given(exprs)
def test_round_trip(e):
    src = to_source(e)
    again = parse_expression(src)
    assert again == e
    assert to_source(again) == src


small = st.floats(min_value=-10, max_value=10, allow_nan=False)
OPS = {"+": lambda a, b: a + b, "-": lambda a, b: a - b, "*": lambda a, b: a * b}


@settings(max_examples=200, deadline=None)
@given(st.sampled_from(sorted(OPS)), small, small, small)
def test_evaluation_homomorphism(op, x1, u1, c):
    a = parse_expression("x1 * u1 + 1")
    b = parse_expression(f"cos(x1) - {abs(c)!r}")
    env = {"x1": x1, "u1": u1}
    whole = eval_expression(BinOp(op, a, b), env)
    assert whole == OPS[op](eval_expression(a, env), eval_expression(b, env))
