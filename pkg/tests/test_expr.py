import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracvar.expr import (
    BinOp, Call, DomainError, ExprSyntaxError, Neg, Num, UnboundVariableError,
    UnknownFunctionError, Var, evaluate, free_vars, parse, to_source,
)


def ev(text, **b):
    return evaluate(parse(text), b)


def test_closed_forms():
    assert ev("exp(t) - (t+1)^2", t=0.0) == 0.0
    assert abs(ev("gamma(0.5)^2") - math.pi) < 1e-12
    assert ev("(t-1)*(x^2+z^2+1)", t=1.0, x=5.0, z=7.0) == 0.0
    assert ev("t^2 - 1", t=3.0) == 8.0
    assert abs(ev("tan(t^2/2 - t)", t=1.0) - (-0.54630249)) < 1e-8


def test_precedence():
    assert ev("2+3*4") == 14
    assert ev("2^3^2") == 512
    assert ev("-2^2") == -4
    assert ev("10-4-3") == 3
    assert ev("64/4/2") == 8
    assert ev("2^-1") == 0.5
    assert ev("-(1+2)*3") == -9


def test_pow_and_constants():
    assert ev("pow(2, 10)") == 1024
    assert abs(ev("sin(pi)")) < 1e-15
    assert free_vars(parse("2*pi*t")) == {"t"}


def test_free_vars():
    assert free_vars(parse("3.0")) == set()
    assert free_vars(parse("t + tau")) == {"t", "tau"}
    assert free_vars(parse("gamma(1 - alpha)")) == {"alpha"}


def test_unbound_variable_named():
    with pytest.raises(UnboundVariableError, match="x"):
        evaluate(parse("x"), {})


@pytest.mark.parametrize("text,func", [
    ("log(t)", "log"), ("sqrt(t - 1)", "sqrt"), ("1/(t-0)", "/"), ("gamma(t)", "gamma"),
])
def test_domain_errors(text, func):
    with pytest.raises(DomainError) as info:
        ev(text, t=0.0)
    assert info.value.func == func


def test_domain_error_array_path():
    with pytest.raises(DomainError, match="log"):
        evaluate(parse("log(t)"), {"t": np.array([1.0, -1.0])})


@pytest.mark.parametrize("text", ["", "   ", "1 +", "(1", "1 2", "3 $ 4", "pow(1)", "sin(1, 2)"])
def test_syntax_errors(text):
    with pytest.raises(ExprSyntaxError):
        parse(text)


def test_syntax_error_offset():
    with pytest.raises(ExprSyntaxError) as info:
        parse("1 + * 2")
    assert info.value.offset == 4


def test_unknown_function():
    with pytest.raises(UnknownFunctionError, match="foo"):
        parse("foo(1)")


def test_array_and_scalar_paths_agree(rng):
    e = parse("exp(-t)*sin(3*t) + t^1.5/gamma(2.5 - t/4) - sqrt(abs(t - 0.3))")
    ts = rng.uniform(0.0, 3.0, 50)
    arr = evaluate(e, {"t": ts})
    sc = np.array([evaluate(e, {"t": float(t)}) for t in ts])
    assert np.allclose(arr, sc, rtol=1e-14, atol=1e-14)


# ---- round trip over random trees

_SAFE_UNARY = ("exp", "sin", "cos", "abs", "sqrt", "log", "tan", "gamma")


def _trees():
    leaves = st.one_of(
        st.floats(0.0, 10.0, allow_nan=False).map(Num),
        st.sampled_from(["t", "x"]).map(Var),
    )

    def extend(children):
        return st.one_of(
            children.map(Neg),
            st.tuples(st.sampled_from("+-*/^"), children, children).map(lambda a: BinOp(*a)),
            st.tuples(st.sampled_from(_SAFE_UNARY), children).map(lambda a: Call(a[0], (a[1],))),
            st.tuples(children, children).map(lambda a: Call("pow", a)),
        )

    return st.recursive(leaves, extend, max_leaves=12)


def _outcome(e, b):
    try:
        return ("ok", evaluate(e, b))
    except DomainError as exc:
        return ("domain", exc.func)


@settings(max_examples=300, deadline=None)
@given(_trees(), st.floats(-3, 3), st.floats(-3, 3))
def test_round_trip(e, t, x):
    text = to_source(e)
    back = parse(text)
    assert back == e
    assert to_source(back) == text
    assert _outcome(back, {"t": t, "x": x}) == _outcome(e, {"t": t, "x": x})


@settings(max_examples=200, deadline=None)
@given(_trees(), st.floats(-3, 3), st.floats(-3, 3))
def test_evaluation_finite_or_domain_error(e, t, x):
    kind, val = _outcome(e, {"t": t, "x": x})
    assert kind == "domain" or math.isfinite(val)
