import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nonlocal_evolution.expr import (
    BinOp,
    Call,
    Expr,
    ExprDomainError,
    ExprError,
    Neg,
    Num,
    Var,
    evaluate,
    parse,
    to_text,
)

VARS = ("t", "s", "r", "x1", "x2")

# (text, bindings, expected value) evaluated bit-exactly
VALUE_CASES = [
    ("1+2*3", {}, 7.0),
    ("(1+2)*3", {}, 9.0),
    ("2^3^2", {}, 512.0),
    ("(2^3)^2", {}, 64.0),
    ("-2^2", {}, -4.0),
    ("(-2)^2", {}, 4.0),
    ("2^-1", {}, 0.5),
    ("--3", {}, 3.0),
    ("8/4/2", {}, 1.0),
    ("10-4-3", {}, 3.0),
    ("-3*-2", {}, 6.0),
    ("t*x1", {"t": 2.0, "x1": 3.0}, 6.0),
    ("  1 +\t2 ", {}, 3.0),
    ("1.5e2+.5", {}, 150.5),
    ("min(3, max(1, 2))", {}, 2.0),
    ("abs(-2.5)", {}, 2.5),
    ("sqrt(16)", {}, 4.0),
    ("2*pi", {}, 2 * math.pi),
    ("exp(0)+log(1)", {}, 1.0),
    ("tanh(0)", {}, 0.0),
]

# (text, error code, byte offset)
ERROR_CASES = [
    ("1+", "syntax", 2),
    ("(1+2", "syntax", 4),
    ("1+*2", "syntax", 2),
    ("foo+1", "unknown-identifier", 0),
    ("bar(1)", "unknown-identifier", 0),
    ("min(1)", "arity", 0),
    ("1 + sin(1, 2)", "arity", 4),
    ("2 $ 3", "syntax", 2),
    ("é+y", "syntax", 0),
    ("x1 + é", "syntax", 5),
]

assert len(VALUE_CASES) + len(ERROR_CASES) == 30


@pytest.mark.parametrize("text,bindings,expected", VALUE_CASES)
def test_value_cases(text, bindings, expected):
    assert parse(text, VARS).eval(**bindings) == expected


@pytest.mark.parametrize("text,code,offset", ERROR_CASES)
def test_error_cases(text, code, offset):
    with pytest.raises(ExprError) as exc:
        parse(text, VARS)
    assert exc.value.code == code
    assert exc.value.offset == offset


def test_utf8_offsets_count_bytes():
    # a no-break space is one character but two bytes of UTF-8
    with pytest.raises(ExprError) as exc:
        parse("1 +\u00a0zz", VARS)
    assert exc.value.offset == 5
    with pytest.raises(ExprError) as exc:
        parse("x1 + zz", VARS)
    assert exc.value.offset == 5
    with pytest.raises(ExprError) as exc:
        parse("é", VARS)
    assert exc.value.offset == 0
    with pytest.raises(ExprError) as exc:
        parse("1é", VARS)
    assert exc.value.offset == 1


def test_identity_example():
    e = parse("sin(t)^2+cos(t)^2", ("t",))
    assert abs(e.eval(t=0.7) - 1.0) <= 1e-15


def test_exp_example():
    assert parse("exp(-t)").eval(t=1.0) == pytest.approx(0.36788, abs=1e-5)


@pytest.mark.parametrize(
    "text,bindings",
    [
        ("log(t)", {"t": 0.0}),
        ("sqrt(t)", {"t": -1.0}),
        ("1/t", {"t": 0.0}),
        ("t^0.5", {"t": -4.0}),
        ("t^-1", {"t": 0.0}),
    ],
)
def test_domain_errors(text, bindings):
    with pytest.raises(ExprDomainError) as exc:
        parse(text, ("t",)).eval(**bindings)
    assert exc.value.code == "domain"


def test_domain_error_location_points_at_operator():
    with pytest.raises(ExprDomainError) as exc:
        parse("1 + log(t)", ("t",)).eval(t=-1.0)
    assert exc.value.offset == 4


def test_variables_outside_declared_set_are_rejected():
    with pytest.raises(ExprError) as exc:
        parse("t + s", ("t",))
    assert exc.value.code == "unknown-identifier" and exc.value.offset == 4


def test_unbound_variable_is_an_error():
    with pytest.raises(ExprDomainError):
        parse("t*s", ("t", "s")).eval(t=1.0)


def test_vectorised_evaluation():
    e = Expr("t^2 + x1", ("t", "x1"))
    t = np.array([0.0, 1.0, 2.0])
    assert np.array_equal(e(t=t, x1=1.0), [1.0, 2.0, 5.0])
    assert e.variables == {"t", "x1"}
    assert evaluate(e, {"t": 3.0, "x1": 0.0}) == 9.0


def test_deterministic_errors():
    msgs = set()
    for _ in range(3):
        with pytest.raises(ExprError) as exc:
            parse("sin(1,,2)", VARS)
        msgs.add((exc.value.code, exc.value.offset, exc.value.message))
    assert len(msgs) == 1


# -- parse . print . parse fixpoint ----------------------------------------

numbers = st.floats(0, 1e6, allow_nan=False, allow_infinity=False).map(Num)
leaves = st.one_of(numbers, st.sampled_from([Var(v) for v in VARS] + [Var("pi")]))


def _extend(children):
    return st.one_of(
        children.map(Neg),
        st.tuples(st.sampled_from("+-*/^"), children, children).map(lambda a: BinOp(*a)),
        st.tuples(st.sampled_from(["sin", "cos", "exp", "log", "sqrt", "abs", "tanh"]), children).map(
            lambda a: Call(a[0], (a[1],))
        ),
        st.tuples(st.sampled_from(["min", "max"]), children, children).map(
            lambda a: Call(a[0], (a[1], a[2]))
        ),
    )


asts = st.recursive(leaves, _extend, max_leaves=12)


@settings(max_examples=300, deadline=None)
@given(asts)
def test_print_parse_fixpoint(node):
    text = to_text(node)
    again = parse(text, VARS)
    assert again.ast == node
    assert parse(again.canonical(), VARS).ast == node


@settings(max_examples=200, deadline=None)
@given(st.text(alphabet="t12+-*/^() .,sinmaxe", max_size=12))
def test_parser_never_crashes_unexpectedly(text):
    try:
        parse(text, VARS)
    except ExprError as exc:
        assert 0 <= exc.offset <= len(text.encode("utf-8"))
