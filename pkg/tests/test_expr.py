import math
from fractions import Fraction

import numpy as np
import pytest

from app.errors import DimensionError, DomainError, ExprSyntaxError, UnboundVariableError, UnknownFunctionError
from app.expr import (
    HALF, ONE, PI, TWO, ZERO, Add, Call, Const, Mul, Neg, Pow, Sub, Var, add, as_expr, call, compile_exprs, diff,
    div, evaluate, evaluate_array, expr_array, index_symbol, mul, neg, number, parse, parse_simplified, power,
    simplify, sub, substitute, to_latex, to_string, to_text, total,
)
from tests.helpers import random_env, random_expr, random_raw_expr

VARIABLES = ["x1", "x2", "u1", "y1_1"]


# ==================== PARSER ====================

def test_parse_precedence():
    assert parse("1 + 2*x1") == Add(number(1), Mul(number(2), Var("x1")))
    assert parse("x1 - x2 - u1") == Sub(Sub(Var("x1"), Var("x2")), Var("u1"))


def test_power_is_right_associative():
    assert parse("2^3^2") == Pow(number(2), Pow(number(3), number(2)))
    assert evaluate(parse("2^3^2"), {}) == 512.0


def test_unary_minus_binds_looser_than_power():
    assert parse("-2^2") == Neg(Pow(number(2), number(2)))
    assert evaluate(parse_simplified("-2^2"), {}) == -4.0


def test_number_literals():
    assert parse("0.25") == Const(Fraction(1, 4))
    assert isinstance(parse("0.1234567891").value, float)
    assert isinstance(parse("1e-3").value, float)
    assert parse("pi") == PI


def test_syntax_error_reports_offset_and_expected():
    with pytest.raises(ExprSyntaxError) as info:
        parse("x1 +")
    assert info.value.offset == 4
    assert "(" in info.value.expected
    assert info.value.exit_code == 2


def test_function_needs_parentheses():
    with pytest.raises(ExprSyntaxError) as info:
        parse("sin x1")
    assert info.value.offset == 4
    assert info.value.expected == ["("]


def test_unknown_function():
    with pytest.raises(UnknownFunctionError) as info:
        parse("foo(x1)")
    assert info.value.name == "foo"
    assert info.value.exit_code == 2


def test_unexpected_character():
    with pytest.raises(ExprSyntaxError) as info:
        parse("x1 $ 2")
    assert info.value.offset == 3


def test_unbalanced_parenthesis():
    with pytest.raises(ExprSyntaxError) as info:
        parse("(x1 + 1")
    assert info.value.expected == [")"]


# ==================== SMART CONSTRUCTORS ====================

def test_constant_folding():
    assert add(ONE, HALF) == Const(Fraction(3, 2))
    assert mul(TWO, HALF) == ONE
    assert power(TWO, number(10)) == number(1024)
    assert call("sqrt", number(Fraction(9, 4))) == Const(Fraction(3, 2))
    assert call("cos", ZERO) == ONE


def test_neutral_elements():
    x = Var("x1")
    assert add(x, ZERO) == x
    assert add(ZERO, x) == x
    assert mul(ONE, x) == x
    assert mul(x, ZERO) == ZERO
    assert div(x, ONE) == x
    assert power(x, ONE) == x
    assert power(x, ZERO) == ONE
    assert sub(x, x) == ZERO


def test_sign_normalisation():
    x, y = Var("x1"), Var("x2")
    assert add(x, neg(y)) == Sub(x, y)
    assert add(x, number(-2)) == Sub(x, TWO)
    assert sub(x, neg(y)) == Add(x, y)
    assert mul(number(-1), x) == Neg(x)
    assert neg(neg(x)) == x
    assert sub(ZERO, x) == Neg(x)


def test_zero_float_equals_rational_zero():
    assert Const(0.0) == ZERO


def test_division_by_constant_zero_is_not_folded():
    e = div(ONE, ZERO)
    with pytest.raises(DomainError):
        evaluate(e, {})


def test_as_expr_accepts_text_and_numbers():
    assert as_expr("x1 + 0") == Var("x1")
    assert as_expr(3) == number(3)
    assert as_expr(0.5) == Const(0.5)


def test_simplify_is_idempotent():
    rng = np.random.default_rng(4)
    for _ in range(100):
        e = simplify(random_raw_expr(rng, VARIABLES))
        assert simplify(e) == e


def test_simplify_preserves_value():
    rng = np.random.default_rng(5)
    env = random_env(rng, VARIABLES)
    for _ in range(100):
        raw = random_raw_expr(rng, VARIABLES)
        np.testing.assert_allclose(evaluate(simplify(raw), env) + 0 * env["x1"],
                                   evaluate(raw, env) + 0 * env["x1"], rtol=1e-12, atol=1e-12)


def test_total_sums_terms():
    assert total([]) == ZERO
    assert to_text(total([Var("x1"), neg(Var("x2")), ONE])) == "x1 - x2 + 1"


# ==================== PRINTING ====================

def test_text_constants():
    assert to_text(HALF) == "(1/2)"
    assert to_text(number(-1)) == "(-1)"
    assert to_text(Const(0.5)) == "0.5e0"
    assert to_text(PI) == "pi"


def test_text_parentheses():
    x, y, z = Var("x1"), Var("x2"), Var("x3")
    assert to_text(Mul(Add(x, y), z)) == "(x1 + x2)*x3"
    assert to_text(Sub(x, Sub(y, z))) == "x1 - (x2 - x3)"
    assert to_text(Neg(Mul(x, y))) == "-(x1*x2)"
    assert to_text(Pow(Neg(x), TWO)) == "(-x1)^2"


def test_text_round_trip_on_random_trees():
    rng = np.random.default_rng(11)
    env = random_env(rng, VARIABLES)
    for _ in range(200):
        e = random_expr(rng, VARIABLES)
        back = parse_simplified(to_text(e))
        assert back == e, to_text(e)
        np.testing.assert_allclose(evaluate(back, env) + 0 * env["x1"], evaluate(e, env) + 0 * env["x1"],
                                   rtol=1e-12, atol=1e-14)


def test_latex():
    x = Var("x1")
    assert to_latex(call("sin", x)) == r"\sin\left(x1\right)"
    assert to_latex(mul(TWO, x)) == r"2 \cdot x1"
    assert to_latex(HALF) == r"\frac{1}{2}"
    assert to_latex(call("sqrt", x)) == r"\sqrt{x1}"


def test_index_symbol():
    assert index_symbol("y1_2") == "y^{1}_{2}"
    assert index_symbol("mu2_1") == r"\mu^{1}_{2}"
    assert index_symbol("yd1_2_3") == "y^{1}_{23}"
    assert index_symbol("x3") == "x^{3}"
    assert index_symbol("mu0") == r"\mu_{0}"
    assert index_symbol("t") == "t"


def test_to_string_selects_format():
    e = mul(HALF, Var("y1_1"))
    assert to_string(e) == "(1/2)*y1_1"
    assert to_string(e, "latex", index_symbol) == r"\frac{1}{2} \cdot y^{1}_{1}"


# ==================== EVALUATION ====================

def test_evaluate_scalar_and_vector():
    e = parse_simplified("x1^2 + sin(x2)")
    assert evaluate(e, {"x1": 2.0, "x2": 0.0}) == pytest.approx(4.0)
    values = evaluate(e, {"x1": np.array([1.0, 2.0]), "x2": np.zeros(2)})
    np.testing.assert_allclose(values, [1.0, 4.0])


def test_unbound_variable():
    with pytest.raises(UnboundVariableError) as info:
        evaluate(parse("x1 + x2"), {"x1": 1.0})
    assert info.value.name == "x2"
    assert info.value.exit_code == 1


@pytest.mark.parametrize("text, env", [
    ("1/x1", {"x1": 0.0}),
    ("ln(x1)", {"x1": 0.0}),
    ("ln(x1)", {"x1": -1.0}),
    ("sqrt(x1)", {"x1": -0.5}),
    ("x1^(1/2)", {"x1": -2.0}),
    ("x1^(-1)", {"x1": 0.0}),
])
def test_domain_errors(text, env):
    with pytest.raises(DomainError):
        evaluate(parse(text), env)


def test_negative_base_integer_power_is_fine():
    assert evaluate(parse("x1^3"), {"x1": -2.0}) == pytest.approx(-8.0)


def test_substitute():
    e = parse_simplified("x1*u1 + 1")
    assert substitute(e, {"u1": ZERO}) == ONE
    assert substitute(e, {"u1": Var("x2")}) == parse_simplified("x1*x2 + 1")


def test_compile_matches_evaluate():
    rng = np.random.default_rng(2)
    exprs = [random_expr(rng, VARIABLES) for _ in range(10)]
    fn = compile_exprs(exprs, VARIABLES)
    point = rng.uniform(-1, 1, size=len(VARIABLES))
    env = dict(zip(VARIABLES, point))
    expected = [evaluate(e, env) for e in exprs]
    np.testing.assert_allclose(fn(*point), expected, rtol=1e-12, atol=1e-14)


def test_compile_single_expression_returns_array():
    fn = compile_exprs([parse_simplified("x1 + 1")], ["x1"])
    out = fn(2.0)
    assert out.shape == (1,)
    assert out[0] == 3.0


def test_compile_rejects_unknown_variable():
    with pytest.raises(UnboundVariableError):
        compile_exprs([Var("x9")], ["x1"])


def test_compile_keeps_names_out_of_the_source():
    fn = compile_exprs([Var("x1)+__import__('os').getpid()+(x1")], ["x1)+__import__('os').getpid()+(x1"])
    assert fn(2.5)[0] == 2.5
    with pytest.raises(UnknownFunctionError):
        compile_exprs([Call("__import__", Var("x1"))], ["x1"])


# ==================== DIFFERENTIATION ====================

def test_diff_rules():
    x = Var("x1")
    assert diff(power(x, number(3)), "x1") == mul(number(3), power(x, TWO))
    assert diff(call("sin", x), "x1") == call("cos", x)
    assert diff(call("ln", x), "x1") == div(ONE, x)
    assert diff(Var("x2"), "x1") == ZERO


def test_diff_matches_finite_differences():
    rng = np.random.default_rng(9)
    h = 1e-5
    for _ in range(100):
        e = random_expr(rng, VARIABLES)
        point = dict(zip(VARIABLES, rng.uniform(-0.9, 0.9, size=len(VARIABLES))))
        for name in VARIABLES:
            up, down = dict(point), dict(point)
            up[name] += h
            down[name] -= h
            fd = (evaluate(e, up) - evaluate(e, down)) / (2 * h)
            exact = evaluate(diff(e, name), point)
            assert abs(exact - fd) <= 1e-6 * (1 + abs(fd)), (to_text(e), name)


def test_variable_exponent_derivative():
    e = parse_simplified("x1^x2")
    d = diff(e, "x2")
    env = {"x1": 2.0, "x2": 3.0}
    assert evaluate(d, env) == pytest.approx(8.0 * math.log(2.0))


# ==================== ARRAYS ====================

def test_expr_array_shape():
    arr = expr_array([["x1", 0], ["1/2", "u1"]], (2, 2), "rho_F")
    assert arr[1, 0] == HALF
    assert arr[0, 1] == ZERO
    values = evaluate_array(arr, {"x1": np.array([1.0, 2.0]), "u1": np.array([3.0, 4.0])})
    assert values.shape == (2, 2, 2)
    np.testing.assert_allclose(values[1, 1], [3.0, 4.0])


def test_expr_array_reports_location():
    with pytest.raises(DimensionError, match=r"rho_F\[1\]: expected length 2, got 3"):
        expr_array([["x1", 0], ["1", "2", "3"]], (2, 2), "rho_F")
