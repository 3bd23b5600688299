import math

import pytest
import sympy as sp

from pet_engine import symexpr
from pet_engine.symexpr import ParseError, parse, t, u, x


def test_power_rule():
    mu = sp.Symbol("mu")
    assert sp.simplify(symexpr.diff(u**mu, u) - mu * u ** (mu - 1)) == 0


def test_no_time_dependence():
    assert symexpr.diff(parse("exp(u)"), t) == 0


def test_antiderivative_of_power_gives_k():
    nu = sp.Symbol("nu")
    expr = symexpr.diff(-u ** (nu + 1) / (nu + 1), u)
    assert sp.simplify(expr + u**nu) == 0


def test_substitute_reciprocal():
    w = sp.Symbol("w")
    assert sp.simplify(symexpr.substitute(u**-2, {u: 1 / w}) - w**2) == 0


def test_substitute_flux():
    d, K = sp.symbols("d K")
    ux = symexpr.jet("u", "x")
    out = symexpr.substitute(d * ux - K, {d: 1 / u, K: 0})
    assert sp.simplify(out - ux / u) == 0


def test_substitute_hodograph_parameters():
    a1, a2, b1, b2 = sp.symbols("a1 a2 b1 b2")
    out = symexpr.substitute((b1 + b2 * u) / (a1 + a2 * u), {a1: 0, a2: 1, b1: 1, b2: 0})
    assert sp.simplify(out - 1 / u) == 0


@pytest.mark.parametrize("text, values, expected", [
    ("u^(-2)", {u: 2}, 0.25),
    ("2*t/cos(x)^2", {t: 1, x: 0}, 2.0),
])
def test_evaluate_real(text, values, expected):
    assert abs(symexpr.evaluate(parse(text), values) - expected) < 1e-15


def test_evaluate_complex():
    e = parse("(u - i)/(u + i)", complex_mode=True)
    assert abs(symexpr.evaluate(e, {u: 0}) + 1) < 1e-15


def test_zero_oracle():
    assert symexpr.is_zero_numeric(parse("sin(x)^2 + cos(x)^2 - 1"), samples=100, tol=1e-9)
    assert symexpr.is_zero_numeric(parse("u^(-2)*u^2 - 1"))
    assert not symexpr.is_zero_numeric(parse("u^2 - u"), boxes={"u": (2, 3)})


def test_parse_exact_rational_exponent():
    e = parse("u^(-4/3)")
    assert isinstance(e, sp.Pow) and e.exp == sp.Rational(-4, 3)


def test_parse_table_diffusivity():
    e = parse("exp(mu*arctan(u))/(u^2+1)")
    mu = sp.Symbol("mu")
    assert sp.simplify(e - sp.exp(mu * sp.atan(u)) / (u**2 + 1)) == 0


@pytest.mark.parametrize("bad", ["", "u^", "(u", "foo(u)", "u $ 2"])
def test_parse_errors(bad):
    with pytest.raises(ParseError):
        parse(bad)


def test_round_trip_text():
    e = parse("exp(mu*u)/(1 + u)^(mu + 2)")
    assert sp.simplify(parse(symexpr.to_text(e)) - e) == 0


def test_division_by_literal_zero_rejected():
    with pytest.raises((ParseError, ZeroDivisionError, symexpr.EvaluationError, ValueError)):
        symexpr.evaluate(parse("1/(u - u)"), {u: 1.0})


def test_evaluate_is_finite_on_box():
    assert math.isfinite(symexpr.evaluate(parse("ln(u)"), {u: 0.5}).real)
