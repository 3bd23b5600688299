import pytest
import sympy as sp

from pet_engine.model import (DcEquation, ModelError, antiderivative, potential_equation,
                              potential_system, scalar_residual, u_t, u_x, u_xx, v_t, v_x, v_xx)
from pet_engine.symexpr import u


def eq(d, k=None, K=None):
    return DcEquation.from_strings(d, k, K)


def zero(e) -> bool:
    return sp.simplify(e) == 0


def test_power_antiderivative():
    nu = sp.Symbol("nu")
    assert zero(antiderivative(u**nu) + u ** (nu + 1) / (nu + 1))


def test_zero_k_gives_zero_K():
    assert antiderivative(sp.Integer(0)) == 0


def test_inverse_square_matches_table():
    assert zero(antiderivative(u**-2) - 1 / u)


def test_log_branch():
    assert zero(antiderivative(1 / u) + sp.log(u))


def test_requires_convection():
    with pytest.raises(ModelError):
        DcEquation(u, None, None)


@pytest.mark.parametrize("d, k, expected", [
    ("u^(-1)", "0", u_t - u_xx / u + u_x**2 / u**2),
    ("1", "0", u_t - u_xx),
    ("1", "u", u_t - u_xx - u * u_x),
])
def test_scalar_residual(d, k, expected):
    assert zero(scalar_residual(eq(d, k)) - expected)


@pytest.mark.parametrize("d, K, second", [
    ("u^(-2)", "0", v_t - u**-2 * u_x),
    ("1", "-u^2", v_t - u_x - u**2),
    ("1", "0", v_t - u_x),
])
def test_potential_system(d, K, second):
    r1, r2 = potential_system(eq(d, K=K)).residuals
    assert zero(r1 - (v_x - u)) and zero(r2 - second)


@pytest.mark.parametrize("d, K, expected", [
    ("u^(-1)", "0", v_t - v_xx / v_x),
    ("1", "-u^2", v_t - v_xx - v_x**2),
    ("1", "0", v_t - v_xx),
])
def test_potential_equation(d, K, expected):
    assert zero(potential_equation(eq(d, K=K)).residual - expected)


def test_json_round_trip():
    e = eq("u^mu", "u^nu").with_params(mu=0.5, nu=2.0)
    back = DcEquation.from_json(e.to_json())
    assert back.params == {"mu": 0.5, "nu": 2.0} and zero(back.d - e.d)


def test_consistency_of_k_and_K():
    assert eq("1", "u", "-u^2/2").consistent()
    assert not eq("1", "u", "u^2").consistent()
