import pytest
import sympy as sp

from pet_engine import catalog as cat
from pet_engine.equivgroups import PotentialEquivTransform, hodograph
from pet_engine.model import DcEquation
from pet_engine.symcheck import (VectorField, adjoint_action, closure_check, commutator,
                                 fields_equal, heat_solution, invariance_residual_potential_equation,
                                 invariance_residual_scalar, invariance_residual_system,
                                 project_to_txu, project_to_txv)
from pet_engine.symexpr import t, u, v, x


def eq(d, k=None, K=None):
    return DcEquation.from_strings(d, k, K)


DT, DX, DV = VectorField(1), VectorField(0, 1), VectorField(0, 0, 0, 1)


def test_time_translation_is_a_symmetry():
    assert invariance_residual_scalar(DT, eq("exp(u) + u^3", "sin(u)")).max_residual < 1e-12


def test_scaling_for_pure_diffusion():
    X = VectorField(2 * t, x)
    assert invariance_residual_scalar(X, eq("u^2 + exp(u)", "0")).max_residual < 1e-10


def test_scaling_fails_with_convection():
    X = VectorField(2 * t, x)
    assert invariance_residual_scalar(X, eq("1", "1")).max_residual > 1e-3


def test_potential_translation():
    assert invariance_residual_system(DV, eq("exp(u)", K="u^3")).max_residual < 1e-12


def test_table_operator_on_system():
    X = VectorField(0, -v, u**2, 2 * t)
    assert invariance_residual_system(X, eq("u^(-2)", K="u^(-1)")).max_residual < 1e-10


def test_functional_operator_with_heat_solution():
    X = cat.case("2.9").basis[-1]
    rep = invariance_residual_system(X.instantiate(v), eq("u^(-2)", K="0"))
    assert rep.max_residual < 1e-10


@pytest.mark.parametrize("text", ["1", "x", "x^2 + 2*t", "exp(t + x)"])
def test_heat_solutions(text):
    h = heat_solution(text)
    assert sp.simplify(sp.diff(h, t) - sp.diff(h, x, 2)) == 0


def test_potential_equation_check():
    X = VectorField(2 * t, x, 0, 0)
    rep = invariance_residual_potential_equation(X, eq("1", K="0"))
    assert rep.max_residual < 1e-10


def test_brackets():
    D = VectorField(2 * t, x)
    assert fields_equal(commutator(DT, D), DT.scale(2))
    assert all(c == 0 for c in commutator(DX, VectorField(0, t, -1)).coefficients())


def test_burgers_algebra_closes():
    assert closure_check(list(cat.case("1.9").basis)).ok


def test_lemma_two_adjoint_action():
    H = hodograph()
    D1 = VectorField(0, x, -2 * u, -v)
    D2 = VectorField(2 * t, x, 0, v)
    assert fields_equal(adjoint_action(H, D1), D1.scale(-1))
    assert fields_equal(adjoint_action(H, D2), D2)
    assert fields_equal(adjoint_action(H, DT), DT)
    assert fields_equal(adjoint_action(H, DX), DV)
    assert fields_equal(adjoint_action(H, DV), DX)


def test_identity_change_leaves_field():
    X = VectorField(t**2, x * v, u, 3 * v)
    assert fields_equal(adjoint_action(PotentialEquivTransform(), X), X)


def test_purely_potential_operator_not_projectible():
    assert project_to_txu(cat.case("2.1").basis[3]) is None


def test_starred_operators_project():
    for X in cat.case("2.2*").basis:
        assert project_to_txu(X) is not None


def test_dv_projects_to_zero():
    assert all(c == 0 for c in project_to_txu(DV).coefficients())
    assert project_to_txv(VectorField(1, 0, u, 0)).eta == 0


def test_equality_modulo_potential_direction():
    X = VectorField(2 * t, x, -u, 0)
    Y = VectorField(2 * t, x, -u, 3 * v + t)
    assert fields_equal(X, Y, modulo_v=True)
    assert not fields_equal(X, Y)
