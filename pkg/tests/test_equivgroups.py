import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import same_equation
from pet_engine.equivgroups import (ConservedEquivTransform, PointEquivTransform,
                                    PotentialEquivTransform, TransformError, apply,
                                    apply_conserved, apply_point, apply_potential,
                                    check_complex_reduction, compose, embed_conserved,
                                    hodograph, invert, note3_limit_check, point_to_conserved,
                                    purely_potential, pushforward_residual, transform_from_json,
                                    transformation_three)
from pet_engine.model import DcEquation, scalar_residual
from pet_engine.symexpr import u

EQ = DcEquation.from_strings("1 + u^2", "u")
small = st.floats(-1, 1, allow_nan=False)
scale = st.floats(0.5, 2, allow_nan=False).flatmap(lambda s: st.sampled_from([s, -s]))


def eq(d, k=None, K=None):
    return DcEquation.from_strings(d, k, K)


def test_point_identity():
    assert same_equation(apply_point(PointEquivTransform(), EQ), EQ)


def test_point_x_scaling():
    e = eq("u^2", "u^3")
    out = apply_point(PointEquivTransform(e5=2.0), e)
    assert same_equation(out, eq("4*u^2", "2*u^3"))


def test_point_galilean_drift():
    out = apply_point(PointEquivTransform(e7=1.0), eq("1", "0"))
    assert sp.simplify(out.k_expr + 1) == 0


def test_conserved_shift_of_K():
    out = apply_conserved(ConservedEquivTransform(e8=5.0), eq("u", K="u^3"))
    assert same_equation(out, eq("u", K="u^3 + 5"))


def test_conserved_sign_flip():
    out = apply_conserved(ConservedEquivTransform(e6=-1.0), eq("1", K="u^2"))
    assert same_equation(out, eq("1", K="-u^2"), box=(-2, 2))


@pytest.mark.parametrize("src, dst", [
    (("u^(-2)", "0"), ("1", "0")),
    (("u^(-2)", "u^(-1)"), ("1", "-u^2")),
])
def test_hodograph_links(src, dst):
    assert same_equation(apply_potential(hodograph(), eq(src[0], K=src[1])), eq(dst[0], K=dst[1]))


def test_potential_identity():
    e = eq("exp(u)", K="u^2")
    assert same_equation(apply_potential(PotentialEquivTransform(), e), e)


def test_pp_zero_is_identity():
    assert purely_potential(0.0).is_close(PotentialEquivTransform())


def test_pp_reduces_to_starred():
    mu, nu = 0.7, 1.3
    src = eq(f"u^{mu}/(u+1)^({mu}+2)", K=f"u^({nu}+1)/(u+1)^{nu}")
    out = apply_potential(purely_potential(1.0), src)
    assert same_equation(out, eq(f"u^{mu}", K=f"u^({nu}+1)"), box=(0.1, 0.9))


def test_hodograph_involution():
    H = hodograph()
    assert compose(H, H).is_close(PotentialEquivTransform())
    assert invert(H).is_close(H)
    e = eq("exp(u)", K="u^3")
    assert same_equation(apply(H, apply(H, e)), e)


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_pp_additive(a, b):
    assert compose(purely_potential(a), purely_potential(b)).is_close(purely_potential(a + b), 1e-10)


@settings(max_examples=25, deadline=None)
@given(small, small, small, scale, scale, scale, small)
def test_point_group_laws(e1, e2, e3, e4, e5, e6, e7):
    T = PointEquivTransform(e1, e2, e3, e4, e5, e6, e7)
    I = PointEquivTransform()
    assert compose(T, invert(T)).is_close(I, 1e-10)
    assert compose(T, I).is_close(T) and compose(I, T).is_close(T)
    assert same_equation(apply(invert(T), apply(T, EQ)), EQ)


@settings(max_examples=15, deadline=None)
@given(small, small, small, scale, scale, scale, small, small)
def test_conserved_composition_matches_action(e1, e2, e3, e4, e5, e6, e7, e8):
    A = ConservedEquivTransform(e1, e2, e3, e4, e5, e6, e7, e8)
    B = ConservedEquivTransform(e2, e1, e3 / 2, e5, e4, e6, e8, e7)
    assert same_equation(apply(compose(A, B), EQ), apply(A, apply(B, EQ)))


def test_point_embeds_in_conserved():
    T = PointEquivTransform(0.1, 0.2, 0.3, 2.0, -1.5, 0.7, 0.4)
    a, b = apply_point(T, EQ), apply_conserved(point_to_conserved(T), EQ)
    # K is fixed only up to an additive constant, so compare d and k
    assert sp.simplify(a.d - b.d) == 0
    assert sp.simplify(sp.expand(a.k_expr - b.k_expr)).is_zero or abs(
        complex(sp.expand(a.k_expr - b.k_expr).subs(u, 1.3))) < 1e-12


def test_embed_x_scaling():
    T = ConservedEquivTransform(e5=2.0)
    P = embed_conserved(T)
    assert P.p1 == 2.0 and P.q2 == 2.0
    assert same_equation(apply_potential(P, EQ), apply_conserved(T, EQ))


def test_embed_galilean():
    T = ConservedEquivTransform(e7=0.6)
    P = embed_conserved(T)
    assert P.p3 == 0.6
    assert same_equation(apply_potential(P, EQ), apply_conserved(T, EQ))


def test_degenerate_rejected():
    with pytest.raises(TransformError):
        PointEquivTransform(e4=0.0)
    with pytest.raises(TransformError):
        PotentialEquivTransform(p1=1.0, p2=2.0, q1=0.5, q2=1.0)


def test_mixed_composition_rejected():
    with pytest.raises(TransformError):
        compose(PointEquivTransform(), hodograph())


def test_json_round_trip():
    for T in (PointEquivTransform(0.1, 0, 0, 2, 1, 1, 0), purely_potential(2.5),
              ConservedEquivTransform(e8=1.0)):
        assert transform_from_json(T.to_json()).is_close(T)
    assert transform_from_json({"special": "hodograph"}).is_close(hodograph())


def test_three_maps_case_b_to_case_a():
    src = scalar_residual(eq("u^(-2)", "u^(-2)"))
    dst = scalar_residual(eq("u^(-2)", "0"))
    rep = pushforward_residual(transformation_three(), src, dst, samples=200)
    assert rep.max_residual < 1e-8


def test_pushforward_agrees_with_point_action():
    T = PointEquivTransform(e5=2.0)
    rep = pushforward_residual(T.change_of_variables(), scalar_residual(eq("1", "0")),
                               scalar_residual(apply_point(T, eq("1", "0"))))
    assert rep.max_residual < 1e-8


@pytest.mark.parametrize("mu, nu", [(0.0, 0.0), (2.0, None), (0.8, 0.6)])
def test_complex_reduction(mu, nu):
    rep = check_complex_reduction(mu, nu, samples=50)
    assert rep.ok


def test_complex_reduction_exponent():
    rep = check_complex_reduction(2.0, None)
    assert abs(complex(rep.mu_prime) - (-1 - 1j)) < 1e-12


def test_limits():
    rep = note3_limit_check("1.5->1.2", 1.0)
    assert rep.decreasing and rep.errors[-1] < 1e-3
    assert np.allclose(rep.errors, rep.predicted, rtol=0.05)
    assert max(note3_limit_check("1.5->1.2", 0.0).errors) == 0
