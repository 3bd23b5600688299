"""Diffusion-convection equations u_t = (d u_x)_x + k u_x and their potential forms."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Mapping

import sympy as sp

from . import symexpr
from .symexpr import Expr, jet, t, u, v, x

u_t, u_x, u_xx, u_xxx = jet("u", "t"), jet("u", "x"), jet("u", "xx"), jet("u", "xxx")
v_t, v_x, v_xx, v_xxx = jet("v", "t"), jet("v", "x"), jet("v", "xx"), jet("v", "xxx")


class ModelError(ValueError):
    pass


def antiderivative(k: Expr) -> Expr:
    """Return K with K_u = -k for the primitive forms that occur in the tables.

    Tries sympy's rule-based integrator first (fast, no Risch); the result is
    checked by differentiation.  Additive constants are dropped.
    """
    k = sp.sympify(k)
    if k == 0:
        return sp.Integer(0)
    if not k.has(u):
        return -k * u
    # power with a symbolic exponent: split the nu = -1 branch explicitly
    coeff, rest = k.as_independent(u, as_Add=False)
    if isinstance(rest, sp.Pow) and rest.base == u and not rest.exp.has(u):
        p = rest.exp
        if p == -1 or (p.is_number and abs(complex(p) + 1) < 1e-14):
            return -coeff * sp.log(u)
        return -coeff * u ** (p + 1) / (p + 1)
    try:
        from sympy.integrals.manualintegrate import manualintegrate
        prim = manualintegrate(k, u)
    except Exception as exc:  # pragma: no cover - sympy internals
        raise ModelError(f"no antiderivative for k = {k}") from exc
    if prim is None or prim.has(sp.Integral):
        raise ModelError(f"antiderivative of k = {k} is outside the primitive table")
    K = -prim
    if not symexpr.is_zero_numeric(sp.diff(K, u) + k, samples=20, tol=1e-9):
        raise ModelError(f"antiderivative check failed for k = {k}")
    return symexpr.normalize(K)


@dataclass(frozen=True)
class DcEquation:
    """u_t = (d(u) u_x)_x + k(u) u_x, equivalently u_t = (d u_x - K)_x with K_u = -k."""

    d: Expr
    k: Expr | None = None
    K: Expr | None = None
    params: Mapping[str, float] = field(default_factory=dict)
    label: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "d", symexpr.normalize(self.d))
        if self.k is not None:
            object.__setattr__(self, "k", symexpr.normalize(self.k))
        if self.K is not None:
            object.__setattr__(self, "K", symexpr.normalize(self.K))
        if self.k is None and self.K is None:
            raise ModelError("at least one of k, K is required")
        if self.d == 0:
            raise ModelError("d must not vanish identically")

    @classmethod
    def from_strings(cls, d: str, k: str | None = None, K: str | None = None,
                     params: Mapping[str, float] | None = None, **kw) -> "DcEquation":
        complex_mode = kw.pop("complex_mode", False)
        parse = lambda s: symexpr.parse(s, complex_mode=complex_mode)  # noqa: E731
        return cls(parse(d), parse(k) if k is not None else None,
                   parse(K) if K is not None else None, dict(params or {}), **kw)

    # --- derived fields -------------------------------------------------
    def bound(self, expr: Expr) -> Expr:
        """``expr`` with the numeric parameter values substituted."""
        if not self.params or expr is None:
            return expr
        return expr.subs({sp.Symbol(n): sp.sympify(val) for n, val in self.params.items()})

    @property
    def k_expr(self) -> Expr:
        if self.k is not None:
            return self.k
        return symexpr.normalize(-sp.diff(self.K, u))

    @property
    def K_expr(self) -> Expr:
        if self.K is not None:
            return self.K
        return K_from_k(self).K

    def consistent(self, samples: int = 30) -> bool:
        if self.k is None or self.K is None:
            return True
        expr = self.bound(sp.diff(self.K, u) + self.k)
        return symexpr.is_zero_numeric(expr, samples=samples, degenerate={"nu": (-1, 0)})

    def with_params(self, **params) -> "DcEquation":
        return replace(self, params={**self.params, **params})

    # --- serialization --------------------------------------------------
    def to_json(self) -> dict:
        return {
            "d": symexpr.to_text(self.d),
            "k": symexpr.to_text(self.k) if self.k is not None else None,
            "K": symexpr.to_text(self.K) if self.K is not None else None,
            "params": dict(self.params),
        }

    @classmethod
    def from_json(cls, obj: Mapping | str) -> "DcEquation":
        if isinstance(obj, str):
            obj = json.loads(obj)
        return cls.from_strings(obj["d"], obj.get("k"), obj.get("K"), obj.get("params") or {})


def K_from_k(eq: DcEquation) -> DcEquation:
    if eq.k is None:
        raise ModelError("k is required")
    return replace(eq, K=antiderivative(eq.k))


def scalar_residual(eq: DcEquation) -> Expr:
    """u_t - d u_xx - d_u u_x^2 - k u_x."""
    d, k = eq.bound(eq.d), eq.bound(eq.k_expr)
    return symexpr.normalize(u_t - d * u_xx - sp.diff(d, u) * u_x**2 - k * u_x)


def evolution_rhs(eq: DcEquation) -> Expr:
    """Right-hand side F of u_t = F(u, u_x, u_xx)."""
    return symexpr.normalize(u_t - scalar_residual(eq))


@dataclass(frozen=True)
class PotentialSystem:
    """v_x = u, v_t = d u_x - K."""

    equation: DcEquation
    residuals: tuple[Expr, Expr]


@dataclass(frozen=True)
class PotentialEquation:
    """v_t = d(v_x) v_xx - K(v_x)."""

    equation: DcEquation
    residual: Expr


def potential_system(eq: DcEquation) -> PotentialSystem:
    d, K = eq.bound(eq.d), eq.bound(eq.K_expr)
    return PotentialSystem(eq, (v_x - u, symexpr.normalize(v_t - d * u_x + K)))


def potential_equation(eq: DcEquation) -> PotentialEquation:
    d, K = eq.bound(eq.d), eq.bound(eq.K_expr)
    res = v_t - d.subs(u, v_x) * v_xx + K.subs(u, v_x)
    return PotentialEquation(eq, symexpr.normalize(res))


def potential_rhs(eq: DcEquation) -> Expr:
    """Right-hand side of the potential equation v_t = G(v_x, v_xx)."""
    return symexpr.normalize(v_t - potential_equation(eq).residual)


def total_x(expr: Expr, dep: str = "v", order: int = 4) -> Expr:
    """Total x-derivative in the jet space of ``dep`` (x-jets only)."""
    w = sp.Symbol(dep)
    chain = [w] + [jet(dep, "x" * n) for n in range(1, order + 2)]
    out = sp.diff(expr, x)
    for a, b in zip(chain, chain[1:]):
        out += b * sp.diff(expr, a)
    return out
