"""Vector fields, prolongation and invariance residuals."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
import sympy as sp

from . import symexpr
from .equivgroups import PointChangeOfVariables, PotentialEquivTransform
from .model import DcEquation, evolution_rhs, potential_rhs
from .symexpr import Expr, h_fn, jet, phi_fn, t, u, v, x

COORDS = (t, x, u, v)

# heat-equation solutions used to instantiate functional parameters
HEAT_SOLUTIONS = ("1", "x", "x^2 + 2*t", "exp(x + t)")


class SymmetryError(ValueError):
    pass


def heat_solution(text: str, var: sp.Symbol = x) -> Expr:
    e = symexpr.parse(text)
    return e.subs(x, var) if var != x else e


def heat_polynomials(n: int, var: sp.Symbol = x) -> list[Expr]:
    """Polynomial heat solutions P_0..P_{n-1} in (t, var)."""
    out = []
    for k in range(n):
        out.append(sp.expand(sum(sp.factorial(k) / (sp.factorial(j) * sp.factorial(k - 2 * j))
                                 * var ** (k - 2 * j) * t**j for j in range(k // 2 + 1))))
    return out


@dataclass(frozen=True)
class VectorField:
    """tau d_t + xi d_x + eta d_u + theta d_v.

    ``functional`` names a heat-solution placeholder (``"h"`` in (t, x) or
    ``"phi"`` in (t, v)) occurring in the coefficients.
    """

    tau: Expr = sp.Integer(0)
    xi: Expr = sp.Integer(0)
    eta: Expr = sp.Integer(0)
    theta: Expr = sp.Integer(0)
    functional: str | None = None
    label: str = ""

    def coefficients(self) -> tuple[Expr, Expr, Expr, Expr]:
        return (self.tau, self.xi, self.eta, self.theta)

    @classmethod
    def from_coefficients(cls, coeffs: Sequence, **kw) -> "VectorField":
        coeffs = [symexpr.normalize(c) for c in coeffs]
        return cls(*coeffs, **kw)

    def __add__(self, other: "VectorField") -> "VectorField":
        return VectorField.from_coefficients([a + b for a, b in zip(self.coefficients(), other.coefficients())])

    def scale(self, c) -> "VectorField":
        return VectorField.from_coefficients([c * a for a in self.coefficients()])

    def apply(self, f: Expr) -> Expr:
        return sum(c * sp.diff(f, z) for c, z in zip(self.coefficients(), COORDS))

    def bind(self, params: Mapping[str, float]) -> "VectorField":
        sub = {sp.Symbol(k): sp.sympify(val) for k, val in params.items()}
        return replace(self, **{n: sp.sympify(getattr(self, n)).subs(sub)
                                for n in ("tau", "xi", "eta", "theta")})

    def instantiate(self, heat: Expr | str) -> "VectorField":
        """Replace the functional parameter by a concrete heat solution."""
        if self.functional is None:
            return self
        if self.functional == "h":
            fn, var = h_fn(t, x), x
        else:
            fn, var = phi_fn(t, v), v
        expr = heat_solution(heat, var) if isinstance(heat, str) else heat
        coeffs = [sp.sympify(c).subs(fn, expr).doit() for c in self.coefficients()]
        return replace(VectorField.from_coefficients(coeffs), functional=None, label=self.label)

    def has_v(self) -> bool:
        return any(sp.sympify(c).has(v) for c in self.coefficients()[:3])

    def to_text(self) -> str:
        parts = []
        for c, z in zip(self.coefficients(), "txuv"):
            if c != 0:
                parts.append(f"({symexpr.to_text(c)})*d{z}")
        return " + ".join(parts) or "0"


def _residual_stats(terms: Sequence[Expr], syms, pts) -> tuple[np.ndarray, np.ndarray]:
    vals = symexpr.compile_exprs(list(terms), syms)(*[pts[s] for s in syms])
    total = np.abs(sum(vals))
    scale = np.max(np.abs(np.array(vals)), axis=0)
    return total, scale


@dataclass
class InvarianceReport:
    max_residual: float
    samples: int
    tol: float = 1e-8
    residuals: np.ndarray | None = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.max_residual < self.tol

    def fraction_above(self, threshold: float) -> float:
        if self.residuals is None or not len(self.residuals):
            return float(self.max_residual > threshold)
        return float(np.mean(self.residuals > threshold))


# ---------------------------------------------------------------------------
# scalar evolution equations w_t = F(t, x, w, w_x, w_xx)


def _check_plain(X: VectorField):
    if X.functional is not None:
        raise SymmetryError("functional parameter must be instantiated before checking")


def evolution_invariance_terms(X: VectorField, rhs: Expr, dep: str = "u") -> list[Expr]:
    """Additive terms of pr^(2)X(w_t - F) restricted to the solution manifold.

    For ``dep == "v"`` the field acts on (t, x, v) and ``eta`` is ignored.
    """
    _check_plain(X)
    w = sp.Symbol(dep)
    tau, xi = X.tau, X.xi
    eta = X.theta if dep == "v" else X.eta
    if dep == "u" and X.theta != 0 and X.has_v():
        raise SymmetryError("field depends on v; not a point field on (t, x, u)")
    xj = [w] + [jet(dep, "x" * n) for n in range(1, 5)]
    w_t, w_tx = jet(dep, "t"), jet(dep, "tx")
    F = sp.sympify(rhs)

    def Dx(f):
        out = sp.diff(f, x) + w_tx * sp.diff(f, w_t)
        for lo, hi in zip(xj, xj[1:]):
            out += hi * sp.diff(f, lo)
        return out

    def Dt(f):
        return sp.diff(f, t) + w_t * sp.diff(f, w)

    eta_t = Dt(eta) - w_t * Dt(tau) - xj[1] * Dt(xi)
    eta_x = Dx(eta) - w_t * Dx(tau) - xj[1] * Dx(xi)
    eta_xx = Dx(eta_x) - w_tx * Dx(tau) - xj[2] * Dx(xi)
    terms = [eta_t, -tau * sp.diff(F, t), -xi * sp.diff(F, x), -eta * sp.diff(F, w),
             -eta_x * sp.diff(F, xj[1]), -eta_xx * sp.diff(F, xj[2])]
    on_shell = {w_t: F, w_tx: Dx(F).subs(w_t, F)}
    return [sp.sympify(term).subs(on_shell, simultaneous=True) for term in terms]


def _jet_boxes(dep: str, boxes: Mapping | None) -> dict:
    out = {jet(dep, "x" * n).name: (-1.5, 1.5) for n in range(1, 5)}
    out.update(dict(boxes or {}))
    return out


def _evaluate_terms(terms, samples, seed, boxes, params=None, degenerate=None):
    terms = [sp.sympify(term) for term in terms]
    syms = sorted(set().union(*(symexpr.free_symbols(term) for term in terms)), key=str)
    pts = symexpr.sample_points(syms, samples, np.random.default_rng(seed), boxes, degenerate)
    total, scale = _residual_stats(terms, syms, pts)
    # constant terms evaluate to scalars; count them at every sample
    total, scale = np.broadcast_to(total, (samples,)), np.broadcast_to(scale, (samples,))
    finite = np.isfinite(total) & np.isfinite(scale)
    if not finite.any():
        raise SymmetryError("every sample hit a singularity")
    return total[finite] / (1.0 + scale[finite]), int(finite.sum())


def invariance_residual_scalar(X: VectorField, eq: DcEquation, samples: int = 100, seed: int = 0,
                               boxes: Mapping | None = None, tol: float = 1e-8,
                               degenerate: Mapping | None = None) -> InvarianceReport:
    """Max relative residual of pr^(2)X on u_t = (d u_x)_x + k u_x.

    Unbound parameters of ``eq`` and ``X`` are sampled like jet coordinates.
    """
    terms = evolution_invariance_terms(X.bind(eq.params), evolution_rhs(eq), "u")
    rel, n = _evaluate_terms(terms, samples, seed, _jet_boxes("u", boxes), degenerate=degenerate)
    return InvarianceReport(float(rel.max()), n, tol, rel)


def invariance_residual_potential_equation(X: VectorField, eq: DcEquation, samples: int = 100,
                                           seed: int = 0, boxes: Mapping | None = None,
                                           tol: float = 1e-8,
                                           degenerate: Mapping | None = None) -> InvarianceReport:
    """Same check for v_t = d(v_x) v_xx - K(v_x) with X acting on (t, x, v)."""
    terms = evolution_invariance_terms(X.bind(eq.params), potential_rhs(eq), "v")
    rel, n = _evaluate_terms(terms, samples, seed, _jet_boxes("v", boxes), degenerate=degenerate)
    return InvarianceReport(float(rel.max()), n, tol, rel)


# ---------------------------------------------------------------------------
# potential systems v_x = u, v_t = d u_x - K


def system_invariance_terms(X: VectorField, eq: DcEquation) -> tuple[list[Expr], list[Expr]]:
    _check_plain(X)
    X = X.bind(eq.params)
    d, K = eq.bound(eq.d), eq.bound(eq.K_expr)
    tau, xi, eta, theta = X.coefficients()
    u_t, u_x, u_xx = jet("u", "t"), jet("u", "x"), jet("u", "xx")
    v_t, v_x = jet("v", "t"), jet("v", "x")

    def Dx(f):
        return sp.diff(f, x) + u_x * sp.diff(f, u) + v_x * sp.diff(f, v)

    def Dt(f):
        return sp.diff(f, t) + u_t * sp.diff(f, u) + v_t * sp.diff(f, v)

    theta_x = Dx(theta) - v_t * Dx(tau) - v_x * Dx(xi)
    theta_t = Dt(theta) - v_t * Dt(tau) - v_x * Dt(xi)
    eta_x = Dx(eta) - u_t * Dx(tau) - u_x * Dx(xi)
    d_u, K_u = sp.diff(d, u), sp.diff(K, u)
    first = [theta_x, -eta]
    second = [theta_t, -d_u * eta * u_x, -d * eta_x, K_u * eta]
    on_shell = {v_x: u, v_t: d * u_x - K, u_t: d * u_xx + d_u * u_x**2 - K_u * u_x}
    sub = lambda e: sp.sympify(e).subs(on_shell, simultaneous=True)  # noqa: E731
    return [sub(e) for e in first], [sub(e) for e in second]


def invariance_residual_system(X: VectorField, eq: DcEquation, samples: int = 100, seed: int = 0,
                               boxes: Mapping | None = None, tol: float = 1e-8,
                               degenerate: Mapping | None = None) -> InvarianceReport:
    """Max relative residual over both equations of the potential system."""
    first, second = system_invariance_terms(X, eq)
    b = _jet_boxes("u", boxes)
    r1, n1 = _evaluate_terms(first, samples, seed, b, degenerate=degenerate)
    r2, n2 = _evaluate_terms(second, samples, seed, b, degenerate=degenerate)
    per_sample = np.maximum(r1, r2) if len(r1) == len(r2) else np.concatenate([r1, r2])
    return InvarianceReport(float(max(r1.max(), r2.max())), min(n1, n2), tol, per_sample)


# ---------------------------------------------------------------------------
# algebra structure


def commutator(X: VectorField, Y: VectorField) -> VectorField:
    """[X, Y] = X(Y^i) - Y(X^i) componentwise."""
    coeffs = [symexpr.normalize(X.apply(b) - Y.apply(a))
              for a, b in zip(X.coefficients(), Y.coefficients())]
    return VectorField.from_coefficients(coeffs)


def span_residual(target: VectorField, basis: Sequence[VectorField], points: int = 12,
                  seed: int = 0, boxes: Mapping | None = None) -> tuple[float, np.ndarray]:
    """Least-squares fit of ``target`` by constant combinations of ``basis``.

    Returns the relative residual and the fitted coefficients.
    """
    rng = np.random.default_rng(seed)
    pts = symexpr.sample_points(COORDS, points, rng, boxes)

    def sample(X):
        vals = symexpr.compile_exprs(list(X.coefficients()), COORDS)(*[pts[s] for s in COORDS])
        return np.concatenate(vals)

    A = np.stack([sample(B) for B in basis], axis=1) if basis else np.zeros((4 * points, 0))
    b = sample(target)
    if A.shape[1] == 0:
        return float(np.max(np.abs(b))), np.zeros(0)
    coef, *_ = np.linalg.lstsq(A, b, rcond=None)
    res = np.max(np.abs(A @ coef - b)) / (1.0 + np.max(np.abs(b)))
    return float(res), coef


@dataclass
class ClosureReport:
    ok: bool
    worst: float
    failures: list = field(default_factory=list)


def closure_check(basis: Sequence[VectorField], family: Sequence[VectorField] = (),
                  tol: float = 1e-8, seed: int = 0, boxes: Mapping | None = None) -> ClosureReport:
    """Every bracket of basis elements lies in span(basis + family).

    ``family`` holds instantiated members of an infinite-dimensional part;
    brackets among the finite ``basis`` and with the first family members are
    checked against the whole family.
    """
    full = list(basis) + list(family)
    worst, failures = 0.0, []
    probes = list(basis) + list(family[:3])
    for i, X in enumerate(probes):
        for Y in probes[i + 1:]:
            Z = commutator(X, Y)
            if all(c == 0 for c in Z.coefficients()):
                continue
            res, _ = span_residual(Z, full, seed=seed, boxes=boxes)
            worst = max(worst, res)
            if res >= tol:
                failures.append((X.label, Y.label, res))
    return ClosureReport(not failures, worst, failures)


# ---------------------------------------------------------------------------
# pushforward of fields and projections


def _change_maps(C) -> tuple[list[Expr], dict]:
    """Forward coordinate expressions and the inverse substitution."""
    if isinstance(C, PotentialEquivTransform):
        P = C.change_of_variables()
        fwd = [P.t_new, P.x_new, P.w_new, P.v_new]
        M, b = C.matrix()
        Mi = np.linalg.inv(M)
        new = sp.Matrix([t, x, v]) - sp.Matrix([sp.sympify(complex(z)) for z in b])
        old = sp.Matrix([[_sym_num(Mi[i, j]) for j in range(3)] for i in range(3)]) * new
        inv = {t: old[0], x: old[1], v: old[2], u: C.u_inverse()}
        return fwd, inv
    if isinstance(C, PointChangeOfVariables):
        fwd = [C.t_new, C.x_new, C.w_new, C.v_new if C.v_new is not None else v]
        T, X, W, V = sp.symbols("T X W V")
        sol = sp.solve([sp.Eq(T, fwd[0]), sp.Eq(X, fwd[1]), sp.Eq(W, fwd[2]), sp.Eq(V, fwd[3])],
                       [t, x, u, v], dict=True)
        if not sol:
            raise SymmetryError("change of variables is not invertible symbolically")
        back = {T: t, X: x, W: u, V: v}
        inv = {k: val.subs(back, simultaneous=True) for k, val in sol[0].items()}
        return fwd, inv
    raise SymmetryError(f"unsupported change {C!r}")


def _sym_num(z) -> Expr:
    z = complex(z)
    re_ = sp.Integer(round(z.real)) if abs(z.real - round(z.real)) < 1e-14 else sp.Float(z.real)
    im_ = sp.Integer(round(z.imag)) if abs(z.imag - round(z.imag)) < 1e-14 else sp.Float(z.imag)
    return re_ + sp.I * im_


def adjoint_action(C, X: VectorField) -> VectorField:
    """Pushforward of ``X`` by the change ``C``, written in the new coordinates."""
    fwd, inv = _change_maps(C)
    coeffs = [symexpr.normalize(sp.sympify(X.apply(f)).subs(inv, simultaneous=True)) for f in fwd]
    return replace(VectorField.from_coefficients(coeffs), label=X.label)


def project_to_txv(X: VectorField) -> VectorField:
    return replace(X, eta=sp.Integer(0))


def project_to_txu(X: VectorField) -> VectorField | None:
    """Drop d_v; ``None`` when the (t, x, u) part depends on v."""
    if X.has_v():
        return None
    return replace(X, theta=sp.Integer(0))


def fields_equal(X: VectorField, Y: VectorField, modulo_v: bool = False) -> bool:
    pairs = list(zip(X.coefficients(), Y.coefficients()))
    if modulo_v:
        pairs = pairs[:3]
    return all(symexpr.normalize(sp.expand(a - b)) == 0 or
               symexpr.is_zero_numeric(a - b, samples=20) for a, b in pairs)
