"""Equivalence groups of the diffusion-convection class and their actions.

Three groups are modelled:

* :class:`PointEquivTransform` acts on ``(t, x, u; d, k)``,
* :class:`ConservedEquivTransform` acts on ``(t, x, u; d, K)``,
* :class:`PotentialEquivTransform` acts on ``(t, x, u, v; d, K)`` and may mix
  ``x`` with the potential ``v``.

:class:`PointChangeOfVariables` is a general point change used to check any
of these actions (and maps outside the groups) by pushing jets forward.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Mapping

import numpy as np
import sympy as sp

from . import symexpr
from .model import DcEquation
from .symexpr import Expr, jet, t, u, v, x


class TransformError(ValueError):
    pass


def _num(z) -> Expr:
    """Sympy number for a float/complex parameter, exact when integral."""
    z = complex(z)
    parts = []
    for val in (z.real, z.imag):
        if float(val).is_integer():
            parts.append(sp.Integer(int(val)))
        else:
            parts.append(sp.Float(val))
    return parts[0] + sp.I * parts[1] if parts[1] != 0 else parts[0]


def _clean(val):
    z = complex(val)
    if abs(z.imag) <= 1e-15 * max(1.0, abs(z.real)):
        return float(z.real)
    return z


def _params_close(a, b, tol=1e-12) -> bool:
    return all(abs(complex(p) - complex(q)) <= tol * (1 + abs(complex(p)))
               for p, q in zip(a.params(), b.params()))


class _Group:
    kind = ""

    def params(self) -> tuple:
        return tuple(getattr(self, f.name) for f in fields(self))

    def to_json(self) -> dict:
        def enc(z):
            z = _clean(z)
            return [z.real, z.imag] if isinstance(z, complex) else z
        return {"group": self.kind, "params": {f.name: enc(getattr(self, f.name)) for f in fields(self)}}

    def is_close(self, other, tol: float = 1e-12) -> bool:
        return type(self) is type(other) and _params_close(self, other, tol)

    def _same_kind(self, other):
        if type(other) is not type(self):
            raise TransformError(f"cannot compose {self.kind} with {getattr(other, 'kind', other)}")


# ---------------------------------------------------------------------------
# point group


@dataclass(frozen=True)
class PointEquivTransform(_Group):
    """t~ = e4 t + e1, x~ = e5 x + e7 t + e2, u~ = e6 u + e3.

    Arbitrary elements: d~ = e5^2 d / e4, k~ = (e5 k - e7) / e4.
    """

    e1: float = 0.0
    e2: float = 0.0
    e3: float = 0.0
    e4: float = 1.0
    e5: float = 1.0
    e6: float = 1.0
    e7: float = 0.0
    kind = "point"

    def __post_init__(self):
        if self.e4 * self.e5 * self.e6 == 0:
            raise TransformError("e4*e5*e6 must be nonzero")

    def compose(self, other: "PointEquivTransform") -> "PointEquivTransform":
        """``self`` after ``other``."""
        self._same_kind(other)
        a, b = self, other
        return PointEquivTransform(
            e1=a.e4 * b.e1 + a.e1,
            e2=a.e5 * b.e2 + a.e7 * b.e1 + a.e2,
            e3=a.e6 * b.e3 + a.e3,
            e4=a.e4 * b.e4,
            e5=a.e5 * b.e5,
            e6=a.e6 * b.e6,
            e7=a.e5 * b.e7 + a.e7 * b.e4,
        )

    def inverse(self) -> "PointEquivTransform":
        a = self
        return PointEquivTransform(
            e1=-a.e1 / a.e4,
            e2=(a.e7 * a.e1 / a.e4 - a.e2) / a.e5,
            e3=-a.e3 / a.e6,
            e4=1 / a.e4,
            e5=1 / a.e5,
            e6=1 / a.e6,
            e7=-a.e7 / (a.e4 * a.e5),
        )

    def change_of_variables(self) -> "PointChangeOfVariables":
        p = {k: _num(val) for k, val in zip("1234567", self.params())}
        return PointChangeOfVariables(
            p["4"] * t + p["1"], p["5"] * x + p["7"] * t + p["2"], p["6"] * u + p["3"])


def apply_point(T: PointEquivTransform, eq: DcEquation) -> DcEquation:
    e1, e2, e3, e4, e5, e6, e7 = (_num(p) for p in T.params())
    back = {u: (u - e3) / e6}
    d = symexpr.normalize((e5**2 / e4 * eq.d).subs(back))
    k = symexpr.normalize(((e5 * eq.k_expr - e7) / e4).subs(back))
    K = None
    if eq.K is not None:
        K = symexpr.normalize((e5 * e6 / e4 * eq.K).subs(back) + e7 / e4 * u)
    return DcEquation(d, k, K, dict(eq.params))


# ---------------------------------------------------------------------------
# potential group


@dataclass(frozen=True)
class PotentialEquivTransform(_Group):
    """t~ = e1 t + e2, x~ = p1 x + p2 v + p3 t + p4, v~ = q1 x + q2 v + q3 t + q4.

    ``p*`` are the primed and ``q*`` the double-primed constants; the
    dependent variable maps by u~ = (q1 + q2 u) / (p1 + p2 u).  Parameters may
    be complex.
    """

    e1: complex = 1.0
    e2: complex = 0.0
    p1: complex = 1.0
    p2: complex = 0.0
    p3: complex = 0.0
    p4: complex = 0.0
    q1: complex = 0.0
    q2: complex = 1.0
    q3: complex = 0.0
    q4: complex = 0.0
    kind = "potential"

    def __post_init__(self):
        if self.e1 * (self.p1 * self.q2 - self.p2 * self.q1) == 0:
            raise TransformError("e1*(p1*q2 - p2*q1) must be nonzero")

    # affine representation on (t, x, v)
    def matrix(self) -> tuple[np.ndarray, np.ndarray]:
        M = np.array([[self.e1, 0, 0], [self.p3, self.p1, self.p2], [self.q3, self.q1, self.q2]],
                     dtype=complex)
        b = np.array([self.e2, self.p4, self.q4], dtype=complex)
        return M, b

    @classmethod
    def from_matrix(cls, M: np.ndarray, b: np.ndarray) -> "PotentialEquivTransform":
        if abs(M[0, 1]) > 1e-12 or abs(M[0, 2]) > 1e-12:
            raise TransformError("time must transform independently of x and v")
        return cls(e1=_clean(M[0, 0]), e2=_clean(b[0]), p1=_clean(M[1, 1]), p2=_clean(M[1, 2]),
                   p3=_clean(M[1, 0]), p4=_clean(b[1]), q1=_clean(M[2, 1]), q2=_clean(M[2, 2]),
                   q3=_clean(M[2, 0]), q4=_clean(b[2]))

    def compose(self, other: "PotentialEquivTransform") -> "PotentialEquivTransform":
        """``self`` after ``other``."""
        self._same_kind(other)
        Ma, ba = self.matrix()
        Mb, bb = other.matrix()
        return PotentialEquivTransform.from_matrix(Ma @ Mb, Ma @ bb + ba)

    def inverse(self) -> "PotentialEquivTransform":
        M, b = self.matrix()
        Mi = np.linalg.inv(M)
        return PotentialEquivTransform.from_matrix(Mi, -Mi @ b)

    def sym(self) -> dict[str, Expr]:
        return {f.name: _num(getattr(self, f.name)) for f in fields(self)}

    def u_map(self) -> Expr:
        p = self.sym()
        return (p["q1"] + p["q2"] * u) / (p["p1"] + p["p2"] * u)

    def u_inverse(self) -> Expr:
        """u as a function of u~ (written in the symbol ``u``)."""
        p = self.sym()
        return (p["p1"] * u - p["q1"]) / (p["q2"] - p["p2"] * u)

    def change_of_variables(self) -> "PointChangeOfVariables":
        p = self.sym()
        return PointChangeOfVariables(
            t_new=p["e1"] * t + p["e2"],
            x_new=p["p1"] * x + p["p2"] * v + p["p3"] * t + p["p4"],
            w_new=self.u_map(),
            v_new=p["q1"] * x + p["q2"] * v + p["q3"] * t + p["q4"],
        )

    def potential_change(self) -> "PointChangeOfVariables":
        """The same map seen as a point change of (t, x, v) for the potential equation."""
        p = self.sym()
        return PointChangeOfVariables(
            t_new=p["e1"] * t + p["e2"],
            x_new=p["p1"] * x + p["p2"] * v + p["p3"] * t + p["p4"],
            w_new=p["q1"] * x + p["q2"] * v + p["q3"] * t + p["q4"],
            dep="v",
        )


def apply_potential(T: PotentialEquivTransform, eq: DcEquation) -> DcEquation:
    """Transformed (d, K) written as functions of the new dependent variable."""
    p = T.sym()
    K = eq.K_expr
    den = p["p1"] + p["p2"] * u
    det = p["p1"] * p["q2"] - p["p2"] * p["q1"]
    d_new = den**2 * eq.d / p["e1"]
    K_new = det / den * K / p["e1"] - p["q3"] / p["e1"] + p["p3"] / p["e1"] * T.u_map()
    back = {u: T.u_inverse()}
    d_new = symexpr.normalize(sp.sympify(d_new).subs(back, simultaneous=True))
    K_new = symexpr.normalize(sp.sympify(K_new).subs(back, simultaneous=True))
    return DcEquation(d_new, None, K_new, dict(eq.params))


def identity_potential() -> PotentialEquivTransform:
    return PotentialEquivTransform()


def purely_potential(eps: float) -> PotentialEquivTransform:
    """x~ = x + eps v, u~ = u / (1 + eps u)."""
    return PotentialEquivTransform(p2=eps)


def hodograph() -> PotentialEquivTransform:
    """Swap of x and v: u~ = 1/u, d~ = u^2 d, K~ = -K/u."""
    return PotentialEquivTransform(e1=1.0, p1=0.0, p2=1.0, q1=1.0, q2=0.0)


def complex_reduction_27() -> PotentialEquivTransform:
    """t~ = -4t, x~ = -2x + 2iv, v~ = 2x + 2iv, u~ = (u - i)/(u + i)."""
    return PotentialEquivTransform(e1=-4.0, p1=-2.0, p2=2j, q1=2.0, q2=2j)


# ---------------------------------------------------------------------------
# conserved-form group


@dataclass(frozen=True)
class ConservedEquivTransform(_Group):
    """Point group on the conserved form; K~ = (e5 e6 K + e7 u~)/e4 + e8."""

    e1: float = 0.0
    e2: float = 0.0
    e3: float = 0.0
    e4: float = 1.0
    e5: float = 1.0
    e6: float = 1.0
    e7: float = 0.0
    e8: float = 0.0
    kind = "conserved"

    def __post_init__(self):
        if self.e4 * self.e5 * self.e6 == 0:
            raise TransformError("e4*e5*e6 must be nonzero")

    def compose(self, other: "ConservedEquivTransform") -> "ConservedEquivTransform":
        self._same_kind(other)
        return project_conserved(embed_conserved(self).compose(embed_conserved(other)))

    def inverse(self) -> "ConservedEquivTransform":
        return project_conserved(embed_conserved(self).inverse())


def apply_conserved(T: ConservedEquivTransform, eq: DcEquation) -> DcEquation:
    e1, e2, e3, e4, e5, e6, e7, e8 = (_num(p) for p in T.params())
    back = {u: (u - e3) / e6}
    d = symexpr.normalize((e5**2 / e4 * eq.d).subs(back))
    K = symexpr.normalize((e5 * e6 / e4 * eq.K_expr).subs(back) + e7 / e4 * u + e8)
    return DcEquation(d, None, K, dict(eq.params))


def embed_conserved(T: ConservedEquivTransform) -> PotentialEquivTransform:
    """The potential-group element acting like ``T`` (with v~ = e5 e6 v + e3 x~ - ...)."""
    return PotentialEquivTransform(
        e1=T.e4, e2=T.e1,
        p1=T.e5, p2=0.0, p3=T.e7, p4=T.e2,
        q1=T.e3 * T.e5, q2=T.e5 * T.e6, q3=-T.e4 * T.e8, q4=0.0,
    )


def project_conserved(P: PotentialEquivTransform) -> ConservedEquivTransform:
    """Inverse of :func:`embed_conserved`; forgets the v-translation ``q4``."""
    if abs(complex(P.p2)) > 1e-12:
        raise TransformError("transformation mixes x with v; not in the conserved group")
    vals = [P.e2, P.p4, P.q1 / P.p1, P.e1, P.p1, P.q2 / P.p1, P.p3, -P.q3 / P.e1]
    if any(abs(complex(z).imag) > 1e-12 for z in vals):
        raise TransformError("complex parameters are outside the real conserved group")
    return ConservedEquivTransform(*(float(complex(z).real) for z in vals))


def point_to_conserved(T: PointEquivTransform) -> ConservedEquivTransform:
    return ConservedEquivTransform(*T.params(), 0.0)


def compose(T1, T2):
    """``T1`` after ``T2``; both must belong to the same group."""
    if type(T1) is not type(T2):
        raise TransformError("mixed group kinds")
    return T1.compose(T2)


def invert(T):
    return T.inverse()


def apply(T, eq: DcEquation) -> DcEquation:
    if isinstance(T, PointEquivTransform):
        return apply_point(T, eq)
    if isinstance(T, ConservedEquivTransform):
        return apply_conserved(T, eq)
    if isinstance(T, PotentialEquivTransform):
        return apply_potential(T, eq)
    raise TransformError(f"unknown transform {T!r}")


def transform_from_json(obj: Mapping):
    if "special" in obj:
        kind = obj["special"]
        if kind == "hodograph":
            return hodograph()
        if kind == "pp":
            return purely_potential(float(obj.get("eps", 1.0)))
        if kind == "three":
            return transformation_three()
        if kind == "complex27":
            return complex_reduction_27()
        raise TransformError(f"unknown special transform {kind!r}")
    params = {k: (complex(*val) if isinstance(val, list) else val)
              for k, val in obj.get("params", {}).items()}
    cls = {"point": PointEquivTransform, "conserved": ConservedEquivTransform,
           "potential": PotentialEquivTransform}.get(obj.get("group"))
    if cls is None:
        raise TransformError(f"unknown group {obj.get('group')!r}")
    return cls(**params)


@dataclass
class ConservedMatch:
    """Outcome of :func:`match_modulo_conserved`."""

    ok: bool
    transform: ConservedEquivTransform | None
    residual: float
    lambdas: tuple = ()


def match_modulo_conserved(a: DcEquation, b: DcEquation, samples: int = 40, seed: int = 0,
                           boxes: Mapping | None = None, tol: float = 1e-8) -> ConservedMatch:
    """Decide whether ``a`` is the image of ``b`` under the conserved group with u~ = u.

    Fits d_a = l1 d_b and K_a = l2 K_b + l3 u + l4.  On success the returned
    transform maps ``b`` to ``a`` and has been checked by application.
    """
    da, Ka = a.bound(a.d), a.bound(a.K_expr)
    db, Kb = b.bound(b.d), b.bound(b.K_expr)
    pts = symexpr.sample_points([u], samples, np.random.default_rng(seed), boxes)[u]
    fda, fKa, fdb, fKb = symexpr.compile_exprs([da, Ka, db, Kb], [u])(pts)
    ok = np.isfinite(fda) & np.isfinite(fKa) & np.isfinite(fdb) & np.isfinite(fKb) & (np.abs(fdb) > 0)
    if ok.sum() < 5:
        return ConservedMatch(False, None, float("inf"))
    ratio = fda[ok] / fdb[ok]
    l1 = complex(np.median(ratio.real) + 1j * np.median(ratio.imag))
    d_res = float(np.max(np.abs(ratio - l1)) / (1 + abs(l1)))
    A = np.stack([fKb[ok], pts[ok], np.ones(ok.sum())], axis=1).astype(complex)
    coef, *_ = np.linalg.lstsq(A, fKa[ok], rcond=None)
    K_res = float(np.max(np.abs(A @ coef - fKa[ok])) / (1 + np.max(np.abs(fKa[ok]))))
    residual = max(d_res, K_res)
    l2, l3, l4 = (_clean(c) for c in coef)
    l1 = _clean(l1)
    if residual > tol or abs(l1) < 1e-14 or any(isinstance(z, complex) for z in (l1, l2, l3, l4)):
        return ConservedMatch(False, None, residual, (l1, l2, l3, l4))
    if abs(l2) < 1e-12:
        # K_b carries no information on e5; keep the x-scale trivial
        e5, e4 = 1.0, 1.0 / l1
    else:
        e5, e4 = l1 / l2, l1 / l2**2
    T = ConservedEquivTransform(e4=_snap(e4), e5=_snap(e5), e7=_snap(l3 * e4), e8=_snap(l4))
    image = apply_conserved(T, b)
    same = symexpr.is_zero_numeric(image.bound(image.d) - da, samples=20, seed=seed, boxes=boxes,
                                   tol=1e-8) and \
        symexpr.is_zero_numeric(image.bound(image.K_expr) - Ka, samples=20, seed=seed, boxes=boxes,
                                tol=1e-8)
    return ConservedMatch(bool(same), T, residual, (l1, l2, l3, l4))


def _snap(val: float, tol: float = 1e-11) -> float:
    r = round(val)
    return float(r) if abs(val - r) < tol * max(1.0, abs(val)) else float(val)


# ---------------------------------------------------------------------------
# general point changes and jet pushforward


@dataclass(frozen=True)
class PointChangeOfVariables:
    """New coordinates as expressions of (t, x, w) with w the dependent variable.

    ``dep`` names the dependent variable (``"u"`` for the scalar equation,
    ``"v"`` for the potential equation).  ``v_new`` optionally carries the
    potential for changes on (t, x, u, v).
    """

    t_new: Expr
    x_new: Expr
    w_new: Expr
    v_new: Expr | None = None
    dep: str = "u"
    box: Mapping[str, tuple[float, float]] = field(default_factory=dict)

    def jacobian_ok(self, samples: int = 50, seed: int = 0) -> bool:
        w = sp.Symbol(self.dep)
        J = sp.Matrix([self.t_new, self.x_new, self.w_new]).jacobian([t, x, w])
        det = sp.sympify(J.det())
        syms = sorted(symexpr.free_symbols(det), key=str)
        if not syms:
            return complex(det) != 0
        pts = symexpr.sample_points(syms, samples, np.random.default_rng(seed), self.box)
        (vals,) = symexpr.compile_exprs([det], syms)(*[pts[s] for s in syms])
        return bool(np.all(np.abs(vals) > 1e-12))


def transformation_three() -> PointChangeOfVariables:
    """t~ = t, x~ = e^x, u~ = e^(-x) u (outside the point equivalence group)."""
    return PointChangeOfVariables(t, sp.exp(x), sp.exp(-x) * u)


@dataclass
class PushforwardReport:
    ok: bool
    max_residual: float
    samples: int


def _split_evolution(residual: Expr, dep: str) -> Expr:
    w_t = jet(dep, "t")
    coeff = sp.diff(residual, w_t)
    if coeff.has(w_t) or coeff == 0:
        raise TransformError("residual is not an explicit evolution equation")
    return symexpr.normalize(sp.cancel(w_t - residual / coeff) if coeff != 1 else w_t - residual)


def pushforward_jets(C: PointChangeOfVariables, rhs: Expr):
    """Symbolic (T, X, W, W_T, W_X, W_XX) in source jet coordinates.

    ``rhs`` is the source equation w_t = F; t-derivatives are eliminated with
    F and its total x-derivatives.
    """
    dep = C.dep
    w = sp.Symbol(dep)
    xj = [w] + [jet(dep, "x" * n) for n in range(1, 6)]
    F = rhs
    Fx = [F]
    for _ in range(3):
        Fx.append(_total_x(Fx[-1], xj))

    def Dx(f):
        return _total_x(f, xj)

    def Dt(f):
        out = sp.diff(f, t)
        for k in range(4):
            out += Fx[k] * sp.diff(f, xj[k])
        return out

    T, X, W = C.t_new, C.x_new, C.w_new
    a, b, c, e = Dt(T), Dx(T), Dt(X), Dx(X)
    det = a * e - b * c
    W_T = (e * Dt(W) - c * Dx(W)) / det
    W_X = (a * Dx(W) - b * Dt(W)) / det
    W_XX = (a * Dx(W_X) - b * Dt(W_X)) / det
    return T, X, W, W_T, W_X, W_XX, det


def _total_x(f, xj):
    out = sp.diff(f, x)
    for lo, hi in zip(xj, xj[1:]):
        out += hi * sp.diff(f, lo)
    return out


def pushforward_residual(C: PointChangeOfVariables, source_residual: Expr, target_residual: Expr,
                         samples: int = 200, tol: float = 1e-8, seed: int = 0,
                         boxes: Mapping | None = None) -> PushforwardReport:
    """Push sampled solution jets of the source through ``C`` into the target.

    Both residuals are second-order evolution residuals in the dependent
    variable ``C.dep``; the target is evaluated at the image jets.
    """
    dep = C.dep
    w = sp.Symbol(dep)
    rhs = _split_evolution(source_residual, dep)
    T, X, W, W_T, W_X, W_XX, det = pushforward_jets(C, rhs)
    src = [t, x, w] + [jet(dep, "x" * n) for n in range(1, 5)]
    base_boxes = {jet(dep, "x" * n).name: (-1.5, 1.5) for n in range(1, 5)}
    base_boxes.update(dict(C.box))
    base_boxes.update(dict(boxes or {}))
    pts = symexpr.sample_points(src, samples, np.random.default_rng(seed), base_boxes)
    vals = symexpr.compile_exprs([T, X, W, W_T, W_X, W_XX, det], src)(*[pts[s] for s in src])
    if np.any(np.abs(vals[6]) < 1e-12):
        raise TransformError("singular Jacobian at a sample point")
    tgt_syms = [t, x, w, jet(dep, "t"), jet(dep, "x"), jet(dep, "xx")]
    target_residual = sp.sympify(target_residual)
    extra = symexpr.free_symbols(target_residual) - set(tgt_syms)
    if extra:
        raise TransformError(f"target residual has unbound symbols {sorted(map(str, extra))}")
    parts = [target_residual] + symexpr._subterms(target_residual)
    res = symexpr.compile_exprs(parts, tgt_syms)(*vals[:6])
    value = np.abs(res[0])
    scale = np.max(np.abs(np.array(res[1:])), axis=0)
    finite = np.isfinite(value) & np.isfinite(scale)
    if not finite.any():
        raise TransformError("box exhausted by singularities")
    rel = value[finite] / (1.0 + scale[finite])
    worst = float(rel.max())
    return PushforwardReport(worst < tol, worst, int(finite.sum()))


# ---------------------------------------------------------------------------
# numeric diagnostics


@dataclass
class LimitReport:
    family: str
    mu_prime: float
    nus: list
    errors: list
    predicted: list

    @property
    def decreasing(self) -> bool:
        return all(b < a for a, b in zip(self.errors, self.errors[1:])) or \
            all(e == 0 for e in self.errors)


def note3_limit_check(family: str = "1.5->1.2", mu_prime: float = 1.0,
                      nu_seq=(1e2, 1e3, 1e4), grid: int = 2001) -> LimitReport:
    """Sup-norm distance on u in [-1, 1] between a power case and its exponential limit.

    ``family`` is one of ``"1.5->1.2"`` ((1+u/nu)^(mu' nu) vs e^(mu' u)),
    ``"1.7a->1.4"`` ((1+u/mu)^mu vs e^u) and ``"1.6->1.3"`` (which adds the
    convection term mu ln(1+u/mu) vs u).  The predicted error is the leading
    Taylor remainder.
    """
    us = np.linspace(-1.0, 1.0, grid)
    errors, predicted = [], []
    for n in nu_seq:
        if family == "1.5->1.2":
            approx = np.exp(mu_prime * n * np.log1p(us / n))
            exact = np.exp(mu_prime * us)
            err = np.max(np.abs(approx - exact))
            pred = np.max(np.abs(exact * mu_prime * us**2 / (2 * n)))
        elif family in ("1.7a->1.4", "1.6->1.3"):
            approx = np.exp(n * np.log1p(us / n))
            exact = np.exp(us)
            err = np.max(np.abs(approx - exact))
            pred = np.max(np.abs(exact * us**2 / (2 * n)))
            if family == "1.6->1.3":
                err = max(err, np.max(np.abs(n * np.log1p(us / n) - us)))
                pred = max(pred, 1 / (2 * n))
        else:
            raise ValueError(f"unknown limit family {family!r}")
        errors.append(float(err))
        predicted.append(float(pred))
    return LimitReport(family, mu_prime, list(nu_seq), errors, predicted)


@dataclass
class ReductionReport:
    mu_prime: complex
    nu_prime: complex | None
    d_constant: complex
    K_constant: complex | None
    max_residual: float

    @property
    def ok(self) -> bool:
        return self.max_residual < 1e-8


def check_complex_reduction(mu_val: float, nu_val: float | None = None, samples: int = 50,
                            seed: int = 0) -> ReductionReport:
    """Apply the complex map to case 2.7 (or 2.8 when ``nu_val`` is None).

    The image is compared against c_d u~^mu' and c_K u~^(nu'+1) with the
    constants read off at a reference sample.
    """
    d = sp.exp(mu_val * sp.atan(u)) / (u**2 + 1)
    K = 0 if nu_val is None else sp.sqrt(u**2 + 1) * sp.exp(nu_val * sp.atan(u))
    eq = DcEquation(d, None, K)
    image = apply_potential(complex_reduction_27(), eq)
    mu_p = -1j * mu_val / 2 - 1
    nu_p = None if nu_val is None else -1j * nu_val / 2 - 0.5
    rng = np.random.default_rng(seed)
    # original u near the positive real axis keeps u~ off the principal branch cut
    u0 = rng.uniform(0.3, 2.7, samples + 1) + 1j * rng.uniform(-0.05, 0.05, samples + 1)
    ut = (u0 - 1j) / (u0 + 1j)
    fd, fK = symexpr.compile_exprs([image.d, image.K], [u])(ut)
    ratio_d = fd / ut**mu_p
    cd = ratio_d[0]
    worst = float(np.max(np.abs(ratio_d[1:] - cd) / abs(cd)))
    cK = None
    if nu_p is not None:
        ratio_K = fK / ut ** (nu_p + 1)
        cK = ratio_K[0]
        worst = max(worst, float(np.max(np.abs(ratio_K[1:] - cK) / abs(cK))))
    elif np.max(np.abs(fK)) > 0:
        worst = max(worst, float(np.max(np.abs(fK))))
    return ReductionReport(mu_p, nu_p, complex(cd), None if cK is None else complex(cK), worst)
