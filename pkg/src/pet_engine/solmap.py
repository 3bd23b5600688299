"""Action of equivalence transformations on exact solutions.

Solutions are pushed through changes of variables as parametric surfaces
(t, X(t,s), U(t,s), V(t,s)) where s is the original x.  Evaluating an image
at (t~, x~) inverts X(t, .) by safeguarded Newton iterations, which keeps the
image exact to round-off and lets finite differences act on it like on any
other function.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping

import numpy as np
import sympy as sp
from scipy.integrate import quad, solve_ivp
from scipy.optimize import least_squares

from . import symexpr
from .catalog import (Arrow, Catalog, ClosedFormSolution, arrow_solution, case, evaluate_predicate,
                      load_catalog)
from .equivgroups import (PointChangeOfVariables, PotentialEquivTransform, apply_potential,
                          check_complex_reduction, hodograph, match_modulo_conserved,
                          pushforward_residual, transformation_three)
from .model import DcEquation, scalar_residual
from .symexpr import Expr, t, u, v, x

FAST_DIFFUSION = DcEquation(u**-1, sp.Integer(0), sp.Integer(0), {}, "1.7a")
CLOSED_FORM_TOL = 1e-10
NUMERIC_TOL = 1e-6
MIN_ORDER = 1.8
ROUNDOFF = 1e-14
MATCH_TOL = 1e-6

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)


class SolmapError(ValueError):
    pass


def _gauss(f: Callable, a, b) -> np.ndarray:
    """Elementwise integral of f over [a, b]; f receives nodes with a trailing axis."""
    a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
    half = (b - a)[..., None] / 2
    nodes = (a + b)[..., None] / 2 + half * _GL_NODES
    return np.sum(f(nodes) * _GL_WEIGHTS, axis=-1) * half[..., 0]


def _real(vals, tol: float = 1e-10) -> np.ndarray:
    vals = np.asarray(vals)
    if np.iscomplexobj(vals):
        bad = np.abs(vals.imag) > tol * (1 + np.abs(vals.real))
        out = vals.real.copy()
        out[bad] = np.nan
        return out
    return vals.astype(float)


def _flux(eq: DcEquation, U: Expr) -> Expr:
    """d(u) u_x - K(u) along u = U(t, x)."""
    d, K = eq.bound(eq.d), eq.bound(eq.K_expr)
    return d.subs(u, U) * sp.diff(U, x) - K.subs(u, U)


def _closed_residual(eq: DcEquation, U: Expr) -> Expr:
    return sp.diff(U, t) - sp.diff(_flux(eq, U), x)


# ---------------------------------------------------------------------------
# grids


@dataclass
class GridSolution:
    """Values of u (and optionally v) on a rectangular (t, x) grid."""

    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    v: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t, self.x = np.asarray(self.t, float), np.asarray(self.x, float)
        if np.any(np.diff(self.t) <= 0) or np.any(np.diff(self.x) <= 0):
            raise SolmapError("grid axes must be strictly increasing")
        if self.u.shape != (len(self.t), len(self.x)):
            raise SolmapError("u must have shape (len(t), len(x))")
        if self.v is not None and self.v.shape != self.u.shape:
            raise SolmapError("v must have the shape of u")

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.t, self.x, indexing="ij")

    def constant_sign(self) -> bool:
        return bool(np.all(self.u > 0) or np.all(self.u < 0))

    def header(self) -> dict:
        cols = ["t", "x", "u"] + (["v"] if self.v is not None else [])
        return {"columns": cols, "nt": len(self.t), "nx": len(self.x),
                "t": [float(self.t[0]), float(self.t[-1])],
                "x": [float(self.x[0]), float(self.x[-1])], **self.meta}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header()["columns"])
        TT, XX = self.mesh()
        cols = [TT.ravel(), XX.ravel(), self.u.ravel()] + ([self.v.ravel()] if self.v is not None else [])
        for row in zip(*cols):
            w.writerow([repr(float(c)) for c in row])
        return buf.getvalue()

    def save(self, stem: str | Path) -> tuple[Path, Path]:
        stem = Path(stem)
        csv_path, json_path = stem.with_suffix(".csv"), stem.with_suffix(".json")
        csv_path.write_text(self.to_csv())
        json_path.write_text(json.dumps(self.header(), indent=2) + "\n")
        return csv_path, json_path


# ---------------------------------------------------------------------------
# potentials


@dataclass
class Potential:
    """v(t, x) with v_x = u and v_t = d u_x - K, normalized to v(t0, x0) = v0."""

    u: Expr
    flux: Expr
    expr: Expr | None
    x0: float
    t0: float

    def __post_init__(self):
        fu, fut, ff = (symexpr.compile_exprs([e], [t, x]) for e in
                       (self.u, sp.diff(self.u, t), self.flux))
        self._u = lambda a, b: _real(fu(a, b)[0])
        self._ut = lambda a, b: _real(fut(a, b)[0])
        self._flux = lambda a, b: _real(ff(a, b)[0])
        if self.expr is not None:
            fv = symexpr.compile_exprs([self.expr], [t, x])
            self._v = lambda a, b: fv(a, b)[0].real

    @property
    def symbolic(self) -> bool:
        return self.expr is not None

    def __call__(self, tt, xx) -> np.ndarray:
        tt, xx = np.broadcast_arrays(np.asarray(tt, float), np.asarray(xx, float))
        if self.expr is not None:
            return self._v(tt, xx)
        along_x = _gauss(lambda s: self._u(tt[..., None], s), self.x0, xx)
        along_t = _gauss(lambda s: self._flux(s, self.x0), self.t0, tt)
        return along_x + along_t

    def residuals(self, tt, xx, checks: int = 12) -> tuple[float, float]:
        """Max |v_x - u| and |v_t - (d u_x - K)|.

        Closed forms are differentiated symbolically.  For quadrature
        potentials the first entry compares v with adaptive quadrature of u at
        a few points and the second uses the quadrature of u_t.
        """
        tt, xx = np.broadcast_arrays(np.asarray(tt, float), np.asarray(xx, float))
        if self.expr is not None:
            fx, ft = symexpr.compile_exprs([sp.diff(self.expr, x) - self.u,
                                            sp.diff(self.expr, t) - self.flux], [t, x])(tt, xx)
            return float(np.max(np.abs(fx))), float(np.max(np.abs(ft)))
        pick = np.linspace(0, tt.size - 1, min(checks, tt.size)).astype(int)
        tp, xp = tt.ravel()[pick], xx.ravel()[pick]
        ref = np.array([quad(lambda s: float(self._u(a, s)), self.x0, b, epsabs=1e-13, epsrel=1e-13)[0]
                        + quad(lambda s: float(self._flux(s, self.x0)), self.t0, a, epsabs=1e-13,
                               epsrel=1e-13)[0] for a, b in zip(tp, xp)])
        vt = _gauss(lambda s: self._ut(tt[..., None], s), self.x0, xx) + self._flux(tt, self.x0)
        return (float(np.max(np.abs(self(tp, xp) - ref))),
                float(np.max(np.abs(vt - self._flux(tt, xx)))))


_T_POS, _X_REAL = sp.Symbol("t", positive=True), sp.Symbol("x", real=True)
MAX_PRIMITIVE_OPS = 30


def _antiderivative_x(U: Expr) -> Expr | None:
    """Compact x-antiderivative, or None when only a piecewise or large one exists."""
    e = U.subs({t: _T_POS, x: _X_REAL}, simultaneous=True)
    try:
        V = sp.integrate(e, _X_REAL, risch=False)
    except Exception:  # pragma: no cover - sympy internals
        return None
    if V.has(sp.Integral, sp.Piecewise, sp.floor) or sp.count_ops(V) > MAX_PRIMITIVE_OPS:
        return None
    return V.subs({_T_POS: t, _X_REAL: x}, simultaneous=True)


def _constant_imaginary(expr: Expr, tt, xx) -> bool:
    (vals,) = symexpr.compile_exprs([expr], [t, x])(tt, xx)
    return bool(np.all(np.isfinite(vals)) and np.ptp(vals.imag) < 1e-12)


def lift_to_potential(eq: DcEquation, sol: ClosedFormSolution, tol: float = 1e-9,
                      n: int = 12) -> Potential:
    """Potential v of ``sol`` for the system v_x = u, v_t = d u_x - K.

    The x-antiderivative comes from the primitive table when possible, the
    t-dependent term is pinned by v_t = d u_x - K at a reference abscissa.
    Otherwise v is assembled by quadrature from (t0, x0).
    """
    if sol.t_box is None or sol.x_box is None:
        raise SolmapError(f"solution {sol.name} has no domain box")
    U = sol.u
    flux = _flux(eq, U)
    x0, t0 = float(np.mean(sol.x_box)), float(sol.t_box[0])
    tt, xx = sol.grid(n)
    V = _antiderivative_x(U)
    pot = None
    if V is not None and _constant_imaginary(V, tt, xx):
        r = sp.diff(V, t) - flux
        (rv,) = symexpr.compile_exprs([r], [t, x])(tt, xx)
        if np.all(np.isfinite(rv)) and np.max(np.ptp(rv, axis=1)) < 1e-10 * (1 + np.max(np.abs(rv))):
            r0 = symexpr.normalize(r.subs(x, sp.Float(x0)))
            c = _t_integral(r0, sol.t_box)
            if c is not None:
                expr = symexpr.normalize(V - c)
                shift = complex(expr.subs({t: sp.Float(t0), x: sp.Float(x0)}).evalf())
                if abs(shift.imag) > 0:
                    expr = symexpr.normalize(expr - sp.I * shift.imag)
                pot = Potential(U, flux, _tidy(expr), x0, t0)
    if pot is None:
        pot = Potential(U, flux, None, x0, t0)
    res = max(pot.residuals(tt, xx))
    if not res < tol:
        raise SolmapError(f"potential of {sol.name} fails the potential system: residual {res:.3g}")
    return pot


def _t_integral(r0: Expr, t_box) -> Expr | None:
    """Symbolic c(t) with c' = r0, tried only for small integrands."""
    ts = np.linspace(*t_box, 7)
    (vals,) = symexpr.compile_exprs([r0], [t])(ts)
    if np.max(np.abs(vals)) < 1e-12:
        return sp.Integer(0)
    r0 = sp.cancel(sp.expand_log(r0, force=True))
    if not r0.has(t):
        return r0 * t
    if sp.count_ops(r0) > 12:
        return None
    try:
        c = sp.integrate(r0.subs(t, _T_POS), _T_POS, risch=False).subs(_T_POS, t)
    except Exception:  # pragma: no cover
        return None
    return None if c.has(sp.Integral, sp.Piecewise) else c


def _tidy(expr: Expr) -> Expr:
    simple = sp.simplify(expr) if sp.count_ops(expr) < 25 else expr
    return simple if sp.count_ops(simple) <= sp.count_ops(expr) else expr


# ---------------------------------------------------------------------------
# parametric surfaces and their images


SurfaceFn = Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]]


@dataclass
class MappedSolution:
    """Image of a solution, stored as the surface s -> (X, U, V) over the source time.

    ``a``, ``b`` give the image time t~ = a t + b; ``equation`` is the
    equation the image is expected to satisfy.
    """

    fn: SurfaceFn
    t_box: tuple[float, float]
    s_box: tuple[float, float]
    a: float = 1.0
    b: float = 0.0
    equation: DcEquation | None = None
    meta: dict = field(default_factory=dict)
    _window: tuple | None = field(default=None, repr=False, compare=False)

    @classmethod
    def from_closed_form(cls, U: Expr, V: Potential | Expr, t_box, s_box,
                         equation: DcEquation | None = None, meta=None) -> "MappedSolution":
        (fu,) = [symexpr.compile_exprs([U], [t, x])]
        if isinstance(V, Potential):
            fv = V
        else:
            cv = symexpr.compile_exprs([V], [t, x])
            fv = lambda a, b: _real(cv(a, b)[0])  # noqa: E731

        def fn(tt, ss):
            return ss, _real(fu(tt, ss)[0]), fv(tt, ss), np.ones_like(ss)

        return cls(fn, tuple(map(float, t_box)), tuple(map(float, s_box)), 1.0, 0.0, equation,
                   dict(meta or {}))

    def then(self, change: PointChangeOfVariables | PotentialEquivTransform,
             equation: DcEquation | None = None, label: str = "") -> "MappedSolution":
        """Image under a change of (t, x, u, v) with t~ affine in t and x~ free of u."""
        if isinstance(change, PotentialEquivTransform):
            if any(isinstance(z, complex) and z.imag for z in change.params()):
                raise SolmapError("complex transformations do not act on real solutions")
            change = change.change_of_variables()
        tn, xn, wn = change.t_new, change.x_new, change.w_new
        vn = change.v_new if change.v_new is not None else v
        if tn.free_symbols - {t} or sp.diff(tn, t, 2) != 0:
            raise SolmapError("the new time must be affine in t")
        if xn.has(u):
            raise SolmapError("the new x must not depend on u")
        ta = float(sp.diff(tn, t))
        tb = float(tn.subs(t, 0))
        if ta == 0:
            raise SolmapError("degenerate time map")
        jac = sp.diff(xn, x) + u * sp.diff(xn, v)
        comp = symexpr.compile_exprs([xn, wn, vn, jac], [t, x, u, v])
        prev, A, B = self.fn, self.a, self.b

        def fn(tt, ss):
            X, U, V, Xs = prev(tt, ss)
            ts = A * tt + B
            Xn, Un, Vn, J = comp(ts, X, U, V)
            return _real(Xn), _real(Un), _real(Vn), _real(J) * Xs

        meta = dict(self.meta)
        meta.setdefault("stages", [])
        meta["stages"] = list(meta["stages"]) + ([label] if label else [])
        return MappedSolution(fn, self.t_box, self.s_box, ta * A, ta * B + tb, equation, meta)

    # --- domain ----------------------------------------------------------
    def t_range(self) -> tuple[float, float]:
        lo, hi = sorted(self.a * np.asarray(self.window()) + self.b)
        return float(lo), float(hi)

    def _common(self, tb, n: int = 33) -> tuple[float, float, float]:
        ts = np.linspace(*tb, n)
        lo_s = self.fn(ts, np.full(n, self.s_box[0]))[0]
        hi_s = self.fn(ts, np.full(n, self.s_box[1]))[0]
        lo, hi = np.minimum(lo_s, hi_s), np.maximum(lo_s, hi_s)
        return float(lo.max()), float(hi.min()), float(np.median(hi - lo))

    def window(self, min_fraction: float = 0.25) -> tuple[float, float]:
        """Source time window over which the image covers a common x-interval.

        The full time box is shrunk about its midpoint until the common
        interval keeps ``min_fraction`` of the typical width.
        """
        if self._window is not None:
            return self._window
        mid, half = np.mean(self.t_box), (self.t_box[1] - self.t_box[0]) / 2
        for _ in range(12):
            tb = (mid - half, mid + half)
            lo, hi, width = self._common(tb)
            if np.isfinite(lo) and np.isfinite(hi) and hi - lo >= min_fraction * width > 0:
                self._window = (float(tb[0]), float(tb[1]))
                return self._window
            half /= 2
        raise SolmapError("image has no common x-interval over the time box")

    def x_range(self) -> tuple[float, float]:
        """x~ interval covered at every time of the window."""
        lo, hi, _ = self._common(self.window())
        return lo, hi

    def monotone(self, n: int = 40) -> bool:
        tt, ss = np.meshgrid(np.linspace(*self.t_box, n), np.linspace(*self.s_box, n), indexing="ij")
        Xs = self.fn(tt, ss)[3]
        return bool(np.all(Xs > 0) or np.all(Xs < 0))

    # --- evaluation ------------------------------------------------------
    def invert(self, tt, xx, maxiter: int = 200) -> tuple[np.ndarray, np.ndarray]:
        """Source (t, s) of image points; nan where (t~, x~) is not covered."""
        tt, xx = np.broadcast_arrays(np.asarray(tt, float), np.asarray(xx, float))
        ts = (tt - self.b) / self.a
        lo = np.full(tt.shape, self.s_box[0])
        hi = np.full(tt.shape, self.s_box[1])
        f_lo = self.fn(ts, lo)[0] - xx
        f_hi = self.fn(ts, hi)[0] - xx
        tpad = 1e-12 * (1 + np.abs(np.asarray(self.t_box)).max())
        ok = (np.sign(f_lo) * np.sign(f_hi) <= 0) & (ts >= self.t_box[0] - tpad) \
            & (ts <= self.t_box[1] + tpad)
        up = f_hi > f_lo
        s = (lo + hi) / 2
        for _ in range(maxiter):
            X, _, _, Xs = self.fn(ts, s)
            f = X - xx
            below = np.where(up, f < 0, f > 0)
            lo = np.where(below, s, lo)
            hi = np.where(below, hi, s)
            with np.errstate(all="ignore"):
                step = f / Xs
            cand = s - step
            bad = ~np.isfinite(cand) | (cand <= np.minimum(lo, hi)) | (cand >= np.maximum(lo, hi))
            new = np.where(bad, (lo + hi) / 2, cand)
            done = np.abs(new - s) <= 2e-16 * (1 + np.abs(s))
            s = new
            if np.all(done | ~ok):
                break
        s = np.where(ok, s, np.nan)
        return ts, s

    def evaluate(self, tt, xx) -> tuple[np.ndarray, np.ndarray]:
        ts, s = self.invert(tt, xx)
        safe = np.where(np.isfinite(s), s, self.s_box[0])
        _, U, V, _ = self.fn(ts, safe)
        bad = ~np.isfinite(s)
        return np.where(bad, np.nan, U), np.where(bad, np.nan, V)

    def __call__(self, tt, xx) -> np.ndarray:
        return self.evaluate(tt, xx)[0]

    def in_domain(self, tt, xx) -> np.ndarray:
        return np.isfinite(self.invert(tt, xx)[1])

    def grid(self, n: int = 50, margin: float = 0.0) -> GridSolution:
        t_lo, t_hi = self.t_range()
        x_lo, x_hi = self.x_range()
        ts = np.linspace(t_lo + margin, t_hi - margin, n)
        xs = np.linspace(x_lo + margin, x_hi - margin, n)
        TT, XX = np.meshgrid(ts, xs, indexing="ij")
        U, V = self.evaluate(TT, XX)
        return GridSolution(ts, xs, U, V, dict(self.meta))


def source_surface(eq: DcEquation, sol: ClosedFormSolution) -> MappedSolution:
    pot = lift_to_potential(eq, sol)
    return MappedSolution.from_closed_form(sol.u, pot, sol.t_box, sol.x_box, eq,
                                           {"source": sol.name})


def transform_solution(sol: ClosedFormSolution, T: PotentialEquivTransform,
                       eq: DcEquation | None = None) -> MappedSolution:
    eq = eq or sol.equation()
    surf = source_surface(eq, sol)
    image = surf.then(T, apply_potential(T, eq), "potential")
    if not image.monotone():
        raise SolmapError(f"x~ is not monotone on the domain of {sol.name}")
    return image


def hodograph_on_solution(eq: DcEquation, sol: ClosedFormSolution) -> MappedSolution:
    """Image of ``sol`` under t~ = t, x~ = v, u~ = 1/u, v~ = x.

    Call ``.grid(n)`` for a rectangular :class:`GridSolution`.
    """
    if not (np.all(sol(*sol.grid(20)) > 0) or np.all(sol(*sol.grid(20)) < 0)):
        raise SolmapError(f"u changes sign on the domain of {sol.name}")
    image = transform_solution(sol, hodograph(), eq)
    image.meta["via"] = "hodograph"
    return image


# ---------------------------------------------------------------------------
# verification


@dataclass
class Verification:
    residual: float
    method: str
    tol: float
    order: float | None = None
    coarse: float | None = None
    points: int = 0
    floor: float = 0.0

    @property
    def ok(self) -> bool:
        if not self.residual < self.tol:
            return False
        # the order is only observable while truncation dominates round-off
        if self.method == "fd" and self.coarse is not None and self.coarse > self.floor:
            return self.order is not None and self.order >= MIN_ORDER
        return True

    def to_json(self) -> dict:
        out = {"residual": self.residual, "method": self.method, "tol": self.tol, "pass": self.ok,
               "points": self.points}
        if self.method == "fd":
            out.update(order=self.order, coarse=self.coarse, floor=self.floor)
        return out


def _coefficients(eq: DcEquation):
    d, k = eq.bound(eq.d), eq.bound(eq.k_expr)
    return symexpr.compile_exprs([d, sp.diff(d, u), k], [u])


def _roundoff_floor(eq: DcEquation, values: np.ndarray, h: float) -> float:
    """Size of the round-off in second differences of ``values`` at spacing h."""
    d = _real(_coefficients(eq)(values)[0])
    scale = np.nanmax(np.abs(values)) * max(1.0, float(np.nanmax(np.abs(d))))
    return float(ROUNDOFF * scale / h**2)


def _fd_residual(eq: DcEquation, f: Callable, tt, xx, h: float) -> np.ndarray:
    """u_t - d u_xx - d_u u_x^2 - k u_x with fourth-order central differences."""
    c = [1 / 12, -2 / 3, 0.0, 2 / 3, -1 / 12]
    c2 = [-1 / 12, 4 / 3, -5 / 2, 4 / 3, -1 / 12]
    offs = (-2, -1, 0, 1, 2)
    xs = [f(tt, xx + o * h) for o in offs]
    ts = [f(tt + o * h, xx) if o else None for o in offs]
    u0 = xs[2]
    ux = sum(ci * vi for ci, vi in zip(c, xs) if ci) / h
    uxx = sum(ci * vi for ci, vi in zip(c2, xs)) / h**2
    ut = sum(ci * vi for ci, vi in zip(c, ts) if ci) / h
    d, dd, k = (_real(z) for z in _coefficients(eq)(u0))
    return ut - d * uxx - dd * ux**2 - k * ux


def _interior(t_range, x_range, n: int, pad: float):
    ts = np.linspace(t_range[0] + pad, t_range[1] - pad, n)
    xs = np.linspace(x_range[0] + pad, x_range[1] - pad, n)
    if ts[0] >= ts[-1] or xs[0] >= xs[-1]:
        raise SolmapError("domain too small for the difference stencil")
    return np.meshgrid(ts, xs, indexing="ij")


def verify_solution(eq: DcEquation, sol, tol: float | None = None, n: int = 50,
                    h: float = 0.01) -> Verification:
    """Max residual of ``eq`` on a grid inside the solution's domain.

    Closed forms are differentiated symbolically.  Other solutions use
    fourth-order differences at spacings h and h/2; the observed order is
    reported and gated whenever the coarse residual is above round-off.
    """
    if isinstance(sol, ClosedFormSolution):
        tol = CLOSED_FORM_TOL if tol is None else tol
        tt, xx = sol.grid(n)
        mask = sol.in_domain(tt, xx)
        if not mask.any():
            raise SolmapError(f"domain box of {sol.name} misses its predicate")
        res = symexpr.normalize(_closed_residual(eq, sol.u))
        (vals,) = symexpr.compile_exprs([res], [t, x])(tt[mask], xx[mask])
        if not np.all(np.isfinite(vals)):
            raise SolmapError(f"singular set of {sol.name} meets the grid")
        return Verification(float(np.max(np.abs(vals))), "symbolic", tol, points=int(mask.sum()))
    tol = NUMERIC_TOL if tol is None else tol
    if isinstance(sol, GridSolution):
        return _verify_grid(eq, sol, tol)
    t_range, x_range = sol.t_range(), sol.x_range()
    tt, xx = _interior(t_range, x_range, n, 2.5 * h)
    coarse = _fd_residual(eq, sol, tt, xx, h)
    fine = _fd_residual(eq, sol, tt, xx, h / 2)
    if not (np.all(np.isfinite(coarse)) and np.all(np.isfinite(fine))):
        raise SolmapError("solution undefined at some stencil points")
    rc, rf = float(np.max(np.abs(coarse))), float(np.max(np.abs(fine)))
    order = float(np.log2(rc / rf)) if rf > 0 and rc > 0 else None
    floor = _roundoff_floor(eq, sol(tt, xx), h / 2)
    return Verification(rf, "fd", tol, order, rc, tt.size, floor)


def _verify_grid(eq: DcEquation, g: GridSolution, tol: float) -> Verification:
    dt, dx = np.diff(g.t), np.diff(g.x)
    if np.ptp(dt) > 1e-9 * dt.mean() or np.ptp(dx) > 1e-9 * dx.mean():
        raise SolmapError("finite-difference verification needs a uniform grid")
    ht, hx = dt.mean(), dx.mean()
    def residual(stride: int) -> np.ndarray:
        U = g.u
        i = np.arange(4, len(g.t) - 4, 2)
        j = np.arange(4, len(g.x) - 4, 2)
        I, J = np.meshgrid(i, j, indexing="ij")
        s = stride
        c = [1 / 12, -2 / 3, 2 / 3, -1 / 12]
        o1 = [-2, -1, 1, 2]
        ux = sum(ci * U[I, J + o * s] for ci, o in zip(c, o1)) / (s * hx)
        ut = sum(ci * U[I + o * s, J] for ci, o in zip(c, o1)) / (s * ht)
        uxx = (-U[I, J + 2 * s] + 16 * U[I, J + s] - 30 * U[I, J] + 16 * U[I, J - s]
               - U[I, J - 2 * s]) / (12 * (s * hx) ** 2)
        dv, ddv, kv = (_real(z) for z in _coefficients(eq)(U[I, J]))
        return ut - dv * uxx - ddv * ux**2 - kv * ux

    if min(len(g.t), len(g.x)) < 13:
        raise SolmapError("grid too small for two-spacing differences")
    fine, coarse = residual(1), residual(2)
    rf, rc = float(np.max(np.abs(fine))), float(np.max(np.abs(coarse)))
    order = float(np.log2(rc / rf)) if rf > 0 and rc > 0 else None
    floor = _roundoff_floor(eq, g.u, min(ht, hx))
    return Verification(rf, "fd", tol, order, rc, fine.size, floor)


def wave_identity(sol: ClosedFormSolution, n: int = 30) -> tuple[float, float]:
    """Fit W(t, x) = lam * u(2t, 2x) for the two-wave form; returns (lam, max error)."""
    if sol.wave is None:
        raise SolmapError(f"solution {sol.name} has no wave form")
    tt, xx = sol.grid(n)
    tt, xx = tt / 2, xx / 2
    mask = sol.in_domain(2 * tt, 2 * xx)
    fw, fu = symexpr.compile_exprs([sol.wave, sol.u], [t, x])(tt[mask], xx[mask])
    w, uu = _real(fw), _real(sol(2 * tt[mask], 2 * xx[mask]))
    lam = float(np.median(w / uu))
    return lam, float(np.max(np.abs(w - lam * uu)))


# ---------------------------------------------------------------------------
# matching


@dataclass
class MatchResult:
    shift: float
    sup_error: float
    reflected: bool
    threshold: float = MATCH_TOL

    @property
    def ok(self) -> bool:
        return self.sup_error < self.threshold

    def to_json(self) -> dict:
        return {"shift": self.shift, "sup_error": self.sup_error, "reflected": self.reflected,
                "pass": self.ok}


def _target_values(g, tt, xx) -> np.ndarray:
    vals = _real(g(tt, xx))
    if hasattr(g, "in_domain"):
        vals = np.where(g.in_domain(tt, xx), vals, np.nan)
    return vals


def _fit_shift(T, X, F, g, sign: float, bracket, steps: int) -> tuple[float, float]:
    pick = np.linspace(0, T.size - 1, min(T.size, 64)).astype(int)
    Tc, Xc, Fc = T.ravel()[pick], X.ravel()[pick], F.ravel()[pick]
    cands = np.linspace(*bracket, steps)
    G = _target_values(g, np.broadcast_to(Tc, (steps, Tc.size)), sign * Xc + cands[:, None])
    err = np.max(np.abs(G - Fc), axis=1)
    err[~np.isfinite(err)] = np.inf
    best = int(np.argmin(err))
    if not np.isfinite(err[best]):
        return float("nan"), float("inf")
    # translation-invariant pieces make many shifts equally good: take the smallest
    if err[best] < 1e-9:
        near = np.flatnonzero(err < 1e-9)
        best = int(near[np.argmin(np.abs(cands[near]))])
    c0 = float(cands[best])
    step = cands[1] - cands[0]
    Tf, Xf, Ff = T.ravel(), X.ravel(), F.ravel()

    def resid(c):
        r = _target_values(g, Tf, sign * Xf + c[0]) - Ff
        return np.where(np.isfinite(r), r, 1e3)

    fit = least_squares(resid, [c0], bounds=([c0 - 2 * step], [c0 + 2 * step]), xtol=1e-15,
                        ftol=1e-15, gtol=1e-15)
    c = float(fit.x[0])
    sup = np.max(np.abs(_target_values(g, Tf, sign * Xf + c) - Ff))
    return c, float(sup) if np.isfinite(sup) else float("inf")


def match_up_to_x_translation(f, g, reflect: bool | None = False, bracket=(-10.0, 10.0),
                              steps: int = 4001, n: int = 24,
                              threshold: float = MATCH_TOL) -> MatchResult:
    """Fit c with f(t, x) = g(t, +-x + c) in the sup norm.

    ``f`` is a :class:`GridSolution` or anything with ``grid(n)``; ``g`` is a
    callable (closed forms honour their domain predicate).  ``reflect=None``
    tries the plain translation first and the reflected one if that fails.
    """
    grid = f if isinstance(f, GridSolution) else f.grid(n)
    if isinstance(grid, GridSolution):
        (T, X), F = grid.mesh(), grid.u
    else:
        T, X = grid
        F = np.where(f.in_domain(T, X), np.real(f(T, X)), np.nan)
    keep = np.isfinite(F)
    T, X, F = T[keep], X[keep], F[keep]
    if F.size == 0:
        raise SolmapError("no finite values to match")
    options = [False, True] if reflect is None else [bool(reflect)]
    best = None
    for refl in options:
        c, sup = _fit_shift(T, X, F, g, -1.0 if refl else 1.0, bracket, steps)
        res = MatchResult(c, sup, refl, threshold)
        if best is None or res.sup_error < best.sup_error:
            best = res
        if res.ok:
            return res
    return best


# ---------------------------------------------------------------------------
# arrows


@dataclass
class ArrowResult:
    arrow: Arrow
    forward: MatchResult
    back: MatchResult | None
    time_reversed: bool = False

    @property
    def ok(self) -> bool:
        return self.forward.ok and (self.back is None or self.back.ok)

    def to_json(self) -> dict:
        out = {"source": self.arrow.source.sol_id, "target": self.arrow.target.sol_id}
        out.update({k: _num(v) for k, v in self.arrow.target.constants.items()})
        out.update(source_branch=self.arrow.source.describe(),
                   target_branch=self.arrow.target.describe(),
                   self_loop=self.arrow.self_loop,
                   shift=self.forward.shift, sup_error=self.forward.sup_error,
                   reflected=self.forward.reflected, time_reversed=self.time_reversed)
        if self.back is not None:
            out.update(round_trip_error=self.back.sup_error, round_trip_shift=self.back.shift)
        out["pass"] = self.ok
        return out


def _num(val):
    return int(val) if float(val).is_integer() else float(val)


def realized(g: ClosedFormSolution, shift: float, reflected: bool, t_range, x_range) -> ClosedFormSolution:
    """g(t, +-x + c) on the matched rectangle, as a closed form."""
    arg = (-x if reflected else x) + sp.Float(shift)
    pred = None
    if g.predicate:
        pred = _substitute_predicate(g.predicate, {x: arg})
    return replace(g, u=symexpr.normalize(g.u.subs(x, arg)), t_box=tuple(t_range),
                   x_box=tuple(x_range), predicate=pred)


def _substitute_predicate(text: str, subs: Mapping) -> str:
    rel = sp.sympify(text, locals={"abs": sp.Abs, "t": t, "x": x})
    return str(rel.subs(subs, simultaneous=True))


def map_arrow(arrow: Arrow, eq: DcEquation = FAST_DIFFUSION, round_trip: bool = True,
              catalog: Catalog | None = None, n: int = 24) -> ArrowResult:
    """Map the arrow's source by the hodograph and match the target up to x-translation."""
    source = arrow_solution(arrow.list_id, arrow.source, catalog)
    target = arrow_solution(arrow.list_id, arrow.target, catalog)
    image = hodograph_on_solution(eq, source)
    grid = image.grid(n)
    fwd = match_up_to_x_translation(grid, target, reflect=arrow.target.reflect or None, n=n)
    reversed_t = False
    if not fwd.ok:
        # the remaining discrete element of G^max: t -> -t, u -> -u
        alt = gmax_action(0.0, 0.0, -1.0, 1.0, target)
        alt_fit = match_up_to_x_translation(grid, alt, reflect=None, n=n)
        if alt_fit.ok:
            target, fwd, reversed_t = alt, alt_fit, True
    back = None
    if round_trip and fwd.ok:
        g = realized(target, fwd.shift, fwd.reflected, (grid.t[0], grid.t[-1]),
                     (grid.x[0], grid.x[-1]))
        g = replace(g, predicate=None)
        back = match_up_to_x_translation(hodograph_on_solution(eq, g).grid(n), source,
                                         reflect=None, n=n)
    return ArrowResult(arrow, fwd, back, reversed_t)


# ---------------------------------------------------------------------------
# symmetry group of the fast diffusion equation


def gmax_action(e1: float, e2: float, e3: float, e4: float,
                sol: ClosedFormSolution) -> ClosedFormSolution:
    """u~(t, x) = e4^2 / e3 * u(e3 t + e1, e4 x + e2)."""
    if e3 * e4 == 0:
        raise SolmapError("e3 * e4 must be nonzero")
    E1, E2, E3, E4 = (sp.nsimplify(e) if float(e).is_integer() else sp.Float(e)
                      for e in (e1, e2, e3, e4))
    new_u = symexpr.normalize(E4**2 / E3 * sol.u.subs({t: E3 * t + E1, x: E4 * x + E2},
                                                      simultaneous=True))
    t_box = tuple(sorted(float(b) for b in (np.asarray(sol.t_box) - e1) / e3)) if sol.t_box else None
    x_box = tuple(sorted(float(b) for b in (np.asarray(sol.x_box) - e2) / e4)) if sol.x_box else None
    pred = None
    if sol.predicate:
        pred = _substitute_predicate(sol.predicate, {t: E3 * t + E1, x: E4 * x + E2})
    return replace(sol, u=new_u, t_box=t_box, x_box=x_box, predicate=pred)


# ---------------------------------------------------------------------------
# the implicit solution


@dataclass
class ImplicitSolution8:
    """u = t th(w) - t + mu t e^(-th(w)), w = x - ln|t|, th' = th - 1 + mu e^(-th)."""

    mu: float
    theta0: float = 3.0
    omega0: float = 0.0
    omega_span: tuple[float, float] = (-6.0, 2.0)
    t_box: tuple[float, float] = (0.5, 1.5)

    def __post_init__(self):
        if self.mu == 0:
            raise SolmapError("mu = 0 is solution 3) itself")
        if abs(self._f(self.theta0)) < 1e-8:
            raise SolmapError("anchor sits on an equilibrium of the profile equation")
        lo, hi = self.omega_span
        blow = lambda w, th: abs(th[0]) - 60.0  # noqa: E731
        blow.terminal = True
        kw = dict(method="DOP853", rtol=1e-13, atol=1e-13, dense_output=True, events=blow)
        rhs = lambda w, th: [self._f(th[0])]  # noqa: E731
        self._fwd = solve_ivp(rhs, (self.omega0, hi), [self.theta0], **kw)
        self._bwd = solve_ivp(rhs, (self.omega0, lo), [self.theta0], **kw)
        if self._fwd.status == 1 or self._bwd.status == 1:
            raise SolmapError("profile blows up inside the requested span")
        if not (self._fwd.success and self._bwd.success):
            raise SolmapError("profile integration failed")

    def _f(self, th):
        return th - 1 + self.mu * np.exp(-th)

    def theta(self, omega) -> np.ndarray:
        omega = np.asarray(omega, float)
        out = np.full(omega.shape, np.nan)
        hi = (omega >= self.omega0) & (omega <= self.omega_span[1])
        lo = (omega < self.omega0) & (omega >= self.omega_span[0])
        if hi.any():
            out[hi] = self._fwd.sol(omega[hi])[0]
        if lo.any():
            out[lo] = self._bwd.sol(omega[lo])[0]
        return out

    def __call__(self, tt, xx) -> np.ndarray:
        tt, xx = np.broadcast_arrays(np.asarray(tt, float), np.asarray(xx, float))
        th = self.theta(xx - np.log(np.abs(tt)))
        return tt * th - tt + self.mu * tt * np.exp(-th)

    def in_domain(self, tt, xx) -> np.ndarray:
        w = np.asarray(xx, float) - np.log(np.abs(np.asarray(tt, float)))
        return (w >= self.omega_span[0]) & (w <= self.omega_span[1])

    def t_range(self) -> tuple[float, float]:
        return self.t_box

    def x_range(self, margin: float = 0.1) -> tuple[float, float]:
        lo = self.omega_span[0] + np.log(self.t_box[1]) + margin
        hi = self.omega_span[1] + np.log(self.t_box[0]) - margin
        return float(lo), float(hi)

    def grid(self, n: int = 50) -> GridSolution:
        ts = np.linspace(*self.t_range(), n)
        xs = np.linspace(*self.x_range(), n)
        TT, XX = np.meshgrid(ts, xs, indexing="ij")
        return GridSolution(ts, xs, self(TT, XX), None, {"source": f"(8)[mu={self.mu:g}]"})

    def implicit_error(self, n: int = 9) -> float:
        """Max |int_{th0}^{th(w)} dth / f(th) - (w - w0)| over sample points."""
        ws = np.linspace(self.omega_span[0] + 0.5, self.omega_span[1] - 0.5, n)
        errs = [abs(quad(lambda s: 1 / self._f(s), self.theta0, th, epsabs=1e-13, epsrel=1e-13)[0]
                    - (w - self.omega0)) for w, th in zip(ws, self.theta(ws))]
        return float(max(errs))

    def invariance_error(self, s: float = 0.3, n: int = 20) -> float:
        """Max |e^s u(e^-s t, x - s) - u(t, x)| on the grid (the action of t d_t + d_x + u d_u)."""
        ts = np.linspace(*self.t_range(), n)
        xs = np.linspace(*self.x_range(), n)
        TT, XX = np.meshgrid(ts, xs, indexing="ij")
        ok = self.in_domain(np.exp(-s) * TT, XX - s) & self.in_domain(TT, XX)
        moved = np.exp(s) * self(np.exp(-s) * TT[ok], XX[ok] - s)
        return float(np.max(np.abs(moved - self(TT[ok], XX[ok]))))


def implicit_solution_8(mu: float, theta0: float = 3.0) -> ImplicitSolution8:
    return ImplicitSolution8(float(mu), theta0)


# ---------------------------------------------------------------------------
# invariance of an equation under a potential transformation


def _probe_box(T: PotentialEquivTransform) -> dict:
    if T.p2 != 0:
        pole = complex(T.q2 / T.p2)
        if abs(pole.imag) < 1e-14 and 0.2 < pole.real < 3.0:
            return {"u": (0.1 * pole.real, 0.6 * pole.real)}
    return {"u": (0.3, 2.7)}


def is_invariant_under(eq: DcEquation, T: PotentialEquivTransform, boxes: Mapping | None = None) -> bool:
    """Whether T maps ``eq`` to itself up to the conserved-form equivalence group."""
    image = apply_potential(T, eq)
    return match_modulo_conserved(image, eq, boxes=boxes or _probe_box(T)).ok


# ---------------------------------------------------------------------------
# linearization chain


@dataclass
class ChainLink:
    source: str
    target: str
    via: str
    ok: bool
    residual: float
    detail: str = ""

    def to_json(self) -> dict:
        return {"source": self.source, "target": self.target, "via": self.via,
                "residual": self.residual, "detail": self.detail, "pass": self.ok}


def _case_equation(label: str, params: Mapping | None = None) -> DcEquation:
    return case(label).equation(**dict(params or {}))


def _exact_link(src: str, tgt: str, tgt_params=None) -> ChainLink:
    a = _case_equation(src)
    b = _case_equation(tgt, tgt_params)
    image = apply_potential(hodograph(), a)
    dd = sp.simplify(image.d - b.bound(b.d))
    dK = sp.simplify(image.K_expr - b.bound(b.K_expr))
    ok = dd == 0 and dK == 0
    return ChainLink(src, tgt, "hodograph", bool(ok), 0.0 if ok else float("inf"),
                     f"d~ = {symexpr.to_text(image.d)}, K~ = {symexpr.to_text(image.K_expr)}")


def _three_link(src: str, tgt: str, tgt_params=None, samples: int = 200) -> ChainLink:
    a = _case_equation(src)
    b = _case_equation(tgt, tgt_params)
    rep = pushforward_residual(transformation_three(), scalar_residual(a), scalar_residual(b),
                               samples=samples, tol=1e-8, boxes={"u": (0.3, 2.7)})
    return ChainLink(src, tgt, "three", rep.ok, rep.max_residual, f"{rep.samples} pushed jets")


@dataclass
class ChainStage:
    label: str
    verification: Verification
    exact_error: float | None = None

    @property
    def ok(self) -> bool:
        return self.verification.ok and (self.exact_error is None or self.exact_error < 1e-8)

    def to_json(self) -> dict:
        out = {"stage": self.label, **self.verification.to_json()}
        if self.exact_error is not None:
            out["exact_error"] = self.exact_error
        out["pass"] = self.ok
        return out


BURGERS_SEED = "exp(x + t) + exp(2*x + 4*t)"


def cole_hopf_chain(w: str = BURGERS_SEED, t_box=(0.1, 0.4), x_box=(-0.5, 0.5),
                    n: int = 50) -> list[ChainStage]:
    """Push the Burgers solution u = w_x / w through hodograph, transformation_three and hodograph.

    ``w`` is a positive heat solution with w_x > 0.  The last stage must be
    the heat solution w_x, sampled without any shift.
    """
    W = symexpr.parse(w)
    if not symexpr.is_zero_numeric(sp.diff(W, t) - sp.diff(W, x, 2), samples=20):
        raise SolmapError("seed must solve the heat equation")
    U = symexpr.normalize(sp.diff(W, x) / W)
    V = sp.log(W)
    burgers = _case_equation("2.11")
    stages = []
    sol = ClosedFormSolution("chain", "burgers", U, {}, tuple(t_box), tuple(x_box),
                             equation_label="2.11")
    stages.append(ChainStage("2.11", verify_solution(burgers, sol, n=n)))
    surf = MappedSolution.from_closed_form(U, V, t_box, x_box, burgers, {"source": "burgers"})
    surf = surf.then(hodograph(), _case_equation("2.10"), "hodograph")
    stages.append(ChainStage("2.10", verify_solution(surf.equation, surf, n=n)))
    surf = surf.then(transformation_three(), _case_equation("1.7a", {"mu": -2}), "three")
    stages.append(ChainStage("1.7a[mu=-2]", verify_solution(surf.equation, surf, n=n)))
    surf = surf.then(hodograph(), _case_equation("2.12"), "hodograph")
    heat = surf.grid(n)
    TT, XX = heat.mesh()
    (wx,) = symexpr.compile_exprs([sp.diff(W, x)], [t, x])(TT, XX)
    exact = float(np.nanmax(np.abs(heat.u - wx.real)))
    stages.append(ChainStage("2.12", verify_solution(surf.equation, surf, n=n), exact))
    return stages


def chain_links(with_complex: bool = False, catalog: Catalog | None = None) -> list[ChainLink]:
    """Equation-level links of the linearization chain, plus the complex reduction."""
    catalog = catalog or load_catalog()
    out = []
    for item in catalog.raw["chain"]:
        if item["via"] == "hodograph":
            out.append(_exact_link(item["source"], item["target"], item.get("target_params")))
        elif item["via"] == "three":
            out.append(_three_link(item["source"], item["target"], item.get("target_params")))
        else:
            raise SolmapError(f"unknown chain link {item['via']!r}")
    if with_complex:
        rep = check_complex_reduction(0.8, 0.6)
        out.append(ChainLink("2.7", "2.5*'", "complex27", rep.ok, rep.max_residual,
                             f"mu' = {rep.mu_prime:.6g}, nu' = {rep.nu_prime:.6g}"))
    return out


def predicate_holds(text: str | None, tt, xx) -> np.ndarray:
    if not text:
        return np.ones(np.broadcast(tt, xx).shape, dtype=bool)
    return evaluate_predicate(text, tt, xx)


def three_image(eq: DcEquation) -> DcEquation:
    """Image of ``eq`` under t~ = t, x~ = e^x, u~ = e^(-x) u, when it stays in the class.

    Writes u = X W(t, X) with X = e^x and reads off d~(W) and k~(W) from the
    resulting evolution equation; raises when the image depends on X.
    """
    X, W, WX, WXX = sp.symbols("X W W_X W_XX", positive=True)
    d, k = eq.bound(eq.d), eq.bound(eq.k_expr)
    U = X * W
    Ux = X * (W + X * WX)
    Uxx = X * (W + 3 * X * WX + X**2 * WXX)
    rhs = (d.subs(u, U) * Uxx + sp.diff(d, u).subs(u, U) * Ux**2 + k.subs(u, U) * Ux) / X
    rhs = sp.expand(sp.powsimp(sp.expand(rhs), force=True))
    boxes = {"X": (0.5, 2.0), "W": (0.3, 2.7), "W_X": (-1.5, 1.5), "W_XX": (-1.5, 1.5)}
    if not symexpr.is_zero_numeric(sp.diff(rhs, X), samples=30, boxes=boxes):
        raise SolmapError("the image depends on x~ and leaves the class")
    rhs = rhs.subs(X, 1)
    D = sp.diff(rhs, WXX)
    rest = sp.expand(rhs - D * WXX - sp.diff(D, W) * WX**2)
    kk = sp.cancel(rest / WX)
    if D.has(WX, WXX) or kk.has(WX, WXX):
        raise SolmapError("the image is not of diffusion-convection form")
    back = {W: u}
    return DcEquation(symexpr.normalize(D.subs(back)), symexpr.normalize(kk.subs(back)), None, {})
