"""Expression core.

Expressions are plain sympy trees; this module pins down the vocabulary
(variables, jet coordinates, parameters), the text grammar, and a numeric
zero oracle that the rest of the engine uses instead of symbolic
simplification.
"""
from __future__ import annotations

import re
from functools import lru_cache
from typing import Iterable, Mapping

import numpy as np
import sympy as sp

Expr = sp.Expr

t, x, u, v = sp.symbols("t x u v")
VARIABLES = (t, x, u, v)

_JET_NAMES = (
    "u_t", "u_x", "u_xx", "u_xxx", "u_xxxx", "u_tx", "u_txx", "u_tt",
    "v_t", "v_x", "v_xx", "v_xxx", "v_xxxx", "v_tx", "v_txx", "v_tt",
)
JETS = {name: sp.Symbol(name) for name in _JET_NAMES}

PARAMETER_NAMES = (
    ("mu", "nu")
    + tuple(f"eps{i}" for i in range(1, 9))
    + tuple(f"epsp{i}" for i in range(1, 5))
    + tuple(f"epspp{i}" for i in range(1, 5))
)
mu, nu = sp.symbols("mu nu")

# Functional parameters: arbitrary solutions of the linear heat equation.
h_fn = sp.Function("h")
phi_fn = sp.Function("phi")


def jet(dep: str, orders: str) -> sp.Symbol:
    """Jet coordinate symbol, e.g. ``jet("u", "xt")`` -> ``u_tx``."""
    key = f"{dep}_{''.join(sorted(orders))}"
    if key not in JETS:
        JETS[key] = sp.Symbol(key)
    return JETS[key]


def functional_symbols() -> dict[str, Expr]:
    h = h_fn(t, x)
    phi = phi_fn(t, v)
    return {
        "h": h,
        "h_t": sp.Derivative(h, t),
        "h_x": sp.Derivative(h, x),
        "h_xx": sp.Derivative(h, x, 2),
        "phi": phi,
        "phi_t": sp.Derivative(phi, t),
        "phi_v": sp.Derivative(phi, v),
        "phi_vv": sp.Derivative(phi, v, 2),
    }


class ParseError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class EvaluationError(ArithmeticError):
    pass


class UndecidableError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# parsing

_FUNCTIONS = {
    "exp": sp.exp,
    "ln": sp.log,
    "sqrt": sp.sqrt,
    "arctan": sp.atan,
    "sin": sp.sin,
    "cos": sp.cos,
    "tan": sp.tan,
    "cot": sp.cot,
    "sinh": sp.sinh,
    "cosh": sp.cosh,
    "tanh": sp.tanh,
    "coth": sp.coth,
}

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+[eE][+-]?\d+|\d+)"
    r"|(?P<id>[a-zA-Z_][a-zA-Z0-9_]*)|(?P<op>[-+*/^()]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            start = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise ParseError(f"unexpected character {text[start]!r}", start)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text, symbols):
        self.tokens = _tokenize(text)
        self.i = 0
        self.symbols = symbols

    def peek(self):
        return self.tokens[self.i]

    def take(self, value=None):
        tok = self.tokens[self.i]
        if value is not None and tok[1] != value:
            raise ParseError(f"expected {value!r}, found {tok[1] or 'end of input'!r}", tok[2])
        self.i += 1
        return tok

    def parse(self):
        if self.peek()[0] == "end":
            raise ParseError("empty expression", 0)
        e = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise ParseError(f"unexpected token {tok[1]!r}", tok[2])
        return e

    def expr(self):
        e = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.term()
            e = e + rhs if op == "+" else e - rhs
        return e

    def term(self):
        e = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.unary()
            e = e * rhs if op == "*" else e / rhs
        return e

    def unary(self):
        tok = self.peek()
        if tok[0] == "op" and tok[1] in ("+", "-"):
            self.take()
            operand = self.unary()
            return -operand if tok[1] == "-" else operand
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            return sp.Pow(base, self.unary())
        return base

    def atom(self):
        kind, text, offset = self.take()
        if kind == "num":
            if re.fullmatch(r"\d+", text):
                return sp.Integer(text)
            return sp.Float(float(text))
        if kind == "id":
            if text in _FUNCTIONS and self.peek()[1] == "(":
                self.take("(")
                arg = self.expr()
                self.take(")")
                return _FUNCTIONS[text](arg)
            if text in self.symbols:
                return self.symbols[text]
            raise ParseError(f"unknown identifier {text!r}", offset)
        if kind == "op" and text == "(":
            e = self.expr()
            self.take(")")
            return e
        raise ParseError(f"unexpected token {text or 'end of input'!r}", offset)


def _symbol_table(complex_mode: bool, extra: Iterable[str], functions: bool):
    table: dict[str, Expr] = {s.name: s for s in VARIABLES}
    table.update(JETS)
    table.update({name: sp.Symbol(name) for name in PARAMETER_NAMES})
    table.update({name: sp.Symbol(name) for name in extra})
    if functions:
        table.update(functional_symbols())
    if complex_mode:
        table["i"] = sp.I
    return table


def parse(text: str, *, complex_mode: bool = False, extra: Iterable[str] = (),
          functions: bool = False) -> Expr:
    """Parse ``text`` in the engine grammar into a normalized expression.

    ``extra`` declares additional parameter names; ``functions`` enables the
    heat-solution placeholders ``h, h_x, phi, phi_v, ...``.
    """
    symbols = _symbol_table(complex_mode, tuple(extra), functions)
    return normalize(_Parser(text, symbols).parse())


# --------------------------------------------------------------------------
# printing

_PRINT_NAMES = {
    sp.exp: "exp", sp.log: "ln", sp.atan: "arctan", sp.sin: "sin", sp.cos: "cos",
    sp.tan: "tan", sp.cot: "cot", sp.sinh: "sinh", sp.cosh: "cosh", sp.tanh: "tanh", sp.coth: "coth",
}

_DERIV_NAMES = {
    (h_fn, (t,)): "h_t", (h_fn, (x,)): "h_x", (h_fn, (x, x)): "h_xx",
    (phi_fn, (t,)): "phi_t", (phi_fn, (v,)): "phi_v", (phi_fn, (v, v)): "phi_vv",
}


def _balanced_group(text: str) -> bool:
    """True if ``text`` is one parenthesized group or one function call."""
    if not text.endswith(")"):
        return False
    depth = 0
    for k, ch in enumerate(text):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth == 0 and k != len(text) - 1:
                return False
    return True


def _wrap(text: str) -> str:
    if re.fullmatch(r"[a-zA-Z_][a-zA-Z0-9_]*|\d+(\.\d*)?(e[+-]?\d+)?", text):
        return text
    if _balanced_group(text) and re.match(r"[a-z]*\(", text):
        return text
    return f"({text})"


def _print_mul(e: sp.Mul) -> str:
    coeff, rest = e.as_coeff_mul()
    num, den = [], []
    for f in rest:
        if isinstance(f, sp.Pow) and f.exp.is_Rational and f.exp < 0:
            den.append(sp.Pow(f.base, -f.exp, evaluate=False) if f.exp != -1 else f.base)
        else:
            num.append(f)
    sign = ""
    if coeff == -1:
        sign = "-"
    elif coeff != 1:
        if isinstance(coeff, sp.Rational) and not isinstance(coeff, sp.Integer) and den:
            num.insert(0, sp.Integer(coeff.p))
            den.insert(0, sp.Integer(coeff.q))
        else:
            num.insert(0, coeff)
    if not num:
        body = "1"
    else:
        body = "*".join(_wrap(to_text(f)) for f in num)
    if sign and body.startswith("-"):
        sign, body = "", body[1:]
    for f in den:
        body += "/" + _wrap(to_text(f))
    return sign + body


def to_text(e: Expr) -> str:
    """Render ``e`` in the engine grammar (inverse of :func:`parse`)."""
    e = sp.sympify(e)
    if e is sp.I:
        return "i"
    if e is sp.E:
        return "exp(1)"
    if isinstance(e, sp.Integer):
        return str(int(e))
    if isinstance(e, sp.Rational):
        return f"{e.p}/{e.q}"
    if isinstance(e, sp.Float):
        body = repr(float(e))
        if "e" in body and "." not in body.split("e")[0]:
            mant, ex = body.split("e")
            body = f"{mant}.0e{ex}"
        return body
    if isinstance(e, sp.Symbol):
        return e.name
    if isinstance(e, sp.Add):
        out = ""
        for k, a in enumerate(e.args):
            s = to_text(a)
            if k == 0:
                out = s
            elif s.startswith("-"):
                out += " - " + s[1:]
            else:
                out += " + " + s
        return out
    if isinstance(e, sp.Mul):
        return _print_mul(e)
    if isinstance(e, sp.Pow):
        return f"{_wrap(to_text(e.base))}^{_wrap(to_text(e.exp))}"
    if isinstance(e, sp.Derivative):
        key = (e.expr.func, tuple(v_ for v_, n in e.variable_count for _ in range(n)))
        if key in _DERIV_NAMES:
            return _DERIV_NAMES[key]
    if isinstance(e, sp.core.function.AppliedUndef) and e.func in (h_fn, phi_fn):
        return e.func.__name__
    if e.func in _PRINT_NAMES:
        return f"{_PRINT_NAMES[e.func]}({to_text(e.args[0])})"
    if isinstance(e, sp.Number):
        z = complex(e)
        return f"{to_text(sp.Float(z.real))} + {_wrap(to_text(sp.Float(z.imag)))}*i"
    raise ValueError(f"cannot print {e!r} in the engine grammar")


# --------------------------------------------------------------------------
# calculus

def normalize(e) -> Expr:
    """Canonical form: sympy's automatic evaluation plus derivative folding.

    Rejects expressions that fold to a literal division by zero.
    """
    e = sp.sympify(e)
    if e.has(sp.Derivative) or e.has(sp.Subs):
        e = e.doit()
    if e.has(sp.zoo) or e.has(sp.nan):
        raise EvaluationError(f"expression folds to an undefined value: {e}")
    return e


def _as_symbol(var) -> sp.Symbol:
    if isinstance(var, str):
        for s in VARIABLES:
            if s.name == var:
                return s
        if var in JETS:
            return JETS[var]
        raise KeyError(f"unknown variable {var!r}")
    if var in VARIABLES or var in JETS.values():
        return var
    raise KeyError(f"unknown variable {var!r}")


def diff(e: Expr, var) -> Expr:
    """Partial derivative; jet coordinates count as independent variables."""
    return normalize(sp.diff(e, _as_symbol(var)))


def _key(k) -> Expr:
    if isinstance(k, str):
        return _symbol_table(False, (k,), False).get(k, sp.Symbol(k))
    return k


def substitute(e: Expr, bindings: Mapping) -> Expr:
    """Simultaneous substitution followed by normalization.

    A key may appear in its own replacement (``u -> 2*u`` is fine), but a
    chain of two or more keys feeding each other is rejected as cyclic.
    """
    pairs = {_key(k): sp.sympify(val) for k, val in bindings.items()}
    _check_acyclic(pairs)
    return normalize(sp.sympify(e).subs(pairs, simultaneous=True))


def _check_acyclic(pairs: dict) -> None:
    deps = {k: {s for s in pairs if s != k and val.has(s)} for k, val in pairs.items()}
    state: dict = {}

    def visit(node, stack):
        state[node] = 1
        for nxt in deps[node]:
            if state.get(nxt) == 1:
                raise ValueError(f"cyclic bindings through {nxt}")
            if nxt not in state:
                visit(nxt, stack)
        state[node] = 2

    for k in deps:
        if k not in state:
            visit(k, [])


# --------------------------------------------------------------------------
# numerics

def _coth(z):
    return 1.0 / np.tanh(z)


_MODULES = [{"coth": _coth, "cot": lambda z: 1.0 / np.tan(z), "acoth": lambda z: np.arctanh(1.0 / z)}, "numpy"]


@lru_cache(maxsize=4096)
def _compile_cached(exprs: tuple, names: tuple):
    syms = [sp.Symbol(n) if not isinstance(n, sp.Basic) else n for n in names]
    return sp.lambdify(syms, list(exprs), modules=_MODULES)


def compile_exprs(exprs, symbols):
    """Vectorized complex evaluator for a list of expressions.

    Returns ``f(*arrays) -> list of arrays``; inputs are cast to complex so
    fractional powers of negative numbers follow the principal branch.
    """
    exprs = tuple(sp.sympify(e) for e in exprs)
    fn = _compile_cached(exprs, tuple(symbols))

    def run(*args):
        args = [np.asarray(a, dtype=complex) for a in args]
        shape = np.broadcast(*args).shape if args else ()
        with np.errstate(all="ignore"):
            out = fn(*args)
        return [np.broadcast_to(np.asarray(o, dtype=complex), shape) for o in out]

    return run


def free_symbols(e) -> set:
    return {s for s in sp.sympify(e).free_symbols}


def evaluate(e: Expr, valuation: Mapping) -> complex:
    """Evaluate ``e`` at a point; every free symbol must be bound."""
    e = sp.sympify(e)
    bound = {_key(k): complex(val) for k, val in valuation.items()}
    missing = free_symbols(e) - set(bound)
    if missing:
        raise KeyError(f"unbound symbols: {sorted(str(s) for s in missing)}")
    syms = sorted(free_symbols(e), key=str)
    (val,) = compile_exprs([e], syms)(*[bound[s] for s in syms])
    val = complex(val)
    if not np.isfinite(val.real) or not np.isfinite(val.imag):
        raise EvaluationError(f"non-finite value evaluating {e}")
    return val


def _subterms(e: Expr, limit: int = 64) -> list:
    terms = []
    for node in sp.preorder_traversal(e):
        if isinstance(node, sp.Add):
            terms.extend(node.args)
            if len(terms) >= limit:
                break
    return terms[:limit] or [e]


DEFAULT_VAR_BOX = (0.3, 2.7)
DEFAULT_PARAM_BOX = (-3.0, 3.0)


def sample_points(symbols, samples: int, rng: np.random.Generator, boxes=None,
                  degenerate: Mapping | None = None) -> dict:
    """Draw ``samples`` points for ``symbols`` from their boxes.

    Variables and jets default to ``[0.3, 2.7]``, parameters to ``[-3, 3]``;
    ``degenerate`` maps a parameter to values whose 1e-3 neighbourhood is
    avoided.
    """
    boxes = dict(boxes or {})
    degenerate = dict(degenerate or {})
    out = {}
    for s in symbols:
        name = s.name if isinstance(s, sp.Symbol) else str(s)
        box = boxes.get(name, boxes.get(s))
        if box is None:
            is_param = name in PARAMETER_NAMES or (
                s not in VARIABLES and name not in JETS)
            box = DEFAULT_PARAM_BOX if is_param else DEFAULT_VAR_BOX
        lo, hi = box
        vals = rng.uniform(lo, hi, samples)
        for bad in degenerate.get(name, ()):
            near = np.abs(vals - bad) < 1e-3
            while near.any():
                vals[near] = rng.uniform(lo, hi, int(near.sum()))
                near = np.abs(vals - bad) < 1e-3
        out[s] = vals
    return out


def is_zero_numeric(e: Expr, samples: int = 100, tol: float = 1e-9, *, boxes=None,
                    seed: int = 0, degenerate=None, points: Mapping | None = None) -> bool:
    """Probabilistic zero test with a relative tolerance.

    At every sample ``|e| <= tol * (1 + scale)`` must hold, where ``scale`` is
    the largest magnitude among the additive sub-terms of ``e``.  Samples at
    which evaluation fails are skipped; if all fail, the question is
    undecidable on the box.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    e = sp.sympify(e)
    if e == 0:
        return True
    syms = sorted(free_symbols(e), key=str)
    if points is None:
        rng = np.random.default_rng(seed)
        points = sample_points(syms, samples, rng, boxes, degenerate)
    else:
        points = {_key(k): np.asarray(val) for k, val in points.items()}
        missing = set(syms) - set(points)
        if missing:
            raise KeyError(f"unbound symbols: {sorted(map(str, missing))}")
    parts = [e] + _subterms(e)
    vals = compile_exprs(parts, syms)(*[points[s] for s in syms])
    value = np.abs(vals[0])
    scale = np.max(np.abs(np.array(vals[1:])), axis=0) if len(vals) > 1 else value
    ok = np.isfinite(value) & np.isfinite(scale)
    if not ok.any():
        raise UndecidableError("undecidable on box: every sample failed to evaluate")
    return bool(np.all(value[ok] <= tol * (1.0 + scale[ok])))
