"""Command-line interface: one JSON object per line on stdout.

Exit codes: 0 when every requested check passes, 1 on a verification
failure, 2 on a usage error.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from typing import Iterable, Iterator

import sympy as sp

from . import catalog as cat
from . import solmap, symexpr
from .equivgroups import (TransformError, apply, hodograph, note3_limit_check, purely_potential,
                          transform_from_json)
from .model import DcEquation, ModelError

VERBS = ("classify", "transform", "verify-tables", "verify-solutions", "map-solution", "chain",
         "dump-catalog", "limits")
SEED_ENV = "PET_ENGINE_SEED"


class UsageError(Exception):
    pass


def _u64(text: str) -> int:
    try:
        val = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text!r}")
    if not 0 <= val < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return val


def _real(text: str) -> float:
    try:
        val = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a real number, got {text!r}")
    if not math.isfinite(val):
        raise argparse.ArgumentTypeError("expected a finite number")
    return val


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pet-engine", description="Potential equivalence transformations for "
                "diffusion-convection equations u_t = (d u_x)_x + k u_x.")
    p.add_argument("verb", nargs="?", choices=VERBS)
    p.add_argument("--d", help="diffusivity d(u)")
    p.add_argument("--k", help="convection coefficient k(u)")
    p.add_argument("--K", help="flux term K(u) with K_u = -k")
    p.add_argument("--table", choices=("1", "2"))
    p.add_argument("--list", choices=("9", "10", "8"))
    p.add_argument("--id")
    p.add_argument("--via", choices=("hodograph", "pp", "three", "point", "potential"))
    p.add_argument("--eps", type=_real)
    p.add_argument("--seed", type=_u64)
    p.add_argument("--tol", type=_real)
    p.add_argument("--json", action="store_true", help="JSON lines (the default)")
    p.add_argument("--pretty", action="store_true", help="aligned human-readable table")
    p.add_argument("--with-complex", action="store_true")
    p.add_argument("--dump-catalog", action="store_true")
    p.add_argument("--catalog", help="catalog file to use instead of the bundled one")
    p.add_argument("--transform", help="transform as JSON for --via point|potential")
    return p


# ---------------------------------------------------------------------------
# helpers


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env is None:
        return 0
    try:
        return _u64(env)
    except argparse.ArgumentTypeError as exc:
        raise UsageError(f"{SEED_ENV}: {exc}")


def _equation(args) -> DcEquation:
    if args.d is None:
        raise UsageError("--d is required")
    if args.k is None and args.K is None:
        raise UsageError("one of --k, --K is required")
    try:
        return DcEquation.from_strings(args.d, args.k, args.K)
    except symexpr.ParseError as exc:
        raise UsageError(f"cannot parse expression: {exc}")
    except ModelError as exc:
        raise UsageError(str(exc))


def _catalog(args) -> cat.Catalog:
    if args.catalog is not None and not os.path.exists(args.catalog):
        raise UsageError(f"no catalog file {args.catalog}")
    return cat.load_catalog(args.catalog)


def _tidy(eq: DcEquation) -> DcEquation:
    simp = lambda e: None if e is None else sp.factor(sp.simplify(e))  # noqa: E731
    return DcEquation(simp(eq.d), simp(eq.k), simp(eq.K), eq.params)


def _finite(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def _render(rows: list[dict], pretty: bool, out) -> None:
    if not pretty:
        for row in rows:
            out.write(json.dumps(_finite(row), allow_nan=False) + "\n")
        return
    cols: list[str] = []
    for row in rows:
        cols += [k for k in row if k not in cols]
    cell = lambda v: "" if v is None else (f"{v:.3g}" if isinstance(v, float) else  # noqa: E731
                                          json.dumps(v) if isinstance(v, (dict, list)) else str(v))
    table = [[cell(r.get(c)) for c in cols] for r in rows]
    widths = [max(len(c), *(len(r[i]) for r in table)) if table else len(c) for i, c in enumerate(cols)]
    out.write("  ".join(c.ljust(w) for c, w in zip(cols, widths)).rstrip() + "\n")
    for r in table:
        out.write("  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip() + "\n")


# ---------------------------------------------------------------------------
# verbs; each yields result rows


def do_classify(args) -> Iterator[dict]:
    eq = _equation(args)
    catalog = _catalog(args)
    try:
        c = cat.classify(eq, catalog)
    except cat.ClassificationError as exc:
        yield {"error": str(exc), "pass": False}
        return
    row = c.to_json()
    try:
        row["system"] = cat.classify_system(eq, catalog).to_json()
    except cat.ClassificationError:
        row["system"] = None
    row["pass"] = c.verified
    yield row


def _transform_arg(args):
    if args.transform is None:
        raise UsageError(f"--via {args.via} needs --transform JSON")
    try:
        T = transform_from_json(json.loads(args.transform))
    except (json.JSONDecodeError, TypeError, TransformError) as exc:
        raise UsageError(f"bad --transform: {exc}")
    if T.kind != args.via:
        raise UsageError(f"--transform describes a {T.kind} transform, not {args.via}")
    return T


def do_transform(args) -> Iterator[dict]:
    eq = _equation(args)
    via = args.via or "hodograph"
    row = {"via": via, "source": eq.to_json()}
    if via == "three":
        try:
            image = solmap.three_image(eq)
        except solmap.SolmapError as exc:
            yield {**row, "error": str(exc), "pass": False}
            return
        row.update(image=image.to_json(), transform={"special": "three"}, **{"pass": True})
        yield row
        return
    if via == "hodograph":
        T = hodograph()
    elif via == "pp":
        T = purely_potential(1.0 if args.eps is None else args.eps)
    else:
        T = _transform_arg(args)
    image = _tidy(apply(T, eq))
    row.update(image=image.to_json(), transform=T.to_json(), **{"pass": True})
    yield row


def do_verify_tables(args) -> Iterator[dict]:
    catalog = _catalog(args)
    tables = [int(args.table)] if args.table else sorted(catalog.tables)
    tol = 1e-8 if args.tol is None else args.tol
    seed = _seed(args)
    for tid in tables:
        for case_ in cat.table(tid, catalog):
            try:
                results = cat.verify_case(case_, samples=100, seed=seed, tol=tol)
            except cat.CatalogError as exc:
                yield {"table": tid, "case": case_.label, "error": str(exc), "pass": False}
                continue
            for r in results:
                yield r.to_json()


def _solution_rows(list_id: str, sol_id: str | None, tol, catalog) -> Iterator[dict]:
    eq = solmap.FAST_DIFFUSION
    for sol in cat.solutions(list_id, catalog):
        if sol_id is not None and sol.sol_id != sol_id:
            continue
        row = {"list": list_id, "id": sol.sol_id, "solution": sol.name,
               "constants": {k: solmap._num(v) for k, v in sol.constants.items()},
               "predicate": sol.predicate}
        try:
            ver = solmap.verify_solution(eq, sol, tol)
            pot = solmap.lift_to_potential(eq, sol)
        except solmap.SolmapError as exc:
            yield {**row, "error": str(exc), "pass": False}
            continue
        row.update(residual=ver.residual, method=ver.method,
                   potential=symexpr.to_text(pot.expr) if pot.symbolic else "quadrature",
                   potential_residual=max(pot.residuals(*sol.grid(12))))
        ok = ver.ok and row["potential_residual"] < 1e-9
        if sol.wave is not None:
            lam, err = solmap.wave_identity(sol)
            row.update(wave_lambda=lam, wave_error=err)
            ok = ok and err < 1e-10
        row["pass"] = ok
        yield row


def _solution8_rows(tol) -> Iterator[dict]:
    s8 = solmap.implicit_solution_8(1.0)
    ver = solmap.verify_solution(solmap.FAST_DIFFUSION, s8, tol)
    impl, inv = s8.implicit_error(), s8.invariance_error()
    yield {"list": "8", "id": "8", "mu": 1, **ver.to_json(), "implicit_error": impl,
           "invariance_error": inv, "pass": ver.ok and impl < 1e-8 and inv < 1e-8}


def do_verify_solutions(args) -> Iterator[dict]:
    catalog = _catalog(args)
    lists = [args.list] if args.list else ["9", "10", "8"]
    for lid in lists:
        if lid == "8":
            yield from _solution8_rows(args.tol)
        else:
            yield from _solution_rows(lid, args.id, args.tol, catalog)


def _consistency_8(args) -> dict:
    src = [s for s in cat.solutions("9", _catalog(args)) if s.sol_id == "3" and s.constants["mu"] == 1][0]
    image = solmap.hodograph_on_solution(solmap.FAST_DIFFUSION, src)
    m = solmap.match_up_to_x_translation(image, solmap.implicit_solution_8(1.0), reflect=None,
                                         threshold=args.tol or solmap.MATCH_TOL)
    return {"source": "3", "mu": 1, "target": "8", **m.to_json()}


def do_map_solution(args) -> Iterator[dict]:
    via = args.via or "hodograph"
    if args.list is None:
        raise UsageError("--list is required")
    if via not in ("hodograph", "pp"):
        raise UsageError("map-solution supports --via hodograph or pp")
    if args.list == "8":
        if via != "hodograph":
            raise UsageError("solution 8) is reached by the hodograph only")
        yield _consistency_8(args)
        return
    catalog = _catalog(args)
    if via == "pp":
        eps = 1.0 if args.eps is None else args.eps
        T = purely_potential(eps)
        for sol in cat.solutions(args.list, catalog):
            if args.id is not None and sol.sol_id != args.id:
                continue
            row = {"source": sol.sol_id, "solution": sol.name, "via": "pp", "eps": eps}
            try:
                image = solmap.transform_solution(sol, T)
                ver = solmap.verify_solution(image.equation, image, args.tol)
            except solmap.SolmapError as exc:
                yield {**row, "error": str(exc), "pass": False}
                continue
            yield {**row, "image_equation": _tidy(image.equation).to_json(), **ver.to_json()}
        return
    arrows = [a for a in cat.arrows(args.list, catalog)
              if args.id is None or args.id in (a.source.sol_id, a.target.sol_id)]
    if not arrows:
        raise UsageError(f"no arrow touches solution {args.id} of list ({args.list})")
    for a in arrows:
        try:
            res = solmap.map_arrow(a, catalog=catalog)
        except solmap.SolmapError as exc:
            yield {"source": a.source.sol_id, "target": a.target.sol_id, "error": str(exc),
                   "pass": False}
            continue
        if args.tol is not None:
            res.forward.threshold = args.tol
            if res.back is not None:
                res.back.threshold = args.tol
        yield res.to_json()


def do_chain(args) -> Iterator[dict]:
    catalog = _catalog(args)
    for link in solmap.chain_links(args.with_complex, catalog):
        yield {"kind": "link", **link.to_json()}
    stages = solmap.cole_hopf_chain()
    yield {"kind": "composition", "source": "2.11", "target": "2.12",
           "via": "hodograph, three, hodograph", "stages": [s.to_json() for s in stages],
           "pass": all(s.ok for s in stages)}


def do_limits(args) -> Iterator[dict]:
    for family in ("1.5->1.2", "1.7a->1.4", "1.6->1.3"):
        rep = note3_limit_check(family)
        yield {"family": family, "mu_prime": rep.mu_prime, "nu": rep.nus, "errors": rep.errors,
               "predicted": rep.predicted, "decreasing": rep.decreasing,
               "pass": rep.decreasing and rep.errors[-1] < 1e-3}


HANDLERS = {"classify": do_classify, "transform": do_transform, "verify-tables": do_verify_tables,
            "verify-solutions": do_verify_solutions, "map-solution": do_map_solution,
            "chain": do_chain, "limits": do_limits}


def run(argv: Iterable[str] | None = None, out=None) -> int:
    out = out or sys.stdout
    try:
        args = build_parser().parse_args(list(argv) if argv is not None else None)
        if args.dump_catalog or args.verb == "dump-catalog":
            text = cat.raw_text(_catalog(args) and args.catalog)
            out.write(json.dumps(json.loads(text), indent=2 if args.pretty else None) + "\n")
            return 0
        if args.verb is None:
            raise UsageError("a verb is required: " + ", ".join(VERBS))
        rows = list(HANDLERS[args.verb](args))
    except UsageError as exc:
        out.write(json.dumps({"error": str(exc), "kind": "usage"}) + "\n")
        return 2
    except (cat.CatalogError, solmap.SolmapError, ModelError, TransformError) as exc:
        out.write(json.dumps({"error": str(exc), "kind": type(exc).__name__}) + "\n")
        return 1
    _render(rows, args.pretty, out)
    return 0 if rows and all(r.get("pass", True) for r in rows) else 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
