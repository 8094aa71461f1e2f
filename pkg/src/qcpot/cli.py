"""Command-line front end: field generation, experiment drivers and JSON/CSV reports.

Exit codes: 0 pass, 1 usage or input error, 2 hypotheses unmet, 3 property violation.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys

import numpy as np

from . import __version__
from .contact import (ContactError, StrictJetWitness, alexandrov_bound, contact_set,
                      density_experiment, jensen_slodkowski_verify)
from .convex import ConvexError, biconjugate, fenchel_conjugate, magic_legendre_check, slope_dual_spec
from .expr import ExprError, compile_expr, expr_dimension
from .grid import Box, GridError, GridSpec, build_field, read_field, write_field, write_mask
from .jets import unpack_upper
from .potential import (NotQuasiConvexError, PotentialError, check_subharmonic_ae,
                        check_subharmonic_viscosity, comparison_run, on_sums_witness,
                        strict_comparison_run, subharmonic_addition_check)
from .regularize import RegularizeError, sup_convolve
from .subeq import JetSampler, SubequationError, check_structure, dual, parse_subeq

EXIT_PASS, EXIT_USAGE, EXIT_HYP, EXIT_VIOLATION = 0, 1, 2, 3


class UsageError(Exception):
    pass


class HypothesisError(Exception):
    pass


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if hasattr(obj, "to_json"):
        return _jsonable(obj.to_json())
    return obj


def dump_report(report: dict) -> str:
    return json.dumps(_jsonable(report), sort_keys=True, indent=2) + "\n"


def _emit(text: str, path: str | None):
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _emit_csv(rows: list, columns: list, path: str | None):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([repr(float(row[c])) if isinstance(row[c], (float, np.floating)) else row[c]
                    for c in columns])
    _emit(buf.getvalue(), path)


def _floats(text: str) -> list:
    try:
        return [float(t) for t in text.replace(",", " ").split()]
    except ValueError as exc:
        raise UsageError(f"bad number list {text!r}") from exc


def _box(values, n: int | None = None) -> Box | None:
    if values is None:
        return None
    if len(values) % 2:
        raise UsageError("--box takes lo hi pairs")
    lo, hi = values[0::2], values[1::2]
    if n is not None and len(lo) == 1 and n > 1:
        lo, hi = lo * n, hi * n
    if n is not None and len(lo) != n:
        raise UsageError(f"--box needs {n} lo/hi pairs")
    return Box(lo, hi)


def _matrix(values, n: int) -> np.ndarray:
    """Symmetric matrix from one scalar (multiple of I), the packed upper triangle or all entries."""
    v = list(values)
    if len(v) == 1:
        return v[0] * np.eye(n)
    if len(v) == n * (n + 1) // 2:
        return unpack_upper(np.asarray(v), n)
    if len(v) == n * n:
        A = np.asarray(v).reshape(n, n)
        return 0.5 * (A + A.T)
    raise UsageError(f"matrix needs 1, {n * (n + 1) // 2} or {n * n} entries")


def _matrix_file(path: str, n: int) -> np.ndarray:
    """Matrix from JSON: a number, a packed upper list, a nested list, or {"A": ...}."""
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise UsageError(f"bad matrix file {path}: {exc}") from exc
    if isinstance(data, dict):
        data = data.get("A")
    flat = np.ravel(np.asarray(data, dtype=float)).tolist()
    return _matrix(flat, n)


def _status_code(report: dict) -> int:
    ok = report.get("pass")
    if ok is None:
        return EXIT_HYP
    return EXIT_PASS if ok else EXIT_VIOLATION


def _tol(args, spec: GridSpec):
    if getattr(args, "tol", None) is not None:
        return args.tol
    return args.kappa * spec.hmax


# ---- commands ----

def cmd_gen(args) -> int:
    lohi = args.box
    shape = args.shape
    n = args.dim or max(len(lohi) // 2, len(shape), expr_dimension(args.expr))
    box = _box(lohi, n)
    if len(shape) == 1:
        shape = shape * n
    if len(shape) != n:
        raise UsageError("--shape length must match the dimension")
    spec = GridSpec(box, tuple(shape))
    f = build_field(spec, compile_expr(args.expr, n))
    if not args.output:
        raise UsageError("gen needs -o")
    write_field(f, args.output)
    return EXIT_PASS


def cmd_supconv(args) -> int:
    u = read_field(args.field)
    sc = sup_convolve(u, args.eps, refine=args.refine)
    out = args.out or args.output
    if out:
        write_field(sc.field, out)
    from .convex import quasiconvex_index
    rep = {"eps": sc.eps, "delta": sc.delta, "M": sc.M, "windowed": sc.windowed,
           "quasiconvex_index": quasiconvex_index(sc.field),
           "majorant": bool(np.all(sc.field.values >= u.values)),
           "theorem": "sup-convolution regularization", "pass": True}
    _emit(dump_report(rep), args.report)
    return EXIT_PASS


def cmd_legendre(args) -> int:
    f = read_field(args.field)
    dspec = slope_dual_spec(f, args.refine)
    if args.dual_box is not None:
        dspec = GridSpec(_box(args.dual_box, f.spec.ndim), args.dual_shape or f.spec.shape)
    method = "linear" if f.spec.ndim == 1 else "brute"
    g = fenchel_conjugate(f, dspec, method=method)
    if args.output:
        write_field(g, args.output)
    rep = {"dual_lo": list(dspec.box.lo), "dual_hi": list(dspec.box.hi), "dual_shape": list(dspec.shape),
           "theorem": "Legendre-Fenchel conjugate", "pass": True}
    if args.biconjugate:
        fb = biconjugate(f, args.refine)
        rep["biconjugate_max_excess"] = float(np.max(fb.values - f.values))
        rep["biconjugate_max_gap"] = float(np.max(f.values - fb.values))
    if args.magic_r is not None:
        y = args.y if args.y is not None else [0.0] * f.spec.ndim
        rep["magic"] = magic_legendre_check(f, args.magic_r, np.asarray(y), tol=args.tol)
        rep["pass"] = bool(rep["magic"]["pass"])
    _emit(dump_report(rep), args.report)
    return _status_code(rep)


def cmd_contact(args) -> int:
    u = read_field(args.field)
    n = u.spec.ndim
    A = _matrix(args.A, n) if args.A else None
    if args.type is not None:
        A = _matrix_file(args.type, n)
    cs = contact_set(u, A, _box(args.box, n), tol=args.tol, method=args.method)
    mask_out = args.mask or args.mask_out
    if mask_out:
        write_mask(cs.mask, mask_out)
    rep = {"count": cs.mask.count, "measure": cs.measure(), "type_A": cs.type_A,
           "center": cs.center, "theorem": "upper contact set", "pass": True}
    _emit(dump_report(rep), args.output)
    return EXIT_PASS


def cmd_density(args) -> int:
    u = read_field(args.field)
    rows = density_experiment(u, args.r, args.R, _floats(args.rho))
    if args.csv:
        _emit_csv(rows, ["rho", "ratio", "bound", "slack", "pass"], args.output)
    else:
        _emit(dump_report({"rows": rows, "r": args.r, "R": args.R, "theorem": "contact-set density",
                           "pass": all(r["pass"] for r in rows)}), args.output)
    return EXIT_PASS if all(r["pass"] for r in rows) else EXIT_VIOLATION


def cmd_jensen(args) -> int:
    w = read_field(args.field)
    n = w.spec.ndim
    idx = w.spec.nearest_index(np.asarray(args.x, dtype=float))
    p = np.asarray(args.p if args.p is not None else [0.0] * n, dtype=float)
    A = _matrix(args.A if args.A else [0.0], n)
    wit = StrictJetWitness(idx, p, A, args.eps_strict, args.radius)
    rep = jensen_slodkowski_verify(w, wit, args.rho0 if args.rho0 is not None else args.radius,
                                   tol=args.tol)
    rep["theorem"] = "Jensen-Slodkowski contact measure"
    if args.csv:
        _emit_csv(rep["ladder"], ["rho", "measure", "count", "contains_x"], args.output)
    else:
        _emit(dump_report(rep), args.output)
    return _status_code(rep)


def cmd_alexandrov(args) -> int:
    u = read_field(args.field)
    rep = alexandrov_bound(u, _box(args.box, u.spec.ndim), tol=args.tol)
    rep["theorem"] = "Alexandrov maximum principle and area bound"
    _emit(dump_report(rep), args.output)
    return _status_code(rep)


def cmd_check(args) -> int:
    u = read_field(args.field)
    F = parse_subeq(args.subeq, u.spec.ndim)
    region = _box(args.box, u.spec.ndim)
    if args.mode == "ae":
        try:
            rep = check_subharmonic_ae(u, F, region, tol=_tol(args, u.spec))
        except NotQuasiConvexError as exc:
            raise HypothesisError(str(exc)) from exc
    else:
        rep = check_subharmonic_viscosity(u, F, region, tol=_tol(args, u.spec))
    out = rep.to_json()
    _emit(dump_report(out), args.output)
    return EXIT_PASS if rep.verdict else EXIT_VIOLATION


def cmd_compare(args) -> int:
    u, v = read_field(args.u), read_field(args.v)
    n = u.spec.ndim
    F = parse_subeq(args.subeq, n)
    omega = _box(args.box, n)
    if args.strict is not None:
        G = parse_subeq(args.strict, n)
        rep = strict_comparison_run(u, G, F, v, omega, tol=_tol(args, u.spec), route=args.route,
                                    sampler=JetSampler(seed=args.seed))
    else:
        rep = comparison_run(u, F, v, omega, tol=_tol(args, u.spec))
    _emit(dump_report(rep), args.output)
    return _status_code(rep)


def cmd_dual(args) -> int:
    F = parse_subeq(args.subeq, args.dim)
    Fd = dual(F)
    sampler = JetSampler(seed=args.seed, count=args.samples)
    r, p, A = sampler.jets(args.dim)
    x = np.zeros((len(r), args.dim))
    involution = bool(np.array_equal(dual(Fd).margins(x, r, p, A), F.margins(x, r, p, A)))
    rep = {"subequation": F.name, "dual": Fd.name, "involution_exact": involution,
           "structure": check_structure(Fd, sampler), "theorem": "Dirichlet duality",
           "pass": involution}
    _emit(dump_report(rep), args.output)
    return _status_code(rep)


def cmd_addition(args) -> int:
    u, v = read_field(args.u), read_field(args.v)
    n = u.spec.ndim
    F, G, H = (parse_subeq(s, n) for s in (args.F, args.G, args.H))
    rep = subharmonic_addition_check(F, G, H, u, v, _box(args.box, n),
                                     JetSampler(seed=args.seed), tol=_tol(args, u.spec))
    _emit(dump_report(rep), args.output)
    return _status_code(rep)


def cmd_onsums(args) -> int:
    u, v = read_field(args.u), read_field(args.v)
    A = _matrix(args.A, 2)
    rep = on_sums_witness(u, v, A, args.eps, tol=_tol(args, u.spec))
    _emit(dump_report(rep), args.output)
    return _status_code(rep)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qcpot", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--version", action="version", version=f"qcpot {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, kappa=True):
        p.add_argument("-o", "--output", default=None, help="output path (default: standard output)")
        p.add_argument("--threads", type=int, default=os.cpu_count(),
                       help="worker count (accepted; checks run vectorized in one process)")
        p.add_argument("--tol", type=float, default=None, help="explicit tolerance")
        if kappa:
            p.add_argument("--kappa", type=float, default=10.0,
                           help="grid tolerance factor, tol = kappa*h when --tol is absent (default 10)")
        return p

    p = common(sub.add_parser("gen", help="sample an expression on a grid"), kappa=False)
    p.add_argument("--expr", required=True, help="expression in x, y, z")
    p.add_argument("--box", type=float, nargs="+", required=True, help="lo hi [lo hi ...]")
    p.add_argument("--shape", type=int, nargs="+", required=True, help="nodes per axis")
    p.add_argument("--dim", type=int, default=None, help="dimension (default: from --box/--shape)")
    p.set_defaults(func=cmd_gen)

    p = common(sub.add_parser("supconv", help="sup-convolution u^eps"), kappa=False)
    p.add_argument("field")
    p.add_argument("out", nargs="?", default=None, help="output field (same as -o)")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--refine", action="store_true", help="one-cell quadratic refinement")
    p.add_argument("--report", default=None, help="JSON report path (default: standard output)")
    p.set_defaults(func=cmd_supconv)

    p = common(sub.add_parser("legendre", help="Legendre-Fenchel conjugate"), kappa=False)
    p.add_argument("field")
    p.add_argument("--refine", type=int, default=2, help="dual grid refinement (default 2)")
    p.add_argument("--dual-box", type=float, nargs="+", default=None)
    p.add_argument("--dual-shape", type=int, nargs="+", default=None)
    p.add_argument("--biconjugate", action="store_true")
    p.add_argument("--magic-r", type=float, default=None, help="run the Hessian-inverse check for r")
    p.add_argument("--y", type=float, nargs="+", default=None, help="dual point for --magic-r")
    p.add_argument("--report", default=None, help="JSON report path (default: standard output)")
    p.set_defaults(func=cmd_legendre)

    p = common(sub.add_parser("contact", help="upper contact set of type A"), kappa=False)
    p.add_argument("field")
    p.add_argument("mask", nargs="?", default=None, help="output mask (same as --mask-out)")
    p.add_argument("--A", type=float, nargs="+", default=None, help="scalar, packed upper or full matrix")
    p.add_argument("--type", default=None, help="JSON file holding the matrix A")
    p.add_argument("--box", "--region", dest="box", type=float, nargs="+", default=None)
    p.add_argument("--method", default="auto", choices=["auto", "chain", "hull", "lp"])
    p.add_argument("--mask-out", default=None, help="write the contact mask")
    p.set_defaults(func=cmd_contact)

    p = common(sub.add_parser("density", help="contact-set density experiment"), kappa=False)
    p.add_argument("field")
    p.add_argument("--r", type=float, required=True)
    p.add_argument("--R", type=float, required=True)
    p.add_argument("--rho", required=True, help="comma separated radii")
    p.add_argument("--csv", action="store_true")
    p.set_defaults(func=cmd_density)

    p = common(sub.add_parser("jensen", help="contact measure ladder about a strict jet"), kappa=False)
    p.add_argument("field")
    p.add_argument("--x", type=float, nargs="+", required=True)
    p.add_argument("--p", type=float, nargs="+", default=None)
    p.add_argument("--A", type=float, nargs="+", default=None)
    p.add_argument("--eps-strict", type=float, required=True)
    p.add_argument("--radius", type=float, required=True)
    p.add_argument("--rho0", type=float, default=None)
    p.add_argument("--csv", action="store_true")
    p.set_defaults(func=cmd_jensen)

    p = common(sub.add_parser("alexandrov", help="Alexandrov maximum principle and area bound"))
    p.add_argument("field")
    p.add_argument("--box", type=float, nargs="+", default=None)
    p.set_defaults(func=cmd_alexandrov)

    p = common(sub.add_parser("check", help="F-subharmonicity check"))
    p.add_argument("field")
    p.add_argument("--subeq", required=True, help="library name, e.g. pcone, qccone:1, mgamma:2")
    p.add_argument("--mode", choices=["ae", "visc"], default="ae")
    p.add_argument("--box", type=float, nargs="+", default=None)
    p.set_defaults(func=cmd_check)

    p = common(sub.add_parser("compare", help="comparison experiment for u + v"))
    p.add_argument("u")
    p.add_argument("v")
    p.add_argument("--subeq", required=True)
    p.add_argument("--box", type=float, nargs="+", default=None)
    p.add_argument("--strict", default=None, help="strictly smaller subequation G for u")
    p.add_argument("--route", choices=["qc", "usc"], default="qc")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_compare)

    p = common(sub.add_parser("dual", help="Dirichlet dual and structure sampling"), kappa=False)
    p.add_argument("--subeq", required=True)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_dual)

    p = common(sub.add_parser("addition", help="subharmonic addition experiment"))
    p.add_argument("u")
    p.add_argument("v")
    p.add_argument("--F", required=True)
    p.add_argument("--G", required=True)
    p.add_argument("--H", required=True)
    p.add_argument("--box", type=float, nargs="+", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_addition)

    p = common(sub.add_parser("onsums", help="theorem-on-sums pipeline for 1D factors"))
    p.add_argument("u")
    p.add_argument("v")
    p.add_argument("--A", type=float, nargs="+", required=True)
    p.add_argument("--eps", type=float, required=True)
    p.set_defaults(func=cmd_onsums)
    return ap


_INPUT_ERRORS = (UsageError, ExprError, GridError, OSError, SubequationError, UnicodeDecodeError)
_HYP_ERRORS = (HypothesisError, NotQuasiConvexError, PotentialError, ContactError, ConvexError,
               RegularizeError)


def _is_number(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def _normalize_argv(parser: argparse.ArgumentParser, argv: list[str]) -> list[str]:
    """Put options first and positionals after "--".

    Multi-value options take only numeric tokens, so a trailing path is not swallowed,
    and single-value options always take the next token, even one starting with "-".
    """
    if not argv or argv[0].startswith("-"):
        return argv
    subs = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    sub = subs.choices.get(argv[0])
    if sub is None:
        return argv
    opts, pos, k = [], [], 1
    while k < len(argv):
        tok = argv[k]
        k += 1
        if tok == "--":
            pos.extend(argv[k:])
            break
        action = sub._option_string_actions.get(tok)
        if action is None:
            (opts if tok.startswith("-") and not _is_number(tok) else pos).append(tok)
            continue
        if action.nargs == 0:
            opts.append(tok)
        elif action.nargs in ("+", "*"):
            opts.append(tok)
            while k < len(argv) and _is_number(argv[k]):
                opts.append(argv[k])
                k += 1
        elif action.nargs is None and k < len(argv):
            opts.append(f"{tok}={argv[k]}")
            k += 1
        else:
            opts.append(tok)
    return [argv[0], *opts, "--", *pos] if pos else [argv[0], *opts]


def run(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parser.parse_args(_normalize_argv(parser, argv))
    except SystemExit as exc:
        return EXIT_PASS if exc.code == 0 else EXIT_USAGE
    if args.threads is not None and args.threads < 1:
        print("qcpot: --threads must be positive", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except _INPUT_ERRORS as exc:
        print(f"qcpot: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _HYP_ERRORS as exc:
        print(f"qcpot: hypotheses unmet: {exc}", file=sys.stderr)
        return EXIT_HYP


def main() -> None:
    sys.exit(run())
