"""Fractional variational problems from the command line.

Subcommands: deriv, verify, solve-t, example, ibp-check. Exit codes:
0 when every check passes, 1 when a verification fails, 2 on
configuration or computation errors.
"""
from __future__ import annotations

import argparse
import io
import json
import math
import os
import sys

import numpy as np

from . import fracops as fo
from .classic import classic_el_residuals, classic_transversality, eval_functional
from .config import ConfigError, ProblemConfig, load_problem, parse_config
from .expr import ExprError
from .fixtures import FIXTURES, REFERENCE
from .herglotz import SolveError, find_terminal_time, verify
from .multidim import find_terminal_time_multi, verify_multi

EXIT_OK, EXIT_FAIL, EXIT_ERROR = 0, 1, 2


class CliError(Exception):
    pass


# ---------------------------------------------------------------- output helpers

def _fmt(v):
    if v is None or (isinstance(v, float) and not math.isfinite(v)):
        return ""
    return "%.17g" % v


def csv_text(columns: dict) -> str:
    """Header row plus rows; shorter columns are padded with empty cells."""
    names = list(columns)
    cols = [np.asarray(c, dtype=float) for c in columns.values()]
    rows = max(len(c) for c in cols)
    out = io.StringIO()
    out.write(",".join(names) + "\n")
    for i in range(rows):
        out.write(",".join(_fmt(float(c[i])) if i < len(c) else "" for c in cols) + "\n")
    return out.getvalue()


def _num(v):
    v = float(v)
    return v if math.isfinite(v) else None


def json_text(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def _write(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _load(args) -> ProblemConfig:
    if not args.config:
        raise CliError("--config is required")
    return load_problem(args.config, grid=args.grid)


def _tol(args, cfg=None):
    if args.tol is not None:
        return args.tol
    return cfg.tol if cfg is not None else 5e-3


# ---------------------------------------------------------------- deriv

def _operator_profile(cfg: ProblemConfig, grid=None):
    g = grid or cfg.grid()
    op = cfg.operator
    if op == "dual-rl":
        data = cfg.trajectory(g, "y" if "y" in cfg.exprs else "x")
        return fo.dual_rl_profile(data, cfg.spec(), cfg.T)
    x = cfg.trajectory(g)
    spec = cfg.spec()
    table = {
        "left-rl-integral": lambda: fo.left_rl_integral_profile(x, spec.alpha),
        "right-rl-integral": lambda: fo.right_rl_integral_profile(x, spec.beta),
        "left-rl-deriv": lambda: fo.left_rl_deriv_profile(x, spec.alpha),
        "right-rl-deriv": lambda: fo.right_rl_deriv_profile(x, spec.beta),
        "left-caputo": lambda: fo.left_caputo_profile(x, spec.alpha),
        "right-caputo": lambda: fo.right_caputo_profile(x, spec.beta),
        "combined-caputo": lambda: fo.combined_caputo_profile(x, spec),
    }
    return table[op]()


def cmd_deriv(args) -> int:
    cfg = _load(args)
    if cfg.kind != "operator":
        raise ConfigError("problem", "kind", "deriv needs kind = operator")
    prof = _operator_profile(cfg)
    _write(args.out, csv_text({"t": prof.nodes, "value": prof.values}))
    return EXIT_OK


# ---------------------------------------------------------------- verify

def _herglotz_report(cfg, tol):
    problem, x = cfg.herglotz()
    rep = verify(problem, x, cfg.T, tol)
    out = {"kind": "herglotz", **rep.to_dict(), "tol": tol, "passed": rep.passed(tol, problem.grid.b)}
    prof = rep.profiles
    cols = {k: prof[k] for k in ("t", "x", "v", "z", "lambda") if k in prof}
    for k in ("el_interior", "el_tail"):
        if k in prof:
            cols[k] = prof[k]
    return out, cols


def _classic_report(cfg, tol):
    problem, x = cfg.classic()
    g = problem.grid
    T = cfg.T
    K = g.index(T)
    v = fo.combined_caputo_profile(x, problem.spec)
    J = eval_functional(problem, x, T, v)
    interior, tail = classic_el_residuals(problem, x, T, v)
    t1 = classic_transversality(problem, x, T, "teo1", v)
    t2 = classic_transversality(problem, x, T, "teo2", v)
    el_int = float(np.max(np.abs(interior.values))) if interior is not None else 0.0
    el_tail = float(np.max(np.abs(tail.values))) if tail is not None else 0.0
    checks = [el_int, el_tail, *map(abs, t1)]
    passed = all(math.isfinite(c) and c < tol for c in checks)
    out = {
        "kind": "classic", "T": float(T), "J": _num(J),
        "el_interior_norm": _num(el_int), "el_tail_norm": _num(el_tail),
        "trans_teo1": [_num(c) for c in t1], "trans_teo2": [_num(c) for c in t2],
        "flags": [], "tol": tol, "passed": passed,
    }
    if not passed:
        out["flags"].append("above-tol")
    cols = {"t": g.nodes, "x": x.values, "v": v.values}
    if interior is not None:
        cols["el_interior"] = interior.values
    if tail is not None:
        cols["el_tail"] = np.concatenate((np.full(K, np.nan), tail.values))
    return out, cols


def _multidim_report(cfg, tol):
    problem, fld = cfg.multidim()
    rep = verify_multi(problem, fld, cfg.T, tol)
    out = {"kind": "multidim", **rep.to_dict(), "tol": tol,
           "passed": rep.passed(tol, problem.time_grid.b)}
    cols = {k: rep.profiles[k] for k in ("t", "z", "lambda") if k in rep.profiles}
    return out, cols


def cmd_verify(args) -> int:
    cfg = _load(args)
    tol = _tol(args, cfg)
    builders = {"herglotz": _herglotz_report, "classic": _classic_report, "multidim": _multidim_report}
    if cfg.kind not in builders:
        raise ConfigError("problem", "kind", "verify needs kind = herglotz, classic or multidim")
    report, cols = builders[cfg.kind](cfg, tol)
    sys.stdout.write(json_text(report))
    if args.csv:
        _write(args.csv, csv_text(cols))
    return EXIT_OK if report["passed"] else EXIT_FAIL


# ---------------------------------------------------------------- solve-t

def cmd_solve_t(args) -> int:
    cfg = _load(args)
    if cfg.kind == "herglotz":
        problem, x = cfg.herglotz()
        tt = find_terminal_time(problem, x, tol=cfg.root_tol)
        out = {"T": _num(tt.T), "z_at_T": _num(tt.z_at_T),
               "bracket": [_num(b) for b in tt.bracket], "boundary": tt.boundary}
    elif cfg.kind == "multidim":
        problem, fld = cfg.multidim()
        T, zT, boundary = find_terminal_time_multi(problem, fld, tol=cfg.root_tol)
        out = {"T": _num(T), "z_at_T": _num(zT), "boundary": boundary}
    else:
        raise ConfigError("problem", "kind", "solve-t needs kind = herglotz or multidim")
    if args.json:
        sys.stdout.write(json_text(out))
    else:
        sys.stdout.write(f"T = {_fmt(out['T'])}\nz(T) = {_fmt(out['z_at_T'])}\n")
        if out["boundary"]:
            sys.stdout.write("no sign change of L: T is the right end point (boundary)\n")
    return EXIT_OK


# ---------------------------------------------------------------- example

def run_example(name: str, grid: int | None = None, tol: float = 5e-3):
    """Run a built-in example; returns ``(report_dict, z_csv_text)``."""
    if name not in REFERENCE:
        raise CliError(f"unknown example {name!r}; choose from {', '.join(REFERENCE)}")
    cfg = parse_config(FIXTURES[name], grid=grid, source=f"<fixture {name}>")
    problem, x = cfg.herglotz()
    rep = verify(problem, x, "auto", tol)
    ref = REFERENCE[name]
    t = rep.profiles.get("t", problem.grid.nodes)
    z = rep.profiles.get("z", np.full(len(t), np.nan))
    z_exact = ref["z"](np.asarray(t))
    z_err = float(np.max(np.abs(z - z_exact)))
    report = {
        "example": name, "n": problem.grid.n, **rep.to_dict(),
        "reference": {"T": ref["T"], "z_at_T": ref["z_at_T"]},
        "T_error": _num(abs(rep.T - ref["T"])),
        "z_at_T_error": _num(abs(rep.z_at_T - ref["z_at_T"])),
        "z_max_error": _num(z_err),
        "tol": tol, "passed": rep.passed(tol, problem.grid.b),
    }
    return report, csv_text({"t": t, "z": z, "z_exact": z_exact})


def cmd_example(args) -> int:
    report, zcsv = run_example(args.name, args.grid, _tol(args))
    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    _write(os.path.join(out_dir, f"{args.name}_z.csv"), zcsv)
    text = json_text(report)
    _write(os.path.join(out_dir, f"{args.name}_report.json"), text)
    sys.stdout.write(text)
    return EXIT_OK if report["passed"] else EXIT_FAIL


# ---------------------------------------------------------------- ibp-check

def ibp_report(cfg: ProblemConfig, tol: float):
    if "y" not in cfg.exprs:
        raise ConfigError("trajectory", "y", "ibp-check needs a second trajectory y")
    alpha = cfg.spec().alpha
    out = {"n": cfg.n, "n_refined": 2 * cfg.n}
    ok = True
    for label, second in (("first", False), ("second", True)):
        res = []
        for n in (cfg.n, 2 * cfg.n):
            g = cfg.grid(n)
            res.append(fo.ibp_residual(cfg.trajectory(g), cfg.trajectory(g, "y"), alpha, second))
        order = math.log2(res[0] / res[1]) if res[0] > 0 and res[1] > 0 else None
        out[label] = {"residual": _num(res[0]), "residual_refined": _num(res[1]),
                      "order": _num(order) if order is not None else None}
        ok = ok and bool(math.isfinite(res[1]) and res[1] < tol)
    out["tol"] = tol
    out["passed"] = ok
    return out


def cmd_ibp_check(args) -> int:
    cfg = _load(args)
    if cfg.kind != "operator":
        raise ConfigError("problem", "kind", "ibp-check needs kind = operator")
    rep = ibp_report(cfg, _tol(args, cfg))
    if args.json:
        sys.stdout.write(json_text(rep))
    else:
        for label in ("first", "second"):
            r = rep[label]
            order = "n/a" if r["order"] is None else f"{r['order']:.3f}"
            sys.stdout.write(
                f"{label}: n={rep['n']} residual={_fmt(r['residual'])} "
                f"n={rep['n_refined']} residual={_fmt(r['residual_refined'])} order={order}\n")
    return EXIT_OK if rep["passed"] else EXIT_FAIL


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fracvar", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_help="output file (default stdout)"):
        sp.add_argument("--config", help="problem file (INI)")
        sp.add_argument("--out", help=out_help)
        sp.add_argument("--csv", help="write profiles as CSV to this path")
        sp.add_argument("--tol", type=float, default=None, help="pass threshold (default 5e-3)")
        sp.add_argument("--grid", type=int, default=None, help="override the number of subintervals")
        sp.add_argument("--json", action="store_true", help="JSON output where text is the default")

    for name, fn, help_ in (
        ("deriv", cmd_deriv, "evaluate an operator on every node"),
        ("verify", cmd_verify, "residual report for a candidate extremal"),
        ("solve-t", cmd_solve_t, "locate the free terminal time"),
        ("ibp-check", cmd_ibp_check, "integration by parts residuals and observed order"),
    ):
        sp = sub.add_parser(name, help=help_)
        common(sp)
        sp.set_defaults(func=fn)
    sp = sub.add_parser("example", help="run a built-in worked example")
    sp.add_argument("name", choices=sorted(REFERENCE))
    common(sp, out_help="directory for the CSV and JSON files (default .)")
    sp.set_defaults(func=cmd_example)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_ERROR
    if args.grid is not None and args.grid < 2:
        print("error: --grid needs at least 2 subintervals", file=sys.stderr)
        return EXIT_ERROR
    if args.tol is not None and not args.tol > 0:
        print("error: --tol must be positive", file=sys.stderr)
        return EXIT_ERROR
    try:
        return args.func(args)
    except (ConfigError, CliError, ExprError, SolveError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:  # noqa: BLE001 - never let a traceback escape
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
