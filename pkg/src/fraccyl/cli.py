"""Command line entry point ``fraccyl``.

Exit codes: 0 success, 2 configuration error, 3 geometry error, 4 I/O error,
5 solver or quadrature non-convergence.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .config import ConfigError, parse_config, parse_number
from .constants import FracOrder, Normalization, QuadratureError, c_ns, theta_n, verify_reduction_identity
from .experiments import (ConvergenceTable, cross_section_run, extrusion_residual, far_support_force, fit_rate,
                          force_profile, poincare_ladder, run_far_support, weighted_estimate_check)
from .grid import (CrossSection, CylinderDomain, GeometryError, GridFunction, build_grid, extrude,
                   l2_norm_sq_on)
from .io import atomic_write, csv_text, dumps_json, emit_outputs
from .operator import assemble_weights
from .solver import SolverError, solve_dirichlet, solve_with_weights
from .weights import (CutoffRho, PhiEps, RhoEpsLambda, j_bound_check, j_ell, psi_capital, s_s_of_rho,
                      sqrt_phi_derivative_sq)

EXIT_OK, EXIT_CONFIG, EXIT_GEOMETRY, EXIT_IO, EXIT_SOLVER = 0, 2, 3, 4, 5


def _num(name):
    def conv(text):
        try:
            return parse_number(text, name)
        except ConfigError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None
    return conv


def _num_list(name):
    def conv(text):
        try:
            return [parse_number(v, name) for v in text.split(",") if v.strip()]
        except ConfigError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None
    return conv


def _order(s) -> float:
    try:
        return FracOrder(s).s
    except ValueError:
        raise ConfigError(f"field 's' must lie in (0, 1), got {s!r}") from None


def _emit_text(text: str, out):
    if out:
        atomic_write(out, text)
    else:
        sys.stdout.write(text)


def _print_json(obj):
    sys.stdout.write(dumps_json(obj) + "\n")


def _fit_or_none(table: ConvergenceTable):
    try:
        fit = fit_rate(table)
    except ValueError:
        return None, None
    return fit.exponent, fit.r2


# ---------------------------------------------------------------- subcommands

def cmd_constants(args) -> int:
    norm = Normalization.parse(args.norm)
    ns = [args.n] if args.n is not None else [2, 3, 4]
    ss = [_order(args.s)] if args.s is not None else [0.1, 0.25, 0.5, 0.75, 0.9]
    rows = []
    for n in ns:
        if n < 2:
            raise ConfigError("field 'n' must be at least 2")
        for s in ss:
            rows.append({"n": n, "s": s, "norm": norm.value, "c_ns": c_ns(n, s, norm),
                         "theta_n": theta_n(n, s, args.method).value, "c_n_minus_1": c_ns(n - 1, s, norm),
                         "residual": verify_reduction_identity(n, s, norm, args.method)})
    _print_json(rows[0] if len(rows) == 1 else rows)
    return EXIT_OK


def cmd_solve(args) -> int:
    s = _order(args.s)
    h = args.h
    if not h > 0:
        raise ConfigError("field 'h' must be positive")
    if args.dim == 1:
        half = 1.0 if args.ell is None else args.ell
        grid = build_grid(CrossSection(half), h)
        if args.f == "slab":
            raise ConfigError("force 'slab' needs --dim 2")
        f = force_profile(_checked_force(args.f), grid)
    else:
        if args.ell is None:
            raise ConfigError("--ell is required for --dim 2")
        grid = build_grid(CylinderDomain(args.ell), h)
        if args.f == "slab":
            if args.ell <= 1:
                raise ConfigError("force 'slab' needs ell > 1")
            f = far_support_force(grid, args.ell)
        else:
            cross = build_grid(CrossSection(), h)
            prof = force_profile(_checked_force(args.f), cross)
            f = GridFunction.from_interior(grid, extrude(prof, grid).interior)
    rep = solve_dirichlet(grid, s, f, Normalization.parse(args.norm), args.tol)
    if args.out:
        atomic_write(args.out, rep.solution.to_csv())
    _print_json({"iterations": rep.iterations, "residual": rep.residual,
                 "l2_sq": l2_norm_sq_on(rep.solution), "wall_time": rep.wall_time})
    return EXIT_OK


def _checked_force(spec: str) -> str:
    if spec.startswith("profile:") and not os.path.isfile(spec[len("profile:"):]):
        raise ConfigError(f"field 'force': profile file {spec[len('profile:'):]!r} does not exist")
    if spec != "one" and not spec.startswith("profile:"):
        raise ConfigError(f"unknown force {spec!r}")
    return spec


def cmd_weights(args) -> int:
    fam = args.family
    n = args.num
    rows = []
    if fam == "rho":
        s = _order(args.s)
        cut = CutoffRho(args.ell, args.alpha)
        c_star = j_bound_check([args.ell], s, args.alpha).c_star
        lo, hi = _range(args, 0.0, 4.0 * args.ell)
        for y in np.linspace(lo, hi, n):
            v = j_ell(y, cut, s)
            if abs(y) < 2 * args.ell:
                b = c_star * args.ell ** (-2 * s)
            else:
                b = c_star * (abs(args.ell - y) ** (-2 * s) + abs(args.ell + y) ** (-2 * s))
            rows.append((float(y), v, b, v / b))
    elif fam == "phi":
        eps = _need(args.eps, "eps")
        phi = PhiEps(eps, args.variant)
        lo, hi = _range(args, -50.0, 50.0)
        xi = np.linspace(-1.0, 1.0, 201)
        for x in np.linspace(lo, hi, n):
            z = x + xi
            keep = np.all([np.abs(np.abs(z) - abs(k)) > 1e-12 for k in phi.kinks], axis=0)
            r = float(np.max(np.where(keep, sqrt_phi_derivative_sq(x, xi, eps, args.variant), 0.0)))
            b = float(phi(x))
            rows.append((float(x), r * b, b, r))
    elif fam == "slambda":
        s = _order(args.s)
        eps = args.eps if args.eps is not None else s
        lam = _need(args.lam, "lambda")
        rho = RhoEpsLambda(eps, lam, args.variant)
        lo, hi = _range(args, 0.0, 4.0 * lam)
        for x in np.linspace(lo, hi, n):
            v = s_s_of_rho(x, eps, lam, s, args.n, args.variant)
            b = lam ** (-2 * s) * float(rho(x))
            rows.append((float(x), v, b, v / b))
    else:
        s = _order(args.s)
        ell = args.ell
        grid = build_grid(CylinderDomain(ell), args.h)
        cross = build_grid(CrossSection(), args.h)
        u_inf = solve_with_weights(assemble_weights(cross, s), force_profile("one", cross)).solution
        psi = psi_capital(ell, s, u_inf, grid)
        b = ell ** (-(1 + 2 * s))
        for x1, col in zip(psi.grid.axis(0), psi.values):
            v = float(np.max(np.abs(col)))
            rows.append((float(x1), v, b, v / b))
    _emit_text(csv_text(["input", "value", "bound", "ratio"], rows), args.out)
    return EXIT_OK


def _range(args, lo, hi):
    a = lo if args.xmin is None else args.xmin
    b = hi if args.xmax is None else args.xmax
    if not b > a:
        raise ConfigError("--xmax must exceed --xmin")
    return a, b


def _need(value, name):
    if value is None:
        raise ConfigError(f"field {name!r} is required for this family")
    return value


def _rates_summary(kind, spec, table, extra=None):
    exponent, r2 = _fit_or_none(table)
    s = spec.s
    summary = {"kind": kind, "s": s, "exponent": exponent, "r2": r2}
    if kind == "cross-section":
        ok = table.strictly_decreasing()
        asserting = s > 0.5
        if asserting:
            ok = ok and exponent is not None and exponent <= -(2 * s - 1) + 0.3 and r2 >= 0.9
        summary["asserting"] = asserting
    elif kind == "far-support":
        ok = table.strictly_decreasing() and exponent is not None and exponent <= -(2 * s - 0.3)
    elif kind == "linear-growth":
        ok = min(table.values) > 0 and table.spread() <= 2.0
        summary["spread"] = table.spread()
    else:
        ok = bool(extra["bounded"]) and not any(extra["violations"])
    summary.update(extra or {})
    summary["pass"] = bool(ok)
    return summary


def cmd_rates(args) -> int:
    kind = args.kind
    far = kind in ("far-support", "weighted")
    overrides = {"s": args.s, "h": args.h, "ladder": args.ladder, "alpha": args.alpha, "eps": args.eps,
                 "lambda": args.lam, "norm": args.norm, "force": args.force}
    cfg = parse_config("rates", args.config, overrides, args.out, far_support=far).params
    spec = cfg.ladder_spec()
    solutions = {}
    extra = None
    if kind in ("cross-section", "linear-growth"):
        if cfg.force == "slab":
            raise ConfigError("cross-section runs need force 'one' or 'profile:<path>'")
        run = cross_section_run(spec)
        table = run.energy_table() if kind == "cross-section" else run.growth_table()
        if args.solutions:
            solutions = run.u_ell
    elif kind == "far-support":
        table = run_far_support(spec)
    else:
        chk = weighted_estimate_check(spec)
        table = chk.tables[0]
        extra = {"eps": chk.eps, "lambdas": list(chk.lams), "violations": list(chk.violations),
                 "bounded": chk.bounded, "values_by_lambda": [list(t.values) for t in chk.tables]}
    summary = _rates_summary(kind, spec, table, extra)
    emit_outputs(args.out, table, summary, solutions)
    _print_json(summary)
    return EXIT_OK


def cmd_poincare(args) -> int:
    s = _order(args.s)
    ells = args.ladder or [4.0, 8.0, 16.0]
    table = poincare_ladder(s, args.h, ells, Normalization.parse(args.norm))
    exponent, r2 = _fit_or_none(table)
    v = table.values
    monotone = all(b <= a for a, b in zip(v, v[1:]))
    ratio = v[-1] / v[-2] if len(v) >= 2 else None
    ok = monotone and (ratio is None or ratio >= 0.9)
    summary = {"s": s, "exponent": exponent, "r2": r2, "monotone": monotone, "last_ratio": ratio, "pass": ok}
    emit_outputs(args.out, table, summary)
    _print_json(summary)
    return EXIT_OK


def cmd_extrusion(args) -> int:
    s = _order(args.s)
    rows = extrusion_residual(s, args.ell, args.h_ladder, norm=Normalization.parse(args.norm))
    text = csv_text(["h", "common", "all_nodes", "plateau_spread"],
                    [(r.h, r.common, r.all_nodes, r.plateau_spread) for r in rows])
    os.makedirs(args.out, exist_ok=True)
    atomic_write(os.path.join(args.out, "extrusion.csv"), text)
    dec = all(b.common < a.common for a, b in zip(rows, rows[1:]))
    summary = {"s": s, "ell": args.ell, "decreasing": dec, "pass": dec}
    atomic_write(os.path.join(args.out, "summary.json"), dumps_json(summary) + "\n")
    _print_json(summary)
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fraccyl", description="Fractional Dirichlet problems on long cylinders.")
    sub = p.add_subparsers(dest="command", required=True)
    norms = [m.value for m in Normalization]

    c = sub.add_parser("constants", help="normalization constants and the reduction identity")
    c.add_argument("--n", type=int)
    c.add_argument("--s", type=_num("s"))
    c.add_argument("--norm", choices=norms, default="standard")
    c.add_argument("--method", choices=["closed", "quadrature"], default="closed")
    c.set_defaults(func=cmd_constants)

    sv = sub.add_parser("solve", help="solve the exterior-Dirichlet problem once")
    sv.add_argument("--dim", type=int, choices=[1, 2], required=True)
    sv.add_argument("--s", type=_num("s"), required=True)
    sv.add_argument("--ell", type=_num("ell"))
    sv.add_argument("--h", type=_num("h"), required=True)
    sv.add_argument("--f", default="one", help="one, slab or profile:<path.csv>")
    sv.add_argument("--norm", choices=norms, default="standard")
    sv.add_argument("--tol", type=_num("tol"), default=1e-10)
    sv.add_argument("--out", help="solution CSV path")
    sv.set_defaults(func=cmd_solve)

    w = sub.add_parser("weights", help="weight-family scans")
    wsub = w.add_subparsers(dest="action", required=True)
    scan = wsub.add_parser("scan", help="CSV of input,value,bound,ratio")
    scan.add_argument("--family", choices=["rho", "phi", "slambda", "psi"], required=True)
    scan.add_argument("--s", type=_num("s"), default=0.75)
    scan.add_argument("--ell", type=_num("ell"), default=8.0)
    scan.add_argument("--alpha", type=_num("alpha"), default=0.5)
    scan.add_argument("--eps", type=_num("eps"))
    scan.add_argument("--lambda", dest="lam", type=_num("lambda"))
    scan.add_argument("--variant", choices=["min", "plain"], default="min")
    scan.add_argument("--n", type=int, default=2, help="dimension for the S_s reduction")
    scan.add_argument("--h", type=_num("h"), default=1.0 / 16)
    scan.add_argument("--xmin", type=_num("xmin"))
    scan.add_argument("--xmax", type=_num("xmax"))
    scan.add_argument("--num", type=int, default=65)
    scan.add_argument("--out")
    scan.set_defaults(func=cmd_weights)

    r = sub.add_parser("rates", help="ladder experiments")
    r.add_argument("kind", choices=["cross-section", "far-support", "linear-growth", "weighted"])
    r.add_argument("--config")
    r.add_argument("--out", default=".")
    r.add_argument("--s", type=_num("s"))
    r.add_argument("--h", type=_num("h"))
    r.add_argument("--ladder", type=_num_list("ladder"))
    r.add_argument("--alpha", type=_num("alpha"))
    r.add_argument("--eps", type=_num("eps"))
    r.add_argument("--lambda", dest="lam", type=_num("lambda"))
    r.add_argument("--norm", choices=norms)
    r.add_argument("--force")
    r.add_argument("--solutions", action="store_true", help="also write solution_<ell>.csv")
    r.set_defaults(func=cmd_rates)

    pc = sub.add_parser("poincare", help="smallest Rayleigh quotient along a ladder")
    pc.add_argument("--s", type=_num("s"), default=0.5)
    pc.add_argument("--h", type=_num("h"), default=1.0 / 16)
    pc.add_argument("--ladder", type=_num_list("ladder"))
    pc.add_argument("--norm", choices=norms, default="standard")
    pc.add_argument("--out", default=".")
    pc.set_defaults(func=cmd_poincare)

    ex = sub.add_parser("extrusion", help="residual of the extruded cross-section solution")
    ex.add_argument("--s", type=_num("s"), default=0.75)
    ex.add_argument("--ell", type=_num("ell"), default=4.0)
    ex.add_argument("--h-ladder", type=_num_list("h"), default=[1 / 8, 1 / 16, 1 / 32, 1 / 64])
    ex.add_argument("--norm", choices=norms, default="standard")
    ex.add_argument("--out", default=".")
    ex.set_defaults(func=cmd_extrusion)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        code, msg = EXIT_CONFIG, str(exc)
    except GeometryError as exc:
        code, msg = EXIT_GEOMETRY, str(exc)
    except (SolverError, QuadratureError) as exc:
        code, msg = EXIT_SOLVER, str(exc)
    except OSError as exc:
        code, msg = EXIT_IO, str(exc)
    except ValueError as exc:
        code, msg = EXIT_CONFIG, str(exc)
    print(f"fraccyl: error: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
