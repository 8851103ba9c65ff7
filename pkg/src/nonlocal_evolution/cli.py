"""Command line front end: ``nle check|solve|sweep|oracle-compare FILE``.

Exit codes: 0 success, 2 a required certificate fails (or the resolvent does
not exist), 3 a required certificate is marginal, 4 Picard did not converge,
5 oracle deviation above threshold, 6 oracle refused the problem, 64 bad
problem file or arguments.
"""

from __future__ import annotations

import argparse
import copy
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .analysis import certify
from .certificates import fmt
from .evolution import EvolutionError
from .expr import ExprError
from .grid import OffGridError
from .nonlinearity import PhiEvaluationError
from .nonlocal_map import H2ViolationError, NonlocalKind, support
from .numerics import NumericsError
from .oracle import NoRootError, OracleDivergenceError, OracleRefusal, shooting_solve
from .problem import ConfigError, build_problem, load_raw
from .solver import DivergenceError, MildOperator, picard_solve

EXIT_OK = 0
EXIT_FAIL = 2
EXIT_MARGINAL = 3
EXIT_NOT_CONVERGED = 4
EXIT_ORACLE_DEVIATION = 5
EXIT_ORACLE_REFUSED = 6
EXIT_CONFIG = 64


def _load(args):
    raw = load_raw(args.file)
    raw = copy.deepcopy(raw)
    if getattr(args, "n_steps", None) is not None:
        raw.setdefault("time", {})["n_steps"] = args.n_steps
    solver = raw.setdefault("solver", {})
    if getattr(args, "tol", None) is not None:
        solver["tol"] = args.tol
    if getattr(args, "damping", None) is not None:
        solver["damping"] = args.damping
    return raw, build_problem(raw, str(args.file))


def _write_csv(path, lines) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _emit(lines, out) -> None:
    out.write("\n".join(lines) + "\n")


# -- commands ------------------------------------------------------------------


def cmd_check(args, out=sys.stdout) -> int:
    _, spec = _load(args)
    cert = certify(spec)
    lines = cert.report.lines()
    _emit(lines, out)
    if args.csv:
        _write_csv(args.csv, lines)
    return cert.report.exit_code()


def solution_lines(spec, result) -> list[str]:
    d, n = spec.d, spec.n_components
    head = ["t"] + [f"u_{k + 1}" for k in range(d)] + [f"R_{i + 1}" for i in range(n)] + ["norm_u"]
    lines = [",".join(head)]
    R = np.stack([spec.tube.values(spec.grid, i) for i in range(n)], axis=-1)
    norms = spec.norms(result.u.values)
    for k, t in enumerate(spec.grid.nodes):
        row = [t, *result.u.values[k], *R[k], norms[k]]
        lines.append(",".join(fmt(x) for x in row))
    lines.append(",".join(["residual", fmt(result.residual)] + [""] * (len(head) - 2)))
    return lines


def cmd_solve(args, out=sys.stdout) -> int:
    _, spec = _load(args)
    try:
        result = picard_solve(spec)
    except H2ViolationError as exc:
        print(f"h2 violated: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    summary = [
        f"converged,{'true' if result.converged else 'false'}",
        f"iterations,{result.iterations}",
        f"residual,{fmt(result.residual)}",
        f"boundary_defect,{fmt(result.boundary_defect)}",
        f"tube_ok,{'true' if result.tube_ok else 'false'}",
        f"sup_norm,{fmt(float(np.max(spec.norms(result.u.values))))}",
    ]
    _emit(summary, out)
    if args.csv:
        _write_csv(args.csv, solution_lines(spec, result))
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


SWEEP_HEADER = "a_F,r,c7_margin,c8_margin,c13_margin,rho_H,iterations,residual,boundary_defect,status"


def sweep_maps(spec, m: int):
    """The ``m`` nonlocal maps of a support sweep, as ``(t_1, F or error)``.

    Multi-point maps move their last point; quadrature maps scale all nodes
    by the same factor. Positions snap to grid nodes.
    """
    F = spec.F
    if F.kind is NonlocalKind.ZERO or len(F.times) == 0:
        raise ConfigError("nonlocal", "sweep needs a multipoint or quadrature condition")
    grid = spec.grid
    t_last = float(F.times[-1])
    if m == 1:
        targets = [t_last]
    else:
        targets = [grid.snap(grid.a * k / m) for k in range(1, m + 1)]
    out = []
    for target in targets:
        try:
            if F.kind is NonlocalKind.MULTIPOINT:
                times = np.array(F.times)
                times[-1] = target
            else:
                times = np.array([grid.snap(t * target / t_last) for t in F.times])
            out.append((target, type(F)(F.kind, times, F.coeffs, F.d, F.partition)))
        except ValueError as exc:
            out.append((target, exc))
    return out


def _sweep_row(spec, target, F) -> str:
    if isinstance(F, Exception):
        return f"{fmt(target)},,,,,,,,,error: {_clean(F)}"
    try:
        s = spec.with_F(F)
        cert = certify(s)
        rep = cert.report
        a_F = support(F)[0]
        if cert.res is None:
            return f"{fmt(a_F)},,,,,,,,,error: h2 violated"
        if s.n_components == 1:
            c7, c8 = rep.get("c7").margin, rep.get("c8").margin
            c13 = rep.get("c13").margin
        else:
            c7 = min(e.margin for e in rep.entries if e.condition_id == "rr1")
            c8 = min(e.margin for e in rep.entries if e.condition_id == "h3sys")
            c13 = math.nan
        r = max(cert.r)
        rho = rep.get("mm").lhs
        head = f"{fmt(a_F)},{fmt(r)},{fmt(c7)},{fmt(c8)},{fmt(c13)},{fmt(rho)}"
        try:
            res = picard_solve(s, op=MildOperator(s, cert.tab, cert.res))
        except DivergenceError as exc:
            return f"{head},{len(exc.history)},,,error: diverged"
        status = "ok" if res.converged else "not converged"
        return f"{head},{res.iterations},{fmt(res.residual)},{fmt(res.boundary_defect)},{status}"
    except (ValueError, ArithmeticError, NumericsError, EvolutionError, ExprError) as exc:
        return f"{fmt(target)},,,,,,,,,error: {_clean(exc)}"


def _clean(exc) -> str:
    return str(exc).replace(",", ";").replace("\n", " ")


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("NLE_THREADS", "1")))
    except ValueError:
        return 1


def cmd_sweep(args, out=sys.stdout) -> int:
    _, spec = _load(args)
    if args.points < 1:
        raise ConfigError("--points", "must be >= 1")
    maps = sweep_maps(spec, args.points)
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        rows = list(pool.map(lambda tf: _sweep_row(spec, *tf), maps))
    lines = [SWEEP_HEADER] + rows
    _emit(lines, out)
    if args.csv:
        _write_csv(args.csv, lines)
    return EXIT_OK


def oracle_threshold(spec, sup_u: float) -> float:
    return 10.0 * spec.grid.h**2 * (1.0 + sup_u)


def cmd_oracle_compare(args, out=sys.stdout) -> int:
    _, spec = _load(args)
    if not spec.P.causal:
        print("oracle refused: shooting needs a causal nonlinearity (deviated arguments look ahead)",
              file=sys.stderr)
        return EXIT_ORACLE_REFUSED
    try:
        result = picard_solve(spec)
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    if not result.converged:
        print("picard_solve did not converge", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    try:
        ref = shooting_solve(spec)
    except OracleRefusal as exc:
        print(f"oracle refused: {exc}", file=sys.stderr)
        return EXIT_ORACLE_REFUSED
    except (NoRootError, OracleDivergenceError) as exc:
        print(f"oracle failed: {exc}", file=sys.stderr)
        return EXIT_ORACLE_DEVIATION
    dev = float(np.max(spec.norms(result.u.values - ref.values)))
    sup_u = float(np.max(spec.norms(result.u.values)))
    thr = oracle_threshold(spec, sup_u)
    lines = ["deviation,threshold,pass", f"{fmt(dev)},{fmt(thr)},{'true' if dev <= thr else 'false'}"]
    _emit(lines, out)
    if args.csv:
        _write_csv(args.csv, lines)
    return EXIT_OK if dev <= thr else EXIT_ORACLE_DEVIATION


# -- argument parsing ------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="nle", description="Certify and solve nonlocal Cauchy problems.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("file", help="TOML problem file")
        sp.add_argument("--csv", metavar="PATH", help="write CSV output to PATH")
        sp.add_argument("--n-steps", type=int, metavar="N", help="override the grid size")
        return sp

    common(sub.add_parser("check", help="evaluate the existence certificates"))
    s = common(sub.add_parser("solve", help="Picard iteration for the mild solution"))
    s.add_argument("--damping", type=float, metavar="X")
    s.add_argument("--tol", type=float, metavar="X")
    w = common(sub.add_parser("sweep", help="move the nonlocal support through (0, a]"))
    w.add_argument("--points", type=int, default=20, metavar="N")
    w.add_argument("--damping", type=float, metavar="X")
    w.add_argument("--tol", type=float, metavar="X")
    o = common(sub.add_parser("oracle-compare", help="Picard against the shooting oracle"))
    o.add_argument("--damping", type=float, metavar="X")
    o.add_argument("--tol", type=float, metavar="X")
    return p


COMMANDS = {
    "check": cmd_check,
    "solve": cmd_solve,
    "sweep": cmd_sweep,
    "oracle-compare": cmd_oracle_compare,
}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args, out)
    except ConfigError as exc:
        print(f"config error at {exc.location}: {exc.message}", file=sys.stderr)
        return EXIT_CONFIG
    except (OffGridError, ExprError, PhiEvaluationError, NumericsError, EvolutionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
