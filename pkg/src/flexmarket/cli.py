"""Command-line front end.

Exit codes: 0 success; 1 usage, I/O or parse error; 2 infeasible or empty
instance; 3 a verification check failed (``verify`` only).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import convex_solver, oracle
from .best_response import best_response_vec
from .bench_harness import SOLVERS, ScenarioConfig, run_benchmark
from .errors import MarketError
from .market_model import load_instance
from .mpec_mip import build_big_m_mip, build_kkt_system, choose_big_m, export_lp, solve_mip_bb

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_CHECK = 0, 1, 2, 3

EPILOG = """exit codes:
  0  success
  1  usage, I/O or parse error
  2  infeasible instance, or nothing to export: free flexibility above f
     ("Assumption 1") or above a prosumer's own maximum
  3  verify: a check failed

FLEXMARKET_THREADS caps the number of worker threads used by 'bench'."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="flexmarket",
        description="Optimal personalized prices for an aggregator and its prosumers.",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="solve one instance with the convex solver")
    p.add_argument("--instance", required=True, help="instance JSON file")
    p.add_argument("--no-cap", action="store_true", help="drop the sum(y) <= f constraint")
    fmt = p.add_mutually_exclusive_group()
    fmt.add_argument("--json", dest="fmt", action="store_const", const="json", default="json")
    fmt.add_argument("--csv", dest="fmt", action="store_const", const="csv")

    p = sub.add_parser("bench", help="run a Monte Carlo benchmark sweep")
    p.add_argument("--config", required=True, help="scenario config JSON file")
    p.add_argument("--solvers", default="convex", help="comma list of convex,mip,oracle")
    p.add_argument("--out", required=True, help="output directory for the CSV files")
    p.add_argument("--no-timings", action="store_true",
                   help="leave runtime columns empty (byte-reproducible output)")
    p.add_argument("--export-lp", action="store_true",
                   help="also write instance_<id>.lp files for the MIP")

    p = sub.add_parser("export-mip", help="write the big-M MIP of an instance as LP text")
    p.add_argument("--instance", required=True)
    p.add_argument("--big-m", type=float, default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("verify", help="solve and cross-check an instance")
    p.add_argument("--instance", required=True)
    p.add_argument("--no-cap", action="store_true")
    p.add_argument("--tol", type=float, default=convex_solver.KKT_TOL)
    return parser


def _err(msg: str) -> None:
    print(f"flexmarket: {msg}", file=sys.stderr)


def _load(path, no_cap=False):
    inst = load_instance(path)
    return inst.replace(cap_enabled=False) if no_cap else inst


def cmd_solve(args) -> int:
    inst = _load(args.instance, args.no_cap)
    alloc = convex_solver.solve(inst)
    if args.fmt == "json":
        sys.stdout.write(alloc.to_json())
    else:
        sys.stdout.write(f"# objective={float(alloc.objective)!r} mu={float(alloc.mu)!r} "
                         f"cap_binding={alloc.cap_binding}\n")
        sys.stdout.write("i,x,y,x_min,x_max\n")
        for i, (x, y, (lo, hi)) in enumerate(zip(alloc.x, alloc.y, alloc.price_intervals)):
            sys.stdout.write(f"{i},{float(x)!r},{float(y)!r},{float(lo)!r},{float(hi)!r}\n")
    return EXIT_OK


def cmd_bench(args) -> int:
    solvers = [s.strip() for s in args.solvers.split(",") if s.strip()]
    unknown = [s for s in solvers if s not in SOLVERS]
    if unknown:
        build_parser().print_usage(sys.stderr)
        _err(f"unknown solver(s): {', '.join(unknown)} (choose from {', '.join(SOLVERS)})")
        return EXIT_USAGE
    with open(args.config, encoding="utf-8") as fh:
        cfg = ScenarioConfig.from_dict(json.load(fh))
    export_dir = os.path.join(args.out, "lp") if args.export_lp else None
    report = run_benchmark(cfg, solvers, timings=not args.no_timings, export_dir=export_dir)
    for path in report.write(args.out):
        print(path)
    return EXIT_OK


def cmd_export(args) -> int:
    inst = load_instance(args.instance)
    if inst.n == 0:
        _err("instance has no prosumers; nothing to export")
        return EXIT_INFEASIBLE
    big_m = args.big_m if args.big_m is not None else choose_big_m(inst)
    name = os.path.splitext(os.path.basename(args.out))[0]
    text = export_lp(build_big_m_mip(inst, big_m, name=name))
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(text)
    return EXIT_OK


def cmd_verify(args) -> int:
    inst = _load(args.instance, args.no_cap)
    alloc = convex_solver.solve(inst)
    kkt = convex_solver.verify_kkt(alloc, inst, args.tol)
    kkt_sys = build_kkt_system(inst)
    lam1, lam2 = kkt_sys.consistent_duals(alloc.x, alloc.y)
    mpec = kkt_sys.evaluate(alloc.x, alloc.y, lam1, lam2)
    checks = {
        "kkt": {"residual": kkt.residual, "passed": kkt.passed},
        "mpec": {"residual": mpec.residual, "passed": mpec.residual <= args.tol},
    }
    if inst.n <= oracle.BRUTE_FORCE_LIMIT:
        cand = oracle.brute_force_optimum(inst)
        gap = abs(cand.objective - alloc.objective)
        checks["brute_force"] = {
            "objective": cand.objective,
            "gap": gap,
            "passed": gap <= 1e-8 * max(1.0, abs(alloc.objective)),
        }
    if inst.n <= 12:
        sol = solve_mip_bb(build_big_m_mip(inst, choose_big_m(inst)))
        gap = abs(sol.objective - alloc.objective) if sol.has_incumbent else float("inf")
        checks["mip"] = {
            "status": sol.status,
            "objective": sol.objective if sol.has_incumbent else None,
            "passed": sol.optimal and gap <= 1e-6 * max(1.0, abs(alloc.objective)),
        }
    fixed = np.array_equal(alloc.y, best_response_vec(alloc.x, inst.a, inst.b, inst.m))
    checks["fixed_point"] = {"passed": bool(fixed)}
    passed = all(c["passed"] for c in checks.values())
    report = {"objective": alloc.objective, "checks": checks, "passed": passed}
    sys.stdout.write(json.dumps(report, indent=2) + "\n")
    return EXIT_OK if passed else EXIT_CHECK


COMMANDS = {"solve": cmd_solve, "bench": cmd_bench, "export-mip": cmd_export, "verify": cmd_verify}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except MarketError as exc:
        _err(str(exc))
        return EXIT_INFEASIBLE
    except (OSError, ValueError) as exc:
        # json.JSONDecodeError is a ValueError
        _err(str(exc))
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
