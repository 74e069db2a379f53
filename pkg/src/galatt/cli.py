"""Command line interface: ``galatt solve`` and ``galatt difftest``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .gamefile import read_game_file
from .gal import GalBudget
from .sexpr import ParseError
from .game import GameError
from .smt import SmtBackend, SolverConfig, SolverError
from .solver import Result, SolveOptions, Solver, check_certificate
from . import formula as F

log = logging.getLogger("galatt")

EXIT_OK, EXIT_ERROR, EXIT_UNKNOWN = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="galatt", description="Solve symbolic infinite-state games.")
    ap.add_argument("-v", "--verbose", action="count", default=0, help="log to stderr (repeat for more)")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="decide realizability of a game file")
    s.add_argument("game", help="path to a .game file")
    s.add_argument("--accel", choices=("gal", "off"), default="gal")
    s.add_argument("--summaries", choices=("on", "off", "auto"), default="auto")
    s.add_argument("--max-iter", type=int, default=64, help="cpre iterations per attractor")
    s.add_argument("--outer-max-iter", type=int, default=1024, help="Buchi outer iterations")
    s.add_argument("--timeout", type=float, default=1200.0, help="seconds for the whole solve")
    s.add_argument("--stats", action="store_true", help="print a JSON statistics block")
    s.add_argument("--dump-gals", metavar="FILE", help="write accepted GALs (SMT syntax)")
    s.add_argument("--dump-summaries", metavar="FILE", help="write computed summaries (SMT syntax)")
    s.add_argument("--smt-log", metavar="FILE", help="log every solver command")
    s.add_argument("--seed", type=int, default=0, help="SMT solver random seed")
    s.add_argument("--check", action="store_true", help="re-check the fixpoint certificate")

    d = sub.add_parser("difftest", help="differential tests against the explicit oracle")
    d.add_argument("--seeds", type=int, default=200)
    d.add_argument("--start", type=int, default=0)
    d.add_argument("--json", metavar="FILE", help="write the machine-readable report here")
    return ap


def main(argv=None) -> int:
    ap = _parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_ERROR if e.code else EXIT_OK
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "solve":
        return _solve(args)
    return _difftest(args)


def _solve(args) -> int:
    try:
        G, cond = read_game_file(args.game)
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
    except (ParseError, GameError) as e:
        print(f"error: {args.game}: {e}", file=sys.stderr)
        return EXIT_ERROR
    try:
        opts = SolveOptions(accel=args.accel, summaries=args.summaries, max_iter=args.max_iter,
                            outer_max_iter=args.outer_max_iter, timeout=args.timeout, budget=GalBudget())
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
    cfg = SolverConfig(seed=args.seed, log_path=args.smt_log)
    try:
        with SmtBackend(cfg) as be:
            solver = Solver(be, opts)
            res = solver.solve(G, cond)
            if args.check and res.result is not Result.UNKNOWN and res.certificate is not None:
                res.stats["certificate_valid"] = check_certificate(res.certificate, be)
    except SolverError as e:
        print(f"error: SMT solver: {e}", file=sys.stderr)
        return EXIT_ERROR
    print(res.result.name)
    if res.reason:
        log.info("reason: %s", res.reason)
    if args.stats:
        print(json.dumps(res.stats, indent=2, sort_keys=True))
    if args.dump_gals:
        with open(args.dump_gals, "w", encoding="utf-8") as fh:
            for g in solver.gals:
                fh.write(f"; {g.origin}\n{g.to_smtlib()}\n\n")
    if args.dump_summaries:
        with open(args.dump_summaries, "w", encoding="utf-8") as fh:
            for s in solver.summaries:
                fh.write(f"; player {s.player.value}, source location {s.l_s}\n")
                fh.write(f"(phi {F.to_smt_text(s.phi)})\n")
                for l, f in s.template.tau:
                    fh.write(f"(tau {l} {F.to_smtlib(f)})\n")
                fh.write("\n")
    return EXIT_UNKNOWN if res.result is Result.UNKNOWN else EXIT_OK


def _difftest(args) -> int:
    from .difftest import run_difftest

    report = run_difftest(range(args.start, args.start + args.seeds))
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    print(text)
    return EXIT_OK if report["failures"] == 0 else EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
