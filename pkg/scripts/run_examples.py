"""Solve the shipped example games under each configuration and print a table.

    python scripts/run_examples.py [--json out.json]
"""
import argparse
import json
import os
import time

from galatt import SmtBackend, SolveOptions, Solver, read_game_file
from galatt.solver import check_certificate

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

CONFIGS = [
    ("g_r.game", dict(accel="gal")),
    ("g_r.game", dict(accel="off", max_iter=64)),
    ("g_b.game", dict(summaries="on")),
    ("g_b.game", dict(summaries="off")),
]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--json")
    ap.add_argument("--timeout", type=float, default=1200)
    args = ap.parse_args()
    rows = []
    with SmtBackend() as be:
        for name, opts in CONFIGS:
            G, cond = read_game_file(os.path.join(ROOT, "games", name))
            t0 = time.monotonic()
            res = Solver(be, SolveOptions(timeout=args.timeout, **opts)).solve(G, cond)
            wall = time.monotonic() - t0
            cert = None if res.certificate is None else check_certificate(res.certificate, be)
            st = res.stats
            rows.append({"game": name, "options": opts, "result": res.result.value, "wall_s": round(wall, 2),
                         "gal_searches": st["gal_searches"], "summary_applications": st["summary_applications"],
                         "cpre_calls": st["cpre_calls"], "certificate_valid": cert})
            print(f"{name:10} {str(opts):40} {res.result.value:13} {wall:7.1f}s "
                  f"searches={st['gal_searches']:3} applications={st['summary_applications']:3} cert={cert}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
