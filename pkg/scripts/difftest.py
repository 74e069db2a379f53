"""Differential run against the explicit oracle, with a per-seed table.

    python scripts/difftest.py [--seeds 200] [--start 0]
"""
import argparse
import json
import time

from galatt import SmtBackend
from galatt.difftest import check_seed


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=200)
    ap.add_argument("--start", type=int, default=0)
    ap.add_argument("--json")
    args = ap.parse_args()
    rows = []
    t0 = time.monotonic()
    with SmtBackend() as be:
        for s in range(args.start, args.start + args.seeds):
            t = time.monotonic()
            r = check_seed(s, be)
            r["time_s"] = round(time.monotonic() - t, 2)
            rows.append(r)
            flag = "" if r["cpre"] and r["attractor"] and r["verdict"] else "  <-- mismatch"
            print(f"seed {s:4} cpre={r['cpre']!s:5} attr={r['attractor']!s:5} verdict={r['verdict']!s:5} "
                  f"{r.get('condition', ''):6} {r['time_s']:6.2f}s{flag}")
    print(f"total {time.monotonic() - t0:.0f}s")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
