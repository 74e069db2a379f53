"""Summary soundness on random finite games: added states versus the oracle attractor.

    python scripts/summary_fixtures.py [--fixtures 50]
"""
import argparse
import time

from galatt import SmtBackend
from galatt.difftest import check_summary_fixture, summary_fixture


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--fixtures", type=int, default=50)
    ap.add_argument("--max-seed", type=int, default=1000)
    args = ap.parse_args()
    t0 = time.monotonic()
    n = seed = 0
    totals = {"targets": 0, "violations": 0, "skipped": 0, "added": 0}
    with SmtBackend() as be:
        while n < args.fixtures and seed < args.max_seed:
            fx = summary_fixture(seed, be)
            seed += 1
            if fx is None:
                continue
            r = check_summary_fixture(fx, be)
            if not r["targets"]:
                continue
            n += 1
            for k in totals:
                totals[k] += r[k]
            print(f"seed {seed - 1:4}: {r}")
    print(f"{n} fixtures from {seed} seeds in {time.monotonic() - t0:.0f}s: {totals}")


if __name__ == "__main__":
    main()
