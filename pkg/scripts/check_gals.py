"""Run the bounded GAL checker on random compositions and on the broken control.

    python scripts/check_gals.py [--n 500] [--seed 0]
"""
import argparse
import random
import time

from galatt import formula as F
from galatt.formula import TRUE, Int
from galatt.gal import Gal
from galatt.oracle import FiniteDomain, check_gal_bounded, random_gal


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--depth", type=int, default=2)
    args = ap.parse_args()
    rng = random.Random(args.seed)
    V = (Int("x"), Int("y"))
    dom = FiniteDomain.uniform(V, -8, 8)
    t0 = time.monotonic()
    refuted = []
    for k in range(args.n):
        g = random_gal(rng, V, depth=args.depth)
        cex = check_gal_bounded(g, dom, max_len=12, window=4)
        if cex is not None:
            refuted.append((k, str(g), cex.kind, cex.sequence))
    y = V[1]
    up = F.eq(y.prime(), y + 1)
    control = check_gal_bounded(Gal(F.le(y, 0), up, up, TRUE, (y,)))
    print(f"{args.n} compositions checked in {time.monotonic() - t0:.1f}s, {len(refuted)} refuted")
    for r in refuted:
        print("  ", r)
    print("broken control:", "refuted" if control else "NOT refuted", control.kind if control else "")


if __name__ == "__main__":
    main()
