"""Differential harness: symbolic engine versus the explicit oracle on random finite games."""
from __future__ import annotations

import logging
import time

import numpy as np

from .gal import GalBudget
from .game import Buchi, Player, Reach, cpre
from .oracle import enumerate_game, random_condition, random_game, random_state
from .smt import SmtBackend
from .solver import Result, SolveOptions, Solver

log = logging.getLogger(__name__)


def _same(eg, a: dict, b: dict) -> bool:
    return all(np.array_equal(a[l] & eg.dom[l], b[l] & eg.dom[l]) for l in eg.locations)


def check_seed(seed: int, backend: SmtBackend, verdicts: bool = True, attractor_cap: int = 256,
               on_solve=None) -> dict:
    """Compare cpre, the un-accelerated attractor and verdicts for one random game.

    ``on_solve(result)`` is called with every SolveResult the check produces.
    """
    G, fd, rng = random_game(seed)
    eg = enumerate_game(G, fd)
    out = {"seed": seed, "cpre": True, "attractor": True, "verdict": True}
    t0 = time.monotonic()
    for p in (Player.SYS, Player.ENV):
        d = random_state(rng, G)
        if not _same(eg, eg.region(cpre(G, p, d, backend)), eg.cpre(p, eg.region(d))):
            out["cpre"] = False
    out["cpre_s"] = time.monotonic() - t0
    target = random_state(rng, G)
    p = rng.choice([Player.SYS, Player.ENV])
    plain = Solver(backend, SolveOptions(accel="off", summaries="off", max_iter=attractor_cap))
    r = plain.attractor(G, p, target)
    if not r.complete or not _same(eg, eg.region(r.state), eg.attractor(p, eg.region(target))):
        out["attractor"] = False
    if verdicts:
        cond = random_condition(rng, G, (Reach, Buchi))
        expected = eg.realizable(cond)
        res = Solver(backend, SolveOptions(timeout=120, budget=GalBudget(max_seconds=5.0))).solve(G, cond)
        if on_solve is not None:
            on_solve(res)
        got = None if res.result is Result.UNKNOWN else res.result is Result.REALIZABLE
        out["condition"] = type(cond).__name__
        out["expected"] = expected
        out["got"] = None if got is None else got
        out["verdict"] = got == expected
    return out


def run_difftest(seeds, verdicts: bool = True, backend: SmtBackend | None = None, on_solve=None) -> dict:
    t0 = time.monotonic()
    own = backend is None
    be = backend or SmtBackend()
    rows = []
    try:
        for s in seeds:
            rows.append(check_seed(s, be, verdicts, on_solve=on_solve))
    finally:
        if own:
            be.close()
    fails = {k: [r["seed"] for r in rows if not r[k]] for k in ("cpre", "attractor", "verdict")}
    return {
        "seeds": len(rows),
        "failures": sum(len(v) for v in fails.values()),
        "cpre_failures": fails["cpre"],
        "attractor_failures": fails["attractor"],
        "verdict_failures": fails["verdict"],
        "cpre_time_s": round(sum(r["cpre_s"] for r in rows), 2),
        "time_s": round(time.monotonic() - t0, 2),
    }


def summary_fixture(seed: int, backend: SmtBackend, n_targets: int = 4):
    """A random finite game with a computed summary and targets in its support set.

    Returns None when the seed yields no summary.  Targets are the template
    with concrete meta-values, widened by random extra states.
    """
    from . import formula as F
    from .game import SymbolicState
    from .summary import compute_summary, derive_template, in_support, select_gvars, support_locations

    G, fd, rng = random_game(seed)
    cyc = [l for l in G.locations if G.on_cycle(l)]
    if not cyc:
        return None
    p = rng.choice([Player.SYS, Player.ENV])
    l_s = rng.choice(cyc)
    a = random_state(rng, G, p_empty=0.1)
    support = support_locations(G, l_s, rng.randint(0, 1))
    gv = select_gvars(G, p, l_s, a, support, backend) or G.program_vars
    tmpl = derive_template(G, p, l_s, a, support, gv, backend)
    solver = Solver(backend, SolveOptions(accel="off", summaries="off", max_iter=32))
    s = compute_summary(G, p, l_s, tmpl, solver._summary_attractor(l_s), backend)
    if s is None:
        return None
    lo, hi = fd.range_of(G.program_vars[0])
    targets = []
    for _ in range(n_targets * 3):
        vals = {m: rng.randint(lo, hi) for m in tmpl.meta}
        extra = random_state(rng, G, p_empty=0.6)
        d = SymbolicState({l: F.disj(F.substitute(tmpl.at(l), vals), extra[l]) for l in G.locations})
        if in_support(s, d, backend):
            targets.append(d)
        if len(targets) >= n_targets:
            break
    if not targets:
        return None
    return G, enumerate_game(G, fd), s, targets


def check_summary_fixture(fixture, backend: SmtBackend) -> dict:
    """Count states added by apply_summary that lie outside the oracle attractor."""
    from . import formula as F
    from .summary import apply_summary

    G, eg, s, targets = fixture
    out = {"targets": 0, "violations": 0, "skipped": 0, "added": 0}
    for d in targets:
        r = apply_summary(s, d, backend)
        if F.has_quantifier(r):
            out["skipped"] += 1
            continue
        out["targets"] += 1
        got = eg.formula_region(r) & eg.dom[s.l_s]
        attr = eg.attractor(s.player, eg.region(d))[s.l_s]
        out["added"] += int((got & ~eg.region(d)[s.l_s]).sum())
        out["violations"] += int((got & ~attr).sum())
    return out
