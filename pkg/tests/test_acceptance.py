"""Acceptance suite: one PASS/FAIL line per criterion, also repeated in the terminal summary."""
import random
import time

import pytest

from galatt import formula as F
from galatt.difftest import check_summary_fixture, run_difftest, summary_fixture
from galatt.formula import TRUE, Int
from galatt.gal import Gal, observe_gals
from galatt.game import Player, Reach, SymbolicState
from galatt.oracle import FiniteDomain, check_gal_bounded, enumerate_game, explicit_attractor, random_gal, random_game, random_state
from galatt.solver import Result, SolveOptions, Solver, check_certificate
from galatt.summary import EnforcementSummary, Template, apply_summary, in_support, next_symbol

import conftest

pytestmark = pytest.mark.slow

CHECK_DOM = dict(lo=-8, hi=8, max_len=12, window=4)


def report(capsys, n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    conftest.ACCEPTANCE.append(line)
    with capsys.disabled():
        print("\n" + line)
    return ok


class Runs:
    """Solves shared between criteria: GALs built and every non-Unknown result."""

    def __init__(self, backend):
        self.backend = backend
        self.gals: list[Gal] = []
        self.solved: list = []
        self.runs: dict = {}

    def solve(self, name, G, cond, **opts):
        t0 = time.monotonic()
        with observe_gals(self.gals.append):
            s = Solver(self.backend, SolveOptions(**opts))
            res = s.solve(G, cond)
        res.stats["wall_s"] = time.monotonic() - t0
        self.runs[name] = res
        self.keep(res)
        return res

    def keep(self, res):
        if res.result is not Result.UNKNOWN:
            self.solved.append(res)


@pytest.fixture(scope="module")
def runs(backend):
    return Runs(backend)


def test_criterion_1_g_r(capsys, runs, g_r):
    G, cond = g_r
    on = runs.solve("g_r_gal", G, cond, accel="gal", timeout=1200)
    off = runs.solve("g_r_off", G, cond, accel="off", max_iter=64, timeout=1200)
    ok = (on.result is Result.REALIZABLE and on.stats["wall_s"] <= 120 and off.result is Result.UNKNOWN)
    assert report(capsys, 1, ok, f"gal={on.result.name} in {on.stats['wall_s']:.1f}s, "
                  f"off(max-iter 64)={off.result.name}")


def test_criterion_2_g_b(capsys, runs, g_b):
    G, cond = g_b
    on = runs.solve("g_b_on", G, cond, summaries="on", timeout=1200)
    off = runs.solve("g_b_off", G, cond, summaries="off", timeout=1200)
    s_on, s_off = on.stats, off.stats
    ok = (on.result is Result.REALIZABLE and off.result is Result.REALIZABLE
          and s_on["wall_s"] <= 300 and s_off["wall_s"] <= 300
          and s_on["gal_searches"] <= 5 and s_on["summary_applications"] >= 10
          and s_on["gal_searches"] < s_off["gal_searches"])
    assert report(capsys, 2, ok,
                  f"on={on.result.name} {s_on['wall_s']:.1f}s searches={s_on['gal_searches']} "
                  f"applications={s_on['summary_applications']}; off={off.result.name} "
                  f"{s_off['wall_s']:.1f}s searches={s_off['gal_searches']}")


def test_criterion_3_apply_summary(capsys, backend, g_b):
    G, _ = g_b
    x, y, c = G.program_vars
    X = G.program_vars
    mc, my = Int("m_c"), Int("m_y")
    tmpl = Template("loop", ("loop",), (c, y), (mc, my), (("loop", F.conj(F.eq(c, mc), F.eq(y, my))),))
    syms = tuple((l, next_symbol(l, X)) for l in G.locations)
    nxt = dict(syms)["loop"]
    psi = F.eq(c, mc)
    phi = F.exists([mc, my], F.conj(psi, F.forall(X, F.implies(tmpl.at("loop"), nxt(*X)))))
    s = EnforcementSummary(Player.SYS, "loop", phi, tmpl, X, syms, psi)
    a = SymbolicState({"loop": F.conj(F.ge(c, -199), F.le(y, 0))})
    r = apply_summary(s, a, backend)
    ok = in_support(s, a, backend) and backend.equivalent(r, F.ge(c, -199)) is True
    assert report(capsys, 3, ok, f"result {r}")


@pytest.fixture(scope="module")
def difftest_report(backend, runs):
    return run_difftest(range(200), backend=backend, on_solve=runs.keep)


def test_criterion_4_differential_cpre(capsys, difftest_report):
    rep = difftest_report
    ok = not rep["cpre_failures"] and rep["seeds"] == 200 and rep["cpre_time_s"] < 600
    assert report(capsys, 4, ok, f"{rep['seeds']} seeds, cpre mismatches {rep['cpre_failures']}, "
                  f"cpre time {rep['cpre_time_s']:.0f}s (whole differential run {rep['time_s']:.0f}s)")


def test_criterion_5_attractor_and_verdicts(capsys, backend, runs, difftest_report):
    rep = difftest_report
    # the same check through the set-based oracle entry point
    extra_bad = []
    for seed in range(1000, 1020):
        G, fd, rng = random_game(seed)
        eg = enumerate_game(G, fd)
        p = rng.choice(list(Player))
        t = random_state(rng, G)
        r = Solver(backend, SolveOptions(accel="off", summaries="off", max_iter=256)).attractor(G, p, t)
        want = explicit_attractor(eg, p, eg.to_set(eg.region(t)))
        if not r.complete or eg.to_set(eg.region(r.state)) != want:
            extra_bad.append(seed)
    ok = not rep["attractor_failures"] and not rep["verdict_failures"] and not extra_bad
    assert report(capsys, 5, ok, f"attractor mismatches {rep['attractor_failures'] + extra_bad}, "
                  f"verdict mismatches {rep['verdict_failures']}")


def test_criterion_6_gal_checker(capsys, runs):
    assert {"g_r_gal", "g_b_on", "g_b_off"} <= set(runs.runs), "criteria 1 and 2 must run first"
    built = list({g.to_smtlib(): g for g in runs.gals}.values())
    rng = random.Random(6)
    V = (Int("x"), Int("y"))
    bad = []
    for g in built:
        cex = check_gal_bounded(g, **CHECK_DOM)
        if cex is not None:
            bad.append((str(g), cex.kind))
    composed = 0
    with observe_gals(lambda g: None):
        for _ in range(500):
            g = random_gal(rng, V)
            composed += 1
            cex = check_gal_bounded(g, FiniteDomain.uniform(V, -8, 8), max_len=12, window=4)
            if cex is not None:
                bad.append((str(g), cex.kind))
    y = V[1]
    up = F.eq(y.prime(), y + 1)
    control = check_gal_bounded(Gal(F.le(y, 0), up, up, TRUE, (y,)), **CHECK_DOM)
    ok = not bad and control is not None
    assert report(capsys, 6, ok, f"{len(built)} solver GALs + {composed} random compositions, "
                  f"refuted {len(bad)}; broken control refuted: {control is not None}")


def test_criterion_7_summary_soundness(capsys, backend):
    fixtures, violations, added, seed = 0, 0, 0, 0
    while fixtures < 50 and seed < 1000:
        fx = summary_fixture(seed, backend)
        seed += 1
        if fx is None:
            continue
        r = check_summary_fixture(fx, backend)
        if r["targets"] == 0:
            continue
        fixtures += 1
        violations += r["violations"]
        added += r["added"]
    ok = fixtures == 50 and violations == 0
    assert report(capsys, 7, ok, f"{fixtures} fixtures (seeds 0..{seed - 1}), {added} states added, "
                  f"{violations} outside the oracle attractor")


def test_criterion_8_certificates(capsys, backend, runs, difftest_report):
    bad, missing = 0, 0
    for res in runs.solved:
        if res.certificate is None:
            missing += 1
        elif not check_certificate(res.certificate, backend):
            bad += 1
    ok = runs.solved and bad == 0 and missing == 0
    assert report(capsys, 8, ok, f"{len(runs.solved)} non-Unknown solves, {bad} failed checks, "
                  f"{missing} without certificate")
