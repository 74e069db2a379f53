import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from galatt import formula as F
from galatt.formula import FALSE, TRUE, Int
from galatt.gal import GalBudget
from galatt.game import Buchi, CoBuchi, Player, Reach, Safety, SymbolicGame, SymbolicState, cpre
from galatt.oracle import enumerate_game, random_condition, random_game, random_state
from galatt.solver import Result, SolveOptions, Solver, check_certificate

x, i = Int("x"), Int("i")
ALL_KINDS = (Reach, Safety, Buchi, CoBuchi)


def counter_game():
    """Sys may count x down or stay; at 0 it may move to goal."""
    trans = {
        ("a", "a"): F.conj(F.ge(x, 1), F.disj(F.eq(x.prime(), x - 1), F.eq(x.prime(), x))),
        ("a", "goal"): F.conj(F.le(x, 0), F.eq(x.prime(), x)),
        ("goal", "goal"): F.eq(x.prime(), x),
    }
    return SymbolicGame(["a", "goal"], "a", [], [x], {"a": F.ge(x, 0), "goal": F.ge(x, 0)}, trans)


def test_options_validation():
    with pytest.raises(ValueError):
        SolveOptions(accel="fast")
    with pytest.raises(ValueError):
        SolveOptions(summaries="maybe")
    with pytest.raises(ValueError):
        SolveOptions(max_iter=0)


def test_attractor_immediate_fixpoint(backend, g_r):
    G, _ = g_r
    d = SymbolicState({l: TRUE for l in G.locations})
    r = Solver(backend).attractor(G, Player.SYS, d)
    assert r.complete and r.iterations == 1
    assert all(backend.is_valid(r.state[l]) for l in G.locations)


def test_attractor_g_r(backend, g_r):
    G, _ = g_r
    s = Solver(backend)
    r = s.attractor(G, Player.SYS, SymbolicState({"done": TRUE}))
    assert r.complete
    assert backend.is_valid(r.state["loop"]) and backend.is_valid(r.state["done"])
    assert s.stats["accel_successes"] >= 1


def test_attractor_without_acceleration_diverges(backend, g_r):
    G, _ = g_r
    r = Solver(backend, SolveOptions(accel="off", max_iter=8)).attractor(G, Player.SYS, SymbolicState({"done": TRUE}))
    assert not r.complete


def test_iterates_grow(backend):
    G = counter_game()
    s = Solver(backend, SolveOptions(accel="off", max_iter=40))
    prev = s.attractor(G, Player.SYS, SymbolicState({"goal": TRUE}), max_iter=1).state
    for n in range(2, 6):
        cur = s.attractor(G, Player.SYS, SymbolicState({"goal": TRUE}), max_iter=n).state
        assert all(backend.implies(prev[l], cur[l]) for l in G.locations)
        prev = cur


def test_reach_g_r(backend, g_r):
    G, cond = g_r
    res = Solver(backend).solve(G, cond)
    assert res.result is Result.REALIZABLE
    assert check_certificate(res.certificate, backend)
    assert res.stats["gal_searches"] >= res.stats["accel_successes"] >= 1


def test_reach_init_goal(backend, g_r):
    G, _ = g_r
    assert Solver(backend).solve(G, Reach(frozenset({G.init}))).result is Result.REALIZABLE


def test_reach_counter(backend):
    G = counter_game()
    assert Solver(backend).solve(G, Reach(frozenset({"goal"}))).result is Result.REALIZABLE


def test_buchi_empty(backend, g_b):
    G, _ = g_b
    res = Solver(backend).solve(G, Buchi(frozenset()))
    assert res.result is Result.UNREALIZABLE
    assert check_certificate(res.certificate, backend)


def test_safety_trivial(backend, g_r):
    G, _ = g_r
    s = Solver(backend)
    assert s.solve(G, Safety(frozenset(G.locations))).result is Result.REALIZABLE
    assert s.solve(G, Safety(frozenset())).result is Result.UNREALIZABLE


def test_cobuchi_counter(backend):
    G = counter_game()
    # from x = 0 the only move leaves a, so a cannot be the eventual home
    res = Solver(backend).solve(G, CoBuchi(frozenset({"a"})))
    assert res.result is Result.UNREALIZABLE
    assert check_certificate(res.certificate, backend)


def test_cobuchi_forced_exit(backend):
    trans = {("a", "b"): TRUE, ("b", "b"): TRUE}
    G = SymbolicGame(["a", "b"], "a", [], [x], trans=trans)
    s = Solver(backend)
    assert s.solve(G, CoBuchi(frozenset({"a"}))).result is Result.UNREALIZABLE
    assert s.solve(G, CoBuchi(frozenset({"b"}))).result is Result.REALIZABLE


def test_timeout_gives_unknown(backend, g_b):
    G, cond = g_b
    res = Solver(backend, SolveOptions(timeout=0.01)).solve(G, cond)
    assert res.result is Result.UNKNOWN


def test_statistics_keys(backend, g_r):
    G, cond = g_r
    res = Solver(backend).solve(G, cond)
    for k in ("cpre_calls", "accel_attempts", "accel_successes", "gal_searches", "summaries_computed",
              "summary_applications", "time_s", "result", "smt_queries", "winning_region"):
        assert k in res.stats
    assert res.stats["result"] == "Realizable"


def _explicit_match(backend, seed, accel):
    G, fd, rng = random_game(seed)
    eg = enumerate_game(G, fd)
    cond = random_condition(rng, G, ALL_KINDS)
    opts = SolveOptions(accel=accel, timeout=60, budget=GalBudget(max_seconds=5.0))
    res = Solver(backend, opts).solve(G, cond)
    if res.result is not Result.UNKNOWN and res.certificate is not None:
        assert check_certificate(res.certificate, backend)
    return res.result, eg.realizable(cond)


@settings(max_examples=12, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(st.integers(1000, 100000))
def test_verdicts_match_oracle_accel_off(backend, seed):
    got, want = _explicit_match(backend, seed, "off")
    assert got is not Result.UNKNOWN
    assert (got is Result.REALIZABLE) == want


@settings(max_examples=12, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(st.integers(1000, 100000))
def test_verdicts_match_oracle_accel_on(backend, seed):
    got, want = _explicit_match(backend, seed, "gal")
    if got is not Result.UNKNOWN:
        assert (got is Result.REALIZABLE) == want


@settings(max_examples=10, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(st.integers(1000, 100000))
def test_plain_attractor_matches_oracle(backend, seed):
    G, fd, rng = random_game(seed)
    eg = enumerate_game(G, fd)
    p = rng.choice(list(Player))
    t = random_state(rng, G)
    r = Solver(backend, SolveOptions(accel="off", max_iter=256)).attractor(G, p, t)
    assert r.complete
    want = eg.attractor(p, eg.region(t))
    got = eg.region(r.state)
    assert all((got[l] == want[l]).all() for l in G.locations)
