import random

import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from galatt import formula as F
from galatt.formula import FALSE, TRUE, Int
from galatt.gal import (Gal, GalBudget, GalError, GalSearch, base_gal, chain, intersect, lex_union,
                        observe_gals, strengthen, trivial_gal, widen)
from galatt.game import Player, SymbolicState
from galatt.oracle import (FiniteDomain, check_gal_bounded, enumerate_game, random_formula, random_gal,
                           random_game, random_state)

x, y, z = Int("x"), Int("y"), Int("z")
V = (x, y)


def lex_of_y_and_xy(V=V):
    lem_y = base_gal(y, None, 0, variables=V)
    return lem_y, lex_union(lem_y, intersect(lem_y, base_gal(x, None, 0, variables=V)))


def test_base_gal_shape(backend):
    g = base_gal(y, None, 0)
    assert g.base == F.le(y, 0)
    assert g.conc == TRUE
    yp = y.prime()
    want_stay = F.disj(F.le(yp, 0), F.conj(F.gt(y, 0), F.le(yp, y)))
    want_step = F.disj(F.le(yp, 0), F.conj(F.gt(y, 0), F.le(yp, y - 1)))
    assert backend.equivalent(g.stay, want_stay)
    assert backend.equivalent(g.step, want_step)


def test_base_gal_point(backend):
    assert backend.equivalent(base_gal(x, 0, 0).base, F.eq(x, 0))
    with pytest.raises(GalError):
        base_gal(x, 1, 0)
    with pytest.raises(GalError):
        base_gal(x, None, 0, eps=0)


def test_opening_example_not_refuted():
    g = Gal(F.le(y, 0), F.le(y.prime(), y), F.lt(y.prime(), y), TRUE, (y,))
    assert check_gal_bounded(g, FiniteDomain.uniform([y], -4, 4), max_len=12, window=1) is None
    assert check_gal_bounded(base_gal(x, None, 0)) is None


def test_broken_gal_refuted():
    up = F.eq(y.prime(), y + 1)
    cex = check_gal_bounded(Gal(F.le(y, 0), up, up, TRUE, (y,)))
    assert cex is not None and cex.kind == "termination"


def test_preservation_violation_refuted():
    g = Gal(F.le(y, 0), TRUE, F.lt(y.prime(), y), F.ge(y, -2), (y,))
    cex = check_gal_bounded(g)
    assert cex is not None and cex.kind == "preservation"


def test_intersect_example(backend):
    lem_y = base_gal(y, None, 0, variables=V)
    lem_x = base_gal(x, None, 0, variables=V)
    g = intersect(lem_y, lem_x)
    assert backend.equivalent(g.base, F.conj(F.le(y, 0), F.le(x, 0)))
    gg = intersect(lem_y, lem_y)
    assert backend.equivalent(gg.base, lem_y.base) and backend.equivalent(gg.conc, lem_y.conc)
    with pytest.raises(GalError):
        intersect(base_gal(x, None, 0), base_gal(y, None, 0))


def test_stay_base_consequence(backend):
    g0, g1 = base_gal(y, None, 0, variables=V), base_gal(x, None, 0, variables=V)
    g = intersect(g0, g1)
    keep = F.implies(F.conj(g0.base, F.neg(g1.base), F.disj(g.stay, g.step)), g0.primed(g0.base))
    assert backend.is_valid(keep)


def test_lex_union_example(backend):
    lem_y, g = lex_of_y_and_xy()
    yp = y.prime()
    inner = intersect(lem_y, base_gal(x, None, 0, variables=V))
    # every lexicographic step either decreases y or steps the pair while keeping y
    lexi = F.disj(F.conj(F.gt(y, 0), F.lt(yp, y)), F.conj(inner.step, F.le(yp, y), lem_y.stay))
    assert backend.implies(F.conj(g.step, F.gt(y, 0)), F.disj(F.le(yp, 0), lexi))
    assert backend.equivalent(lex_union(lem_y, lem_y).base, lem_y.base)


def test_chain_with_empty_conclusion(backend):
    g0 = base_gal(y, None, 0, variables=V)
    g1 = Gal(F.le(x, 0), TRUE, TRUE, FALSE, V)
    assert backend.equivalent(chain(g0, g1).step, g0.step)


def test_strengthen(backend):
    g = base_gal(3 * x + 2 * y - z, None, 0, variables=(x, y, z))
    assert strengthen(g, TRUE) is g
    h = strengthen(g, F.le(z, 4 * x))
    assert backend.equivalent(h.base, F.conj(F.le(3 * x + 2 * y - z, 0), F.le(z, 4 * x)))
    assert backend.equivalent(h.conc, F.le(z, 4 * x))
    with pytest.raises(GalError):
        strengthen(base_gal(x, None, 0), F.le(y, 0))


def test_widen_keeps_formulas():
    g = base_gal(x, None, 0)
    w = widen(g, (x, y))
    assert (w.base, w.stay, w.step, w.conc) == (g.base, g.stay, g.step, g.conc)
    assert check_gal_bounded(w) is None
    with pytest.raises(GalError):
        widen(base_gal(x, None, 0, variables=V), (x,))


def test_observer_sees_constructions():
    seen = []
    with observe_gals(seen.append):
        lex_of_y_and_xy()
        trivial_gal(V)
    assert len(seen) >= 5
    n = len(seen)
    base_gal(x, None, 0)
    assert len(seen) == n


def test_loop_step_example(backend, g_r):
    G, _ = g_r
    _, g = lex_of_y_and_xy(G.program_vars)
    gs = GalSearch(backend)
    gs._fuel = 100
    pre = gs.loop_step(G, Player.SYS, SymbolicState({"done": TRUE}), "loop", g.step)
    assert backend.is_valid(F.implies(G.dom["loop"], pre))
    assert backend.check_sat(gs.loop_step(G, Player.SYS, SymbolicState(), "loop", FALSE)).name == "UNSAT"


def test_accelerate_g_r(backend, g_r):
    G, _ = g_r
    y_ = G.program_vars[1]
    gs = GalSearch(backend)
    out = gs.accelerate(G, Player.SYS, SymbolicState({"done": TRUE, "loop": F.le(y_, 0)}), "loop")
    assert backend.is_valid(out)
    assert gs.stats["gal_accepted"] == 1
    assert gs.accelerate(G, Player.SYS, SymbolicState({"loop": FALSE}), "loop") == FALSE


def test_get_gal_examples(backend, g_r):
    G, _ = g_r
    y_ = G.program_vars[1]
    tgt = SymbolicState({"done": TRUE, "loop": F.le(y_, 0)})
    g = GalSearch(backend).get_gal(G, Player.SYS, "loop", tgt)
    assert g is not None and backend.equivalent(g.base, F.le(y_, 0))
    assert check_gal_bounded(g) is None
    top = GalSearch(backend).get_gal(G, Player.SYS, "loop", SymbolicState({"loop": TRUE}))
    assert top is not None and top.base == TRUE
    small = GalBudget(max_iterations=1, max_depth=0)
    assert GalSearch(backend).get_gal(G, Player.SYS, "loop", tgt, small) is None


def test_budget_monotone(backend, g_r):
    G, _ = g_r
    y_ = G.program_vars[1]
    tgt = SymbolicState({"done": TRUE, "loop": F.le(y_, 0)})
    found = [GalSearch(backend).get_gal(G, Player.SYS, "loop", tgt, GalBudget(max_iterations=k)) is not None
             for k in (1, 2, 3, 4, 6)]
    # once found, a larger budget still finds one
    assert found == sorted(found)
    assert found[-1]


def test_budget_validation():
    with pytest.raises(GalError):
        GalBudget(max_iterations=0)
    b = GalBudget().doubled()
    assert b.max_iterations == 8 and b.max_candidates == 64


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_random_compositions_pass_checker(seed):
    rng = random.Random(seed)
    g = random_gal(rng, V, depth=2)
    assert check_gal_bounded(g, FiniteDomain.uniform(V, -4, 4)) is None


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_strengthened_random_gals_pass_checker(seed):
    rng = random.Random(seed)
    g = strengthen(random_gal(rng, V, depth=1), random_formula(rng, list(V), -3, 3))
    assert check_gal_bounded(g, FiniteDomain.uniform(V, -4, 4)) is None


@settings(max_examples=12, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(st.integers(0, 10**5))
def test_accelerate_sound_on_finite_games(backend, seed):
    G, fd, rng = random_game(seed)
    eg = enumerate_game(G, fd)
    p = rng.choice(list(Player))
    target = random_state(rng, G)
    locs = [l for l in G.locations if G.on_cycle(l)]
    if not locs:
        return
    l = rng.choice(locs)
    gs = GalSearch(backend, GalBudget(max_seconds=5.0))
    out = gs.accelerate(G, p, target, l)
    if F.has_quantifier(out):
        return
    attr = eg.attractor(p, eg.region(target))
    got = eg.formula_region(out) & eg.dom[l]
    assert not (got & ~attr[l]).any()
