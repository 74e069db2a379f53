import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from galatt import formula as F
from galatt.difftest import check_summary_fixture, summary_fixture
from galatt.formula import FALSE, TRUE, Int
from galatt.game import Player, SymbolicGame, SymbolicState
from galatt.solver import SolveOptions, Solver
from galatt.summary import (EnforcementSummary, SummaryCache, Template, apply_summary, compute_summary,
                            derive_template, in_support, next_symbol, point_enforceable, select_gvars,
                            support_locations)

LS = ("loop", "iter")


@pytest.fixture(scope="module")
def g_b_summary(backend, g_b):
    G, _ = g_b
    x, y, c = G.program_vars
    a = SymbolicState({"iter": TRUE, "loop": F.conj(F.ge(c, -199), F.le(y, 0))})
    tmpl = derive_template(G, Player.SYS, "loop", a, LS, G.program_vars, backend)
    solver = Solver(backend, SolveOptions())
    s = compute_summary(G, Player.SYS, "loop", tmpl, solver._summary_attractor("loop"), backend)
    assert s is not None
    return G, s


def test_point_enforceable_g_b(backend, g_b):
    G, _ = g_b
    c = G.program_vars[2]
    assert point_enforceable(G, Player.SYS, c, LS, backend)


def test_point_enforceable_frozen_and_input(backend):
    x, i = Int("x"), Int("i")
    frozen = SymbolicGame(["a"], "a", [i], [x], trans={("a", "a"): F.eq(x.prime(), x)})
    assert point_enforceable(frozen, Player.SYS, x, ("a",), backend)
    copied = SymbolicGame(["a"], "a", [i], [x], trans={("a", "a"): F.eq(x.prime(), i)})
    # the environment's input decides x', so the system cannot steer it
    assert not point_enforceable(copied, Player.SYS, x, ("a",), backend)
    assert point_enforceable(copied, Player.ENV, x, ("a",), backend)
    with pytest.raises(ValueError):
        point_enforceable(copied, Player.SYS, i, ("a",), backend)


def test_support_locations(g_b):
    G, _ = g_b
    assert support_locations(G, "loop", 0) == ("iter", "loop")
    assert set(support_locations(G, "init", 0)) == {"init", "iter"}
    assert set(support_locations(G, "init", 1)) == {"init", "iter", "loop", "sink"}


def test_derive_template_example(backend, g_b):
    G, _ = g_b
    x, y, c = G.program_vars
    a = SymbolicState({"iter": TRUE, "loop": F.le(y, 0)})
    t = derive_template(G, Player.SYS, "loop", a, LS, G.program_vars, backend)
    assert [l for l, _ in t.tau] == ["iter"]
    m = {v.name: v for v in t.meta}
    want = F.conj(F.eq(x, m["m$iter$x"]), F.eq(y, m["m$iter$y"]), F.eq(c, m["m$iter$c"]))
    assert backend.equivalent(t.at("iter"), want)
    assert t.at("loop") == FALSE and t.at("sink") == FALSE
    assert select_gvars(G, Player.SYS, "loop", a, LS, backend) == G.program_vars


def test_derive_template_no_gvars(backend, g_b):
    G, _ = g_b
    c = G.program_vars[2]
    a = SymbolicState({"iter": F.ge(c, 0), "loop": TRUE})
    t = derive_template(G, Player.SYS, "loop", a, LS, (), backend)
    assert t.meta == ()
    assert t.at("iter") == F.ge(c, 0)
    with pytest.raises(ValueError):
        derive_template(G, Player.SYS, "loop", a, ("iter",), (), backend)


def test_compute_summary_example(backend, g_b_summary):
    G, s = g_b_summary
    c = G.program_vars[2]
    m_c = next(v for v in s.template.meta if v.name == "m$iter$c")
    assert backend.equivalent(s.psi, F.eq(c, m_c))
    assert {p.name for p in F.placeholders(s.phi)} == {"next_iter"}


def test_compute_summary_empty_template(backend, g_b):
    G, _ = g_b
    t = Template("loop", LS, (), (), ())
    assert compute_summary(G, Player.SYS, "loop", t, lambda *a: SymbolicState(), backend) is None


def test_in_support_example(backend, g_b_summary):
    G, s = g_b_summary
    x, y, c = G.program_vars
    a = SymbolicState({"loop": F.conj(F.ge(c, -199), F.le(y, 0)), "iter": F.ge(c, -199)})
    assert in_support(s, a, backend)
    assert not in_support(s, SymbolicState(), backend)


def test_apply_example(backend, g_b_summary):
    G, s = g_b_summary
    x, y, c = G.program_vars
    a = SymbolicState({"loop": F.conj(F.ge(c, -199), F.le(y, 0)), "iter": F.ge(c, -199)})
    r = apply_summary(s, a, backend)
    assert backend.equivalent(r, F.ge(c, -199))


def test_apply_top(backend, g_b_summary):
    G, s = g_b_summary
    r = apply_summary(s, SymbolicState({l: TRUE for l in G.locations}), backend)
    assert backend.equivalent(r, backend.qelim(F.exists(s.template.meta, s.psi)))


def test_literal_statement(backend, g_b):
    # the statement with the template at loop itself and the state variables bound
    G, _ = g_b
    x, y, c = G.program_vars
    mc, my = Int("m_c"), Int("m_y")
    X = G.program_vars
    tmpl = Template("loop", ("loop",), (c, y), (mc, my), (("loop", F.conj(F.eq(c, mc), F.eq(y, my))),))
    syms = tuple((l, next_symbol(l, X)) for l in G.locations)
    nxt = dict(syms)["loop"]
    phi = F.exists([mc, my], F.conj(F.eq(c, mc), F.forall(X, F.implies(tmpl.at("loop"), nxt(*X)))))
    s = EnforcementSummary(Player.SYS, "loop", phi, tmpl, X, syms, F.eq(c, mc))
    a = SymbolicState({"loop": F.conj(F.ge(c, -199), F.le(y, 0))})
    assert in_support(s, a, backend)
    assert backend.equivalent(apply_summary(s, a, backend), F.ge(c, -199))


def test_support_monotone(backend, g_b_summary):
    G, s = g_b_summary
    x, y, c = G.program_vars
    a = SymbolicState({"iter": F.ge(c, -199)})
    b = SymbolicState({"iter": F.disj(F.ge(c, -199), F.le(x, 0)), "loop": F.le(y, 0)})
    assert in_support(s, a, backend) and in_support(s, b, backend)
    ra, rb = apply_summary(s, a, backend), apply_summary(s, b, backend)
    assert backend.implies(ra, rb)


def test_no_placeholder_reaches_solver(backend, g_b_summary):
    G, s = g_b_summary
    c = G.program_vars[2]
    seen = []
    backend.query_hooks.append(seen.append)
    try:
        apply_summary(s, SymbolicState({"iter": F.ge(c, -50)}), backend)
        in_support(s, SymbolicState({"iter": F.ge(c, -50)}), backend)
    finally:
        backend.query_hooks.remove(seen.append)
    assert seen and not any("next_" in q for q in seen)


def test_cache_lru():
    cache = SummaryCache(2)
    cache.put("a", 1)
    cache.put("b", 2)
    assert cache.get("a") == (1, True)
    cache.put("c", 3)
    assert cache.get("b") == (None, False)
    assert len(cache) == 2


@settings(max_examples=8, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(st.integers(1000, 100000))
def test_summaries_sound_on_finite_games(backend, seed):
    fx = summary_fixture(seed, backend, n_targets=2)
    if fx is None:
        return
    r = check_summary_fixture(fx, backend)
    assert r["violations"] == 0
