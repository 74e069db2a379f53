from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from galatt import formula as F
from galatt.formula import FALSE, TRUE, Int, Bool, Placeholder

x, y, z, c, i_x, i_y = Int("x"), Int("y"), Int("z"), Int("c"), Int("i_x"), Int("i_y")
q = Bool("q")


def beta():
    cp, xp, yp = c.prime(), x.prime(), y.prime()
    return F.conj(
        F.ge(c, -200), F.eq(xp, i_x), F.eq(yp, i_y),
        F.disj(F.conj(F.ge(c, 0), F.eq(cp, c + 1)), F.conj(F.lt(c, 0), F.eq(cp, c - 1))),
    )


def test_substitute_is_simultaneous():
    f = F.lt(x, y)
    assert F.substitute(f, {x: y}) == F.lt(y, y)
    assert F.substitute(f, {x: y, y: x}) == F.lt(y, x)


def test_substitute_beta_at_zero():
    g = F.substitute(beta(), {c: 0})
    assert F.free_vars(g) == {x.prime(), y.prime(), c.prime(), i_x, i_y}
    env = {x.prime(): 3, i_x: 3, y.prime(): -1, i_y: -1, c.prime(): 1}
    assert F.evaluate(g, env)
    assert not F.evaluate(g, {**env, c.prime(): -1})


def test_substitute_avoids_capture():
    f = F.exists([y], F.lt(x, y))
    g = F.substitute(f, {x: y + 1})
    # the bound y must have been renamed: g says "exists w. y + 1 < w"
    assert y in F.free_vars(g)


def test_prime_roundtrip():
    assert F.prime(F.le(y, 0)) == F.le(y.prime(), 0)
    assert F.prime(TRUE) == TRUE
    f = F.le(x + 2 * y, 3)
    assert F.unprime(F.prime(f)) == f


def test_prime_rejects_primed():
    with pytest.raises(F.FormulaError, match="x"):
        F.prime(F.le(x.prime(), 0))
    with pytest.raises(F.FormulaError):
        F.unprime(F.le(x.prime(), x))


def test_instantiate_example_statement():
    mc, my = Int("m_c"), Int("m_y")
    nxt = Placeholder("next_loop", (x.sort, y.sort, c.sort))
    phi = F.exists([mc, my], F.conj(F.implies(F.conj(F.eq(c, mc), F.eq(y, my)), nxt(x, y, c)), F.eq(c, mc)))
    body = F.conj(F.ge(c, -199), F.le(y, 0))
    got = F.instantiate_placeholders(phi, {nxt: ((x, y, c), body)})
    want = F.exists([mc, my], F.conj(F.implies(F.conj(F.eq(c, mc), F.eq(y, my)), body), F.eq(c, mc)))
    assert got == want
    assert not F.placeholders(got)


def test_instantiate_formals_to_actuals():
    nxt = Placeholder("next", (x.sort,))
    f = nxt(y + 1)
    assert F.instantiate_placeholders(f, {nxt: ((x,), F.eq(x, 0))}) == F.eq(y + 1, 0)
    g = F.le(x, 3)
    assert F.instantiate_placeholders(g, {nxt: ((x,), F.eq(x, 0))}) == g


def test_instantiate_errors():
    nxt = Placeholder("next", (x.sort,))
    with pytest.raises(F.FormulaError, match="next"):
        F.instantiate_placeholders(nxt(x), {})
    with pytest.raises(F.FormulaError, match="arity"):
        F.instantiate_placeholders(nxt(x), {nxt: ((x, y), TRUE)})


def test_evaluate_examples():
    assert F.evaluate(TRUE, {})
    assert F.evaluate(F.le(y, 0), {y: -1})
    assert F.evaluate(F.le(3 * x + 2 * y, z), {x: 1, y: 1, z: 5})


def test_evaluate_errors():
    with pytest.raises(F.FormulaError):
        F.evaluate(F.le(x, y), {x: 1})
    with pytest.raises(F.FormulaError):
        F.evaluate(Placeholder("p", ())(), {})


def test_polyhedral_dnf_example():
    f = F.disj(
        F.conj(F.bvar(q), F.le(3 * x + 2 * y, z), F.le(z, 4 * x)),
        F.conj(F.neg(F.bvar(q)), F.eq(2 * x, y)),
    )
    ds = F.to_polyhedral_dnf(f)
    assert len(ds) == 2
    by_res = {d.residual: {i.formula() for i in d.inequalities} for d in ds}
    assert by_res[F.bvar(q)] == {F.le(3 * x + 2 * y - z, 0), F.le(z - 4 * x, 0)}
    assert by_res[F.neg(F.bvar(q))] == {F.le(2 * x - y, 0), F.le(y - 2 * x, 0)}


def test_polyhedral_dnf_trivial():
    assert F.to_polyhedral_dnf(FALSE) == []
    (d,) = F.to_polyhedral_dnf(F.le(x, 3))
    assert d.residual == TRUE
    assert [i.formula() for i in d.inequalities] == [F.le(x, 3)]


def test_exact_rationals():
    f = F.le(Fraction(1, 3) * x, Fraction(1, 2))
    assert F.evaluate(f, {x: 1})
    assert not F.evaluate(f, {x: 2})


# -- properties -------------------------------------------------------------

VARS = (x, y, z)
small = st.integers(-3, 3)


@st.composite
def terms(draw):
    coeffs = [draw(st.integers(-2, 2)) for _ in VARS]
    t = F.lin(draw(small))
    for k, v in zip(coeffs, VARS):
        t = t + k * v
    return t


@st.composite
def formulas(draw, depth=2):
    if depth == 0 or draw(st.booleans()):
        op = draw(st.sampled_from(["<=", "<", "=", ">=", ">"]))
        return F.cmp(op, draw(terms()), draw(small))
    kind = draw(st.sampled_from(["and", "or", "not"]))
    if kind == "not":
        return F.neg(draw(formulas(depth - 1)))
    parts = [draw(formulas(depth - 1)) for _ in range(draw(st.integers(2, 3)))]
    return F.conj(*parts) if kind == "and" else F.disj(*parts)


envs = st.fixed_dictionaries({v: small for v in VARS})


@settings(max_examples=150, deadline=None)
@given(formulas(), terms(), terms(), envs)
def test_substitute_matches_semantics(f, tx, ty, env):
    g = F.substitute(f, {x: tx, y: ty})
    env2 = dict(env)
    env2[x] = F.eval_term(tx, env)
    env2[y] = F.eval_term(ty, env)
    assert F.evaluate(g, env) == F.evaluate(f, env2)


@settings(max_examples=150, deadline=None)
@given(formulas())
def test_prime_unprime_identity(f):
    assert F.unprime(F.prime(f)) == f


@settings(max_examples=150, deadline=None)
@given(formulas(depth=3), envs)
def test_polyhedral_dnf_agrees(f, env):
    ds = F.to_polyhedral_dnf(f)
    assert any(F.evaluate(d.formula(), env) for d in ds) == F.evaluate(f, env)


@settings(max_examples=100, deadline=None)
@given(terms(), small, small, small, envs)
def test_instantiate_commutes_with_substitute(a, k0, kx, kz, env):
    # the substituted variable z and its image avoid the formal y
    t = F.lin(k0) + kx * x + kz * z
    nxt = Placeholder("next", (x.sort,))
    f = F.conj(nxt(x + 1), F.le(z, 2))
    body = F.le(y, a)
    m = {nxt: ((y,), body)}
    lhs = F.substitute(F.instantiate_placeholders(f, m), {z: t})
    rhs = F.instantiate_placeholders(F.substitute(f, {z: t}), {nxt: ((y,), F.substitute(body, {z: t}))})
    assert F.evaluate(lhs, env) == F.evaluate(rhs, env)
