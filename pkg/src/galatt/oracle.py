"""Ground truth on finite domains: explicit games, bounded GAL checks, random games.

Everything here works by enumeration with numpy and shares no code with
the symbolic fixpoint machinery beyond the formula data types.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from . import formula as F
from .formula import FALSE, TRUE, Formula, Sort, Var
from .gal import Gal, base_gal, chain, intersect, lex_union, strengthen
from .game import Buchi, CoBuchi, Player, Reach, Safety, SymbolicGame, SymbolicState


class OracleError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# finite domains and vectorised evaluation


@dataclass(frozen=True)
class FiniteDomain:
    """Inclusive integer ranges per variable; booleans range over {0, 1}."""

    ranges: tuple  # ((Var, lo, hi), ...)

    @classmethod
    def of(cls, mapping) -> "FiniteDomain":
        out = []
        for v, r in mapping.items():
            if v.sort is Sort.BOOL:
                lo, hi = 0, 1
            else:
                lo, hi = r
            if lo > hi:
                raise OracleError(f"empty range for {v}")
            out.append((v, int(lo), int(hi)))
        return cls(tuple(out))

    @classmethod
    def uniform(cls, variables, lo: int, hi: int) -> "FiniteDomain":
        return cls.of({v: (lo, hi) for v in variables})

    def range_of(self, v: Var) -> tuple:
        for w, lo, hi in self.ranges:
            if w == v:
                return lo, hi
        raise OracleError(f"no range for {v}")

    def size(self, variables) -> int:
        n = 1
        for v in variables:
            lo, hi = self.range_of(v)
            n *= hi - lo + 1
        return n

    def grid(self, variables) -> np.ndarray:
        """All valuations of ``variables`` as an (N, len(variables)) int array."""
        axes = [np.arange(lo, hi + 1, dtype=np.int64) for lo, hi in map(self.range_of, variables)]
        if not axes:
            return np.zeros((1, 0), dtype=np.int64)
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)


def _common_denominator(t: F.Lin) -> int:
    d = Fraction(t.const).denominator
    for _, c in t.terms:
        d = math.lcm(d, Fraction(c).denominator)
    return d


def np_term(t: F.Lin, env: dict):
    """Value of an integer-valued term; env maps Var -> int array (broadcastable)."""
    total = 0
    for a, c in t.terms:
        if isinstance(a, Var):
            if a not in env:
                raise OracleError(f"no values for {a}")
            v = env[a]
        elif isinstance(a, F.ModTerm):
            v = np.mod(np_term(a.arg, env), abs(a.k))
        else:
            x = np_term(a.arg, env)
            v = (x - np.mod(x, abs(a.k))) // a.k
        c = Fraction(c)
        if c.denominator != 1:
            raise OracleError("np_term needs integer coefficients")
        total = total + int(c) * v
    c = Fraction(t.const)
    if c.denominator != 1:
        raise OracleError("np_term needs an integer constant")
    return total + int(c)


def np_eval(f: Formula, env: dict, shape=()) -> np.ndarray:
    """Vectorised truth value of a quantifier-free formula."""
    if isinstance(f, F.Const):
        return np.full(shape, f.value, dtype=bool)
    if isinstance(f, F.BoolVar):
        if f.var not in env:
            raise OracleError(f"no values for {f.var}")
        return np.broadcast_to(env[f.var] != 0, shape) if shape else env[f.var] != 0
    if isinstance(f, F.Atom):
        t = f.lhs
        d = _common_denominator(t)
        if d != 1:
            t = t * d
        v = np_term(t, env)
        r = v <= 0 if f.op == "<=" else v < 0 if f.op == "<" else v == 0
        return np.broadcast_to(r, shape) if shape else np.asarray(r)
    if isinstance(f, F.Not):
        return ~np_eval(f.arg, env, shape)
    if isinstance(f, F.And):
        out = np.ones(shape, dtype=bool)
        for a in f.args:
            out = out & np_eval(a, env, shape)
        return out
    if isinstance(f, F.Or):
        out = np.zeros(shape, dtype=bool)
        for a in f.args:
            out = out | np_eval(a, env, shape)
        return out
    raise OracleError(f"cannot evaluate {type(f).__name__} explicitly")


# ---------------------------------------------------------------------------
# explicit games


@dataclass
class ExplicitGame:
    """Enumerated arena over a finite box.

    ``trans[(l, m)][s, i, t]`` says: from valuation s at l under input i the
    system may move to valuation t at m (dom(m) holds at t).  ``dom[l]`` masks
    the valuations that are states at l.
    """

    locations: tuple
    init: str
    program_vars: tuple
    inputs: tuple
    values: np.ndarray
    input_values: np.ndarray
    dom: dict
    trans: dict
    valid: dict = field(default_factory=dict)

    @property
    def n_values(self) -> int:
        return len(self.values)

    def n_states(self) -> int:
        return int(sum(m.sum() for m in self.dom.values()))

    def states(self) -> set:
        return {(l, int(i)) for l in self.locations for i in np.flatnonzero(self.dom[l])}

    def empty(self) -> dict:
        return {l: np.zeros(self.n_values, dtype=bool) for l in self.locations}

    def full(self) -> dict:
        return {l: self.dom[l].copy() for l in self.locations}

    def valuation(self, idx: int) -> dict:
        return {v: int(self.values[idx, k]) for k, v in enumerate(self.program_vars)}

    def to_set(self, region: dict) -> set:
        return {(l, int(i)) for l in self.locations for i in np.flatnonzero(region[l] & self.dom[l])}

    def from_set(self, states) -> dict:
        out = self.empty()
        for l, i in states:
            out[l][i] = True
        return out

    def region(self, s: SymbolicState) -> dict:
        """Explicit set of a (quantifier-free) symbolic state, inside the domain."""
        env = {v: self.values[:, k] for k, v in enumerate(self.program_vars)}
        return {l: np_eval(s[l], env, (self.n_values,)) & self.dom[l] for l in self.locations}

    def formula_region(self, f: Formula) -> np.ndarray:
        env = {v: self.values[:, k] for k, v in enumerate(self.program_vars)}
        return np_eval(f, env, (self.n_values,))

    # -- one-step predecessors ------------------------------------------------

    def cpre(self, p: Player, d: dict) -> dict:
        out = {}
        for l in self.locations:
            valid = self.valid[l]
            if p is Player.SYS:
                good = np.zeros_like(valid)
                for m in self.locations:
                    t = self.trans.get((l, m))
                    if t is not None:
                        good |= (t & d[m][None, None, :]).any(axis=2)
                ok = (~valid | good).all(axis=1)
            else:
                bad = np.zeros_like(valid)
                for m in self.locations:
                    t = self.trans.get((l, m))
                    if t is not None:
                        bad |= (t & ~d[m][None, None, :]).any(axis=2)
                ok = (valid & ~bad).any(axis=1)
            out[l] = ok & self.dom[l]
        return out

    def attractor(self, p: Player, target: dict) -> dict:
        a = {l: target[l] & self.dom[l] for l in self.locations}
        while True:
            c = self.cpre(p, a)
            nxt = {l: a[l] | c[l] for l in self.locations}
            if all((nxt[l] == a[l]).all() for l in self.locations):
                return a
            a = nxt

    def trap(self, p: Player, region: dict) -> dict:
        z = {l: region[l] & self.dom[l] for l in self.locations}
        while True:
            c = self.cpre(p, z)
            nxt = {l: z[l] & c[l] for l in self.locations}
            if all((nxt[l] == z[l]).all() for l in self.locations):
                return z
            z = nxt

    def buchi(self, p: Player, acc) -> dict:
        z = self.full()
        while True:
            c = self.cpre(p, z)
            t = {l: (c[l] if l in acc else np.zeros(self.n_values, dtype=bool)) for l in self.locations}
            nz = self.attractor(p, t)
            if all((nz[l] == z[l]).all() for l in self.locations):
                return z
            z = nz

    def winning_region(self, cond) -> dict:
        """States from which Sys wins."""
        locs = self.locations
        if isinstance(cond, Reach):
            t = {l: self.dom[l] if l in cond.locations else np.zeros(self.n_values, bool) for l in locs}
            return self.attractor(Player.SYS, t)
        if isinstance(cond, Safety):
            t = {l: self.dom[l] if l in cond.locations else np.zeros(self.n_values, bool) for l in locs}
            return self.trap(Player.SYS, t)
        if isinstance(cond, Buchi):
            return self.buchi(Player.SYS, cond.locations)
        if isinstance(cond, CoBuchi):
            env = self.buchi(Player.ENV, [l for l in locs if l not in cond.locations])
            return {l: self.dom[l] & ~env[l] for l in locs}
        raise TypeError(cond)

    def realizable(self, cond) -> bool:
        w = self.winning_region(cond)
        return bool((~self.dom[self.init] | w[self.init]).all())


def enumerate_game(G: SymbolicGame, dom: FiniteDomain, cap: int = 10**6) -> ExplicitGame:
    X, I = G.program_vars, G.inputs
    n, m = dom.size(X), dom.size(I)
    if n * len(G.locations) > cap or n * m * n > 50 * cap:
        raise OracleError(f"explicit game too large ({n} valuations, {m} inputs)")
    vals, ivals = dom.grid(X), dom.grid(I)
    env_s = {v: vals[:, k] for k, v in enumerate(X)}
    dmask = {l: np_eval(G.dom[l], env_s, (n,)) for l in G.locations}
    env3 = {}
    for k, v in enumerate(X):
        env3[v] = vals[:, k][:, None, None]
        env3[v.prime()] = vals[:, k][None, None, :]
    for k, v in enumerate(I):
        env3[v] = ivals[:, k][None, :, None]
    shape = (n, m, n)
    trans = {}
    for (a, b), f in G.delta.items():
        if f == FALSE:
            continue
        t = np_eval(f, env3, shape) & dmask[a][:, None, None] & dmask[b][None, None, :]
        trans[(a, b)] = np.ascontiguousarray(t)
    valid = {}
    for l in G.locations:
        v = np.zeros((n, m), dtype=bool)
        for b in G.locations:
            if (l, b) in trans:
                v |= trans[(l, b)].any(axis=2)
        valid[l] = v
    return ExplicitGame(G.locations, G.init, X, I, vals, ivals, dmask, trans, valid)


def explicit_attractor(eg: ExplicitGame, p: Player, targets) -> set:
    """Attractor of a set of (location, valuation index) states."""
    states = eg.states()
    bad = set(targets) - states
    if bad:
        raise OracleError(f"targets outside the state space: {sorted(bad)[:3]}")
    return eg.to_set(eg.attractor(p, eg.from_set(targets)))


# ---------------------------------------------------------------------------
# bounded GAL checking


@dataclass
class GalCounterexample:
    kind: str                 # "preservation" or "termination"
    sequence: list            # list of {Var: int}
    note: str = ""


def _gal_box(variables, lo: int, hi: int, pair_limit: int):
    """Per-variable ranges, shrunk symmetrically until the pair space fits."""
    n = len(variables)
    a, b = lo, hi
    while n and (b - a + 1) ** (2 * n) > pair_limit and b - a > 1:
        a, b = a + 1, b - 1 if (b - a) % 2 == 0 else b
        if (b - a + 1) ** (2 * n) > pair_limit and b - a > 1:
            b -= 1
    return FiniteDomain.uniform(variables, a, b)


def check_gal_bounded(gal, dom: FiniteDomain | None = None, max_len: int = 12, window: int = 4,
                      lo: int = -8, hi: int = 8, pair_limit: int = 1 << 25):
    """Search a finite box for a counterexample to the GAL conditions.

    Preservation: a conc state with a stay/step successor outside conc.
    Termination, three ways:
      * a cycle through conc and not base that contains a step edge
        (repeating it forever takes step infinitely often);
      * a stuck state: conc and not base, no conforming successor inside the
        box, but one outside it that is again not base (every continuation
        escapes; reported with a greedy escape sequence of ``max_len`` steps);
      * a conforming path of ``max_len`` transitions with a step in every
        ``window`` that stays out of base for longer than the domain
        diameter times ``window``.
    Returns None when nothing is found, which is not a proof.  Real-sorted
    variables are sampled at the integer points of the box.
    """
    V = tuple(gal.variables)
    if dom is None:
        dom = _gal_box(V, lo, hi, pair_limit)
    vals = dom.grid(V)
    n = len(vals)
    env_s = {v: vals[:, k] for k, v in enumerate(V)}
    conc = np_eval(gal.conc, env_s, (n,))
    base = np_eval(gal.base, env_s, (n,))
    alive = conc & ~base

    chunk = max(1, (1 << 22) // max(n, 1))
    step_rows, step_cols, any_rows, any_cols = [], [], [], []
    has_succ = np.zeros(n, dtype=bool)
    for start in range(0, n, chunk):
        rows = np.arange(start, min(n, start + chunk))
        e = _pair_env(V, vals[rows], vals)
        shape = (len(rows), n)
        st = np_eval(gal.step, e, shape)
        conf = st | np_eval(gal.stay, e, shape)
        viol = conf & conc[rows][:, None] & ~conc[None, :]
        if viol.any():
            r, c = np.argwhere(viol)[0]
            return GalCounterexample("preservation", [_val(vals, V, rows[r]), _val(vals, V, c)],
                                     "conforming transition leaves conc")
        has_succ[rows] = conf.any(axis=1)
        inside = alive[rows][:, None] & alive[None, :]
        r, c = np.nonzero(conf & inside)
        any_rows.append(rows[r])
        any_cols.append(c)
        r, c = np.nonzero(st & inside)
        step_rows.append(rows[r])
        step_cols.append(c)
    ar, ac = np.concatenate(any_rows), np.concatenate(any_cols)
    sr, sc = np.concatenate(step_rows), np.concatenate(step_cols)
    if len(sr):
        graph = csr_matrix((np.ones(len(ar), dtype=np.int8), (ar, ac)), shape=(n, n))
        _, comp = connected_components(graph, directed=True, connection="strong")
        same = comp[sr] == comp[sc]
        if same.any():
            k = int(np.flatnonzero(same)[0])
            cyc = _cycle_through(graph, int(sr[k]), int(sc[k]))
            return GalCounterexample("termination", [_val(vals, V, i) for i in cyc],
                                     "cycle outside base containing a step")
    stuck = np.flatnonzero(alive & ~has_succ)
    if len(stuck):
        wide = FiniteDomain(tuple((v, a - window, b + window) for v, a, b in dom.ranges))
        seq = _escape(gal, V, wide.grid(V), vals[stuck], max_len)
        if seq is not None:
            return GalCounterexample("termination", seq, "every conforming successor leaves the box outside base")
    diameter = max((b - a for _, a, b in dom.ranges), default=0) + 1
    bound = diameter * window
    if max_len >= bound and len(ar):
        path = _long_windowed_path(ar, ac, sr, sc, alive, max_len, window, bound)
        if path is not None:
            return GalCounterexample("termination", [_val(vals, V, i) for i in path],
                                     "long conforming path outside base")
    return None


def _pair_env(V, src: np.ndarray, dst: np.ndarray) -> dict:
    e = {}
    for k, v in enumerate(V):
        e[v] = src[:, k][:, None]
        e[v.prime()] = dst[:, k][None, :]
    return e


def _escape(gal, V, wide_vals, starts, max_len):
    """Greedy conforming non-base sequence from one of ``starts`` through the wide box."""
    env_w = {v: wide_vals[:, k] for k, v in enumerate(V)}
    ok_w = np_eval(gal.conc, env_w, (len(wide_vals),)) & ~np_eval(gal.base, env_w, (len(wide_vals),))
    for s in starts:
        seq = [s]
        cur = s[None, :]
        for _ in range(max_len):
            e = _pair_env(V, cur, wide_vals)
            shape = (1, len(wide_vals))
            st = np_eval(gal.step, e, shape)[0]
            conf = st | np_eval(gal.stay, e, shape)[0]
            cand = np.flatnonzero(conf & ok_w & st)
            if not len(cand):
                cand = np.flatnonzero(conf & ok_w)
            if not len(cand):
                break
            cur = wide_vals[cand[0]][None, :]
            seq.append(cur[0])
        if len(seq) > 1:
            return [{v: int(x[k]) for k, v in enumerate(V)} for x in seq]
    return None


def _val(vals, V, i) -> dict:
    return {v: int(vals[i, k]) for k, v in enumerate(V)}


def _cycle_through(graph, u: int, v: int) -> list:
    """States of a cycle u -> v -> ... -> u in the graph."""
    indptr, indices = graph.indptr, graph.indices
    prev = {v: None}
    todo = [v]
    while todo:
        nxt = []
        for a in todo:
            if a == u:
                path = [u]
                while path[-1] != v:
                    path.append(prev[path[-1]])
                return [u] + path[::-1][:-1] + [u] if u != v else [u, u]
            for b in indices[indptr[a]:indptr[a + 1]]:
                b = int(b)
                if b not in prev:
                    prev[b] = a
                    nxt.append(b)
        todo = nxt
    return [u, v]


def _long_windowed_path(ar, ac, sr, sc, alive, max_len, window, bound):
    succ = {}
    for a, b in zip(ar.tolist(), ac.tolist()):
        succ.setdefault(a, []).append((b, False))
    steps = set(zip(sr.tolist(), sc.tolist()))
    for a, lst in succ.items():
        succ[a] = [(b, (a, b) in steps) for b, _ in lst]
    # state: (node, transitions since last step); depth-first up to max_len
    for s0 in np.flatnonzero(alive).tolist():
        stack = [(s0, 0, [s0])]
        while stack:
            node, since, path = stack.pop()
            if len(path) - 1 >= bound:
                return path
            if len(path) - 1 >= max_len:
                continue
            for b, is_step in succ.get(node, ()):
                ns = 0 if is_step else since + 1
                if ns < window:
                    stack.append((b, ns, path + [b]))
    return None


# ---------------------------------------------------------------------------
# random finite games


@dataclass
class RandomGameConfig:
    min_locations: int = 2
    max_locations: int = 4
    min_vars: int = 2
    max_vars: int = 3
    var_range: tuple = (0, 3)
    input_range: tuple = (0, 2)
    n_inputs: int = 1
    edge_prob: float = 0.45
    extra_dom_prob: float = 0.25


def _rand_atom(rng: random.Random, vs, lo, hi) -> Formula:
    kind = rng.random()
    a = rng.choice(vs)
    k = rng.randint(lo, hi)
    if kind < 0.5 or len(vs) < 2:
        return F.le(a, k) if rng.random() < 0.5 else F.ge(a, k)
    b = rng.choice([v for v in vs if v != a])
    if kind < 0.8:
        return F.le(a + b, k + rng.randint(0, hi)) if rng.random() < 0.5 else F.ge(a + b, k + rng.randint(0, hi))
    return F.le(a, b) if rng.random() < 0.5 else F.lt(a, b)


def _rand_update(rng: random.Random, x: Var, xs, ins, lo, hi) -> Formula:
    xp = x.prime()
    r = rng.random()
    if r < 0.15:
        return F.eq(xp, x)
    if r < 0.3:
        return F.eq(xp, x + 1)
    if r < 0.45:
        return F.eq(xp, x - 1)
    if r < 0.55 and ins:
        return F.eq(xp, rng.choice(ins))
    if r < 0.65 and ins:
        return F.eq(xp, x + rng.choice(ins))
    if r < 0.75:
        return F.eq(xp, rng.randint(lo, hi))
    if r < 0.85:
        return F.le(xp, x)
    if r < 0.92 and len(xs) > 1:
        return F.eq(xp, rng.choice([v for v in xs if v != x]))
    return TRUE


def random_game(seed: int, config: RandomGameConfig | None = None):
    """A seeded random game with a finite domain covering it exactly.

    Every domain includes the variable ranges and every transition guards
    the inputs' ranges, so symbolic and explicit semantics coincide.
    Returns (game, FiniteDomain, rng) with the rng positioned after generation.
    """
    cfg = config or RandomGameConfig()
    rng = random.Random(seed)
    nl = rng.randint(cfg.min_locations, cfg.max_locations)
    nv = rng.randint(cfg.min_vars, cfg.max_vars)
    locs = [f"l{k}" for k in range(nl)]
    xs = [F.Int(n) for n in "xyz"[:nv]]
    ins = [F.Int(f"i{k}") for k in range(cfg.n_inputs)]
    lo, hi = cfg.var_range
    ilo, ihi = cfg.input_range
    ranges = F.conj(*[F.conj(F.ge(x, lo), F.le(x, hi)) for x in xs])
    in_guard = F.conj(*[F.conj(F.ge(i, ilo), F.le(i, ihi)) for i in ins])
    dom = {}
    for l in locs:
        extra = _rand_atom(rng, xs, lo, hi) if rng.random() < cfg.extra_dom_prob else TRUE
        dom[l] = F.conj(ranges, extra)
    trans = {}
    for a in locs:
        targets = [b for b in locs if rng.random() < cfg.edge_prob]
        if not targets:
            targets = [rng.choice(locs)]
        for b in targets:
            guard = TRUE
            if rng.random() < 0.6:
                guard = _rand_atom(rng, xs + ins, lo, hi)
            ups = [_rand_update(rng, x, xs, ins, lo, hi) for x in xs]
            trans[(a, b)] = F.conj(in_guard, guard, *ups)
    G = SymbolicGame(locs, locs[0], ins, xs, dom, trans)
    fd = FiniteDomain.of({**{x: (lo, hi) for x in xs}, **{i: (ilo, ihi) for i in ins}})
    return G, fd, rng


def random_formula(rng: random.Random, xs, lo: int = 0, hi: int = 3, depth: int = 2) -> Formula:
    r = rng.random()
    if depth == 0 or r < 0.35:
        return _rand_atom(rng, xs, lo, hi)
    a = random_formula(rng, xs, lo, hi, depth - 1)
    b = random_formula(rng, xs, lo, hi, depth - 1)
    if r < 0.6:
        return F.conj(a, b)
    if r < 0.9:
        return F.disj(a, b)
    return F.neg(a)


def random_state(rng: random.Random, G: SymbolicGame, p_empty: float = 0.3) -> SymbolicState:
    out = {}
    for l in G.locations:
        r = rng.random()
        if r < p_empty:
            continue
        out[l] = TRUE if r < p_empty + 0.1 else random_formula(rng, list(G.program_vars))
    return SymbolicState(out)


def random_condition(rng: random.Random, G: SymbolicGame, kinds=(Reach, Buchi)):
    kind = rng.choice(list(kinds))
    k = rng.randint(1, max(1, len(G.locations) - 1))
    return kind(frozenset(rng.sample(list(G.locations), k)))


# ---------------------------------------------------------------------------
# random GAL compositions


def random_base_gal(rng: random.Random, variables, lo: int = -3, hi: int = 3) -> Gal:
    """An inequality base GAL over a random affine term of ``variables``."""
    V = tuple(variables)
    t = F.lin(0)
    while not F.term_free_vars(t):
        t = F.lin(0)
        for v in V:
            t = t + rng.randint(-2, 2) * v
    a = rng.randint(lo, hi) if rng.random() < 0.5 else None
    b = rng.randint(lo, hi) if rng.random() < 0.7 or a is None else None
    if a is not None and b is not None and a > b:
        a, b = b, a
    strict = rng.random() < 0.2 and (a is None or b is None or b - a >= 2)
    return base_gal(t, a, b, 1, strict, V)


def random_gal(rng: random.Random, variables, depth: int = 2) -> Gal:
    """A random composition of base GALs by intersection, lexicographic union,
    chaining and invariant strengthening."""
    if depth == 0 or rng.random() < 0.25:
        return random_base_gal(rng, variables)
    op = rng.choice(["intersect", "lex", "chain", "strengthen"])
    g0 = random_gal(rng, variables, depth - 1)
    if op == "strengthen":
        return strengthen(g0, random_formula(rng, list(variables), -3, 3, depth=1))
    g1 = random_gal(rng, variables, depth - 1)
    return {"intersect": intersect, "lex": lex_union, "chain": chain}[op](g0, g1)
