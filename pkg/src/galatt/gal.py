"""Acceleration lemmas (GALs): construction, composition, and search.

A GAL is a tuple (base, stay, step, conc) over variables V: every sequence
starting in conc whose transitions satisfy step or stay, with step taken
infinitely often, eventually reaches base; and conc is kept along stay/step
transitions until then.  Only tuples built by ``base_gal`` and the four
composition operators are produced here, which keeps them valid by
construction.
"""
from __future__ import annotations

import contextlib
import logging
import time
from collections import Counter
from dataclasses import dataclass, field, replace
from fractions import Fraction
from itertools import combinations
from typing import Callable

from . import formula as F
from .formula import FALSE, TRUE, Formula, Lin, Var
from .game import (
    Player,
    SymbolicGame,
    SymbolicState,
    cpre,
    fresh_location,
    join,
    loop_game,
    restrict,
    state_equivalent,
)
from .smt import SmtBackend, Verdict

log = logging.getLogger(__name__)


class GalError(ValueError):
    pass


@dataclass(frozen=True)
class Gal:
    base: Formula
    stay: Formula
    step: Formula
    conc: Formula
    variables: tuple
    origin: str = field(default="", compare=False)

    def primed(self, f: Formula) -> Formula:
        return prime_over(f, self.variables)

    def to_smtlib(self) -> str:
        return "\n".join(
            f"({k} {F.to_smtlib(getattr(self, k))})" for k in ("base", "stay", "step", "conc")
        )

    def __str__(self):
        return f"GAL[{self.origin}](base: {self.base}; conc: {self.conc})"


def prime_over(f: Formula, vs) -> Formula:
    return F.substitute(f, {v: F.var_term(v.prime()) for v in vs})


# Observers receive every GAL produced by the public constructors.
_observers: list[Callable[[Gal], None]] = []


@contextlib.contextmanager
def observe_gals(callback: Callable[[Gal], None]):
    _observers.append(callback)
    try:
        yield
    finally:
        _observers.remove(callback)


def _emit(g: Gal) -> Gal:
    for cb in list(_observers):
        cb(g)
    return g


def _vars_of(t: Lin) -> tuple:
    return tuple(sorted(F.term_free_vars(t), key=lambda v: v.key))


def base_gal(t, lo=None, hi=None, eps=1, strict: bool = False, variables=None) -> Gal:
    """Inequality base GAL for lo <= t <= hi (bounds None mean infinite).

    With ``strict`` the interval is open: lo < t < hi.
    """
    t = F.lin(t)
    lo = None if lo is None else Fraction(lo)
    hi = None if hi is None else Fraction(hi)
    eps = Fraction(eps)
    if eps <= 0:
        raise GalError("epsilon must be positive")
    if lo is not None and hi is not None and lo > hi:
        raise GalError(f"empty interval [{lo}, {hi}]")
    V = tuple(variables) if variables is not None else _vars_of(t)
    missing = F.term_free_vars(t) - set(V)
    if missing:
        raise GalError(f"term mentions {sorted(map(str, missing))[0]} outside the GAL variables")
    tp = _prime_term(t, V)
    if strict:
        lower = (lambda u: F.gt(u, lo)) if lo is not None else (lambda u: TRUE)
        upper = (lambda u: F.lt(u, hi)) if hi is not None else (lambda u: TRUE)
        below = F.le(t, lo) if lo is not None else FALSE
        above = F.ge(t, hi) if hi is not None else FALSE
    else:
        lower = (lambda u: F.ge(u, lo)) if lo is not None else (lambda u: TRUE)
        upper = (lambda u: F.le(u, hi)) if hi is not None else (lambda u: TRUE)
        below = F.lt(t, lo) if lo is not None else FALSE
        above = F.gt(t, hi) if hi is not None else FALSE
    base = F.conj(lower(t), upper(t))
    inside_next = F.conj(lower(tp), upper(tp))
    stay = F.disj(
        inside_next,
        F.conj(below, F.le(t, tp), upper(tp)),
        F.conj(above, F.ge(t, tp), lower(tp)),
    )
    step = F.disj(
        inside_next,
        F.conj(below, F.le(t + eps, tp), upper(tp)),
        F.conj(above, F.ge(t - eps, tp), lower(tp)),
    )
    rng = f"{'-inf' if lo is None else lo}..{'inf' if hi is None else hi}"
    return _emit(Gal(base, stay, step, TRUE, V, f"base({t} in {rng}{' open' if strict else ''})"))


def _prime_term(t: Lin, V) -> Lin:
    m = {v: F.lin(v.prime()) for v in V if v.sort.numeric}
    return F._subst_term(t, m)


def trivial_gal(variables) -> Gal:
    """(true, true, true, true): base holds immediately."""
    return _emit(Gal(TRUE, TRUE, TRUE, TRUE, tuple(variables), "trivial"))


def _same_vars(g0: Gal, g1: Gal):
    if set(g0.variables) != set(g1.variables):
        raise GalError("GALs range over different variable sets")


def intersect(g0: Gal, g1: Gal) -> Gal:
    _same_vars(g0, g1)
    gs = (g0, g1)
    stay_base = F.conj(*[
        F.implies(F.conj(gs[i].base, F.neg(gs[1 - i].base)), gs[i].primed(gs[i].base)) for i in (0, 1)
    ])
    step = F.conj(
        stay_base,
        F.disj(*[F.conj(gs[i].step, F.neg(gs[i].base), gs[1 - i].stay) for i in (0, 1)]),
    )
    return _emit(Gal(
        F.conj(g0.base, g1.base),
        F.conj(g0.stay, g1.stay, stay_base),
        step,
        F.conj(g0.conc, g1.conc),
        g0.variables,
        f"intersect({g0.origin}, {g1.origin})",
    ))


def lex_union(g0: Gal, g1: Gal) -> Gal:
    _same_vars(g0, g1)
    return _emit(Gal(
        F.disj(g0.base, g1.base),
        F.conj(g0.stay, g1.stay),
        F.disj(F.conj(g0.conc, g0.step), F.conj(g1.conc, g1.step, g0.stay)),
        F.disj(g0.conc, g1.conc),
        g0.variables,
        f"lex({g0.origin}, {g1.origin})",
    ))


def chain(g0: Gal, g1: Gal) -> Gal:
    _same_vars(g0, g1)
    return _emit(Gal(
        g0.base,
        F.conj(g0.stay, g1.stay, F.implies(g1.base, g1.primed(g1.base))),
        F.disj(g0.step, F.conj(g1.conc, F.neg(g1.base), g1.step, g0.stay)),
        g0.conc,
        g0.variables,
        f"chain({g0.origin}, {g1.origin})",
    ))


def strengthen(g: Gal, inv: Formula) -> Gal:
    extra = F.free_vars(inv) - set(g.variables)
    if extra:
        raise GalError(f"invariant mentions {sorted(map(str, extra))[0]} outside the GAL variables")
    if inv == TRUE:
        return g
    ip = g.primed(inv)
    return _emit(Gal(
        F.conj(g.base, inv),
        F.conj(g.stay, ip),
        F.conj(g.step, ip),
        F.conj(g.conc, inv),
        g.variables,
        f"strengthen({g.origin})",
    ))


def widen(g: Gal, variables) -> Gal:
    """The same GAL read over a superset of its variables.

    The formulas do not mention the new variables, so a sequence over the
    larger set conforms exactly when its projection does.
    """
    V = tuple(variables)
    if not set(g.variables) <= set(V):
        raise GalError("widen needs a superset of the GAL variables")
    if V == g.variables:
        return g
    return _emit(Gal(g.base, g.stay, g.step, g.conc, V, f"widen({g.origin})"))


# ---------------------------------------------------------------------------
# search


@dataclass(frozen=True)
class GalBudget:
    max_iterations: int = 4
    max_depth: int = 2
    max_candidates: int = 32
    loop_iterations: int = 8
    # upper bound on fresh loop-step computations per top-level search
    max_loop_steps: int = 64
    nested_acceleration: bool = False
    epsilon: int = 1
    # wall-clock seconds per top-level search
    max_seconds: float = 30.0

    def __post_init__(self):
        for k in ("max_iterations", "max_candidates", "loop_iterations", "max_loop_steps"):
            if getattr(self, k) < 1:
                raise GalError(f"{k} must be positive")
        if self.max_depth < 0:
            raise GalError("max_depth must be non-negative")

    def doubled(self) -> "GalBudget":
        return replace(
            self,
            max_iterations=self.max_iterations * 2,
            max_depth=self.max_depth * 2 if self.max_depth else 1,
            max_candidates=self.max_candidates * 2,
            loop_iterations=self.loop_iterations * 2,
            max_loop_steps=self.max_loop_steps * 2,
            max_seconds=self.max_seconds * 2,
        )


class _OutOfFuel(Exception):
    pass


@dataclass(frozen=True)
class _Unit:
    """One or two inequalities over the same term: lo <= t <= hi."""

    term: Lin
    lo: Fraction | None
    hi: Fraction | None
    strict: bool
    ineqs: tuple


def _units(ineqs) -> list[_Unit]:
    out: list = []
    used = set()
    for i, a in enumerate(ineqs):
        if i in used:
            continue
        t = a.term
        partner = None
        for j in range(i + 1, len(ineqs)):
            b = ineqs[j]
            if j not in used and b.term == -t and b.strict == a.strict:
                partner = j
                break
        if partner is None:
            out.append(_Unit(t, None, a.bound, a.strict, (a,)))
        else:
            used.add(partner)
            b = ineqs[partner]
            # a: t <= a.bound ; b: -t <= b.bound  i.e. t >= -b.bound
            lo, hi = -b.bound, a.bound
            if lo > hi:
                # contradictory pair; keep them apart
                out.append(_Unit(t, None, a.bound, a.strict, (a,)))
                out.append(_Unit(-t, None, b.bound, b.strict, (b,)))
            else:
                out.append(_Unit(t, lo, hi, a.strict, (a, b)))
        used.add(i)
    return out


class GalSearch:
    """GetGAL / LoopStep / Accelerate over one backend."""

    def __init__(self, backend: SmtBackend, budget: GalBudget | None = None, stats: Counter | None = None,
                 nested_attractor: Callable | None = None):
        self.backend = backend
        self.budget = budget or GalBudget()
        self.stats = stats if stats is not None else Counter()
        self.accepted: list[Gal] = []
        self.nested_attractor = nested_attractor
        self._loop_games: dict = {}
        self._loop_cache: dict = {}
        self._frozen_cache: dict = {}
        self._history: dict = {}
        # most recent accepted GALs per location tried before a fresh search
        self.reuse = 4
        self._fuel = 0
        self._reused = False
        # set by accelerate: reject GALs whose conclusion adds nothing to the target
        self._require_progress = False
        # absolute time.monotonic() limit set by the caller
        self.deadline = float("inf")
        self._stop = float("inf")

    # -- loop step -------------------------------------------------------------

    def _loop_game(self, G: SymbolicGame, l: str):
        key = (id(G), l)
        hit = self._loop_games.get(key)
        if hit is None or hit[0] is not G:
            end = fresh_location(G, l)
            hit = (G, loop_game(G, l, end), end)
            self._loop_games[key] = hit
        return hit[1], hit[2]

    @staticmethod
    def e_constants(G: SymbolicGame) -> dict:
        return {x: Var("e$" + x.name, x.sort) for x in G.program_vars}

    def loop_step(self, G: SymbolicGame, p: Player, target: SymbolicState, l: str, step: Formula,
                  loop_iterations: int | None = None) -> Formula:
        cap = loop_iterations or self.budget.loop_iterations
        key = (id(G), p, l, tuple(target[x] for x in G.locations), step, cap)
        hit = self._loop_cache.get(key)
        if hit is not None:
            return hit[1]
        if self._fuel <= 0 or time.monotonic() > self._stop:
            raise _OutOfFuel
        self._fuel -= 1
        self.stats["loop_steps"] += 1
        LG, end = self._loop_game(G, l)
        E = self.e_constants(G)
        m = {}
        for x in G.program_vars:
            m[x] = F.var_term(E[x])
            m[x.prime()] = F.var_term(x)
        tgt = {x: target[x] for x in G.locations}
        tgt[end] = F.substitute(step, m)
        if self.nested_attractor is not None and self.budget.nested_acceleration:
            a = self.nested_attractor(LG, p, SymbolicState(tgt), cap)
        else:
            a = plain_attractor(LG, p, SymbolicState(tgt), self.backend, cap)
        res = F.substitute(a[l], {E[x]: F.var_term(x) for x in G.program_vars})
        res = self.backend.simplify(res) if not F.has_quantifier(res) else res
        self._loop_cache[key] = (G, res)
        return res

    # -- candidates ------------------------------------------------------------

    def _scc(self, G: SymbolicGame, l: str) -> set:
        fwd = G.reachable_from(l)
        return {a for a in fwd if l in G.reachable_from(a)}

    def _frozen(self, G: SymbolicGame, l: str, t: Lin) -> bool:
        """Whether l's self-loop (or, lacking one, every edge of its SCC) keeps t unchanged."""
        key = (id(G), l, t)
        hit = self._frozen_cache.get(key)
        if hit is not None and hit[0] is G:
            return hit[1]
        if G.delta[(l, l)] != FALSE:
            edges = [(l, l)]
        else:
            region = self._scc(G, l)
            edges = [(a, b) for a in region for b in region if G.delta[(a, b)] != FALSE]
        tp = _prime_term(t, G.program_vars)
        res = True
        for a, b in edges:
            d = G.delta[(a, b)]
            if not self.backend.is_valid(F.implies(F.conj(d, G.dom[a]), F.eq(tp, t))):
                res = False
                break
        self._frozen_cache[key] = (G, res)
        return res

    def candidates(self, G: SymbolicGame, l: str, tf: Formula, limit: int) -> list[Gal]:
        V = G.program_vars
        if tf == FALSE:
            return []
        try:
            polys = F.to_polyhedral_dnf(tf)
        except (F.DnfTooLarge, F.FormulaError):
            return []
        per_disjunct = [self._disjunct_options(G, l, d, V) for d in polys]
        per_disjunct = [opts for opts in per_disjunct if opts]
        out: list[Gal] = []
        seen = set()

        def add(g):
            if g not in seen and len(out) < limit:
                seen.add(g)
                out.append(g)

        for opts in per_disjunct:
            for g in opts:
                add(g)
        if len(per_disjunct) > 1:
            depth = max(len(o) for o in per_disjunct)
            for k in range(depth):
                picks = [o[min(k, len(o) - 1)] for o in per_disjunct]
                for order in (picks, picks[::-1]):
                    g = order[0]
                    for h in order[1:]:
                        g = lex_union(g, h)
                    add(g)
        return out[:limit]

    def _reuse_candidates(self, G, p, l, tf: Formula) -> list[Gal]:
        """Earlier GALs at l, strengthened by the literals shared by every disjunct of tf."""
        if self.reuse <= 0:
            return []
        hist = []
        H = G
        while H is not None:
            h = self._history.get((id(H), p, l))
            if h and h[0][0] is H:
                hist.extend(h)
            H = H.lifted_from
        if not hist:
            return []
        try:
            polys = F.to_polyhedral_dnf(tf)
        except (F.DnfTooLarge, F.FormulaError):
            return []
        if not polys:
            return []
        shared = set(i.formula() for i in polys[0].inequalities)
        for d in polys[1:]:
            shared &= set(i.formula() for i in d.inequalities)
        inv = F.conj(*sorted(shared, key=str))
        out = []
        for _, g in hist:
            g = widen(g, G.program_vars)
            if not F.free_vars(inv) <= set(g.variables):
                continue
            c = strengthen(g, inv)
            if c not in out:
                out.append(c)
        return out

    def _disjunct_options(self, G, l, d: F.PolyDisjunct, V) -> list[Gal]:
        Vset = set(V)
        res_vars = F.free_vars(d.residual)
        if not res_vars <= Vset:
            return []
        units = []
        for u in _units(list(d.inequalities)):
            if not F.term_free_vars(u.term) <= Vset:
                return []
            units.append(u)
        if not units:
            return [strengthen(trivial_gal(V), d.residual)]
        live = [u for u in units if not self._frozen(G, l, u.term)]
        frozen = [u for u in units if u not in live]
        subsets: list = [(u,) for u in live] + [(u,) for u in frozen]
        subsets += list(combinations(live, 2))
        if len(live) > 2:
            subsets.append(tuple(live))
        opts = []
        for S in subsets:
            g = None
            for u in S:
                b = base_gal(u.term, u.lo, u.hi, self.budget.epsilon, u.strict, V)
                g = b if g is None else intersect(g, b)
            rest = [i.formula() for u in units if u not in S for i in u.ineqs]
            opts.append(strengthen(g, F.conj(*rest, d.residual)))
        return opts

    # -- GetGAL ----------------------------------------------------------------

    def get_gal(self, G: SymbolicGame, p: Player, l: str, target: SymbolicState,
                budget: GalBudget | None = None) -> Gal | None:
        budget = budget or self.budget
        saved = self.budget
        self.budget = budget
        self._fuel = budget.max_loop_steps
        self._stop = min(self.deadline, time.monotonic() + budget.max_seconds)
        self._reused = False
        try:
            tf = target[l]
            for g in self._reuse_candidates(G, p, l, tf):
                r = self._refine(G, p, l, target, g, 1, 0, budget)
                if r is not None:
                    self.stats["gal_reused"] += 1
                    self._reused = True
                    return r
            cands = self.candidates(G, l, tf, budget.max_candidates)
            # iterative deepening over the iteration budget; each stage
            # allows recursion depth up to iterations - 1
            for iters in range(1, budget.max_iterations + 1):
                depth = min(budget.max_depth, iters - 1)
                for g in cands:
                    r = self._refine(G, p, l, target, g, iters, depth, budget)
                    if r is not None:
                        return r
        except _OutOfFuel:
            self.stats["gal_fuel_exhausted"] += 1
        finally:
            self.budget = saved
        return None

    def _sub_search(self, G, p, l, sub_target, iters, depth, budget):
        limit = max(4, budget.max_candidates // 4)
        for g in self.candidates(G, l, sub_target[l], limit):
            r = self._refine(G, p, l, sub_target, g, iters, depth, budget)
            if r is not None:
                return r
        return None

    def _conclusive(self, G, l, target, g: Gal, pre: Formula) -> bool:
        dom = G.dom[l]
        if not self.backend.is_valid(F.implies(F.conj(g.base, dom), target[l])):
            return False
        return self.backend.is_valid(F.implies(F.conj(g.conc, F.neg(g.base), dom), pre))

    def _useful(self, G, l, target, g: Gal) -> bool:
        """A GAL whose conclusion is already inside the target adds nothing."""
        return not self.backend.is_valid(F.implies(F.conj(g.conc, G.dom[l]), target[l]))

    def _refine(self, G, p, l, target, g: Gal, iters: int, depth: int, budget) -> Gal | None:
        if iters <= 0:
            return None
        pre = self.loop_step(G, p, target, l, g.step, budget.loop_iterations)
        if self._conclusive(G, l, target, g, pre) and (not self._require_progress or self._useful(G, l, target, g)):
            return g
        if iters == 1:
            return None
        if depth > 0 and self.backend.check_sat(F.conj(pre, G.dom[l])) is Verdict.SAT:
            sub = self._sub_search(G, p, l, SymbolicState({l: pre}), iters - 1, depth - 1, budget)
            if sub is not None:
                r = self._refine(G, p, l, target, chain(g, sub), iters - 1, depth, budget)
                if r is not None:
                    return r
        if F.has_quantifier(pre) or not F.free_vars(pre) <= set(g.variables):
            return None
        return self._refine(G, p, l, target, strengthen(g, pre), iters - 1, depth, budget)

    # -- Accelerate ------------------------------------------------------------

    def accelerate(self, G: SymbolicGame, p: Player, target: SymbolicState, l: str,
                   budget: GalBudget | None = None) -> Formula:
        budget = budget or self.budget
        self.stats["gal_searches"] += 1
        self._require_progress = True
        try:
            g = self.get_gal(G, p, l, target, budget)
        finally:
            self._require_progress = False
        if g is None:
            return FALSE
        # the search just computed this loop step, so this is a cache hit
        self._fuel = max(self._fuel, 1)
        self._stop = float("inf")
        pre = self.loop_step(G, p, target, l, g.step, budget.loop_iterations)
        if not self._conclusive(G, l, target, g, pre):
            return FALSE
        self.accepted.append(g)
        hist = self._history.setdefault((id(G), p, l), [])
        if not hist or hist[0][0] is not G:
            hist.clear()
        if not self._reused and g not in [h for _, h in hist]:
            hist.insert(0, (G, g))
            del hist[self.reuse:]
        self.stats["gal_accepted"] += 1
        return self.backend.simplify(F.conj(g.conc, G.dom[l]))


def plain_attractor(G: SymbolicGame, p: Player, target: SymbolicState, backend: SmtBackend,
                    max_iter: int) -> SymbolicState:
    """Un-accelerated attractor iteration, stopped after ``max_iter`` cpre steps."""
    a = restrict(G, target, backend)
    for _ in range(max_iter):
        c = cpre(G, p, a, backend)
        nxt = join(a, c, G.locations, backend)
        same = state_equivalent(nxt, a, G.locations, backend)
        a = nxt
        if all(v is True for v in same.values()):
            break
    return a
