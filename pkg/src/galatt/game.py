"""Symbolic game structures, symbolic states and the enforceable predecessor."""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Iterable, Mapping

from . import formula as F
from .formula import FALSE, TRUE, Formula, Var
from .smt import SmtBackend, Validity

log = logging.getLogger(__name__)

LOOP_PREFIX = "$loop$"


class Player(enum.Enum):
    SYS = "Sys"
    ENV = "Env"

    @property
    def opponent(self) -> "Player":
        return Player.ENV if self is Player.SYS else Player.SYS


@dataclass(frozen=True)
class Reach:
    locations: frozenset


@dataclass(frozen=True)
class Safety:
    locations: frozenset


@dataclass(frozen=True)
class Buchi:
    locations: frozenset


@dataclass(frozen=True)
class CoBuchi:
    locations: frozenset


WinningCondition = Reach | Safety | Buchi | CoBuchi


class GameError(ValueError):
    pass


class SymbolicGame:
    """(L, l_init, I, X, dom, delta); immutable once built.

    ``delta`` is stored densely over L x L with FALSE for missing edges.
    """

    def __init__(
        self,
        locations: Iterable[str],
        init: str,
        inputs: Iterable[Var],
        program_vars: Iterable[Var],
        dom: Mapping[str, Formula] | None = None,
        trans: Mapping[tuple, Formula] | None = None,
    ):
        self.locations = tuple(locations)
        if len(set(self.locations)) != len(self.locations):
            raise GameError("duplicate location names")
        if init not in self.locations:
            raise GameError(f"unknown initial location {init}")
        self.init = init
        self.inputs = tuple(inputs)
        self.program_vars = tuple(program_vars)
        names = [v.name for v in self.inputs + self.program_vars]
        if len(set(names)) != len(names):
            raise GameError("inputs and program variables must have distinct names")
        if any(v.primed for v in self.inputs + self.program_vars):
            raise GameError("declared variables must be unprimed")
        dom = dict(dom or {})
        trans = dict(trans or {})
        for l in list(dom) + [a for k in trans for a in k]:
            if l not in self.locations:
                raise GameError(f"unknown location {l}")
        xs, ins = set(self.program_vars), set(self.inputs)
        allowed_dom = xs
        allowed_trans = xs | ins | {v.prime() for v in self.program_vars}
        self.dom = {}
        for l in self.locations:
            f = dom.get(l, TRUE)
            _check_qf(f, f"dom({l})")
            bad = F.free_vars(f) - allowed_dom
            if bad:
                raise GameError(f"dom({l}) mentions {sorted(map(str, bad))[0]}, which is not a program variable")
            self.dom[l] = f
        self.delta = {}
        for a in self.locations:
            for b in self.locations:
                f = trans.get((a, b), FALSE)
                _check_qf(f, f"delta({a},{b})")
                bad = F.free_vars(f) - allowed_trans
                if bad:
                    raise GameError(f"delta({a},{b}) mentions undeclared {sorted(map(str, bad))[0]}")
                self.delta[(a, b)] = f
        self._prime_map = {v: F.var_term(v.prime()) for v in self.program_vars}
        self._valid_in: dict = {}
        self._cpre_memo: dict = {}
        # set by lift(): the game this one extends with frozen variables
        self.lifted_from: "SymbolicGame | None" = None

    # -- structure -------------------------------------------------------------

    def successors(self, l: str) -> list[str]:
        return [b for b in self.locations if self.delta[(l, b)] != FALSE]

    def predecessors(self, l: str) -> list[str]:
        return [a for a in self.locations if self.delta[(a, l)] != FALSE]

    def on_cycle(self, l: str) -> bool:
        """Whether l can reach itself in the location graph."""
        seen, todo = set(), list(self.successors(l))
        while todo:
            a = todo.pop()
            if a == l:
                return True
            if a in seen:
                continue
            seen.add(a)
            todo.extend(self.successors(a))
        return False

    def reachable_from(self, l: str) -> set:
        seen, todo = {l}, [l]
        while todo:
            a = todo.pop()
            for b in self.successors(a):
                if b not in seen:
                    seen.add(b)
                    todo.append(b)
        return seen

    def next_state(self, f: Formula) -> Formula:
        """The circle operator: rename program variables to their primed copies."""
        return F.substitute(f, self._prime_map)

    def structurally_equal(self, other: "SymbolicGame") -> bool:
        return (
            self.locations == other.locations
            and self.init == other.init
            and self.inputs == other.inputs
            and self.program_vars == other.program_vars
            and self.dom == other.dom
            and self.delta == other.delta
        )

    def __repr__(self):
        return f"SymbolicGame(locations={list(self.locations)}, init={self.init})"


def _check_qf(f: Formula, what: str):
    if F.has_quantifier(f):
        raise GameError(f"{what} must be quantifier-free")
    if F.placeholders(f):
        raise GameError(f"{what} must not contain placeholders")


class SymbolicState:
    """Total map from locations to formulas, FALSE where unmentioned."""

    __slots__ = ("_m", "_h")

    def __init__(self, mapping: Mapping[str, Formula] | None = None):
        self._m = {l: f for l, f in (mapping or {}).items() if f != FALSE}
        self._h = None

    def __getitem__(self, l: str) -> Formula:
        return self._m.get(l, FALSE)

    def items(self):
        return self._m.items()

    def locations(self):
        return self._m.keys()

    def replace(self, l: str, f: Formula) -> "SymbolicState":
        m = dict(self._m)
        m[l] = f
        return SymbolicState(m)

    def as_dict(self, locations: Iterable[str]) -> dict:
        return {l: self[l] for l in locations}

    def __eq__(self, other):
        return isinstance(other, SymbolicState) and self._m == other._m

    def __hash__(self):
        if self._h is None:
            self._h = hash(frozenset(self._m.items()))
        return self._h

    def __repr__(self):
        return "{" + ", ".join(f"{l}: {f}" for l, f in self._m.items()) + "}"


BOTTOM = SymbolicState()


def state(**kw) -> SymbolicState:
    return SymbolicState(kw)


# -- game operations -------------------------------------------------------------


def valid_input_formula(G: SymbolicGame, l: str, backend: SmtBackend | None = None) -> Formula:
    """ValidIn(l) = exists X'. OR_l' delta(l,l') & dom(l')'.  QE'd when a backend is given."""
    key = (l, backend is not None)
    hit = G._valid_in.get(key)
    if hit is not None:
        return hit
    primed = [v.prime() for v in G.program_vars]
    body = F.disj(*[F.conj(G.delta[(l, b)], G.next_state(G.dom[b])) for b in G.successors(l)])
    f = F.exists(primed, body)
    if backend is not None:
        q = backend.qelim(f)
        if q is not None:
            f = backend.simplify(q)
    G._valid_in[key] = f
    return f


def check_non_blocking(G: SymbolicGame, backend: SmtBackend) -> bool | None:
    """True if every dom state has a valid input; None when the solver is unsure."""
    unsure = False
    for l in G.locations:
        vin = valid_input_formula(G, l)
        r = backend.check_valid(F.implies(G.dom[l], F.exists(G.inputs, vin)))
        if r is Validity.INVALID:
            return False
        if r is Validity.UNKNOWN:
            unsure = True
    return None if unsure else True


def cpre_at(G: SymbolicGame, p: Player, d: SymbolicState, l: str, backend: SmtBackend) -> Formula:
    """One location of the enforceable predecessor."""
    succ = G.successors(l)
    key = (p, l, tuple(d[b] for b in succ))
    hit = G._cpre_memo.get(key)
    if hit is not None:
        backend.stats["cpre_memo_hits"] += 1
        return hit
    backend.stats["cpre_location_calls"] += 1
    primed = [v.prime() for v in G.program_vars]
    vin = valid_input_formula(G, l, backend)
    if p is Player.SYS:
        post = F.disj(*[F.conj(G.delta[(l, b)], G.next_state(G.dom[b]), G.next_state(d[b])) for b in succ])
        inner = _elim(backend, F.exists(primed, post))
        body = F.forall(G.inputs, F.implies(vin, inner))
    else:
        post = F.conj(*[F.implies(F.conj(G.delta[(l, b)], G.next_state(G.dom[b])), G.next_state(d[b])) for b in succ])
        inner = _elim(backend, F.forall(primed, post))
        body = F.exists(G.inputs, F.conj(vin, inner))
    res = backend.simplify(F.conj(G.dom[l], _elim(backend, body)))
    G._cpre_memo[key] = res
    return res


def _elim(backend: SmtBackend, f: Formula) -> Formula:
    q = backend.qelim(f)
    return f if q is None else q


def cpre(G: SymbolicGame, p: Player, d: SymbolicState, backend: SmtBackend) -> SymbolicState:
    for _, f in d.items():
        if F.placeholders(f):
            raise GameError("cpre needs a placeholder-free symbolic state")
    return SymbolicState({l: cpre_at(G, p, d, l, backend) for l in G.locations})


def loop_game(G: SymbolicGame, l_split: str, l_end: str) -> SymbolicGame:
    if l_split not in G.locations:
        raise GameError(f"unknown location {l_split}")
    if l_end in G.locations:
        raise GameError(f"location {l_end} already exists")
    locs = G.locations + (l_end,)
    dom = dict(G.dom)
    dom[l_end] = G.dom[l_split]
    trans = {}
    for (a, b), f in G.delta.items():
        if f == FALSE:
            continue
        if b == l_split:
            trans[(a, l_end)] = f
        else:
            trans[(a, b)] = f
    trans[(l_end, l_end)] = F.conj(*[F.iff(F.bvar(v.prime()), F.bvar(v)) if v.sort is F.Sort.BOOL
                                     else F.eq(v.prime(), v) for v in G.program_vars])
    return SymbolicGame(locs, G.init, G.inputs, G.program_vars, dom, trans)


def lift(G: SymbolicGame, meta: Iterable[Var]) -> SymbolicGame:
    meta = tuple(meta)
    if not meta:
        return G
    taken = {v.name for v in G.inputs + G.program_vars}
    for m in meta:
        if m.name in taken:
            raise GameError(f"meta-variable {m.name} clashes with a game variable")
    keep = F.conj(*[F.iff(F.bvar(m.prime()), F.bvar(m)) if m.sort is F.Sort.BOOL else F.eq(m.prime(), m)
                    for m in meta])
    trans = {k: F.conj(f, keep) for k, f in G.delta.items() if f != FALSE}
    LG = SymbolicGame(G.locations, G.init, G.inputs, G.program_vars + meta, G.dom, trans)
    LG.lifted_from = G
    return LG


def fresh_location(G: SymbolicGame, base: str) -> str:
    name = LOOP_PREFIX + base
    k = 0
    while name in G.locations:
        k += 1
        name = f"{LOOP_PREFIX}{base}{k}"
    return name


# -- plain attractor iteration ------------------------------------------------------


def restrict(G: SymbolicGame, d: SymbolicState, backend: SmtBackend | None = None) -> SymbolicState:
    """Conjoin every location's formula with its domain."""
    out = {}
    for l in G.locations:
        f = F.conj(d[l], G.dom[l])
        out[l] = backend.simplify(f) if backend is not None and f != FALSE else f
    return SymbolicState(out)


def state_equivalent(a: SymbolicState, b: SymbolicState, locations, backend: SmtBackend) -> dict:
    """Per-location equivalence; values True/False/None (unknown)."""
    out = {}
    for l in locations:
        fa, fb = a[l], b[l]
        if fa == fb:
            out[l] = True
            continue
        r1 = backend.check_valid(F.implies(fa, fb))
        r2 = backend.check_valid(F.implies(fb, fa)) if r1 is Validity.VALID else r1
        if r1 is Validity.VALID and r2 is Validity.VALID:
            out[l] = True
        elif Validity.INVALID in (r1, r2):
            out[l] = False
        else:
            out[l] = None
    return out


def join(a: SymbolicState, b: SymbolicState, locations, backend: SmtBackend | None = None) -> SymbolicState:
    out = {}
    for l in locations:
        f = F.disj(a[l], b[l])
        if backend is not None and f not in (a[l], b[l]):
            f = backend.simplify(f)
        out[l] = f
    return SymbolicState(out)
