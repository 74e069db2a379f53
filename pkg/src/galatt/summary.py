"""Enforcement summaries: reusable, target-parameterised attractor facts.

A summary (p, l_s, phi, D) says: for every symbolic state d in the support
set D, the states of ``phi`` with each placeholder ``next_l`` replaced by
``d(l)`` can be forced by p into d, starting at l_s.  Summaries are
computed once by an attractor run in a game lifted with frozen
meta-variables and then instantiated cheaply.
"""
from __future__ import annotations

import logging
from collections import OrderedDict
from dataclasses import dataclass
from typing import Callable

from . import formula as F
from .formula import FALSE, TRUE, Formula, Placeholder, Var
from .game import Player, SymbolicGame, SymbolicState, cpre_at, lift
from .smt import SmtBackend, Verdict

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Template:
    l_s: str
    support: tuple          # L_S
    gvars: tuple            # generalised variables G
    meta: tuple             # meta-variables
    tau: tuple              # ((location, formula), ...) for locations with tau != false

    def at(self, l: str) -> Formula:
        for k, f in self.tau:
            if k == l:
                return f
        return FALSE

    @property
    def shape(self):
        return (self.l_s, self.support, self.gvars)


@dataclass(frozen=True)
class EnforcementSummary:
    player: Player
    l_s: str
    phi: Formula
    template: Template
    program_vars: tuple
    next_symbols: tuple     # ((location, Placeholder), ...)
    psi: Formula = TRUE

    def symbol(self, l: str) -> Placeholder:
        for k, p in self.next_symbols:
            if k == l:
                return p
        raise KeyError(l)


def next_symbol(l: str, program_vars) -> Placeholder:
    return Placeholder(f"next_{l}", tuple(v.sort for v in program_vars))


def _eq(a: Var, b: Var) -> Formula:
    if a.sort is F.Sort.BOOL:
        return F.iff(F.bvar(a), F.bvar(b))
    return F.eq(a, b)


def point_enforceable(G: SymbolicGame, p: Player, x: Var, support, backend: SmtBackend) -> bool:
    """Can p, from some states, steer x to any prescribed value in one step, at every l in support?"""
    if x not in G.program_vars:
        raise ValueError(f"{x} is not a program variable")
    taken = {v.name for v in G.inputs + G.program_vars}
    name = "k$" + x.name
    while name in taken:
        name += "$"
    c = Var(name, x.sort)
    Gc = lift(G, [c])
    others = [v for v in G.program_vars if v != x]
    for l in support:
        succ = G.successors(l)
        d = SymbolicState({b: _eq(x, c) for b in succ})
        pre = cpre_at(Gc, p, d, l, backend)
        cond = F.exists(others, F.forall([c], F.exists([x], pre)))
        if not backend.is_valid(cond):
            return False
    return True


def support_locations(G: SymbolicGame, l_s: str, ring: int = 0) -> tuple:
    """{l_s} and successors, grown by ``ring`` further BFS layers."""
    out = [l_s]
    frontier = [l_s]
    for _ in range(ring + 1):
        nxt = []
        for a in frontier:
            for b in G.successors(a):
                if b not in out:
                    out.append(b)
                    nxt.append(b)
        frontier = nxt
    return tuple(l for l in G.locations if l in out)


def _qelim_or_keep(backend: SmtBackend, f: Formula) -> Formula:
    q = backend.qelim(f)
    return f if q is None else backend.simplify(q)


def derive_template(G: SymbolicGame, p: Player, l_s: str, a: SymbolicState, support, gvars,
                    backend: SmtBackend) -> Template:
    if l_s not in support:
        raise ValueError("the support location must be in the support set")
    gvars = tuple(v for v in G.program_vars if v in set(gvars))
    meta, tau = [], []
    for l in G.locations:
        if l not in support or l == l_s:
            continue
        ms = []
        for x in gvars:
            m = Var(f"m${l}${x.name}", x.sort)
            meta.append(m)
            ms.append(_eq(x, m))
        gen = _qelim_or_keep(backend, F.exists(gvars, a[l]))
        f = F.conj(gen, *ms)
        if f != FALSE:
            tau.append((l, f))
    return Template(l_s, tuple(support), gvars, tuple(meta), tuple(tau))


def select_gvars(G: SymbolicGame, p: Player, l_s: str, a: SymbolicState, support, backend) -> tuple:
    """Point-enforceable variables; all variables when they leave nothing to generalise."""
    pe = tuple(x for x in G.program_vars if point_enforceable(G, p, x, support, backend))
    rest = [x for x in G.program_vars if x not in pe]
    if rest:
        trivial = all(
            backend.is_valid(_qelim_or_keep(backend, F.exists(pe, a[l])))
            for l in support if l != l_s
        )
        if trivial:
            return tuple(G.program_vars)
    return pe


def compute_summary(G: SymbolicGame, p: Player, l_s: str, template: Template,
                    attractor: Callable, backend: SmtBackend) -> EnforcementSummary | None:
    """Lift G by the meta-variables, run ``attractor`` toward tau, read off psi at l_s.

    ``attractor(game, player, target)`` must return a SymbolicState that
    under-approximates the true attractor.
    """
    if not template.tau:
        return None
    LG = lift(G, template.meta)
    res = attractor(LG, p, SymbolicState(dict(template.tau)))
    psi = res[l_s]
    if psi == FALSE or backend.check_sat(psi) is not Verdict.SAT:
        return None
    X = G.program_vars
    syms = tuple((l, next_symbol(l, X)) for l in G.locations)
    parts = []
    for l, tf in template.tau:
        sym = dict(syms)[l]
        parts.append(F.forall(X, F.implies(tf, sym(*X))))
    phi = F.exists(template.meta, F.conj(psi, *parts))
    return EnforcementSummary(p, l_s, phi, template, X, syms, psi)


def in_support(summary: EnforcementSummary, a: SymbolicState, backend: SmtBackend) -> bool:
    """exists Meta. AND_l forall X. tau(l) -> a(l), decided by satisfiability."""
    X = summary.program_vars
    parts = []
    for l, tf in summary.template.tau:
        parts.append(_qelim_or_keep(backend, F.forall(X, F.implies(tf, a[l]))))
    cond = F.conj(*parts)
    return backend.check_sat(cond) is Verdict.SAT


def instantiate(summary: EnforcementSummary, a: SymbolicState) -> Formula:
    X = summary.program_vars
    mapping = {sym: (X, a[l]) for l, sym in summary.next_symbols}
    return F.instantiate_placeholders(summary.phi, mapping)


def apply_summary(summary: EnforcementSummary, a: SymbolicState, backend: SmtBackend) -> Formula:
    inst = instantiate(summary, a)
    q = backend.qelim(inst)
    return inst if q is None else backend.simplify(q)


class SummaryCache:
    """LRU map from (game, player, l_s, template) to computed summaries (or None)."""

    def __init__(self, capacity: int = 64):
        self.capacity = capacity
        self._d: OrderedDict = OrderedDict()

    def get(self, key):
        if key in self._d:
            self._d.move_to_end(key)
            return self._d[key], True
        return None, False

    def put(self, key, value):
        self._d[key] = value
        self._d.move_to_end(key)
        while len(self._d) > self.capacity:
            self._d.popitem(last=False)

    def __len__(self):
        return len(self._d)
