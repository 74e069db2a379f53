"""Accelerated attractor computation and solvers for the four objectives."""
from __future__ import annotations

import enum
import logging
import time
from collections import Counter
from dataclasses import dataclass, field

from . import formula as F
from .formula import FALSE, TRUE, Formula
from .gal import Gal, GalBudget, GalSearch, plain_attractor
from .game import (
    BOTTOM,
    Buchi,
    CoBuchi,
    Player,
    Reach,
    Safety,
    SymbolicGame,
    SymbolicState,
    cpre,
    cpre_at,
    join,
    restrict,
    state_equivalent,
)
from .smt import SmtBackend, Validity, Verdict
from .summary import (
    EnforcementSummary,
    SummaryCache,
    apply_summary,
    compute_summary,
    derive_template,
    in_support,
    select_gvars,
    support_locations,
)

log = logging.getLogger(__name__)


class Result(enum.Enum):
    REALIZABLE = "Realizable"
    UNREALIZABLE = "Unrealizable"
    UNKNOWN = "Unknown"


@dataclass
class SolveOptions:
    accel: str = "gal"              # "gal" or "off"
    summaries: str = "auto"         # "on", "off", or "auto" (on for Buchi/co-Buchi)
    budget: GalBudget = field(default_factory=GalBudget)
    max_iter: int = 64              # cpre iterations per attractor
    outer_max_iter: int = 1024      # Buchi / trap outer iterations
    timeout: float = 1200.0         # seconds, whole solve
    schedule_k: int = 3             # changes in a row before acceleration is tried
    max_escalations: int = 2        # budget doublings after failed attempts
    eq_retries: int = 3             # tolerated unknown equivalence checks
    summary_trigger: int = 2        # successful accelerations at l_s before a summary
    summary_rings: int = 2          # extra BFS layers tried for the support set
    summary_time_fraction: float = 0.2
    summary_cache_size: int = 64
    # "source": the lifted attractor only grows l_s, other locations stay at tau;
    # "game": every location grows
    summary_scope: str = "source"

    def __post_init__(self):
        if self.accel not in ("gal", "off"):
            raise ValueError("accel must be 'gal' or 'off'")
        if self.summaries not in ("on", "off", "auto"):
            raise ValueError("summaries must be 'on', 'off' or 'auto'")
        if self.summary_scope not in ("source", "game"):
            raise ValueError("summary_scope must be 'source' or 'game'")
        if self.max_iter < 1 or self.outer_max_iter < 1:
            raise ValueError("iteration caps must be positive")


@dataclass
class AttractorResult:
    state: SymbolicState
    complete: bool
    iterations: int
    target: SymbolicState
    player: Player


@dataclass
class Certificate:
    """Final fixpoint backing a verdict.

    kind "attractor": target <= state and cpre(state) <= state.
    kind "trap": state <= region and state <= cpre(state).
    """
    kind: str
    game: SymbolicGame
    player: Player
    region: SymbolicState
    state: SymbolicState
    partial: bool = False


@dataclass
class SolveResult:
    result: Result
    stats: dict
    certificate: Certificate | None = None
    winning_region: SymbolicState | None = None
    reason: str = ""


class _Deadline(Exception):
    pass


class Solver:
    def __init__(self, backend: SmtBackend, options: SolveOptions | None = None):
        self.backend = backend
        self.options = options or SolveOptions()
        self.stats: Counter = Counter()
        self.gal = GalSearch(backend, self.options.budget, self.stats,
                             nested_attractor=self._nested_attractor)
        self.summary_cache = SummaryCache(self.options.summary_cache_size)
        self.gals: list[Gal] = self.gal.accepted
        self.summaries: list[EnforcementSummary] = []
        self._active: dict = {}          # (id(G), player) -> [summary]
        self._accel_ok: Counter = Counter()
        self._accel_level: Counter = Counter()
        self._summary_tried: set = set()
        self._deadline = float("inf")
        self._use_summaries = False

    # -- helpers -----------------------------------------------------------------

    def _time_left(self) -> float:
        return self._deadline - time.monotonic()

    def _check_time(self):
        if time.monotonic() > self._deadline:
            raise _Deadline

    def _nested_attractor(self, G, p, target, cap):
        return self.attractor(G, p, target, max_iter=cap, use_summaries=False).state

    # -- attractor ---------------------------------------------------------------

    def attractor(self, G: SymbolicGame, p: Player, target: SymbolicState, max_iter: int | None = None,
                  use_summaries: bool | None = None, accel: bool | None = None,
                  grow: set | None = None) -> AttractorResult:
        """Accelerated attractor iteration; ``complete`` means a fixpoint was reached.

        With ``grow`` only those locations are iterated; the rest keep their
        target value, which under-approximates the attractor.
        """
        opts = self.options
        max_iter = max_iter or opts.max_iter
        use_summaries = self._use_summaries if use_summaries is None else use_summaries
        accel = (opts.accel == "gal") if accel is None else accel
        be = self.backend
        locs = G.locations
        tgt = restrict(G, target, be)
        a = tgt
        prev = BOTTOM
        history = {l: [] for l in locs}
        cyclic = [l for l in locs if G.on_cycle(l) and (grow is None or l in grow)]
        rr = 0
        unknown = 0
        self.stats["attractors"] += 1
        for n in range(1, max_iter + 1):
            if time.monotonic() > self._deadline:
                self.stats["attractor_timeouts"] += 1
                return AttractorResult(a, False, n - 1, tgt, p)
            if n == 1:
                # no cpre step yet: even an empty target can grow (blocking states)
                eq = {l: a[l] == FALSE for l in locs}
            else:
                eq = state_equivalent(a, prev, locs, be)
                if all(v is True for v in eq.values()):
                    return AttractorResult(a, True, n - 1, tgt, p)
            if any(v is None for v in eq.values()):
                unknown += 1
                self.stats["equivalence_unknown"] += 1
                if unknown > opts.eq_retries:
                    return AttractorResult(a, False, n - 1, tgt, p)
            for l in locs:
                history[l].append(eq[l] is not True)
            if use_summaries:
                a = self._apply_summaries(G, p, a)
            if accel and cyclic:
                k = opts.schedule_k
                eligible = [l for l in cyclic if len(history[l]) >= k and all(history[l][-k:])]
                if eligible:
                    order = cyclic[rr:] + cyclic[:rr]
                    la = next(l for l in order if l in eligible)
                    rr = (cyclic.index(la) + 1) % len(cyclic)
                    a = self._accelerate(G, p, a, la, use_summaries)
                    history[la] = []
            prev = a
            self.stats["cpre_calls"] += 1
            a = self._step(G, p, a, tgt, grow)
        eq = state_equivalent(a, prev, locs, be)
        done = all(v is True for v in eq.values())
        return AttractorResult(a, done, max_iter, tgt, p)

    def _step(self, G, p, a: SymbolicState, tgt: SymbolicState, grow) -> SymbolicState:
        if grow is None:
            return join(a, cpre(G, p, a, self.backend), G.locations, self.backend)
        c = SymbolicState({l: cpre_at(G, p, a, l, self.backend) for l in G.locations if l in grow})
        grown = join(a, c, G.locations, self.backend)
        return SymbolicState({l: grown[l] if l in grow else tgt[l] for l in G.locations})

    def _accelerate(self, G, p, a: SymbolicState, la: str, use_summaries: bool) -> SymbolicState:
        key = (id(G), p, la)
        budget = self.options.budget
        for _ in range(min(self._accel_level[key], self.options.max_escalations)):
            budget = budget.doubled()
        self.stats["accel_attempts"] += 1
        self.gal.deadline = self._deadline
        r = self.gal.accelerate(G, p, a, la, budget)
        if r == FALSE or self.backend.implies(r, a[la]):
            if r == FALSE:
                self._accel_level[key] += 1
            return a
        self.stats["accel_successes"] += 1
        a = a.replace(la, self.backend.simplify(F.disj(a[la], r)))
        self._accel_ok[key] += 1
        if use_summaries and self._accel_ok[key] >= self.options.summary_trigger and key not in self._summary_tried:
            self._summary_tried.add(key)
            self._make_summary(G, p, la, a)
        return a

    # -- summaries ---------------------------------------------------------------

    def _make_summary(self, G: SymbolicGame, p: Player, l_s: str, a: SymbolicState):
        saved = self._deadline
        self._deadline = time.monotonic() + max(1.0, self._time_left() * self.options.summary_time_fraction)
        try:
            for ring in range(self.options.summary_rings + 1):
                support = support_locations(G, l_s, ring)
                if ring and support == support_locations(G, l_s, ring - 1):
                    break
                gv = select_gvars(G, p, l_s, a, support, self.backend)
                if not gv:
                    continue
                tmpl = derive_template(G, p, l_s, a, support, gv, self.backend)
                ckey = (id(G), p, l_s, tmpl)
                s, hit = self.summary_cache.get(ckey)
                if not hit:
                    s = compute_summary(G, p, l_s, tmpl, self._summary_attractor(l_s), self.backend)
                    self.summary_cache.put(ckey, s)
                    if s is not None:
                        self.stats["summaries_computed"] += 1
                if s is not None:
                    self.summaries.append(s)
                    self._active.setdefault((id(G), p), []).append(s)
                    log.info("summary at %s: %s", l_s, s.psi)
                    return s
        finally:
            self._deadline = saved
        return None

    def _summary_attractor(self, l_s):
        grow = {l_s} if self.options.summary_scope == "source" else None

        def run(LG, p, target):
            return self.attractor(LG, p, target, use_summaries=False, grow=grow).state
        return run

    def _apply_summaries(self, G, p, a: SymbolicState) -> SymbolicState:
        for s in self._active.get((id(G), p), []):
            if not in_support(s, a, self.backend):
                continue
            r = apply_summary(s, a, self.backend)
            self.stats["summary_applications"] += 1
            r = self.backend.simplify(F.conj(r, G.dom[s.l_s])) if r != FALSE else r
            if r != FALSE and not self.backend.implies(r, a[s.l_s]):
                a = a.replace(s.l_s, self.backend.simplify(F.disj(a[s.l_s], r)))
        return a

    # -- objectives ---------------------------------------------------------------

    def _covers_init(self, G, region: SymbolicState) -> Validity:
        return self.backend.check_valid(F.implies(G.dom[G.init], region[G.init]))

    def _meets_init(self, G, region: SymbolicState) -> Verdict:
        return self.backend.check_sat(F.conj(G.dom[G.init], region[G.init]))

    def _locset(self, G, locs, f=TRUE) -> SymbolicState:
        return SymbolicState({l: f for l in G.locations if l in locs})

    def trap(self, G: SymbolicGame, p: Player, region: SymbolicState):
        """Greatest fixpoint Z = region & cpre_p(Z); returns (state, converged)."""
        be = self.backend
        z = restrict(G, region, be)
        for _ in range(self.options.max_iter):
            self._check_time()
            self.stats["cpre_calls"] += 1
            c = cpre(G, p, z, be)
            nz = SymbolicState({l: be.simplify(F.conj(z[l], c[l])) for l in G.locations})
            eq = state_equivalent(nz, z, G.locations, be)
            z = nz
            if all(v is True for v in eq.values()):
                return z, True
            if any(v is None for v in eq.values()):
                return z, False
        return z, False

    def buchi(self, G: SymbolicGame, p: Player, acc) -> tuple:
        """nu Z. Attr_p(Acc & cpre_p(Z)); returns (Z, last inner attractor, converged, exact)."""
        be = self.backend
        z = restrict(G, self._locset(G, G.locations), be)
        exact = True
        last = None
        for k in range(1, self.options.outer_max_iter + 1):
            self._check_time()
            self.stats["outer_iterations"] += 1
            self.stats["cpre_calls"] += 1
            c = cpre(G, p, z, be)
            t = SymbolicState({l: c[l] for l in G.locations if l in acc})
            r = self.attractor(G, p, t)
            last = r
            exact = exact and r.complete
            eq = state_equivalent(r.state, z, G.locations, be)
            z = r.state
            if all(v is True for v in eq.values()):
                return z, last, True, exact
            if any(v is None for v in eq.values()):
                exact = False
            if exact and p is Player.SYS and self._meets_init(G, z) is Verdict.UNSAT:
                # the iterates only shrink, so nothing at init can come back
                return z, last, False, True
        return z, last, False, exact

    def solve(self, G: SymbolicGame, cond) -> SolveResult:
        opts = self.options
        t0 = time.monotonic()
        self._deadline = t0 + opts.timeout
        self.stats.clear()
        self._smt0 = Counter(self.backend.stats)
        self._accel_ok.clear()
        self._accel_level.clear()
        self._summary_tried.clear()
        self._active.clear()
        if opts.summaries == "on":
            self._use_summaries = True
        elif opts.summaries == "off":
            self._use_summaries = False
        else:
            self._use_summaries = isinstance(cond, (Buchi, CoBuchi))
        try:
            if isinstance(cond, Reach):
                res = self._solve_reach(G, cond.locations)
            elif isinstance(cond, Safety):
                res = self._solve_safety(G, cond.locations)
            elif isinstance(cond, Buchi):
                res = self._solve_buchi(G, cond.locations)
            elif isinstance(cond, CoBuchi):
                res = self._solve_cobuchi(G, cond.locations)
            else:
                raise TypeError(f"unsupported winning condition {cond!r}")
        except _Deadline:
            res = SolveResult(Result.UNKNOWN, {}, reason="timeout")
        res.stats = self._final_stats(time.monotonic() - t0, res)
        return res

    def _final_stats(self, elapsed, res) -> dict:
        s = {k: self.stats.get(k, 0) for k in (
            "cpre_calls", "attractors", "outer_iterations", "accel_attempts", "accel_successes",
            "gal_searches", "gal_accepted", "loop_steps", "summaries_computed", "summary_applications",
            "equivalence_unknown", "attractor_timeouts")}
        s["time_s"] = round(elapsed, 3)
        s["result"] = res.result.value
        d = Counter(self.backend.stats)
        d.subtract(self._smt0)
        s["smt_queries"] = sum(d[k] for k in ("sat_queries", "qe_queries", "model_queries", "core_queries"))
        if res.winning_region is not None:
            s["winning_region"] = {l: str(f) for l, f in res.winning_region.items()}
        return s

    def _solve_reach(self, G, goals) -> SolveResult:
        r = self.attractor(G, Player.SYS, self._locset(G, goals))
        cert = Certificate("attractor", G, Player.SYS, r.target, r.state, partial=not r.complete)
        if self._covers_init(G, r.state) is Validity.VALID:
            return SolveResult(Result.REALIZABLE, {}, cert, r.state)
        if r.complete:
            return SolveResult(Result.UNREALIZABLE, {}, cert, r.state)
        # Sys side inconclusive: look for an Env trap avoiding the goals
        safe = self._locset(G, [l for l in G.locations if l not in goals])
        z, ok = self.trap(G, Player.ENV, safe)
        if ok and self._meets_init(G, z) is Verdict.SAT:
            return SolveResult(Result.UNREALIZABLE, {}, Certificate("trap", G, Player.ENV, safe, z), None)
        return SolveResult(Result.UNKNOWN, {}, None, None, reason="attractor did not converge")

    def _solve_safety(self, G, safe_locs) -> SolveResult:
        bad = self._locset(G, [l for l in G.locations if l not in safe_locs])
        r = self.attractor(G, Player.ENV, bad)
        cert = Certificate("attractor", G, Player.ENV, r.target, r.state, partial=not r.complete)
        if self._meets_init(G, r.state) is Verdict.SAT:
            return SolveResult(Result.UNREALIZABLE, {}, cert, None)
        if r.complete:
            win = SymbolicState({l: self.backend.simplify(F.conj(G.dom[l], F.neg(r.state[l])))
                                 for l in G.locations})
            return SolveResult(Result.REALIZABLE, {}, cert, win)
        safe = self._locset(G, safe_locs)
        z, ok = self.trap(G, Player.SYS, safe)
        if ok and self._covers_init(G, z) is Validity.VALID:
            return SolveResult(Result.REALIZABLE, {}, Certificate("trap", G, Player.SYS, safe, z), z)
        return SolveResult(Result.UNKNOWN, {}, None, None, reason="attractor did not converge")

    def _solve_buchi(self, G, acc) -> SolveResult:
        z, last, converged, exact = self.buchi(G, Player.SYS, acc)
        cert = None
        if last is not None:
            cert = Certificate("attractor", G, Player.SYS, last.target, last.state, partial=not last.complete)
        if converged and self._covers_init(G, z) is Validity.VALID:
            return SolveResult(Result.REALIZABLE, {}, cert, z)
        if exact and (converged or self._meets_init(G, z) is Verdict.UNSAT):
            if self._covers_init(G, z) is not Validity.VALID:
                return SolveResult(Result.UNREALIZABLE, {}, cert, z)
        return SolveResult(Result.UNKNOWN, {}, None, None,
                           reason="outer iteration did not converge" if not converged else "inexact")

    def _solve_cobuchi(self, G, confined) -> SolveResult:
        other = [l for l in G.locations if l not in confined]
        z, last, converged, exact = self.buchi(G, Player.ENV, other)
        cert = None
        if last is not None:
            cert = Certificate("attractor", G, Player.ENV, last.target, last.state, partial=not last.complete)
        if converged and self._meets_init(G, z) is Verdict.SAT:
            return SolveResult(Result.UNREALIZABLE, {}, cert, None)
        if converged and exact and self._meets_init(G, z) is Verdict.UNSAT:
            win = SymbolicState({l: self.backend.simplify(F.conj(G.dom[l], F.neg(z[l]))) for l in G.locations})
            return SolveResult(Result.REALIZABLE, {}, cert, win)
        return SolveResult(Result.UNKNOWN, {}, None, None, reason="Env Buchi iteration inconclusive")


def check_certificate(cert: Certificate, backend: SmtBackend) -> bool:
    """Validity of the fixpoint conditions recorded in a certificate."""
    G = cert.game
    c = cpre(G, cert.player, cert.state, backend)
    for l in G.locations:
        s = cert.state[l]
        if cert.kind == "attractor":
            conds = [F.implies(F.conj(cert.region[l], G.dom[l]), s), F.implies(c[l], s)]
        else:
            conds = [F.implies(s, cert.region[l]), F.implies(s, c[l])]
        for f in conds:
            if backend.check_valid(f) is not Validity.VALID:
                return False
    return True


def solve(G: SymbolicGame, cond, backend: SmtBackend, options: SolveOptions | None = None) -> SolveResult:
    return Solver(backend, options).solve(G, cond)
