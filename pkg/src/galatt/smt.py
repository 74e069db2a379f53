"""SMT backend speaking SMT-LIB2 to a child solver process.

One persistent process per backend; every query runs inside a push/pop
scope and is terminated with an echo marker so the output stream never
desynchronises.  ``unknown`` answers are reported, never coerced.
"""
from __future__ import annotations

import contextlib
import enum
import logging
import os
import select
import shlex
import subprocess
import threading
import time
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction

from . import formula as F
from .formula import FALSE, TRUE, Formula, Var
from .sexpr import ParseError, Sym, TermReader, read_all

log = logging.getLogger(__name__)

_MARK = "@@galatt-end@@"


class Verdict(enum.Enum):
    SAT = "sat"
    UNSAT = "unsat"
    UNKNOWN = "unknown"


class Validity(enum.Enum):
    VALID = "valid"
    INVALID = "invalid"
    UNKNOWN = "unknown"


class SolverError(RuntimeError):
    """The solver process failed at the transport level."""


class SolverTimeout(SolverError):
    """The solver did not answer within the wall-clock limit and was killed."""


class PlaceholderInQuery(F.FormulaError):
    pass


def default_solver_command() -> list[str]:
    return shlex.split(os.environ.get("GALATT_SMT_SOLVER", "z3 -in -smt2"))


@dataclass
class SolverConfig:
    command: list = field(default_factory=default_solver_command)
    timeout_ms: int = 10_000
    seed: int = 0
    qe_tactics: tuple = ("qe_rec", "qe2", "qe")
    log_path: str | None = None
    # formulas with more atoms than this skip the solver-guided minimisation
    simplify_atom_limit: int = 40
    simplify_cube_limit: int = 32
    simplify_growth: float = 1.5
    cache_size: int = 200_000


class SmtBackend:
    def __init__(self, config: SolverConfig | None = None):
        self.config = config or SolverConfig()
        self.stats: Counter = Counter()
        self.query_hooks: list = []
        self._proc: subprocess.Popen | None = None
        self._log = open(self.config.log_path, "a") if self.config.log_path else None
        self._lock = threading.Lock()
        self._sat_cache: dict = {}
        self._qe_cache: dict = {}
        self._simp_cache: dict = {}
        self._z3 = None
        self._started_ok = False

    # -- process management -------------------------------------------------

    def _start(self):
        try:
            self._proc = subprocess.Popen(
                self.config.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                bufsize=0,
            )
        except OSError as e:
            raise SolverError(f"cannot start solver {self.config.command!r}: {e}") from e
        self._buf = b""
        name = self._raw_once("(get-info :name)")
        self._z3 = "z3" in name.lower()
        init = ["(set-option :print-success false)"]
        if self._z3:
            init.append(f"(set-option :smt.random_seed {self.config.seed})")
            init.append("(set-option :model.completion true)")
        init.append("(set-option :produce-unsat-cores true)")
        self._raw_once("\n".join(init))
        self._started_ok = True

    def close(self):
        if self._proc is not None:
            with contextlib.suppress(Exception):
                self._proc.stdin.write(b"(exit)\n")
                self._proc.stdin.flush()
            with contextlib.suppress(Exception):
                self._proc.kill()
                self._proc.wait(timeout=2)
            self._proc = None
        if self._log:
            self._log.close()
            self._log = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __del__(self):
        with contextlib.suppress(Exception):
            self.close()

    def _raw(self, text: str, wait_s: float | None = None) -> str:
        """Send commands and return everything printed before the end marker.

        A solver that dies mid-query is restarted and the query retried once.
        """
        try:
            return self._raw_once(text, wait_s)
        except SolverTimeout:
            raise
        except SolverError as e:
            if self._proc is not None or not self._started_ok:
                raise
            log.warning("solver restarted after: %s", e)
            self.stats["solver_restarts"] += 1
            return self._raw_once(text, wait_s)

    def _raw_once(self, text: str, wait_s: float | None = None) -> str:
        if self._proc is None:
            self._start()
        for hook in self.query_hooks:
            hook(text)
        if self._log:
            self._log.write(text + "\n")
            self._log.flush()
        payload = f'{text}\n(echo "{_MARK}")\n'.encode()
        try:
            self._proc.stdin.write(payload)
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as e:
            self._proc = None
            raise SolverError(f"solver pipe closed: {e}") from e
        deadline = time.monotonic() + (wait_s if wait_s is not None else self.config.timeout_ms / 1000 + 30)
        fd = self._proc.stdout.fileno()
        buf = self._buf
        marker = _MARK.encode()
        while True:
            idx = buf.find(marker)
            if idx >= 0:
                end = buf.find(b"\n", idx)
                if end >= 0:
                    out_bytes, self._buf = buf[:idx], buf[end + 1:]
                    break
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                self._kill()
                raise SolverTimeout("solver did not answer in time")
            ready, _, _ = select.select([fd], [], [], remaining)
            if not ready:
                continue
            chunk = os.read(fd, 1 << 16)
            if not chunk:
                self._proc = None
                raise SolverError("solver exited unexpectedly")
            buf += chunk
        out = [out_bytes.decode()]
        res = "".join(out)
        if self._log and res:
            self._log.write("; -> " + res.replace("\n", "\n; ") + "\n")
        return res

    def _kill(self):
        with contextlib.suppress(Exception):
            self._proc.kill()
        self._proc = None

    # -- helpers --------------------------------------------------------------

    @staticmethod
    def _check_placeholders(f: Formula):
        ps = F.placeholders(f)
        if ps:
            raise PlaceholderInQuery(f"placeholder {sorted(p.name for p in ps)[0]} in solver query")

    @staticmethod
    def _decls(vs) -> str:
        return "\n".join(f"(declare-fun {F.smt_name(v)} () {v.sort.value})" for v in sorted(vs, key=lambda v: v.key))

    def _scoped(self, f: Formula, body: str) -> str:
        return "(push 1)\n" + self._decls(F.free_vars(f)) + "\n" + body + "\n(pop 1)"

    def _cache_put(self, cache, key, val):
        if len(cache) >= self.config.cache_size:
            cache.clear()
        cache[key] = val

    # -- public queries -------------------------------------------------------

    def check_sat(self, f: Formula) -> Verdict:
        self._check_placeholders(f)
        if f == TRUE:
            return Verdict.SAT
        if f == FALSE:
            return Verdict.UNSAT
        hit = self._sat_cache.get(f)
        if hit is not None:
            self.stats["sat_cache_hits"] += 1
            return hit
        with self._lock:
            self.stats["sat_queries"] += 1
            text = self._scoped(
                f, f"(set-option :timeout {self.config.timeout_ms})\n(assert {F.to_smtlib(f)})\n(check-sat)"
            )
            try:
                out = self._raw(text)
            except SolverTimeout as e:
                log.warning("solver failure: %s", e)
                self.stats["solver_failures"] += 1
                return Verdict.UNKNOWN
        ans = out.strip().splitlines()[-1].strip() if out.strip() else ""
        v = {"sat": Verdict.SAT, "unsat": Verdict.UNSAT}.get(ans, Verdict.UNKNOWN)
        if v is Verdict.UNKNOWN:
            self.stats["unknown"] += 1
            if ans != "unknown":
                log.warning("unexpected solver answer: %r", out[:300])
        else:
            self._cache_put(self._sat_cache, f, v)
        return v

    def check_valid(self, f: Formula) -> Validity:
        v = self.check_sat(F.neg(f))
        return {Verdict.UNSAT: Validity.VALID, Verdict.SAT: Validity.INVALID}.get(v, Validity.UNKNOWN)

    def is_valid(self, f: Formula) -> bool:
        """True only when validity is established (unknown counts as not valid)."""
        return self.check_valid(f) is Validity.VALID

    def implies(self, a: Formula, b: Formula) -> bool:
        return self.is_valid(F.implies(a, b))

    def equivalent(self, a: Formula, b: Formula) -> bool:
        if a == b:
            return True
        return self.implies(a, b) and self.implies(b, a)

    def get_model(self, f: Formula) -> dict | None | Verdict:
        """A satisfying assignment of the free variables, None if unsat, UNKNOWN otherwise."""
        self._check_placeholders(f)
        fv = sorted(F.free_vars(f), key=lambda v: v.key)
        if F.has_quantifier(f):
            raise F.FormulaError("models are only extracted for quantifier-free formulas")
        with self._lock:
            self.stats["model_queries"] += 1
            getv = f"(get-value ({' '.join(F.smt_name(v) for v in fv)}))" if fv else ""
            text = self._scoped(
                f, f"(set-option :timeout {self.config.timeout_ms})\n(assert {F.to_smtlib(f)})\n(check-sat)\n{getv}"
            )
            try:
                out = self._raw(text)
            except SolverTimeout:
                return Verdict.UNKNOWN
        items = read_all(out)
        if not items or items[0] == "unsat":
            return None
        if items[0] != "sat":
            return Verdict.UNKNOWN
        model = {}
        if fv:
            byname = {F.smt_name(v).strip("|"): v for v in fv}
            for pair in items[1]:
                v = byname[str(pair[0])]
                model[v] = _value(pair[1], v)
        return model

    def unsat_core(self, lits: list, extra: Formula = TRUE) -> list | None:
        """Subset of ``lits`` jointly unsat with ``extra`` (None if sat/unknown)."""
        conj = F.conj(extra, *lits)
        if conj == FALSE:
            # trivially contradictory; fall back to the full list
            return list(lits)
        self._check_placeholders(conj)
        with self._lock:
            self.stats["core_queries"] += 1
            names = [f"a!{i}" for i in range(len(lits))]
            asserts = [f"(assert {F.to_smtlib(extra)})"]
            for n, l in zip(names, lits):
                asserts.append(f"(assert (! {F.to_smtlib(l)} :named {n}))")
            vs = set(F.free_vars(extra)).union(*(F.free_vars(l) for l in lits)) if lits else F.free_vars(extra)
            text = "(push 1)\n" + self._decls(vs) + f"\n(set-option :timeout {self.config.timeout_ms})\n"
            text += "\n".join(asserts) + "\n(check-sat)\n(get-unsat-core)\n(pop 1)"
            try:
                out = self._raw(text)
            except SolverTimeout:
                return None
        items = read_all(out)
        if not items or items[0] != "unsat":
            return None
        core = {str(x) for x in items[1]} if len(items) > 1 and isinstance(items[1], list) else set(names)
        return [l for n, l in zip(names, lits) if n in core]

    # -- quantifier elimination -------------------------------------------------

    def qelim(self, f: Formula) -> Formula | None:
        """Quantifier-free equivalent of ``f``, or None if no tactic succeeded."""
        self._check_placeholders(f)
        if not F.has_quantifier(f):
            return f
        hit = self._qe_cache.get(f)
        if hit is not None:
            return hit
        res = None
        for tactic in self.config.qe_tactics:
            res = self._qe_with(f, tactic)
            # a lost goal shows up as true; cross-check those with plain qe
            if res == TRUE and tactic != "qe":
                alt = self._qe_with(f, "qe")
                if alt is not None and alt != TRUE:
                    self.stats["qe_rejected"] += 1
                    res = alt
            if res is not None:
                break
        if res is None:
            self.stats["qe_failures"] += 1
            return None
        self._cache_put(self._qe_cache, f, res)
        return res

    def _qe_with(self, f: Formula, tactic: str) -> Formula | None:
        fv = F.free_vars(f)
        with self._lock:
            self.stats["qe_queries"] += 1
            if self._proc is None:
                self._start()
            if self._z3:
                # qe_rec and qe2 drop goals that are already quantifier-free, so they
                # only run when simplify left a quantifier behind
                qe = f"(then simplify (cond has-quantifiers {tactic} skip) simplify)"
                cmd = f"(assert {F.to_smtlib(f)})\n(apply (try-for {qe} {self.config.timeout_ms}))"
            else:
                cmd = f"(get-qe {F.to_smtlib(f)})"
            try:
                out = self._raw(self._scoped(f, cmd))
            except SolverTimeout as e:
                log.warning("qe failure: %s", e)
                return None
        try:
            items = read_all(out)
        except ParseError:
            return None
        byname = {F.smt_name(v).strip("|"): v for v in fv}
        reader = TermReader(byname.get)
        try:
            if self._z3:
                if not items or not isinstance(items[0], list) or not items[0] or items[0][0] != "goals":
                    return None
                goals = []
                for g in items[0][1:]:
                    parts = []
                    it = iter(g[1:])
                    precise = False
                    for x in it:
                        if isinstance(x, Sym) and x.startswith(":"):
                            val = next(it, None)
                            if x == ":precision" and val == "precise":
                                precise = True
                            continue
                        parts.append(reader.formula(x))
                    if not precise:
                        return None
                    goals.append(F.conj(*parts))
                res = F.disj(*goals)
            else:
                res = reader.formula(items[0])
        except (ParseError, F.FormulaError, KeyError, IndexError) as e:
            log.warning("cannot read qe output: %s", e)
            return None
        if F.has_quantifier(res):
            return None
        return res

    # -- simplification -------------------------------------------------------

    def simplify(self, f: Formula) -> Formula:
        """Equivalent, usually smaller formula; falls back to the input."""
        self._check_placeholders(f)
        if isinstance(f, F.Const):
            return f
        hit = self._simp_cache.get(f)
        if hit is not None:
            return hit
        g = f
        if F.has_quantifier(g):
            q = self.qelim(g)
            if q is None:
                self._cache_put(self._simp_cache, f, g)
                return g
            g = q
        best = g
        try:
            cand = self._minimise(g)
        except _GiveUp:
            cand = None
        if cand is not None and F.size(cand) <= F.size(best):
            best = cand
        limit = max(F.size(f) * self.config.simplify_growth, 4)
        if F.size(best) > limit and not F.has_quantifier(f):
            best = f
        self._cache_put(self._simp_cache, f, best)
        self._cache_put(self._simp_cache, best, best)
        return best

    def _minimise(self, g: Formula) -> Formula | None:
        """Irredundant DNF cover built from solver-generalised implicants."""
        ats = F.atoms(g)
        if len(ats) > self.config.simplify_atom_limit:
            return None
        v = self.check_sat(g)
        if v is Verdict.UNSAT:
            return FALSE
        if v is Verdict.UNKNOWN:
            return None
        if self.check_sat(F.neg(g)) is Verdict.UNSAT:
            return TRUE
        notg = F.neg(g)
        cubes: list = []
        while True:
            if len(cubes) > self.config.simplify_cube_limit:
                raise _GiveUp
            m = self.get_model(F.conj(g, *[F.neg(c) for c in cubes]))
            if m is None:
                break
            if m is Verdict.UNKNOWN:
                raise _GiveUp
            lits = []
            for a in ats:
                try:
                    val = F.evaluate(a, _complete(m, a))
                except F.EvaluationError:
                    raise _GiveUp from None
                lits.append(a if val else F.neg(a))
            core = self.unsat_core(lits, notg)
            if core is None:
                raise _GiveUp
            # greedy literal dropping on top of the core
            core = list(core)
            i = 0
            while i < len(core) and len(core) > 1:
                trial = core[:i] + core[i + 1:]
                if self.check_sat(F.conj(notg, *trial)) is Verdict.UNSAT:
                    core = trial
                else:
                    i += 1
            cubes.append(F.conj(*_tidy(core)))
        # drop cubes covered by the others
        i = 0
        while i < len(cubes) and len(cubes) > 1:
            others = cubes[:i] + cubes[i + 1:]
            if self.check_sat(F.conj(cubes[i], *[F.neg(c) for c in others])) is Verdict.UNSAT:
                cubes = others
            else:
                i += 1
        return F.disj(*cubes)


class _GiveUp(Exception):
    pass


def _tidy(lits):
    return sorted(lits, key=str)


def _complete(model: dict, f: Formula) -> dict:
    env = dict(model)
    for v in F.free_vars(f):
        if v not in env:
            env[v] = False if v.sort is F.Sort.BOOL else 0
    return env


def _value(s, v: Var):
    if v.sort is F.Sort.BOOL:
        return str(s) == "true"
    reader = TermReader(lambda name: None)
    cases = reader._term(s, {})
    return cases[0][1].const if v.sort is F.Sort.REAL else int(cases[0][1].const)


class BackendPool:
    """Hands out independent backends; each handle is used by one thread at a time."""

    def __init__(self, config: SolverConfig | None = None):
        self.config = config or SolverConfig()
        self._free: list[SmtBackend] = []
        self._all: list[SmtBackend] = []
        self._lock = threading.Lock()

    @contextlib.contextmanager
    def acquire(self):
        with self._lock:
            b = self._free.pop() if self._free else None
            if b is None:
                b = SmtBackend(self.config)
                self._all.append(b)
        try:
            yield b
        finally:
            with self._lock:
                self._free.append(b)

    def close(self):
        for b in self._all:
            b.close()
        self._all.clear()
        self._free.clear()
