"""S-expression reading and conversion of SMT-LIB terms into formulas."""
from __future__ import annotations

import re
from fractions import Fraction
from typing import Callable, Mapping

from . import formula as F
from .formula import FALSE, TRUE, Formula, Lin, Sort, Var


class ParseError(ValueError):
    def __init__(self, msg: str, line: int | None = None, col: int | None = None):
        self.line, self.col = line, col
        where = f"{line}:{col}: " if line is not None else ""
        super().__init__(where + msg)


class Sym(str):
    """A symbol or numeral token remembering where it was read."""

    line: int
    col: int

    def __new__(cls, text, line=0, col=0, quoted=False):
        s = super().__new__(cls, text)
        s.line, s.col, s.quoted = line, col, quoted
        return s


class SList(list):
    line: int = 0
    col: int = 0


_TOKEN = re.compile(
    r"""(?P<ws>\s+)|(?P<comment>;[^\n]*)|(?P<lp>\()|(?P<rp>\))|(?P<quoted>\|[^|]*\|)|(?P<str>"(?:[^"]|"")*")|(?P<sym>[^\s()|";]+)"""
)


def read_all(text: str) -> list:
    """Read every top-level s-expression in ``text``."""
    stack: list[SList] = [SList()]
    line, line_start = 1, 0
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        col = pos - line_start + 1
        kind = m.lastgroup
        tok = m.group(kind)
        if kind == "lp":
            lst = SList()
            lst.line, lst.col = line, col
            stack.append(lst)
        elif kind == "rp":
            if len(stack) == 1:
                raise ParseError("unbalanced ')'", line, col)
            done = stack.pop()
            stack[-1].append(done)
        elif kind == "quoted":
            stack[-1].append(Sym(tok[1:-1], line, col, quoted=True))
        elif kind == "str":
            stack[-1].append(Sym(tok, line, col, quoted=True))
        elif kind == "sym":
            stack[-1].append(Sym(tok, line, col))
        nl = tok.count("\n")
        if nl:
            line += nl
            line_start = pos + tok.rfind("\n") + 1
        pos = m.end()
    if len(stack) != 1:
        open_ = stack[-1]
        raise ParseError("unbalanced '('", open_.line, open_.col)
    return stack[0]


def read_one(text: str):
    items = read_all(text)
    if len(items) != 1:
        raise ParseError(f"expected one s-expression, found {len(items)}")
    return items[0]


def pos_of(x):
    return getattr(x, "line", None), getattr(x, "col", None)


def _err(msg, x):
    return ParseError(msg, *pos_of(x))


_NUM = re.compile(r"^[0-9]+(\.[0-9]+)?$")


class TermReader:
    """Convert SMT-LIB terms to ``Formula``/``Lin``.

    ``lookup`` resolves free symbols to variables.  Term-level ``ite`` is
    lifted into the enclosing atom as a case split.
    """

    def __init__(self, lookup: Callable[[str], Var | None]):
        self.lookup = lookup

    # a term evaluates to a list of (guard, value) cases
    def formula(self, s, env: Mapping | None = None) -> Formula:
        try:
            return self._formula(s, dict(env or {}))
        except F.FormulaError as e:
            line, col = pos_of(s)
            raise ParseError(str(e), line, col) from e

    def _resolve(self, name, env):
        if name in env:
            return env[name]
        v = self.lookup(str(name))
        if v is None:
            raise _err(f"unknown symbol {name}", name)
        return v

    def _formula(self, s, env) -> Formula:
        if isinstance(s, Sym):
            if not s.quoted and s == "true":
                return TRUE
            if not s.quoted and s == "false":
                return FALSE
            v = self._resolve(s, env)
            if isinstance(v, Formula):
                return v
            if isinstance(v, Var) and v.sort is Sort.BOOL:
                return F.bvar(v)
            raise _err(f"{s} is not boolean", s)
        if not s:
            raise _err("empty expression", s)
        head = s[0]
        if isinstance(head, SList):
            raise _err("unexpected application", s)
        args = s[1:]
        if head == "let":
            return self._formula(s[2], self._let(s, env))
        if head == "!":
            return self._formula(args[0], env)
        if head in ("exists", "forall"):
            inner = dict(env)
            vs = []
            for d in s[1]:
                v = Var(str(d[0]), _sort(d[1]))
                inner[str(d[0])] = v
                vs.append(v)
            body = self._formula(s[2], inner)
            return F.exists(vs, body) if head == "exists" else F.forall(vs, body)
        if head == "and":
            return F.conj(*[self._formula(a, env) for a in args])
        if head == "or":
            return F.disj(*[self._formula(a, env) for a in args])
        if head == "not":
            return F.neg(self._formula(args[0], env))
        if head == "=>":
            fs = [self._formula(a, env) for a in args]
            out = fs[-1]
            for a in reversed(fs[:-1]):
                out = F.implies(a, out)
            return out
        if head == "xor":
            a, b = (self._formula(x, env) for x in args)
            return F.neg(F.iff(a, b))
        if head == "ite":
            c = self._formula(args[0], env)
            if self._is_bool(args[1], env):
                return F.disj(F.conj(c, self._formula(args[1], env)), F.conj(F.neg(c), self._formula(args[2], env)))
        if head in ("=", "distinct") and self._is_bool(args[0], env):
            fs = [self._formula(a, env) for a in args]
            if head == "distinct":
                return F.neg(F.iff(fs[0], fs[1]))
            return F.conj(*[F.iff(a, b) for a, b in zip(fs, fs[1:])])
        if head in ("<=", "<", ">=", ">", "=", "distinct"):
            op = "!=" if head == "distinct" else str(head)
            terms = [self._term(a, env) for a in args]
            parts = []
            for a, b in zip(terms, terms[1:]):
                parts.append(self._compare(op, a, b))
            return F.conj(*parts)
        raise _err(f"unsupported operator {head}", head)

    def _let(self, s, env):
        inner = dict(env)
        for b in s[1]:
            name, val = b[0], b[1]
            if self._is_bool(val, env):
                inner[str(name)] = self._formula(val, env)
            else:
                inner[str(name)] = _Cases(self._term(val, env))
        return inner

    @staticmethod
    def _compare(op, a, b):
        cases = []
        for ga, ta in a:
            for gb, tb in b:
                cases.append(F.conj(ga, gb, F.cmp(op, ta, tb)))
        return F.disj(*cases)

    def _is_bool(self, s, env) -> bool:
        if isinstance(s, Sym):
            if not s.quoted and s in ("true", "false"):
                return True
            if _NUM.match(s):
                return False
            v = self._resolve(s, env)
            if isinstance(v, Formula):
                return True
            if isinstance(v, _Cases):
                return False
            return v.sort is Sort.BOOL
        head = s[0]
        if head == "let":
            return self._is_bool(s[2], self._let_sorts(s, env))
        if head == "ite":
            return self._is_bool(s[2], env)
        if head == "!":
            return self._is_bool(s[1], env)
        return head in ("and", "or", "not", "=>", "xor", "=", "distinct", "<=", "<", ">=", ">", "exists", "forall")

    def _let_sorts(self, s, env):
        inner = dict(env)
        for b in s[1]:
            inner[str(b[0])] = TRUE if self._is_bool(b[1], env) else _Cases([(TRUE, Lin())])
        return inner

    def _term(self, s, env) -> list:
        if isinstance(s, Sym):
            if _NUM.match(s):
                return [(TRUE, F.lin(Fraction(str(s))))]
            v = self._resolve(s, env)
            if isinstance(v, _Cases):
                return v.cases
            if isinstance(v, Var) and v.sort.numeric:
                return [(TRUE, F.lin(v))]
            raise _err(f"{s} is not numeric", s)
        head, args = s[0], s[1:]
        if head == "let":
            return self._term(s[2], self._let(s, env))
        if head == "ite":
            c = self._formula(args[0], env)
            out = [(F.conj(c, g), t) for g, t in self._term(args[1], env)]
            out += [(F.conj(F.neg(c), g), t) for g, t in self._term(args[2], env)]
            return [(g, t) for g, t in out if g != FALSE]
        if head in ("to_real", "to_int") and head == "to_real":
            return self._term(args[0], env)
        sub = [self._term(a, env) for a in args]
        if head == "+":
            return _combine(sub, lambda xs: sum(xs[1:], xs[0]))
        if head == "-":
            if len(sub) == 1:
                return [(g, -t) for g, t in sub[0]]
            return _combine(sub, lambda xs: xs[0] - sum(xs[2:], xs[1]))
        if head == "*":
            return _combine(sub, _product)
        if head == "/":
            def q(xs):
                if not xs[1].is_const or xs[1].const == 0:
                    raise _err("division by a non-constant", s)
                return xs[0] * (1 / xs[1].const)
            return _combine(sub, q)
        if head in ("div", "mod"):
            def dm(xs):
                if not xs[1].is_const or xs[1].const.denominator != 1:
                    raise _err(f"{head} by a non-integer constant", s)
                k = int(xs[1].const)
                return F.div(xs[0], k) if head == "div" else F.mod(xs[0], k)
            return _combine(sub, dm)
        if head == "abs":
            return [(F.conj(g, F.ge(t, 0)), t) for g, t in sub[0]] + [(F.conj(g, F.lt(t, 0)), -t) for g, t in sub[0]]
        raise _err(f"unsupported operator {head}", head)


class _Cases:
    def __init__(self, cases):
        self.cases = cases


def _product(xs):
    out = xs[0]
    for x in xs[1:]:
        out = out * x
    return out


def _combine(sub, fn):
    out = [(TRUE, [])]
    for cases in sub:
        nxt = []
        for g, ts in out:
            for h, t in cases:
                gh = F.conj(g, h)
                if gh != FALSE:
                    nxt.append((gh, ts + [t]))
        out = nxt
    return [(g, fn(ts)) for g, ts in out]


def _sort(s) -> Sort:
    try:
        return Sort(str(s))
    except ValueError:
        raise _err(f"unknown sort {s}", s) from None
