"""Immutable first-order formulas over linear integer/real arithmetic.

Formulas are hash-consed-lite: every node caches its hash on construction so
they can be used as dictionary keys cheaply.  Arithmetic terms are kept in a
canonical linear form (``Lin``) and comparison atoms are normalised to
``expr <= 0``, ``expr < 0`` or ``expr = 0``.  Over the integers strict
comparisons are tightened to non-strict ones and coefficients are divided by
their gcd, so syntactically equal atoms usually mean semantically equal
atoms.
"""
from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Mapping, Sequence, Union


class Sort(enum.Enum):
    INT = "Int"
    REAL = "Real"
    BOOL = "Bool"

    @property
    def numeric(self) -> bool:
        return self is not Sort.BOOL


@dataclass(frozen=True)
class Var:
    name: str
    sort: Sort
    primed: bool = False

    def prime(self) -> "Var":
        if self.primed:
            raise ValueError(f"variable {self.name} is already primed")
        return Var(self.name, self.sort, True)

    def unprime(self) -> "Var":
        return Var(self.name, self.sort, False)

    @property
    def key(self):
        return (self.name, self.primed)

    def __str__(self):
        return self.name + ("'" if self.primed else "")

    # arithmetic sugar, so tests can write ``x + 2 * y``
    def __add__(self, o):
        return lin(self) + o

    def __radd__(self, o):
        return lin(o) + lin(self)

    def __sub__(self, o):
        return lin(self) - o

    def __rsub__(self, o):
        return lin(o) - lin(self)

    def __mul__(self, k):
        return lin(self) * k

    __rmul__ = __mul__

    def __neg__(self):
        return -lin(self)


def Int(name: str) -> Var:
    return Var(name, Sort.INT)


def Real(name: str) -> Var:
    return Var(name, Sort.REAL)


def Bool(name: str) -> Var:
    return Var(name, Sort.BOOL)


class FormulaError(ValueError):
    pass


# ---------------------------------------------------------------------------
# linear terms


class _Cached:
    """Mixin: structural equality with a precomputed hash."""

    __slots__ = ()

    def _fields(self):
        raise NotImplementedError

    def __eq__(self, other):
        if self is other:
            return True
        if type(other) is not type(self) or hash(other) != hash(self):
            return False
        return self._fields() == other._fields()

    def __ne__(self, other):
        return not self.__eq__(other)

    def __hash__(self):
        return self._h


class ModTerm(_Cached):
    """``arg mod k`` with SMT-LIB (Euclidean) semantics; integer valued."""

    __slots__ = ("arg", "k", "_h")

    def __init__(self, arg: "Lin", k: int):
        if k == 0:
            raise FormulaError("mod by zero")
        self.arg = arg
        self.k = int(k)
        self._h = hash(("mod", arg, self.k))

    def _fields(self):
        return (self.arg, self.k)

    def __str__(self):
        return f"({self.arg} mod {self.k})"

    __repr__ = __str__


class DivTerm(_Cached):
    """``arg div k`` with SMT-LIB (Euclidean) semantics; integer valued."""

    __slots__ = ("arg", "k", "_h")

    def __init__(self, arg: "Lin", k: int):
        if k == 0:
            raise FormulaError("div by zero")
        self.arg = arg
        self.k = int(k)
        self._h = hash(("div", arg, self.k))

    def _fields(self):
        return (self.arg, self.k)

    def __str__(self):
        return f"({self.arg} div {self.k})"

    __repr__ = __str__


TermAtom = Union[Var, ModTerm, DivTerm]


def _atom_key(a):
    if isinstance(a, Var):
        return (0, a.name, a.primed)
    if isinstance(a, ModTerm):
        return (1, str(a))
    return (2, str(a))


def _atom_is_int(a) -> bool:
    return a.sort is Sort.INT if isinstance(a, Var) else True


class Lin(_Cached):
    """A linear combination ``sum c_i * t_i + const`` with rational coefficients."""

    __slots__ = ("terms", "const", "_h")

    def __init__(self, terms: Iterable[tuple[TermAtom, Fraction]] = (), const=0):
        acc: dict = {}
        for a, c in terms:
            if c:
                acc[a] = acc.get(a, 0) + Fraction(c)
        self.terms = tuple(sorted(((a, c) for a, c in acc.items() if c), key=lambda p: _atom_key(p[0])))
        self.const = Fraction(const)
        self._h = hash(("lin", self.terms, self.const))

    def _fields(self):
        return (self.terms, self.const)

    @property
    def is_const(self) -> bool:
        return not self.terms

    @property
    def is_int(self) -> bool:
        return all(_atom_is_int(a) for a, _ in self.terms)

    def coeff(self, a) -> Fraction:
        for b, c in self.terms:
            if b == a:
                return c
        return Fraction(0)

    def atoms(self):
        return [a for a, _ in self.terms]

    @classmethod
    def _make(cls, terms: tuple, const: Fraction) -> "Lin":
        # terms must already be canonical (sorted, merged, nonzero)
        obj = cls.__new__(cls)
        obj.terms = terms
        obj.const = const
        obj._h = hash(("lin", terms, const))
        return obj

    def without_const(self) -> "Lin":
        if not self.const:
            return self
        return Lin._make(self.terms, Fraction(0))

    def __add__(self, o):
        o = lin(o)
        return Lin(self.terms + o.terms, self.const + o.const)

    def __radd__(self, o):
        return lin(o) + self

    def __sub__(self, o):
        return self + (-lin(o))

    def __rsub__(self, o):
        return lin(o) - self

    def __neg__(self):
        return Lin._make(tuple((a, -c) for a, c in self.terms), -self.const)

    def __mul__(self, k):
        if isinstance(k, (Lin, Var)):
            k = lin(k)
            if k.is_const:
                k = k.const
            elif self.is_const:
                return k * self.const
            else:
                raise FormulaError("non-linear multiplication")
        k = Fraction(k)
        if k == 0:
            return Lin()
        return Lin._make(tuple((a, c * k) for a, c in self.terms), self.const * k)

    __rmul__ = __mul__

    def __str__(self):
        parts = []
        for a, c in self.terms:
            if c == 1:
                s = str(a)
            elif c == -1:
                s = "-" + str(a)
            else:
                s = f"{_num(c)}*{a}"
            parts.append(s)
        if self.const or not parts:
            parts.append(_num(self.const))
        out = parts[0]
        for p in parts[1:]:
            out += " - " + p[1:] if p.startswith("-") else " + " + p
        return out

    __repr__ = __str__


def _num(c: Fraction) -> str:
    return str(c.numerator) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"


def lin(x) -> Lin:
    if isinstance(x, Lin):
        return x
    if isinstance(x, Var):
        if not x.sort.numeric:
            raise FormulaError(f"boolean variable {x} used as a number")
        return Lin(((x, Fraction(1)),))
    if isinstance(x, (ModTerm, DivTerm)):
        return Lin(((x, Fraction(1)),))
    if isinstance(x, bool):
        raise FormulaError("boolean used as a number")
    if isinstance(x, (int, Fraction)):
        return Lin((), x)
    raise FormulaError(f"cannot convert {x!r} to a linear term")


def mod(x, k: int) -> Lin:
    x = lin(x)
    if x.is_const:
        return Lin((), _smt_mod(x.const, k))
    return lin(ModTerm(x, k))


def div(x, k: int) -> Lin:
    x = lin(x)
    if x.is_const:
        return Lin((), _smt_div(x.const, k))
    return lin(DivTerm(x, k))


def _smt_mod(v, k):
    if Fraction(v).denominator != 1:
        raise FormulaError("mod of a non-integer")
    return int(v) % abs(k)


def _smt_div(v, k):
    m = _smt_mod(v, k)
    return (int(v) - m) // k


# ---------------------------------------------------------------------------
# formulas


class Formula(_Cached):
    __slots__ = ()

    def __and__(self, o):
        return conj(self, o)

    def __or__(self, o):
        return disj(self, o)

    def __invert__(self):
        return neg(self)

    def __repr__(self):
        return str(self)


class Const(Formula):
    __slots__ = ("value", "_h")

    def __init__(self, value: bool):
        self.value = bool(value)
        self._h = hash(("const", self.value))

    def _fields(self):
        return (self.value,)

    def __str__(self):
        return "true" if self.value else "false"


TRUE = Const(True)
FALSE = Const(False)


class BoolVar(Formula):
    __slots__ = ("var", "_h")

    def __init__(self, var: Var):
        if var.sort is not Sort.BOOL:
            raise FormulaError(f"{var} is not boolean")
        self.var = var
        self._h = hash(("bvar", var))

    def _fields(self):
        return (self.var,)

    def __str__(self):
        return str(self.var)


class Atom(Formula):
    """``lhs op 0`` with op one of ``<=``, ``<``, ``=``.  Build via ``cmp``."""

    __slots__ = ("op", "lhs", "_h")

    def __init__(self, op: str, lhs: Lin):
        assert op in ("<=", "<", "=")
        self.op = op
        self.lhs = lhs
        self._h = hash(("atom", op, lhs))

    def _fields(self):
        return (self.op, self.lhs)

    def __str__(self):
        # render as "vars op const" which reads naturally
        rhs = -self.lhs.const
        body = self.lhs.without_const()
        if self.op != "=" and all(c < 0 for _, c in body.terms):
            op = ">=" if self.op == "<=" else ">"
            return f"{-body} {op} {_num(-rhs)}"
        return f"{body} {self.op} {_num(rhs)}"


class Not(Formula):
    __slots__ = ("arg", "_h")

    def __init__(self, arg: Formula):
        self.arg = arg
        self._h = hash(("not", arg))

    def _fields(self):
        return (self.arg,)

    def __str__(self):
        return f"!{_paren(self.arg)}"


class And(Formula):
    __slots__ = ("args", "_h")

    def __init__(self, args: Sequence[Formula]):
        self.args = tuple(args)
        self._h = hash(("and", self.args))

    def _fields(self):
        return self.args

    def __str__(self):
        return " & ".join(_paren(a) for a in self.args)


class Or(Formula):
    __slots__ = ("args", "_h")

    def __init__(self, args: Sequence[Formula]):
        self.args = tuple(args)
        self._h = hash(("or", self.args))

    def _fields(self):
        return self.args

    def __str__(self):
        return " | ".join(_paren(a) for a in self.args)


class Quant(Formula):
    __slots__ = ("kind", "vars", "body", "_h")

    def __init__(self, kind: str, vars: Sequence[Var], body: Formula):
        assert kind in ("exists", "forall")
        self.kind = kind
        self.vars = tuple(vars)
        self.body = body
        self._h = hash(("q", kind, self.vars, body))

    def _fields(self):
        return (self.kind, self.vars, self.body)

    def __str__(self):
        q = "ex" if self.kind == "exists" else "all"
        return f"{q} {' '.join(map(str, self.vars))}. {_paren(self.body)}"


@dataclass(frozen=True)
class Placeholder:
    """An uninterpreted predicate symbol standing for a not-yet-known formula."""

    name: str
    arg_sorts: tuple = field(default=())

    @property
    def arity(self) -> int:
        return len(self.arg_sorts)

    def __call__(self, *args) -> "App":
        return App(self, args)

    def __str__(self):
        return self.name


class App(Formula):
    """Application of a placeholder predicate to terms (``Lin``) or formulas."""

    __slots__ = ("symbol", "args", "_h")

    def __init__(self, symbol: Placeholder, args: Sequence):
        if len(args) != symbol.arity:
            raise FormulaError(f"{symbol.name} expects {symbol.arity} arguments, got {len(args)}")
        conv = []
        for s, a in zip(symbol.arg_sorts, args):
            if s is Sort.BOOL:
                conv.append(bvar(a) if isinstance(a, Var) else a)
            else:
                conv.append(lin(a))
        self.symbol = symbol
        self.args = tuple(conv)
        self._h = hash(("app", symbol, self.args))

    def _fields(self):
        return (self.symbol, self.args)

    def __str__(self):
        return f"{self.symbol.name}({', '.join(map(str, self.args))})"


def _paren(f: Formula) -> str:
    if isinstance(f, (And, Or, Quant)):
        return f"({f})"
    return str(f)


# ---------------------------------------------------------------------------
# smart constructors


def bvar(v: Var) -> Formula:
    return BoolVar(v)


def cmp(op: str, a, b=0) -> Formula:
    """Build the canonical atom for ``a op b``; op in <=,<,=,>=,>,!=."""
    a, b = lin(a), lin(b)
    if op == ">=":
        return _atom("<=", b - a)
    if op == ">":
        return _atom("<", b - a)
    if op == "!=":
        return neg(_atom("=", a - b))
    if op in ("<=", "<", "="):
        return _atom(op, a - b)
    raise FormulaError(f"unknown comparison {op}")


def le(a, b=0):
    return cmp("<=", a, b)


def lt(a, b=0):
    return cmp("<", a, b)


def ge(a, b=0):
    return cmp(">=", a, b)


def gt(a, b=0):
    return cmp(">", a, b)


def eq(a, b=0):
    if isinstance(a, (Formula, Var)) and isinstance(b, (Formula, Var)) and not _is_num(a) and not _is_num(b):
        return iff(_as_formula(a), _as_formula(b))
    return cmp("=", a, b)


def _is_num(x):
    return isinstance(x, Var) and x.sort.numeric


def _as_formula(x) -> Formula:
    if isinstance(x, Var):
        return bvar(x)
    return x


def _lcm(a, b):
    return a * b // math.gcd(a, b)


@lru_cache(maxsize=400_000)
def _atom(op: str, e: Lin) -> Formula:
    if e.is_const:
        c = e.const
        return Const(c <= 0 if op == "<=" else c < 0 if op == "<" else c == 0)
    den = 1
    for _, c in e.terms:
        den = _lcm(den, c.denominator)
    is_int = e.is_int
    if not is_int:
        den = _lcm(den, e.const.denominator)
    e = e * den
    g = 0
    for _, c in e.terms:
        g = math.gcd(g, int(c))
    if is_int:
        if op == "<":
            # sum < -c  <=>  sum <= ceil(-c) - 1 over the integers
            e = Lin(e.terms, math.ceil(e.const) if e.const.denominator != 1 else e.const + 1)
            op = "<="
        if e.const.denominator != 1:
            # non-integral constant on integer terms
            if op == "=":
                return FALSE
            e = Lin(e.terms, math.ceil(e.const))
        c = int(e.const)
        if op == "=":
            if c % g:
                return FALSE
            e = Lin(((a, k / g) for a, k in e.terms), Fraction(c, g))
        else:
            # sum a_i x_i <= -c  ==>  sum (a_i/g) x_i <= floor(-c/g)
            e = Lin(((a, k / g) for a, k in e.terms), -((-c) // g))
    else:
        g = math.gcd(g, int(e.const))
        if g > 1:
            e = e * Fraction(1, g)
    if op == "=" and e.terms[0][1] < 0:
        e = -e
    return Atom(op, e)


@lru_cache(maxsize=400_000)
def neg(f: Formula) -> Formula:
    if isinstance(f, Const):
        return FALSE if f.value else TRUE
    if isinstance(f, Not):
        return f.arg
    if isinstance(f, Atom):
        if f.op == "<=":
            return _atom("<", -f.lhs)
        if f.op == "<":
            return _atom("<=", -f.lhs)
    return Not(f)


def _flatten(kind, args):
    out = []
    for a in args:
        if isinstance(a, Var):
            a = bvar(a)
        if not isinstance(a, Formula):
            raise FormulaError(f"not a formula: {a!r}")
        if isinstance(a, kind):
            out.extend(a.args)
        else:
            out.append(a)
    return out


def conj(*args) -> Formula:
    if len(args) == 1 and not isinstance(args[0], (Formula, Var)):
        args = tuple(args[0])
    seen = {}
    for a in _flatten(And, args):
        if a is TRUE or a == TRUE:
            continue
        if a == FALSE:
            return FALSE
        seen.setdefault(a, None)
    lits = list(seen)
    for a in lits:
        if isinstance(a, (Atom, Not, BoolVar)) and neg(a) in seen:
            return FALSE
    if not lits:
        return TRUE
    if len(lits) == 1:
        return lits[0]
    return And(lits)


def disj(*args) -> Formula:
    if len(args) == 1 and not isinstance(args[0], (Formula, Var)):
        args = tuple(args[0])
    seen = {}
    for a in _flatten(Or, args):
        if a == FALSE:
            continue
        if a == TRUE:
            return TRUE
        seen.setdefault(a, None)
    lits = list(seen)
    for a in lits:
        if isinstance(a, (Atom, Not, BoolVar)) and neg(a) in seen:
            return TRUE
    if not lits:
        return FALSE
    if len(lits) == 1:
        return lits[0]
    return Or(lits)


def implies(a, b) -> Formula:
    return disj(neg(_as_formula(a)), _as_formula(b))


def iff(a, b) -> Formula:
    a, b = _as_formula(a), _as_formula(b)
    if a == b:
        return TRUE
    return conj(implies(a, b), implies(b, a))


def exists(vars: Iterable[Var], body: Formula) -> Formula:
    return _quant("exists", vars, body)


def forall(vars: Iterable[Var], body: Formula) -> Formula:
    return _quant("forall", vars, body)


def _quant(kind, vars, body):
    fv = free_vars(body)
    vs = []
    for v in vars:
        if v in fv and v not in vs:
            vs.append(v)
    if not vs:
        return body
    if isinstance(body, Quant) and body.kind == kind:
        inner = [v for v in body.vars if v not in vs]
        return Quant(kind, vs + inner, body.body)
    return Quant(kind, vs, body)


# ---------------------------------------------------------------------------
# traversal


def _term_vars(t: Lin, acc: set):
    for a, _ in t.terms:
        if isinstance(a, Var):
            acc.add(a)
        else:
            _term_vars(a.arg, acc)


@lru_cache(maxsize=200_000)
def free_vars(f: Formula) -> frozenset:
    if isinstance(f, Const):
        return frozenset()
    if isinstance(f, BoolVar):
        return frozenset((f.var,))
    if isinstance(f, Atom):
        acc: set = set()
        _term_vars(f.lhs, acc)
        return frozenset(acc)
    if isinstance(f, Not):
        return free_vars(f.arg)
    if isinstance(f, (And, Or)):
        return frozenset().union(*(free_vars(a) for a in f.args))
    if isinstance(f, Quant):
        return free_vars(f.body) - frozenset(f.vars)
    if isinstance(f, App):
        acc = set()
        for a in f.args:
            if isinstance(a, Lin):
                _term_vars(a, acc)
            else:
                acc |= free_vars(a)
        return frozenset(acc)
    raise TypeError(type(f))


def term_free_vars(t: Lin) -> frozenset:
    acc: set = set()
    _term_vars(t, acc)
    return frozenset(acc)


@lru_cache(maxsize=100_000)
def has_quantifier(f: Formula) -> bool:
    if isinstance(f, Quant):
        return True
    if isinstance(f, Not):
        return has_quantifier(f.arg)
    if isinstance(f, (And, Or)):
        return any(has_quantifier(a) for a in f.args)
    return False


@lru_cache(maxsize=100_000)
def placeholders(f: Formula) -> frozenset:
    if isinstance(f, App):
        out = {f.symbol}
        for a in f.args:
            if isinstance(a, Formula):
                out |= placeholders(a)
        return frozenset(out)
    if isinstance(f, Not):
        return placeholders(f.arg)
    if isinstance(f, (And, Or)):
        return frozenset().union(*(placeholders(a) for a in f.args))
    if isinstance(f, Quant):
        return placeholders(f.body)
    return frozenset()


def atoms(f: Formula) -> list:
    """Distinct theory and boolean atoms of a formula, in first-occurrence order."""
    out: dict = {}

    def go(g):
        if isinstance(g, (Atom, BoolVar)):
            out.setdefault(g, None)
        elif isinstance(g, Not):
            go(g.arg)
        elif isinstance(g, (And, Or)):
            for a in g.args:
                go(a)
        elif isinstance(g, Quant):
            go(g.body)
        elif isinstance(g, App):
            for a in g.args:
                if isinstance(a, Formula):
                    go(a)

    go(f)
    return list(out)


@lru_cache(maxsize=100_000)
def size(f: Formula) -> int:
    if isinstance(f, Not):
        return 1 + size(f.arg)
    if isinstance(f, (And, Or)):
        return 1 + sum(size(a) for a in f.args)
    if isinstance(f, Quant):
        return 1 + len(f.vars) + size(f.body)
    if isinstance(f, Atom):
        return 1 + len(f.lhs.terms)
    return 1


# ---------------------------------------------------------------------------
# substitution

_fresh_counter = itertools.count()


def fresh_var(base: Var, avoid: Iterable[Var] = ()) -> Var:
    avoid_names = {v.name for v in avoid}
    while True:
        name = f"{base.name}_{next(_fresh_counter)}"
        if name not in avoid_names:
            return Var(name, base.sort, False)


def _subst_term(t: Lin, m: Mapping) -> Lin:
    if not m:
        return t
    out = Lin((), t.const)
    changed = False
    for a, c in t.terms:
        if isinstance(a, Var):
            r = m.get(a)
            if r is None:
                out = out + Lin(((a, c),))
            else:
                changed = True
                out = out + lin(r) * c
        else:
            arg = _subst_term(a.arg, m)
            if arg != a.arg:
                changed = True
            out = out + (mod(arg, a.k) if isinstance(a, ModTerm) else div(arg, a.k)) * c
    return out if changed else t


def _norm_mapping(mapping: Mapping) -> dict:
    m = {}
    for k, v in mapping.items():
        if not isinstance(k, Var):
            raise FormulaError(f"substitution key {k!r} is not a variable")
        if k.sort is Sort.BOOL:
            v = _as_formula(v)
            if not isinstance(v, Formula):
                raise FormulaError(f"boolean variable {k} mapped to a term")
        else:
            v = lin(v)
        m[k] = v
    return m


def _repl_vars(v) -> frozenset:
    return free_vars(v) if isinstance(v, Formula) else term_free_vars(v)


def substitute(f: Formula, mapping: Mapping) -> Formula:
    """Simultaneous, capture-avoiding substitution of variables by terms/formulas."""
    m = _norm_mapping(mapping)
    if not m:
        return f
    return _subst(f, m, {})


def _subst(f: Formula, m: dict, memo: dict) -> Formula:
    key = (f, id(m))
    hit = memo.get(key)
    if hit is not None:
        return hit
    r = _subst_inner(f, m, memo)
    memo[key] = r
    return r


def _subst_inner(f, m, memo):
    if isinstance(f, Const):
        return f
    fv = free_vars(f)
    if not any(v in fv for v in m):
        return f
    if isinstance(f, BoolVar):
        return m.get(f.var, f)
    if isinstance(f, Atom):
        return _atom(f.op, _subst_term(f.lhs, m))
    if isinstance(f, Not):
        return neg(_subst(f.arg, m, memo))
    if isinstance(f, And):
        return conj(*[_subst(a, m, memo) for a in f.args])
    if isinstance(f, Or):
        return disj(*[_subst(a, m, memo) for a in f.args])
    if isinstance(f, Quant):
        inner = {k: v for k, v in m.items() if k not in f.vars}
        if not inner:
            return f
        incoming = set()
        for k, v in inner.items():
            if k in fv:
                incoming |= _repl_vars(v)
        bound = list(f.vars)
        body = f.body
        clash = [v for v in bound if v in incoming]
        if clash:
            avoid = set(incoming) | set(free_vars(f.body)) | set(inner)
            ren = {}
            for v in clash:
                nv = fresh_var(v, avoid)
                avoid.add(nv)
                ren[v] = nv
            body = substitute(body, {v: (bvar(nv) if nv.sort is Sort.BOOL else nv) for v, nv in ren.items()})
            bound = [ren.get(v, v) for v in bound]
        return _quant(f.kind, bound, _subst(body, inner, {}))
    if isinstance(f, App):
        args = []
        for a in f.args:
            args.append(_subst_term(a, m) if isinstance(a, Lin) else _subst(a, m, memo))
        return App(f.symbol, args)
    raise TypeError(type(f))


def var_term(v: Var):
    """The formula/term denoting a variable (BoolVar for booleans)."""
    return bvar(v) if v.sort is Sort.BOOL else lin(v)


def rename(f: Formula, mapping: Mapping[Var, Var]) -> Formula:
    return substitute(f, {k: var_term(v) for k, v in mapping.items()})


def prime(f: Formula, over: Iterable[Var] | None = None) -> Formula:
    """Prime free variables (all unprimed free ones, or only those in ``over``)."""
    fv = free_vars(f)
    targets = [v for v in fv if not v.primed] if over is None else [v for v in over if v in fv]
    if over is None:
        for v in fv:
            if v.primed:
                raise FormulaError(f"cannot prime: {v} is already primed")
    return rename(f, {v: v.prime() for v in targets})


def unprime(f: Formula) -> Formula:
    fv = free_vars(f)
    m = {v: v.unprime() for v in fv if v.primed}
    clash = [v.unprime() for v in m if v.unprime() in fv]
    if clash:
        raise FormulaError(f"cannot unprime: {clash[0]} occurs both primed and unprimed")
    return rename(f, m)


def instantiate_placeholders(f: Formula, mapping: Mapping) -> Formula:
    """Replace placeholder applications ``p(args)`` by ``body[formals := args]``.

    ``mapping`` sends each Placeholder to ``(formals, body)``.
    """
    for p, (formals, body) in mapping.items():
        if len(formals) != p.arity:
            raise FormulaError(f"placeholder {p.name}: arity {p.arity} but {len(formals)} formals")
    missing = placeholders(f) - set(mapping)
    if missing:
        raise FormulaError(f"no instantiation for placeholder {sorted(p.name for p in missing)[0]}")
    outside = set()
    for p, (formals, body) in mapping.items():
        outside |= set(free_vars(body)) - set(formals)
    return _inst(f, mapping, frozenset(outside))


def _inst(f, mapping, outside):
    if isinstance(f, App):
        formals, body = mapping[f.symbol]
        args = [a if isinstance(a, Lin) else _inst(a, mapping, outside) for a in f.args]
        return substitute(body, dict(zip(formals, args)))
    if isinstance(f, Not):
        return neg(_inst(f.arg, mapping, outside))
    if isinstance(f, And):
        return conj(*[_inst(a, mapping, outside) for a in f.args])
    if isinstance(f, Or):
        return disj(*[_inst(a, mapping, outside) for a in f.args])
    if isinstance(f, Quant):
        bound = list(f.vars)
        body = f.body
        clash = [v for v in bound if v in outside]
        if clash:
            avoid = set(outside) | set(free_vars(body))
            ren = {}
            for v in clash:
                nv = fresh_var(v, avoid)
                avoid.add(nv)
                ren[v] = nv
            body = rename(body, ren)
            bound = [ren.get(v, v) for v in bound]
        return _quant(f.kind, bound, _inst(body, mapping, outside))
    return f


# ---------------------------------------------------------------------------
# evaluation


class EvaluationError(FormulaError):
    pass


def eval_term(t: Lin, env: Mapping[Var, object]) -> Fraction:
    total = Fraction(t.const)
    for a, c in t.terms:
        if isinstance(a, Var):
            if a not in env:
                raise EvaluationError(f"no value for variable {a}")
            total += c * Fraction(env[a])
        elif isinstance(a, ModTerm):
            total += c * _smt_mod(eval_term(a.arg, env), a.k)
        else:
            total += c * _smt_div(eval_term(a.arg, env), a.k)
    return total


def evaluate(f: Formula, env: Mapping[Var, object]) -> bool:
    """Exact evaluation of a quantifier-free formula under a full assignment."""
    if isinstance(f, Const):
        return f.value
    if isinstance(f, BoolVar):
        if f.var not in env:
            raise EvaluationError(f"no value for variable {f.var}")
        return bool(env[f.var])
    if isinstance(f, Atom):
        v = eval_term(f.lhs, env)
        return v <= 0 if f.op == "<=" else v < 0 if f.op == "<" else v == 0
    if isinstance(f, Not):
        return not evaluate(f.arg, env)
    if isinstance(f, And):
        return all(evaluate(a, env) for a in f.args)
    if isinstance(f, Or):
        return any(evaluate(a, env) for a in f.args)
    if isinstance(f, Quant):
        raise EvaluationError("cannot evaluate a quantified formula")
    if isinstance(f, App):
        raise EvaluationError(f"cannot evaluate placeholder {f.symbol.name}")
    raise TypeError(type(f))


# ---------------------------------------------------------------------------
# normal forms


class DnfTooLarge(FormulaError):
    pass


def to_nnf(f: Formula, split_diseq: bool = False) -> Formula:
    """Negation normal form of a quantifier-free formula.

    With ``split_diseq`` a negated equality ``e != 0`` becomes ``e < 0 | e > 0``.
    """
    return _nnf(f, True, split_diseq)


def _nnf(f, pos, split):
    if isinstance(f, Not):
        return _nnf(f.arg, not pos, split)
    if isinstance(f, And):
        parts = [_nnf(a, pos, split) for a in f.args]
        return conj(*parts) if pos else disj(*parts)
    if isinstance(f, Or):
        parts = [_nnf(a, pos, split) for a in f.args]
        return disj(*parts) if pos else conj(*parts)
    if isinstance(f, Quant):
        raise FormulaError("normal forms need a quantifier-free formula")
    if isinstance(f, App):
        raise FormulaError("normal forms need a placeholder-free formula")
    if pos:
        return f
    if split and isinstance(f, Atom) and f.op == "=":
        return disj(_atom("<", f.lhs), _atom("<", -f.lhs))
    return neg(f)


def dnf_cubes(f: Formula, cap: int = 64, split_diseq: bool = False) -> list[tuple]:
    """Disjunctive normal form as a list of literal tuples; raises DnfTooLarge."""
    g = to_nnf(f, split_diseq)
    cubes = _dnf(g, cap)
    out = []
    seen = set()
    for c in cubes:
        key = frozenset(c)
        if key not in seen:
            seen.add(key)
            out.append(c)
    return out


def _dnf(f, cap):
    if f == TRUE:
        return [()]
    if f == FALSE:
        return []
    if isinstance(f, Or):
        out = []
        for a in f.args:
            out.extend(_dnf(a, cap))
            if len(out) > cap:
                raise DnfTooLarge(f"more than {cap} disjuncts")
        return out
    if isinstance(f, And):
        acc = [()]
        for a in f.args:
            sub = _dnf(a, cap)
            nxt = []
            for c in acc:
                for d in sub:
                    merged = _merge_cube(c, d)
                    if merged is not None:
                        nxt.append(merged)
                        if len(nxt) > cap:
                            raise DnfTooLarge(f"more than {cap} disjuncts")
            acc = nxt
        return acc
    return [(f,)]


def _merge_cube(c, d):
    out = list(c)
    have = set(c)
    for lit in d:
        if neg(lit) in have:
            return None
        if lit not in have:
            have.add(lit)
            out.append(lit)
    return tuple(out)


@dataclass(frozen=True)
class Ineq:
    """``expr <= 0`` (or ``< 0`` when strict), with expr a Lin including its constant."""

    expr: Lin
    strict: bool = False

    @property
    def term(self) -> Lin:
        return self.expr.without_const()

    @property
    def bound(self) -> Fraction:
        return -self.expr.const

    def formula(self) -> Formula:
        return _atom("<" if self.strict else "<=", self.expr)

    def __str__(self):
        return str(self.formula())


@dataclass(frozen=True)
class PolyDisjunct:
    inequalities: tuple
    residual: Formula = TRUE

    def formula(self) -> Formula:
        return conj(*[i.formula() for i in self.inequalities], self.residual)


def _has_nonlinear_atoms(e: Lin) -> bool:
    return any(not isinstance(a, Var) for a, _ in e.terms)


def to_polyhedral_dnf(f: Formula, cap: int = 64) -> list[PolyDisjunct]:
    """Split a quantifier-free formula into polyhedra plus non-linear residuals."""
    out = []
    for cube in dnf_cubes(f, cap, split_diseq=True):
        ineqs: list = []
        res: list = []
        for lit in cube:
            if isinstance(lit, Atom) and not _has_nonlinear_atoms(lit.lhs):
                if lit.op == "=":
                    cands = [Ineq(lit.lhs), Ineq(-lit.lhs)]
                else:
                    cands = [Ineq(lit.lhs, lit.op == "<")]
                for i in cands:
                    if i not in ineqs:
                        ineqs.append(i)
            else:
                res.append(lit)
        out.append(PolyDisjunct(tuple(ineqs), conj(*res)))
    return out


# ---------------------------------------------------------------------------
# SMT-LIB rendering

_SIMPLE_CHARS = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789~!@$%^&*_-+=<>.?/")


def smt_name(v: Var) -> str:
    name = v.name + ("!p" if v.primed else "")
    if name and all(ch in _SIMPLE_CHARS for ch in name) and not name[0].isdigit():
        return name
    return "|" + name.replace("|", "") + "|"


def _smt_num(c: Fraction, real: bool) -> str:
    if real:
        n, d = abs(c.numerator), c.denominator
        s = f"{n}.0" if d == 1 else f"(/ {n}.0 {d}.0)"
    else:
        if c.denominator != 1:
            raise FormulaError("fractional constant in an integer term")
        s = str(abs(c.numerator))
    return f"(- {s})" if c < 0 else s


def smt_term(t: Lin, real: bool | None = None) -> str:
    if real is None:
        real = not t.is_int
    parts = []
    for a, c in t.terms:
        if isinstance(a, Var):
            s = smt_name(a)
            if real and a.sort is Sort.INT:
                s = f"(to_real {s})"
        else:
            op = "mod" if isinstance(a, ModTerm) else "div"
            s = f"({op} {smt_term(a.arg, False)} {a.k})"
            if real:
                s = f"(to_real {s})"
        parts.append(s if c == 1 else f"(* {_smt_num(c, real)} {s})")
    if t.const or not parts:
        parts.append(_smt_num(t.const, real))
    return parts[0] if len(parts) == 1 else "(+ " + " ".join(parts) + ")"


@lru_cache(maxsize=400_000)
def to_smtlib(f: Formula) -> str:
    """Render a placeholder-free formula as an SMT-LIB term."""
    if isinstance(f, Const):
        return "true" if f.value else "false"
    if isinstance(f, BoolVar):
        return smt_name(f.var)
    if isinstance(f, Atom):
        real = not f.lhs.is_int
        body = f.lhs.without_const()
        rhs = Lin((), -f.lhs.const)
        return f"({f.op} {smt_term(body, real)} {smt_term(rhs, real)})"
    if isinstance(f, Not):
        return f"(not {to_smtlib(f.arg)})"
    if isinstance(f, And):
        return "(and " + " ".join(to_smtlib(a) for a in f.args) + ")"
    if isinstance(f, Or):
        return "(or " + " ".join(to_smtlib(a) for a in f.args) + ")"
    if isinstance(f, Quant):
        decls = " ".join(f"({smt_name(v)} {v.sort.value})" for v in f.vars)
        return f"({f.kind} ({decls}) {to_smtlib(f.body)})"
    if isinstance(f, App):
        raise FormulaError(f"placeholder {f.symbol.name} cannot be sent to a solver")
    raise TypeError(type(f))


def to_smt_text(f: Formula) -> str:
    """SMT-LIB style text that also renders placeholder applications (for dumps only)."""
    if not placeholders(f):
        return to_smtlib(f)
    if isinstance(f, App):
        args = []
        for a in f.args:
            args.append(smt_term(a, not a.is_int) if isinstance(a, Lin) else to_smt_text(a))
        return f"({f.symbol.name} {' '.join(args)})"
    if isinstance(f, Not):
        return f"(not {to_smt_text(f.arg)})"
    if isinstance(f, (And, Or)):
        op = "and" if isinstance(f, And) else "or"
        return f"({op} " + " ".join(to_smt_text(a) for a in f.args) + ")"
    if isinstance(f, Quant):
        decls = " ".join(f"({smt_name(v)} {v.sort.value})" for v in f.vars)
        return f"({f.kind} ({decls}) {to_smt_text(f.body)})"
    raise TypeError(type(f))
