"""Reading and writing the S-expression game file format.

    (game
      (inputs (i Int) (b Bool))
      (vars (x Int) (y Int))
      (locations (loop (dom true)) (done))
      (init loop)
      (trans loop done (<= y 0))
      (winning (reach done)))

Formulas use SMT-LIB term syntax; ``x'`` is the next-state copy of ``x``
and is only allowed inside ``trans``.
"""
from __future__ import annotations

from . import formula as F
from .formula import FALSE, TRUE, Formula, Sort, Var
from .game import LOOP_PREFIX, Buchi, CoBuchi, GameError, Reach, Safety, SymbolicGame
from .sexpr import ParseError, SList, Sym, TermReader, pos_of, read_all

_CONDITIONS = {"reach": Reach, "safety": Safety, "buchi": Buchi, "cobuchi": CoBuchi}


def _err(msg, node):
    return ParseError(msg, *pos_of(node))


def _sort(node) -> Sort:
    try:
        return Sort(str(node))
    except ValueError:
        raise _err(f"unknown sort {node}", node) from None


def parse_game(text: str):
    """Parse a game file; returns (SymbolicGame, winning condition)."""
    items = read_all(text)
    if len(items) != 1 or not isinstance(items[0], SList) or not items[0] or items[0][0] != "game":
        raise ParseError("expected a single (game ...) form", 1, 1)
    doc = items[0]
    sections: dict = {}
    for sec in doc[1:]:
        if not isinstance(sec, SList) or not sec or not isinstance(sec[0], Sym):
            raise _err("expected a section", sec)
        key = str(sec[0])
        if key == "trans":
            sections.setdefault("trans", []).append(sec)
            continue
        if key not in ("inputs", "vars", "locations", "init", "winning"):
            raise _err(f"unknown section {key}", sec[0])
        if key in sections:
            raise _err(f"duplicate section {key}", sec)
        sections[key] = sec

    def decls(key):
        out = []
        for d in sections.get(key, [key])[1:]:
            if not isinstance(d, SList) or len(d) != 2 or not isinstance(d[0], Sym):
                raise _err("expected (name Sort)", d)
            name = str(d[0])
            if name.endswith("'") or "!" in name:
                raise _err(f"illegal variable name {name}", d[0])
            out.append(Var(name, _sort(d[1])))
        return out

    inputs, xs = decls("inputs"), decls("vars")
    names = [v.name for v in inputs + xs]
    for v in set(names):
        if names.count(v) > 1:
            raise ParseError(f"variable {v} declared twice")
    table = {v.name: v for v in inputs + xs}
    primed = {v.name + "'": v.prime() for v in xs}

    if "locations" not in sections:
        raise ParseError("missing (locations ...)")
    locs, dom_src = [], {}
    for entry in sections["locations"][1:]:
        if isinstance(entry, Sym):
            name, body = str(entry), None
        elif isinstance(entry, SList) and entry and isinstance(entry[0], Sym):
            name, body = str(entry[0]), entry[1:]
        else:
            raise _err("expected a location", entry)
        if name.startswith(LOOP_PREFIX):
            raise _err(f"location names may not start with {LOOP_PREFIX}", entry)
        if name in locs:
            raise _err(f"duplicate location {name}", entry)
        locs.append(name)
        if body:
            if len(body) != 1 or not isinstance(body[0], SList) or len(body[0]) != 2 or body[0][0] != "dom":
                raise _err("expected (dom formula)", entry)
            dom_src[name] = body[0][1]

    state_reader = TermReader(table_lookup(table, {}, {v.name for v in inputs}))
    trans_reader = TermReader(table_lookup(table, primed, set()))
    dom = {l: state_reader.formula(s) for l, s in dom_src.items()}

    if "init" not in sections or len(sections["init"]) != 2:
        raise ParseError("expected exactly one (init name)")
    init = str(sections["init"][1])
    if init not in locs:
        raise _err(f"unknown location {init}", sections["init"][1])

    trans: dict = {}
    for t in sections.get("trans", []):
        if len(t) != 4:
            raise _err("expected (trans from to formula)", t)
        a, b = str(t[1]), str(t[2])
        for n, node in ((a, t[1]), (b, t[2])):
            if n not in locs:
                raise _err(f"unknown location {n}", node)
        if (a, b) in trans:
            raise _err(f"duplicate transition {a} -> {b}", t)
        trans[(a, b)] = trans_reader.formula(t[3])

    if "winning" not in sections or len(sections["winning"]) != 2:
        raise ParseError("expected (winning (kind location ...))")
    w = sections["winning"][1]
    if not isinstance(w, SList) or not w or str(w[0]) not in _CONDITIONS:
        raise _err("winning condition must be reach, safety, buchi or cobuchi", w)
    targets = []
    for n in w[1:]:
        if str(n) not in locs:
            raise _err(f"unknown location {n}", n)
        targets.append(str(n))
    cond = _CONDITIONS[str(w[0])](frozenset(targets))
    try:
        G = SymbolicGame(locs, init, inputs, xs, dom, trans)
    except GameError as e:
        raise ParseError(str(e)) from e
    return G, cond


def table_lookup(table, primed, forbidden):
    def look(name):
        if name in primed:
            return primed[name]
        if name.endswith("'"):
            raise ParseError(f"primed variable {name} not allowed here")
        if name in forbidden:
            raise ParseError(f"input {name} not allowed here")
        return table.get(name)
    return look


def read_game_file(path: str):
    with open(path, encoding="utf-8") as fh:
        return parse_game(fh.read())


# -- printing ---------------------------------------------------------------------


def _name(v: Var) -> str:
    return v.name + ("'" if v.primed else "")


def term_text(t: F.Lin) -> str:
    parts = []
    for a, c in t.terms:
        if isinstance(a, Var):
            s = _name(a)
        else:
            s = f"({'mod' if isinstance(a, F.ModTerm) else 'div'} {term_text(a.arg)} {a.k})"
        parts.append(s if c == 1 else f"(* {_num(c)} {s})")
    if t.const or not parts:
        parts.append(_num(t.const))
    return parts[0] if len(parts) == 1 else "(+ " + " ".join(parts) + ")"


def _num(c) -> str:
    c = F.Fraction(c)
    s = str(abs(c.numerator)) if c.denominator == 1 else f"(/ {abs(c.numerator)} {c.denominator})"
    return f"(- {s})" if c < 0 else s


def formula_text(f: Formula) -> str:
    """SMT-style text using the prime-suffix convention (game file syntax)."""
    if isinstance(f, F.Const):
        return "true" if f.value else "false"
    if isinstance(f, F.BoolVar):
        return _name(f.var)
    if isinstance(f, F.Atom):
        return f"({f.op} {term_text(f.lhs.without_const())} {_num(-f.lhs.const)})"
    if isinstance(f, F.Not):
        return f"(not {formula_text(f.arg)})"
    if isinstance(f, F.And):
        return "(and " + " ".join(map(formula_text, f.args)) + ")"
    if isinstance(f, F.Or):
        return "(or " + " ".join(map(formula_text, f.args)) + ")"
    if isinstance(f, F.Quant):
        ds = " ".join(f"({_name(v)} {v.sort.value})" for v in f.vars)
        return f"({f.kind} ({ds}) {formula_text(f.body)})"
    raise F.FormulaError("cannot print placeholders in a game file")


def format_game(G: SymbolicGame, cond) -> str:
    kind = {Reach: "reach", Safety: "safety", Buchi: "buchi", CoBuchi: "cobuchi"}[type(cond)]
    lines = ["(game"]
    lines.append("  (inputs" + "".join(f" ({v.name} {v.sort.value})" for v in G.inputs) + ")")
    lines.append("  (vars" + "".join(f" ({v.name} {v.sort.value})" for v in G.program_vars) + ")")
    lines.append("  (locations")
    for l in G.locations:
        d = G.dom[l]
        lines.append(f"    ({l})" if d == TRUE else f"    ({l} (dom {formula_text(d)}))")
    lines.append("  )")
    lines.append(f"  (init {G.init})")
    for (a, b), f in G.delta.items():
        if f != FALSE:
            lines.append(f"  (trans {a} {b} {formula_text(f)})")
    targets = " ".join(l for l in G.locations if l in cond.locations)
    lines.append(f"  (winning ({kind}{' ' + targets if targets else ''})))")
    return "\n".join(lines) + "\n"
