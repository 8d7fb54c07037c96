"""Text format for presentations, fields and jobs.

A program is an optional ``algebra NAME { ... }`` block followed by job
clauses::

    algebra heisenberg {
      generator alpha[n] degree n;
      central K degree 0;
      bracket [alpha[m], alpha[n]] = m*delta(m + n)*K;
      field alpha = modes alpha[n] weight 1;
    }
    close depth 2 cutoff 4;
    compute nthprod(alpha, alpha, 1) at -1;

Declarations may also appear outside a block, in which case they form an
algebra named ``main``.  ``#`` starts a comment.  :func:`parse` produces a
:class:`Program` or raises :class:`DSLSyntaxError`; :func:`build` turns the
algebra part into engine objects and raises :class:`DSLSemanticError`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

from gmpy2 import mpq as Q

from .distributions import GeneratorField
from .graded_lie import (
    AlgebraPresentation,
    BracketRule,
    BracketTerm,
    Envelope,
    GeneratorFamily,
    IndexDomain,
    Poly,
    format_poly,
    validate_presentation,
)

Pos = Tuple[int, int]


class DSLError(Exception):
    def __init__(self, message: str, pos: Optional[Pos] = None):
        self.message = message
        self.pos = pos
        where = f"line {pos[0]}, column {pos[1]}: " if pos else ""
        super().__init__(where + message)

    def to_json(self) -> dict:
        out = {"error": type(self).__name__, "message": self.message}
        if self.pos:
            out["line"], out["column"] = self.pos
        return out


class DSLSyntaxError(DSLError):
    def __init__(self, found: str, expected: Sequence[str], pos: Pos):
        self.found = found
        self.expected = sorted(set(expected))
        super().__init__(f"unexpected {found}; expected one of: {', '.join(self.expected)}", pos)

    def to_json(self) -> dict:
        return {**super().to_json(), "found": self.found, "expected": self.expected}


class DSLSemanticError(DSLError):
    pass


# ---------------------------------------------------------------------------
# tokens

_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r]+) | (?P<nl>\n) | (?P<comment>\#[^\n]*)
  | (?P<int>\d+) | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>>=|<=|[{}\[\]();,=+\-*/^])
""", re.VERBOSE)


@dataclass(frozen=True)
class Token:
    kind: str       # "int", "ident", "op", "eof"
    text: str
    pos: Pos

    def describe(self) -> str:
        if self.kind == "eof":
            return "end of input"
        return f"'{self.text}'"


def tokenize(text: str) -> List[Token]:
    out = []
    line, start, i = 1, 0, 0
    while i < len(text):
        m = _TOKEN.match(text, i)
        if m is None:
            raise DSLSyntaxError(f"character {text[i]!r}", ["a token"], (line, i - start + 1))
        kind = m.lastgroup
        if kind == "nl":
            line, start = line + 1, m.end()
        elif kind not in ("ws", "comment"):
            out.append(Token(kind, m.group(), (line, i - start + 1)))
        i = m.end()
    out.append(Token("eof", "", (line, i - start + 1)))
    return out


# ---------------------------------------------------------------------------
# syntax tree


Affine = Tuple[int, int, int]


@dataclass
class GeneratorDecl:
    name: str
    var: str
    slope: int
    offset: int
    bound: Optional[Tuple[str, int]] = None     # (">=" | "<=", b)
    pos: Pos = field(default=(0, 0), compare=False)

    def to_json(self):
        return {"kind": "generator", "name": self.name, "var": self.var, "slope": self.slope,
                "offset": self.offset, "bound": list(self.bound) if self.bound else None}


@dataclass
class CentralDecl:
    name: str
    degree: int
    pos: Pos = field(default=(0, 0), compare=False)

    def to_json(self):
        return {"kind": "central", "name": self.name, "degree": self.degree}


@dataclass
class TermDecl:
    coeff: Poly
    target: str
    index: Optional[Affine]
    delta: Optional[Affine]
    pos: Pos = field(default=(0, 0), compare=False)

    def to_json(self):
        return {"coeff": self.coeff.to_json(), "target": self.target,
                "index": list(self.index) if self.index else None,
                "delta": list(self.delta) if self.delta else None}


@dataclass
class BracketDecl:
    left: str
    lvar: str
    right: str
    rvar: str
    terms: List[TermDecl]
    pos: Pos = field(default=(0, 0), compare=False)

    def to_json(self):
        return {"kind": "bracket", "left": self.left, "lvar": self.lvar, "right": self.right,
                "rvar": self.rvar, "terms": [t.to_json() for t in self.terms]}


@dataclass
class FieldDecl:
    name: str
    family: str
    var: str
    shift: int
    weight: int
    pos: Pos = field(default=(0, 0), compare=False)

    def to_json(self):
        return {"kind": "field", "name": self.name, "family": self.family, "var": self.var,
                "shift": self.shift, "weight": self.weight}


Decl = Union[GeneratorDecl, CentralDecl, BracketDecl, FieldDecl]


@dataclass
class AlgebraDecl:
    name: str
    items: List[Decl]
    block: bool = True
    pos: Pos = field(default=(0, 0), compare=False)

    def to_json(self):
        return {"name": self.name, "items": [d.to_json() for d in self.items]}


@dataclass
class LocalityJob:
    a: str
    b: str
    lo: int
    hi: int
    precision: int
    pos: Pos = field(default=(0, 0), compare=False)


@dataclass
class CloseJob:
    depth: int
    cutoff: int
    pos: Pos = field(default=(0, 0), compare=False)


@dataclass
class VerifyJob:
    what: str                       # "va" | "comonad" | "gru"
    summands: Optional[int] = None  # gru only
    pos: Pos = field(default=(0, 0), compare=False)


@dataclass
class NthProductJob:
    a: str
    b: str
    n: int
    at: int
    pos: Pos = field(default=(0, 0), compare=False)


Job = Union[LocalityJob, CloseJob, VerifyJob, NthProductJob]


def job_to_json(job: Job) -> dict:
    d = {k: v for k, v in job.__dict__.items() if k != "pos"}
    return {"kind": type(job).__name__, **d}


@dataclass
class Program:
    algebra: Optional[AlgebraDecl]
    jobs: List[Job]

    def to_json(self) -> dict:
        return {"algebra": self.algebra.to_json() if self.algebra else None,
                "jobs": [job_to_json(j) for j in self.jobs]}


# ---------------------------------------------------------------------------
# parser


class _Val:
    """A factor of a bracket term: polynomial coefficient, optional delta
    constraint and optional target generator."""

    __slots__ = ("poly", "delta", "target", "pos")

    def __init__(self, poly: Poly, pos: Pos, delta: Optional[Poly] = None, target=None):
        self.poly, self.delta, self.target, self.pos = poly, delta, target, pos

    @property
    def pure(self) -> bool:
        return self.delta is None and self.target is None


_MAX_EXPONENT = 64


class Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0
        self.vars: Dict[str, Poly] = {}

    # -- token helpers

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def fail(self, expected: Sequence[str]):
        raise DSLSyntaxError(self.tok.describe(), expected, self.tok.pos)

    def at(self, text: str) -> bool:
        t = self.tok
        return t.kind in ("op", "ident") and t.text == text

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.fail([f"'{text}'"])
        t = self.tok
        self.i += 1
        return t

    def ident(self) -> str:
        if self.tok.kind != "ident":
            self.fail(["identifier"])
        t = self.tok
        self.i += 1
        return t.text

    def integer(self) -> int:
        neg = self.accept("-")
        if self.tok.kind != "int":
            self.fail(["integer"] if neg else ["integer", "'-'"])
        v = int(self.tok.text)
        self.i += 1
        return -v if neg else v

    # -- program

    _DECLS = ("generator", "central", "bracket", "field")
    _JOBS = ("check", "close", "verify", "compute")

    def program(self) -> Program:
        algebra: Optional[AlgebraDecl] = None
        loose: List[Decl] = []
        jobs: List[Job] = []
        while self.tok.kind != "eof":
            if self.at("algebra"):
                if algebra is not None or loose:
                    raise DSLSemanticError("only one algebra per program", self.tok.pos)
                algebra = self.algebra()
            elif self.tok.kind == "ident" and self.tok.text in self._DECLS:
                if algebra is not None:
                    raise DSLSemanticError("declaration outside the algebra block", self.tok.pos)
                loose.append(self.decl())
            elif self.tok.kind == "ident" and self.tok.text in self._JOBS:
                jobs.append(self.job())
            else:
                self.fail(["end of input", "'algebra'"] + [f"'{k}'" for k in self._DECLS + self._JOBS])
        if loose:
            algebra = AlgebraDecl("main", loose, block=False, pos=loose[0].pos)
        return Program(algebra, jobs)

    def algebra(self) -> AlgebraDecl:
        pos = self.expect("algebra").pos
        name = self.ident()
        self.expect("{")
        items = []
        while not self.accept("}"):
            if self.tok.kind == "ident" and self.tok.text in self._DECLS:
                items.append(self.decl())
            else:
                self.fail(["'}'"] + [f"'{k}'" for k in self._DECLS])
        return AlgebraDecl(name, items, True, pos)

    def decl(self) -> Decl:
        pos = self.tok.pos
        kw = self.ident()
        out = getattr(self, "_" + kw)(pos)
        self.expect(";")
        return out

    def _generator(self, pos) -> GeneratorDecl:
        name = self.ident()
        self.expect("[")
        var = self.ident()
        self.expect("]")
        self.expect("degree")
        self.vars = {var: Poly.m()}
        dpos = self.tok.pos
        deg = self.sum_expr()
        slope, _, offset = self._affine(deg, dpos, "degree")
        bound = None
        if self.accept("where"):
            if self.ident() != var:
                raise DSLSemanticError(f"the bound must constrain {var}", self.toks[self.i - 1].pos)
            if self.at(">=") or self.at("<="):
                op = self.tok.text
                self.i += 1
            else:
                self.fail(["'>='", "'<='"])
            bound = (op, self.integer())
        return GeneratorDecl(name, var, slope, offset, bound, pos)

    def _central(self, pos) -> CentralDecl:
        name = self.ident()
        self.expect("degree")
        return CentralDecl(name, self.integer(), pos)

    def _bracket(self, pos) -> BracketDecl:
        self.expect("[")
        left = self.ident()
        self.expect("[")
        lvar = self.ident()
        self.expect("]")
        self.expect(",")
        right = self.ident()
        self.expect("[")
        rvar = self.ident()
        self.expect("]")
        self.expect("]")
        if lvar == rvar:
            raise DSLSemanticError("bracket index variables must differ", pos)
        self.expect("=")
        self.vars = {lvar: Poly.m(), rvar: Poly.n()}
        terms = []
        if self.tok.kind == "int" and int(self.tok.text) == 0 and self.toks[self.i + 1].text == ";":
            self.i += 1
        else:
            sign = -1 if self.accept("-") else 1
            while True:
                v = self.product()
                if v.target is None:
                    raise DSLSemanticError("bracket term has no generator", v.pos)
                idx = None
                if v.target[1] is not None:
                    idx = self._affine(v.target[1], v.target[2], "index")
                delta = None if v.delta is None else self._affine(v.delta, v.pos, "delta argument")
                terms.append(TermDecl(v.poly * sign, v.target[0], idx, delta, v.pos))
                if self.accept("+"):
                    sign = 1
                elif self.accept("-"):
                    sign = -1
                else:
                    break
        return BracketDecl(left, lvar, right, rvar, terms, pos)

    def _field(self, pos) -> FieldDecl:
        name = self.ident()
        self.expect("=")
        self.expect("modes")
        fam = self.ident()
        self.expect("[")
        if self.tok.kind != "ident":
            self.fail(["identifier"])
        var = self.tok.text
        self.vars = {var: Poly.m()}
        ipos = self.tok.pos
        idx = self.sum_expr()
        self.expect("]")
        slope, _, shift = self._affine(idx, ipos, "mode index")
        if slope != 1:
            raise DSLSemanticError(f"mode index must be {var} plus a constant", ipos)
        self.expect("weight")
        return FieldDecl(name, fam, var, shift, self.integer(), pos)

    # -- jobs

    def job(self) -> Job:
        pos = self.tok.pos
        kw = self.ident()
        if kw == "check":
            self.expect("locality")
            self.expect("(")
            a = self.ident()
            self.expect(",")
            b = self.ident()
            self.expect(")")
            self.expect("window")
            lo = self.integer()
            self.expect(",")
            hi = self.integer()
            self.expect("precision")
            p = self.integer()
            if lo > hi:
                raise DSLSemanticError("window must have lo <= hi", pos)
            job: Job = LocalityJob(a, b, lo, hi, p, pos)
        elif kw == "close":
            self.expect("depth")
            d = self.integer()
            self.expect("cutoff")
            job = CloseJob(d, self.integer(), pos)
        elif kw == "verify":
            what = self.tok.text if self.tok.kind == "ident" else None
            if what not in ("va", "comonad", "gru"):
                self.fail(["'va'", "'comonad'", "'gru'"])
            self.i += 1
            summands = None
            if what == "gru" and self.accept("summands"):
                summands = self.integer()
            job = VerifyJob(what, summands, pos)
        else:
            self.expect("nthprod")
            self.expect("(")
            a = self.ident()
            self.expect(",")
            b = self.ident()
            self.expect(",")
            n = self.integer()
            self.expect(")")
            self.expect("at")
            job = NthProductJob(a, b, n, self.integer(), pos)
        self.expect(";")
        return job

    # -- expressions

    def _affine(self, p: Poly, pos: Pos, what: str) -> Affine:
        out = [0, 0, 0]
        for (i, j), c in p.terms.items():
            if i + j > 1 or Q(c).denominator != 1:
                raise DSLSemanticError(f"{what} must be affine with integer coefficients", pos)
            out[0 if i else 1 if j else 2] = int(c)
        return tuple(out)

    def sum_expr(self) -> Poly:
        pos = self.tok.pos
        neg = self.accept("-")
        v = self._pure(self.product(), "sum")
        acc = -v if neg else v
        while True:
            if self.accept("+"):
                acc = acc + self._pure(self.product(), "sum")
            elif self.accept("-"):
                acc = acc - self._pure(self.product(), "sum")
            else:
                return acc

    def _pure(self, v: _Val, ctx: str) -> Poly:
        if not v.pure:
            raise DSLSemanticError(f"delta or generator inside a {ctx}", v.pos)
        return v.poly

    def product(self) -> _Val:
        acc = self.power()
        while True:
            if self.accept("*"):
                rhs = self.power()
                if acc.delta is not None and rhs.delta is not None:
                    raise DSLSemanticError("more than one delta in a term", rhs.pos)
                if acc.target is not None and rhs.target is not None:
                    raise DSLSemanticError("more than one generator in a term", rhs.pos)
                acc = _Val(acc.poly * rhs.poly, acc.pos, acc.delta or rhs.delta, acc.target or rhs.target)
            elif self.accept("/"):
                pos = self.tok.pos
                d = self._pure(self.power(), "divisor")
                if set(d.terms) - {(0, 0)} or not d.terms:
                    raise DSLSemanticError("can only divide by a nonzero number", pos)
                acc = _Val(acc.poly * (Q(1) / d.terms[(0, 0)]), acc.pos, acc.delta, acc.target)
            else:
                return acc

    def power(self) -> _Val:
        base = self.atom()
        if self.accept("^"):
            pos = self.tok.pos
            e = self.integer()
            if e < 0 or e > _MAX_EXPONENT:
                raise DSLSemanticError(f"exponent must be in 0..{_MAX_EXPONENT}", pos)
            p = self._pure(base, "power")
            out = Poly.const(1)
            for _ in range(e):
                out = out * p
            return _Val(out, base.pos)
        return base

    def atom(self) -> _Val:
        t = self.tok
        if t.kind == "int":
            self.i += 1
            return _Val(Poly.const(int(t.text)), t.pos)
        if self.accept("-"):
            v = self.atom()
            return _Val(-v.poly, t.pos, v.delta, v.target)
        if self.accept("("):
            p = self.sum_expr()
            self.expect(")")
            return _Val(p, t.pos)
        if t.kind == "ident":
            self.i += 1
            if t.text in self.vars:
                return _Val(self.vars[t.text], t.pos)
            if t.text == "delta" and self.at("("):
                self.i += 1
                p = self.sum_expr()
                self.expect(")")
                return _Val(Poly.const(1), t.pos, delta=p)
            if self.accept("["):
                ipos = self.tok.pos
                idx = self.sum_expr()
                self.expect("]")
                return _Val(Poly.const(1), t.pos, target=(t.text, idx, ipos))
            return _Val(Poly.const(1), t.pos, target=(t.text, None, t.pos))
        self.fail(["integer", "identifier", "'('", "'-'"])


def parse(text: str) -> Program:
    p = Parser(text)
    return p.program()


# ---------------------------------------------------------------------------
# pretty printer


def _fmt_affine_1(slope: int, offset: int, var: str) -> str:
    return format_poly(Poly({(1, 0): slope, (0, 0): offset}), var, "_")


def _fmt_term(t: TermDecl, lvar: str, rvar: str) -> Tuple[str, str]:
    """(sign, body) with the sign pulled out of single-monomial coefficients."""
    c = t.coeff
    sign = "+"
    if len(c.terms) == 1 and next(iter(c.terms.values())) < 0:
        sign, c = "-", -c
    factors = []
    if c.terms != {(0, 0): 1}:
        s = format_poly(c, lvar, rvar)
        factors.append(f"({s})" if len(c.terms) > 1 or "/" in s else s)
    if t.delta is not None:
        factors.append(f"delta({format_poly(Poly.affine(t.delta), lvar, rvar)})")
    tgt = t.target if t.index is None else f"{t.target}[{format_poly(Poly.affine(t.index), lvar, rvar)}]"
    factors.append(tgt)
    return sign, "*".join(factors)


def format_decl(d: Decl) -> str:
    if isinstance(d, GeneratorDecl):
        s = f"generator {d.name}[{d.var}] degree {_fmt_affine_1(d.slope, d.offset, d.var)}"
        if d.bound:
            s += f" where {d.var} {d.bound[0]} {d.bound[1]}"
        return s + ";"
    if isinstance(d, CentralDecl):
        return f"central {d.name} degree {d.degree};"
    if isinstance(d, BracketDecl):
        head = f"bracket [{d.left}[{d.lvar}], {d.right}[{d.rvar}]] = "
        if not d.terms:
            return head + "0;"
        parts = [_fmt_term(t, d.lvar, d.rvar) for t in d.terms]
        body = ("-" if parts[0][0] == "-" else "") + parts[0][1]
        for sign, b in parts[1:]:
            body += f" {sign} {b}"
        return head + body + ";"
    return (f"field {d.name} = modes {d.family}[{_fmt_affine_1(1, d.shift, d.var)}] "
            f"weight {d.weight};")


def format_job(j: Job) -> str:
    if isinstance(j, LocalityJob):
        return f"check locality({j.a}, {j.b}) window {j.lo},{j.hi} precision {j.precision};"
    if isinstance(j, CloseJob):
        return f"close depth {j.depth} cutoff {j.cutoff};"
    if isinstance(j, VerifyJob):
        extra = f" summands {j.summands}" if j.summands is not None else ""
        return f"verify {j.what}{extra};"
    return f"compute nthprod({j.a}, {j.b}, {j.n}) at {j.at};"


def format_program(prog: Program) -> str:
    lines = []
    if prog.algebra is not None:
        if prog.algebra.block:
            lines.append(f"algebra {prog.algebra.name} {{")
            lines += ["  " + format_decl(d) for d in prog.algebra.items]
            lines.append("}")
        else:
            lines += [format_decl(d) for d in prog.algebra.items]
    if prog.jobs and lines:
        lines.append("")
    lines += [format_job(j) for j in prog.jobs]
    return "\n".join(lines) + ("\n" if lines else "")


def fmt(text: str) -> str:
    return format_program(parse(text))


# ---------------------------------------------------------------------------
# semantic pass


@dataclass
class Model:
    """Engine objects for a program's algebra."""

    presentation: AlgebraPresentation
    envelope: Envelope
    fields: Dict[str, GeneratorField]

    @property
    def labels(self) -> List[str]:
        return list(self.fields)


def build(decl: AlgebraDecl, validate_range: int = 3) -> Model:
    fams: Dict[str, GeneratorFamily] = {}
    for d in decl.items:
        if isinstance(d, (GeneratorDecl, CentralDecl)):
            if d.name in fams:
                raise DSLSemanticError(f"family {d.name!r} declared twice", d.pos)
            if isinstance(d, CentralDecl):
                fams[d.name] = GeneratorFamily(d.name, IndexDomain("point", 0), 0, d.degree)
            else:
                if d.slope not in (0, 1):
                    raise DSLSemanticError("degree slope must be 0 or 1", d.pos)
                dom = IndexDomain() if d.bound is None else \
                    IndexDomain("ge" if d.bound[0] == ">=" else "le", d.bound[1])
                fams[d.name] = GeneratorFamily(d.name, dom, d.slope, d.offset)

    def family(name, pos):
        if name not in fams:
            raise DSLSemanticError(f"unknown family {name!r}", pos)
        return fams[name]

    rules, seen = [], set()
    for d in decl.items:
        if not isinstance(d, BracketDecl):
            continue
        family(d.left, d.pos)
        family(d.right, d.pos)
        key = frozenset((d.left, d.right))
        if key in seen:
            raise DSLSemanticError(f"second bracket rule for {d.left}, {d.right}", d.pos)
        seen.add(key)
        terms = []
        for t in d.terms:
            f = family(t.target, t.pos)
            if t.index is None:
                if not f.is_point:
                    raise DSLSemanticError(f"{t.target} needs an index", t.pos)
                idx = (0, 0, f.domain.bound)
            else:
                idx = t.index
            terms.append(BracketTerm(t.coeff, t.target, idx, t.delta))
        rules.append(BracketRule(d.left, d.right, tuple(terms)))
    pres = AlgebraPresentation(decl.name, tuple(fams.values()), tuple(rules))
    report = validate_presentation(pres, validate_range)
    if not report.valid:
        w = report.failure
        raise DSLSemanticError(f"presentation fails the {w['kind']} check: {w['discrepancy']}", decl.pos)
    env = Envelope(pres)
    fields: Dict[str, GeneratorField] = {}
    for d in decl.items:
        if not isinstance(d, FieldDecl):
            continue
        f = family(d.family, d.pos)
        if d.name in fields:
            raise DSLSemanticError(f"field {d.name!r} declared twice", d.pos)
        if f.is_point:
            raise DSLSemanticError(f"{d.family} is central; fields need an indexed family", d.pos)
        g = GeneratorField(env, d.family, d.shift)
        if g.weight != d.weight:
            raise DSLSemanticError(
                f"degree mismatch: modes {d.family}[{_fmt_affine_1(1, d.shift, d.var)}] give weight "
                f"{g.weight}, declared {d.weight}", d.pos)
        fields[d.name] = g
    return Model(pres, env, fields)


PRESETS = {
    "heisenberg": """\
algebra heisenberg {
  generator alpha[n] degree n;
  central K degree 0;
  bracket [alpha[m], alpha[n]] = m*delta(m + n)*K;
  field alpha = modes alpha[n] weight 1;
}
""",
    "virasoro": """\
algebra virasoro {
  generator L[n] degree n;
  central C degree 0;
  bracket [L[m], L[n]] = (m - n)*L[m + n] + (m^3/12 - m/12)*delta(m + n)*C;
  field L = modes L[n - 1] weight 2;
}
""",
}

PRESET_JOBS = {
    "heisenberg": "close depth 2 cutoff 4;\nverify va;\nverify comonad;\nverify gru;\n",
    "virasoro": "close depth 2 cutoff 4;\nverify va;\nverify comonad;\n",
}
