"""Z-graded Lie algebras by presentation, and exact arithmetic in their
completed enveloping algebras.

An element of the completion ``U = lim U(g)/U(g)g_{>=p}`` is stored as a finite
representative at a stated precision ``p``: a linear combination of PBW
monomials, none of which lies in the left ideal ``U_p``.  Monomials are sorted
non-decreasingly by ``(degree, family name, index)``, so a sorted monomial lies
in ``U_p`` exactly when its rightmost factor has degree ``>= p``.
"""

from __future__ import annotations

import functools
import itertools
import math
import os
from dataclasses import dataclass, field
from gmpy2 import mpq as Q
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

try:
    from . import _kernel
except ImportError:  # the extension is optional; the Python engine is complete
    _kernel = None

Scalar = Q
Generator = Tuple[str, int]          # (family name, index)
Monomial = Tuple[Generator, ...]
Affine = Tuple[int, int, int]        # a*m + b*n + c


class BracketUnavailable(Exception):
    """Raised when a bracket is needed that the presentation does not know."""


def scalar(x) -> Q:
    """Exact scalar.  Integral values are plain ints, which are much cheaper
    than ``mpq`` in the inner loops; everything else is an ``mpq``."""
    if type(x) is int:
        return x
    if isinstance(x, str):
        x = x.strip()
    q = Q(x)
    return int(q) if q.denominator == 1 else q


def format_scalar(x: Q) -> str:
    """Serialize as ``"num/den"``."""
    return f"{x.numerator}/{x.denominator}"


@functools.lru_cache(maxsize=None)
def binomial(n: int, j: int) -> Q:
    """``C(n, j)`` for any integer ``n`` and ``j >= 0``."""
    if j < 0:
        return 0
    if n >= 0:
        return math.comb(n, j) if j <= n else 0
    c = math.comb(j - n - 1, j)
    return -c if j % 2 else c


# ---------------------------------------------------------------------------
# polynomials in the bracket indices m, n


class Poly:
    """Polynomial in two integer variables ``m`` and ``n`` with rational
    coefficients, stored as ``{(i, j): c}`` for ``c * m**i * n**j``."""

    __slots__ = ("terms", "_hash")

    def __init__(self, terms=None):
        clean = {}
        for k, v in (terms or {}).items():
            v = scalar(v)
            if v:
                clean[k] = clean.get(k, 0) + v
        self.terms = {k: v for k, v in clean.items() if v}
        self._hash = None

    @classmethod
    def const(cls, c) -> "Poly":
        return cls({(0, 0): c})

    @classmethod
    def m(cls) -> "Poly":
        return cls({(1, 0): 1})

    @classmethod
    def n(cls) -> "Poly":
        return cls({(0, 1): 1})

    @classmethod
    def affine(cls, a: Affine) -> "Poly":
        return cls({(1, 0): a[0], (0, 1): a[1], (0, 0): a[2]})

    def __call__(self, m: int, n: int) -> Q:
        return scalar(sum((c * m ** i * n ** j for (i, j), c in self.terms.items()), 0))

    def __add__(self, other: "Poly") -> "Poly":
        out = dict(self.terms)
        for k, v in other.terms.items():
            out[k] = out.get(k, 0) + v
        return Poly(out)

    def __neg__(self) -> "Poly":
        return Poly({k: -v for k, v in self.terms.items()})

    def __sub__(self, other: "Poly") -> "Poly":
        return self + (-other)

    def __mul__(self, other) -> "Poly":
        if not isinstance(other, Poly):
            return Poly({k: v * other for k, v in self.terms.items()})
        out: Dict[Tuple[int, int], Q] = {}
        for (i1, j1), c1 in self.terms.items():
            for (i2, j2), c2 in other.terms.items():
                k = (i1 + i2, j1 + j2)
                out[k] = out.get(k, 0) + c1 * c2
        return Poly(out)

    __rmul__ = __mul__

    def swap(self) -> "Poly":
        """Exchange the roles of ``m`` and ``n``."""
        return Poly({(j, i): c for (i, j), c in self.terms.items()})

    def is_zero(self) -> bool:
        return not self.terms

    def __eq__(self, other) -> bool:
        return isinstance(other, Poly) and self.terms == other.terms

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(frozenset(self.terms.items()))
        return self._hash

    def __repr__(self) -> str:
        return f"Poly({format_poly(self)})"

    def to_json(self) -> list:
        return [[i, j, format_scalar(c)] for (i, j), c in sorted(self.terms.items())]

    @classmethod
    def from_json(cls, data) -> "Poly":
        return cls({(int(i), int(j)): scalar(c) for i, j, c in data})


def format_poly(p: Poly, mvar: str = "m", nvar: str = "n") -> str:
    if not p.terms:
        return "0"
    parts = []
    for (i, j), c in sorted(p.terms.items(), key=lambda kv: (-(kv[0][0] + kv[0][1]), -kv[0][0])):
        factors = []
        for var, e in ((mvar, i), (nvar, j)):
            if e == 1:
                factors.append(var)
            elif e > 1:
                factors.append(f"{var}^{e}")
        mono = "*".join(factors)
        sign = "-" if c < 0 else "+"
        a = abs(c)
        if not mono:
            body = str(a)
        elif a == 1:
            body = mono
        elif a.denominator == 1:
            body = f"{a.numerator}*{mono}"
        elif a.numerator == 1:
            body = f"{mono}/{a.denominator}"
        else:
            body = f"{a.numerator}*{mono}/{a.denominator}"
        parts.append((sign, body))
    out = ("-" if parts[0][0] == "-" else "") + parts[0][1]
    for sign, body in parts[1:]:
        out += f" {sign} {body}"
    return out


def eval_affine(a: Affine, m: int, n: int) -> int:
    return a[0] * m + a[1] * n + a[2]


def format_affine(a: Affine, mvar: str = "m", nvar: str = "n") -> str:
    return format_poly(Poly.affine(a), mvar, nvar)


# ---------------------------------------------------------------------------
# presentation data


@dataclass(frozen=True)
class IndexDomain:
    """All integers, a half-line ``n >= b`` / ``n <= b``, or a point ``n == b``."""

    kind: str = "all"
    bound: int = 0

    def __post_init__(self):
        if self.kind not in ("all", "ge", "le", "point"):
            raise ValueError(f"unknown index domain {self.kind!r}")

    def __contains__(self, n: int) -> bool:
        if self.kind == "all":
            return True
        if self.kind == "ge":
            return n >= self.bound
        if self.kind == "le":
            return n <= self.bound
        return n == self.bound

    def window(self, lo: int, hi: int) -> range:
        if self.kind == "ge":
            lo = max(lo, self.bound)
        elif self.kind == "le":
            hi = min(hi, self.bound)
        elif self.kind == "point":
            lo = hi = self.bound
        return range(lo, hi + 1)


@dataclass(frozen=True)
class GeneratorFamily:
    """Generators ``name[n]`` for ``n`` in ``domain`` with degree ``slope*n + offset``."""

    name: str
    domain: IndexDomain = IndexDomain()
    slope: int = 1
    offset: int = 0

    def __post_init__(self):
        if self.slope not in (0, 1):
            raise ValueError("degree slope must be 0 or 1")

    @property
    def is_point(self) -> bool:
        return self.domain.kind == "point"

    def degree(self, n: int) -> int:
        return self.slope * n + self.offset


@dataclass(frozen=True)
class BracketTerm:
    """``coeff(m, n) * [delta(kronecker(m, n))] * target[index(m, n)]``."""

    coeff: Poly
    target: str
    index: Affine = (0, 0, 0)
    delta: Optional[Affine] = None

    def swapped(self) -> "BracketTerm":
        sw = lambda a: (a[1], a[0], a[2])  # noqa: E731
        return BracketTerm(self.coeff.swap(), self.target, sw(self.index),
                           None if self.delta is None else sw(self.delta))


@dataclass(frozen=True)
class BracketRule:
    left: str
    right: str
    terms: Tuple[BracketTerm, ...]


@dataclass(frozen=True)
class AlgebraPresentation:
    """Families plus one bracket rule per unordered family pair; unlisted pairs
    commute unless they appear in ``unknown``, in which case asking for their
    bracket raises :class:`BracketUnavailable`."""

    name: str
    families: Tuple[GeneratorFamily, ...]
    brackets: Tuple[BracketRule, ...] = ()
    unknown: frozenset = frozenset()
    _index: dict = field(default=None, compare=False, repr=False, hash=False)

    def __post_init__(self):
        fams = {f.name: f for f in self.families}
        if len(fams) != len(self.families):
            raise ValueError("duplicate family name")
        rules = {}
        for r in self.brackets:
            for fam in (r.left, r.right):
                if fam not in fams:
                    raise ValueError(f"bracket refers to unknown family {fam!r}")
            key = (r.left, r.right)
            if key in rules or (r.right, r.left) in rules:
                raise ValueError(f"duplicate bracket rule for {r.left}, {r.right}")
            for t in r.terms:
                if t.target not in fams:
                    raise ValueError(f"bracket target {t.target!r} is not a family")
            rules[key] = r
        object.__setattr__(self, "_index", {"families": fams, "rules": rules})

    def family(self, name: str) -> GeneratorFamily:
        try:
            return self._index["families"][name]
        except KeyError:
            raise KeyError(f"unknown family {name!r}") from None

    def has_generator(self, g: Generator) -> bool:
        fam = self._index["families"].get(g[0])
        return fam is not None and g[1] in fam.domain

    def degree(self, g: Generator) -> int:
        return self.family(g[0]).degree(g[1])

    def sort_key(self, g: Generator):
        return (self.degree(g), g[0], g[1])

    def central_families(self) -> List[str]:
        """Families that bracket trivially with everything."""
        touched = {f for r in self.brackets if r.terms for f in (r.left, r.right)}
        touched |= {f for pair in self.unknown for f in pair}
        return [f.name for f in self.families if f.name not in touched]

    def rule(self, left: str, right: str) -> Optional[BracketRule]:
        return self._index["rules"].get((left, right))

    def bracket(self, x: Generator, y: Generator) -> Dict[Generator, Q]:
        """``[x, y]`` as a combination of generators."""
        (fx, m), (fy, n) = x, y
        rules = self._index["rules"]
        rule = rules.get((fx, fy))
        sign = 1
        if rule is None:
            rule = rules.get((fy, fx))
            if rule is None:
                if (fx, fy) in self.unknown or (fy, fx) in self.unknown:
                    raise BracketUnavailable(f"[{fx}[{m}], {fy}[{n}]] is not tabulated")
                return {}
            sign = -1
            m, n = n, m
        out: Dict[Generator, Q] = {}
        fams = self._index["families"]
        for t in rule.terms:
            if t.delta is not None and eval_affine(t.delta, m, n) != 0:
                continue
            idx = eval_affine(t.index, m, n)
            if idx not in fams[t.target].domain:
                continue
            c = t.coeff(m, n)
            if c:
                g = (t.target, idx)
                out[g] = out.get(g, 0) + sign * c
        return {g: c for g, c in out.items() if c}

    # -- serialization -----------------------------------------------------

    def to_json(self) -> dict:
        def dom(d: IndexDomain):
            return {"kind": d.kind, "bound": d.bound}

        return {
            "name": self.name,
            "families": [
                {"name": f.name, "domain": dom(f.domain), "degree": [f.slope, f.offset]}
                for f in self.families
            ],
            "brackets": [
                {
                    "left": r.left,
                    "right": r.right,
                    "terms": [
                        {
                            "coeff": t.coeff.to_json(),
                            "delta": None if t.delta is None else list(t.delta),
                            "target": t.target,
                            "index": list(t.index),
                        }
                        for t in r.terms
                    ],
                }
                for r in self.brackets
            ],
            "unknown": sorted([list(p) for p in self.unknown]),
        }

    @classmethod
    def from_json(cls, data: dict) -> "AlgebraPresentation":
        fams = tuple(
            GeneratorFamily(f["name"], IndexDomain(f["domain"]["kind"], f["domain"]["bound"]),
                            f["degree"][0], f["degree"][1])
            for f in data["families"]
        )
        rules = tuple(
            BracketRule(
                r["left"], r["right"],
                tuple(
                    BracketTerm(Poly.from_json(t["coeff"]), t["target"], tuple(t["index"]),
                                None if t["delta"] is None else tuple(t["delta"]))
                    for t in r["terms"]
                ),
            )
            for r in data["brackets"]
        )
        unknown = frozenset(tuple(p) for p in data.get("unknown", []))
        return cls(data["name"], fams, rules, unknown)


# ---------------------------------------------------------------------------
# validation


@dataclass
class ValidationReport:
    valid: bool
    checked: int
    failure: Optional[dict] = None

    def to_json(self) -> dict:
        return {"valid": self.valid, "checked": self.checked, "failure": self.failure}


def _lie_bracket(pres: AlgebraPresentation, x: Dict[Generator, Q],
                 y: Dict[Generator, Q]) -> Dict[Generator, Q]:
    out: Dict[Generator, Q] = {}
    for gx, cx in x.items():
        for gy, cy in y.items():
            for g, c in pres.bracket(gx, gy).items():
                out[g] = out.get(g, 0) + cx * cy * c
    return {g: c for g, c in out.items() if c}


def _fmt_combo(d: Dict[Generator, Q]) -> str:
    if not d:
        return "0"
    return " + ".join(f"{c}*{g[0]}[{g[1]}]" for g, c in sorted(d.items()))


def concrete_generators(pres: AlgebraPresentation, lo: int, hi: int) -> List[Generator]:
    return [(f.name, i) for f in pres.families for i in f.domain.window(lo, hi)]


def validate_presentation(pres: AlgebraPresentation, R: int) -> ValidationReport:
    """Check grading compatibility, antisymmetry and the Jacobi identity on all
    concrete generators with indices in ``[-R, R]``; report the first failure."""
    checked = 0
    for f in pres.families:
        if f.slope == 0 and not f.is_point:
            return ValidationReport(False, checked, {
                "kind": "infinite_graded_piece", "family": f.name,
                "discrepancy": "family has constant degree on an infinite index set"})
    gens = concrete_generators(pres, -R, R)
    for x in gens:
        for y in gens:
            checked += 1
            try:
                b = pres.bracket(x, y)
            except BracketUnavailable:
                continue
            deg = pres.degree(x) + pres.degree(y)
            for g in b:
                if pres.degree(g) != deg:
                    return ValidationReport(False, checked, {
                        "kind": "grading", "rule": [x[0], y[0]], "indices": [x[1], y[1]],
                        "discrepancy": f"{g[0]}[{g[1]}] has degree {pres.degree(g)}, expected {deg}"})
            diff = dict(b)
            for g, c in pres.bracket(y, x).items():
                diff[g] = diff.get(g, 0) + c
            diff = {g: c for g, c in diff.items() if c}
            if diff:
                return ValidationReport(False, checked, {
                    "kind": "antisymmetry", "rule": [x[0], y[0]], "indices": [x[1], y[1]],
                    "discrepancy": f"[x,y] + [y,x] = {_fmt_combo(diff)}"})
    for x, y, z in itertools.combinations_with_replacement(gens, 3):
        checked += 1
        try:
            X, Y, Z = {x: Q(1)}, {y: Q(1)}, {z: Q(1)}
            total: Dict[Generator, Q] = {}
            for a, b, c in ((X, Y, Z), (Y, Z, X), (Z, X, Y)):
                for g, v in _lie_bracket(pres, a, _lie_bracket(pres, b, c)).items():
                    total[g] = total.get(g, 0) + v
        except BracketUnavailable:
            continue
        total = {g: v for g, v in total.items() if v}
        if total:
            return ValidationReport(False, checked, {
                "kind": "jacobi", "rule": [x[0], y[0], z[0]], "indices": [x[1], y[1], z[1]],
                "discrepancy": _fmt_combo(total)})
    return ValidationReport(True, checked)


# ---------------------------------------------------------------------------
# the completed enveloping algebra


class AlgebraElement:
    """Finite linear combination of sorted PBW monomials, a representative of a
    class in ``U/U_p``.  Treat as immutable.

    Monomials are stored as tuples of the envelope's integer generator codes;
    :meth:`items` gives them back as ``(family, index)`` words.
    """

    __slots__ = ("algebra", "terms", "precision")

    def __init__(self, algebra: "Envelope", terms: Dict[tuple, Q], precision: int):
        self.algebra = algebra
        self.terms = terms
        self.precision = precision

    def is_zero(self) -> bool:
        return not self.terms

    def __bool__(self) -> bool:
        return bool(self.terms)

    def items(self) -> List[Tuple[Monomial, Q]]:
        """``(word, coefficient)`` pairs in PBW order, words decoded."""
        dec = self.algebra.decode
        return [(tuple(dec(g) for g in mono), c) for mono, c in sorted(self.terms.items())]

    def _combine(self, other: "AlgebraElement", sign: int) -> "AlgebraElement":
        p = min(self.precision, other.precision)
        a = self if self.precision == p else self.algebra.reduce(self, p)
        b = other if other.precision == p else self.algebra.reduce(other, p)
        out = dict(a.terms)
        for mono, c in b.terms.items():
            v = out.get(mono, 0) + sign * c
            if v:
                out[mono] = v
            else:
                out.pop(mono, None)
        return AlgebraElement(self.algebra, out, p)

    def __add__(self, other):
        return self._combine(other, 1)

    def __sub__(self, other):
        return self._combine(other, -1)

    def __neg__(self):
        return AlgebraElement(self.algebra, {k: -v for k, v in self.terms.items()}, self.precision)

    def scale(self, c) -> "AlgebraElement":
        c = scalar(c)
        if not c:
            return AlgebraElement(self.algebra, {}, self.precision)
        return AlgebraElement(self.algebra, {k: v * c for k, v in self.terms.items()}, self.precision)

    def __rmul__(self, c):
        return self.scale(c)

    def __eq__(self, other) -> bool:
        if not isinstance(other, AlgebraElement):
            return NotImplemented
        p = min(self.precision, other.precision)
        return self.algebra.reduce(self, p).terms == other.algebra.reduce(other, p).terms

    __hash__ = None

    def __repr__(self) -> str:
        return f"<{self} mod U_{self.precision}>"

    def __str__(self) -> str:
        return self.algebra.format(self)

    def to_json(self) -> dict:
        return {
            "precision": self.precision,
            "terms": [[[list(g) for g in word], format_scalar(c)] for word, c in self.items()],
        }


# codes fit in 63 bits so the native kernel can hold them as int64
_DEG_SHIFT = 48
_RANK_SHIFT = 32
_DEG_BIAS = 1 << 14
_IDX_BIAS = 1 << 31


class Envelope:
    """The completed enveloping algebra of an :class:`AlgebraPresentation`.

    Generators are interned as integers whose numeric order is the PBW order
    (degree, family name, index), so a monomial is a sorted tuple of ints and
    a degree is a shift away.  The memo tables behave as pure function
    tables, so one instance may be shared freely.
    """

    def __init__(self, presentation: AlgebraPresentation):
        self.presentation = presentation
        self._ranks = {name: r for r, name in enumerate(sorted(f.name for f in presentation.families))}
        self._names = sorted(self._ranks, key=self._ranks.get)
        self._codes: Dict[Generator, Optional[int]] = {}
        self._decoded: Dict[int, Generator] = {}
        self._insert_cache: Dict[tuple, Dict[tuple, Q]] = {}
        self._bracket_cache: Dict[tuple, Dict[int, Q]] = {}
        self._tail_cache: Dict[tuple, int] = {}
        # interned monomials, for the hot loops that key dicts by monomial
        self._mono_ids: Dict[tuple, int] = {(): 0}
        self._monos: List[tuple] = [()]
        self._tail_ids: Dict[int, Dict[int, int]] = {}
        self._by_degree: Dict[int, Optional[List[int]]] = {}
        self._central = frozenset(self._ranks[name] for name in presentation.central_families())
        self._splits: Dict[int, Optional[tuple]] = {}
        self._merged: Dict[tuple, int] = {}

    @property
    def kernel(self):
        """The native evaluator for this algebra, or ``None`` when the
        extension is missing or ``VERTEXLAB_ENGINE=python`` is set."""
        k = self.__dict__.get("_kernel_obj", False)
        if k is False:
            k = None
            if _kernel is not None and os.environ.get("VERTEXLAB_ENGINE", "native") != "python":
                k = _kernel.Kernel(sorted(self._central), self.bracket,
                                   lambda rank, idx: self.code(self._names[rank], idx),
                                   self._generators_of_degree, BracketUnavailable, scalar)
            self._kernel_obj = k
        return k

    # -- generator bookkeeping ----------------------------------------------

    def code(self, family: str, index: int) -> Optional[int]:
        """Integer code of ``family[index]``, or ``None`` if no such generator."""
        g = (family, index)
        try:
            return self._codes[g]
        except KeyError:
            pass
        c = None
        if self.presentation.has_generator(g):
            deg = self.presentation.degree(g)
            c = ((deg + _DEG_BIAS) << _DEG_SHIFT) | (self._ranks[family] << _RANK_SHIFT) | (index + _IDX_BIAS)
            self._decoded[c] = g
        self._codes[g] = c
        return c

    def encode(self, g: Generator) -> int:
        c = self.code(g[0], g[1])
        if c is None:
            raise KeyError(f"{g[0]}[{g[1]}] is not a generator")
        return c

    def decode(self, c: int) -> Generator:
        return self._decoded[c]

    @staticmethod
    def degree(c: int) -> int:
        return (c >> _DEG_SHIFT) - _DEG_BIAS

    def key(self, g: Generator) -> tuple:
        return self.presentation.sort_key(g)

    def bracket(self, x: int, y: int) -> Dict[int, Q]:
        k = (x, y)
        b = self._bracket_cache.get(k)
        if b is None:
            raw = self.presentation.bracket(self._decoded[x], self._decoded[y])
            b = self._bracket_cache[k] = {self.encode(t): scalar(c) for t, c in raw.items() if c}
        return b

    def in_ideal(self, mono: tuple, p: int) -> bool:
        """Whether a coded monomial (sorted or not) visibly lies in ``U_p``."""
        return bool(mono) and self.degree(mono[-1]) >= p

    # -- constructors ---------------------------------------------------------

    def zero(self, p: int) -> AlgebraElement:
        return AlgebraElement(self, {}, p)

    def one(self, p: int) -> AlgebraElement:
        return AlgebraElement(self, {(): 1}, p)

    def gen(self, family: str, index: int, p: int, coeff=1) -> AlgebraElement:
        c = self.code(family, index)
        if c is None:
            return self.zero(p)
        return self._straighten_codes((c,), scalar(coeff), p)

    def element(self, terms: Dict[Monomial, Q], p: int) -> AlgebraElement:
        """Normalize an arbitrary combination of ``(family, index)`` words."""
        out: Dict[tuple, Q] = {}
        for word, c in terms.items():
            for mono, v in self.straighten(word, c, p).terms.items():
                out[mono] = out.get(mono, 0) + v
        return AlgebraElement(self, {k: v for k, v in out.items() if v}, p)

    # -- core straightening --------------------------------------------------

    def _insert(self, g: int, mono: tuple, p: int) -> Dict[tuple, Q]:
        """``g * mono`` mod ``U_p`` for a sorted monomial not in ``U_p``.
        The result is shared and must not be mutated."""
        ck = (g, mono, p)
        hit = self._insert_cache.get(ck)
        if hit is not None:
            return hit
        if not mono:
            res = {} if self.degree(g) >= p else {(g,): 1}
        elif g <= mono[0]:
            res = {(g,) + mono: 1}
        else:
            h = mono[0]
            rest = mono[1:]
            res = {}
            ins = self._insert
            # g h rest = h (g rest) + [g, h] rest
            for m2, c in ins(g, rest, p).items():
                for m3, c3 in ins(h, m2, p).items():
                    v = res.get(m3, 0) + c * c3
                    if v:
                        res[m3] = v
                    else:
                        del res[m3]
            for t, c in self.bracket(g, h).items():
                for m3, c3 in ins(t, rest, p).items():
                    v = res.get(m3, 0) + c * c3
                    if v:
                        res[m3] = v
                    else:
                        del res[m3]
        self._insert_cache[ck] = res
        return res

    def _left_mul_word(self, word: Sequence[int], terms: Dict[tuple, Q], p: int) -> Dict[tuple, Q]:
        cur = terms
        ins = self._insert
        for g in reversed(word):
            nxt: Dict[tuple, Q] = {}
            for mono, c in cur.items():
                for m2, c2 in ins(g, mono, p).items():
                    v = nxt.get(m2, 0) + c * c2
                    if v:
                        nxt[m2] = v
                    else:
                        del nxt[m2]
            cur = nxt
            if not cur:
                break
        return cur

    def _straighten_codes(self, word: tuple, coeff: Q, p: int) -> AlgebraElement:
        if not coeff or self.in_ideal(word, p):
            return self.zero(p)
        return AlgebraElement(self, self._left_mul_word(word, {(): coeff}, p), p)

    def straighten(self, word: Sequence[Generator], coeff=1, p: int = 1) -> AlgebraElement:
        """PBW normal form of ``coeff * word`` modulo ``U_p``; ``word`` is a
        sequence of ``(family, index)`` generators in any order."""
        codes = []
        for g in word:
            c = self.code(g[0], g[1])
            if c is None:
                return self.zero(p)
            codes.append(c)
        return self._straighten_codes(tuple(codes), scalar(coeff), p)

    def reduce(self, x: AlgebraElement, q: int) -> AlgebraElement:
        """Coarsen a representative to precision ``q <= x.precision``."""
        if q == x.precision:
            return x
        if q > x.precision:
            raise ValueError(f"cannot refine precision {x.precision} to {q}")
        bound = (q + _DEG_BIAS) << _DEG_SHIFT
        return AlgebraElement(self, {m: c for m, c in x.terms.items() if not m or m[-1] < bound}, q)

    def multiply(self, x: AlgebraElement, y: AlgebraElement, p: int) -> AlgebraElement:
        """``x * y`` mod ``U_p``; ``x`` is used as an exact finite element."""
        if y.precision < p:
            raise ValueError(f"right factor known only mod U_{y.precision}, need U_{p}")
        yt = self.reduce(y, p).terms
        out: Dict[tuple, Q] = {}
        for mono, c in x.terms.items():
            for m2, c2 in self._left_mul_word(mono, yt, p).items():
                v = out.get(m2, 0) + c * c2
                if v:
                    out[m2] = v
                else:
                    del out[m2]
        return AlgebraElement(self, out, p)

    def tail_bound(self, u: AlgebraElement, p: int) -> int:
        """The least ``N >= p`` with ``g_{>=N} u`` inside ``U_p``.

        Past ``p`` plus the total negative degree of a monomial every
        generator passes through it into ``U_p``; below that the finitely
        many remaining generators are tried directly.
        """
        best = p
        for mono in u.terms:
            best = max(best, self._mono_tail(mono, p))
        return best

    def _mono_tail(self, mono: tuple, p: int) -> int:
        ck = (mono, p)
        hit = self._tail_cache.get(ck)
        if hit is not None:
            return hit
        span = 0
        for g in mono:
            d = self.degree(g)
            if d < 0:
                span -= d
        res = p
        for d in range(p + span - 1, p - 1, -1):
            gens = self._generators_of_degree(d)
            if gens is None:
                res = d + 1
                break
            try:
                if any(self._insert(t, mono, p) for t in gens):
                    res = d + 1
                    break
            except BracketUnavailable:
                res = d + 1
                break
        self._tail_cache[ck] = res
        return res

    def mono_id(self, mono: tuple) -> int:
        i = self._mono_ids.get(mono)
        if i is None:
            i = self._mono_ids[mono] = len(self._monos)
            self._monos.append(mono)
        return i

    def mono_of(self, i: int) -> tuple:
        return self._monos[i]

    def central_split(self, i: int):
        """``(j, central letters)`` when the interned monomial ``i`` has
        central letters and ``j`` is the rest of it, else ``None``."""
        try:
            return self._splits[i]
        except KeyError:
            pass
        res = None
        if self._central:
            mono = self._monos[i]
            cen = tuple(g for g in mono if (g >> _RANK_SHIFT) & 0xFFFF in self._central)
            if cen:
                res = (self.mono_id(tuple(g for g in mono if g not in cen)), cen)
        self._splits[i] = res
        return res

    def times_central(self, terms: Dict[int, Q], cen: tuple, p: int) -> Optional[Dict[int, Q]]:
        """Multiply interned terms by commuting central letters, or ``None``
        if some letter could push a monomial into ``U_p``."""
        if self.degree(cen[-1]) >= p:
            return None
        out = {}
        for k, c in terms.items():
            key = (k, cen)
            m = self._merged.get(key)
            if m is None:
                m = self._merged[key] = self.mono_id(tuple(sorted(self._monos[k] + cen)))
            out[m] = c
        return out

    def tail_of_id(self, i: int, p: int) -> int:
        """``_mono_tail`` of an interned monomial."""
        table = self._tail_ids.get(p)
        if table is None:
            table = self._tail_ids[p] = {}
        t = table.get(i)
        if t is None:
            t = table[i] = self._mono_tail(self._monos[i], p)
        return t

    def _generators_of_degree(self, d: int):
        """Codes of the generators of degree ``d``, or ``None`` if there are
        infinitely many."""
        try:
            return self._by_degree[d]
        except KeyError:
            pass
        out = self._by_degree[d] = self._scan_degree(d)
        return out

    def _scan_degree(self, d: int):
        out = []
        for fam in self.presentation.families:
            if fam.is_point:
                if fam.degree(fam.domain.bound) == d:
                    out.append(self.encode((fam.name, fam.domain.bound)))
            elif fam.slope == 0:
                if fam.offset == d:
                    return None
            elif d - fam.offset in fam.domain:
                out.append(self.encode((fam.name, d - fam.offset)))
        return out

    def commutator(self, x: AlgebraElement, y: AlgebraElement, p: int) -> AlgebraElement:
        return self.multiply(x, y, p) - self.multiply(y, x, p)

    # -- display -------------------------------------------------------------

    def format_generator(self, g) -> str:
        if isinstance(g, int):
            g = self._decoded[g]
        fam = self.presentation.family(g[0])
        return g[0] if fam.is_point else f"{g[0]}[{g[1]}]"

    def format_monomial(self, mono) -> str:
        parts = []
        for g, grp in itertools.groupby(mono):
            k = len(list(grp))
            s = self.format_generator(g)
            parts.append(s if k == 1 else f"{s}^{k}")
        return "*".join(parts)

    def format(self, x: AlgebraElement) -> str:
        if not x.terms:
            return "0"
        items = sorted(x.terms.items(), key=lambda kv: (len(kv[0]), kv[0]))
        out = ""
        for i, (mono, c) in enumerate(items):
            neg = c < 0
            a = abs(c)
            m = self.format_monomial(mono)
            if not m:
                body = str(a)
            elif a == 1:
                body = m
            elif a.denominator == 1:
                body = f"{a.numerator}*{m}"
            elif a.numerator == 1:
                body = f"{m}/{a.denominator}"
            else:
                body = f"{a.numerator}*{m}/{a.denominator}"
            if i == 0:
                out = ("-" if neg else "") + body
            else:
                out += (" - " if neg else " + ") + body
        return out


def straighten(env: Envelope, word, coeff, p: int) -> AlgebraElement:
    return env.straighten(word, coeff, p)


def multiply(x: AlgebraElement, y: AlgebraElement, p: int) -> AlgebraElement:
    return x.algebra.multiply(x, y, p)


def tail_bound(u: AlgebraElement, p: int) -> int:
    return u.algebra.tail_bound(u, p)


def reduce_mod(x: AlgebraElement, q: int) -> AlgebraElement:
    return x.algebra.reduce(x, q)


# ---------------------------------------------------------------------------
# presets


def heisenberg(name: str = "heisenberg") -> AlgebraPresentation:
    """``[alpha[m], alpha[n]] = m delta(m+n) K`` with ``K`` central."""
    alpha = GeneratorFamily("alpha", IndexDomain("all"), 1, 0)
    K = GeneratorFamily("K", IndexDomain("point", 0), 0, 0)
    rule = BracketRule("alpha", "alpha", (BracketTerm(Poly.m(), "K", (0, 0, 0), (1, 1, 0)),))
    return AlgebraPresentation(name, (alpha, K), (rule,))


def virasoro(name: str = "virasoro") -> AlgebraPresentation:
    """``[L[m], L[n]] = (m-n) L[m+n] + (m^3-m)/12 delta(m+n) C``."""
    L = GeneratorFamily("L", IndexDomain("all"), 1, 0)
    C = GeneratorFamily("C", IndexDomain("point", 0), 0, 0)
    rule = BracketRule("L", "L", (
        BracketTerm(Poly.m() - Poly.n(), "L", (1, 1, 0)),
        BracketTerm(Poly({(3, 0): Q(1, 12), (1, 0): Q(-1, 12)}), "C", (0, 0, 0), (1, 1, 0)),
    ))
    return AlgebraPresentation(name, (L, C), (rule,))
