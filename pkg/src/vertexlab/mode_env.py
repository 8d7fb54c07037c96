"""The mode Lie algebra of a truncated vertex algebra and its completed
enveloping algebra.

Every basis field ``a`` of a :class:`VertexAlgebraStructure` contributes
symbols ``a[n]``.  The relations ``(da)[n] = -n a[n-1]`` are solved once per
weight, so symbols exist only for the basis fields that are not derivative
images ("free" fields); a field with vanishing derivative keeps a single
symbol ``c[-1]``.  The result is an ordinary graded presentation in which
``a[n]`` has degree ``n + 1 - weight(a)``, so the completed enveloping algebra
is an :class:`Envelope` and inherits the straightening code and the native
kernel.

Equality modulo the ideal of n-th product relations is never decided
directly.  Elements are compared through two functionals instead: ``rho``,
the action on the basis fields through the structure constants, and
``phi``, the substitution ``a[n] -> a_(n)`` into the algebra the fields were
built on.
"""

from __future__ import annotations

import itertools
import re
from gmpy2 import mpq as Q
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .closure import Coords, MissingConstant, VertexAlgebraStructure
from .distributions import (
    CheckReport,
    Derivative,
    Distribution,
    GeneratorField,
    LinearCombination,
    ModeWindow,
    NthProduct,
)
from .graded_lie import (
    AlgebraElement,
    BracketUnavailable,
    Envelope,
    Generator,
    GeneratorFamily,
    IndexDomain,
    binomial,
    format_scalar,
)
from .linalg import axpy

# precision used for elements that are exact finite combinations
EXACT = 1 << 20

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


class ModeRelationError(ValueError):
    """The derivative relations do not have the expected triangular shape."""


class PhiPrecisionError(ValueError):
    """An element is not known precisely enough for ``phi`` at the requested
    precision."""


class ModePresentation:
    """Presentation of the mode symbols; duck-types :class:`AlgebraPresentation`
    for :class:`Envelope`."""

    def __init__(self, mla: "ModeLieAlgebra", name: str):
        self.name = name
        self._mla = mla
        fams = []
        for i in mla.symbol_fields:
            w = mla.V.weights[i]
            if i in mla.constants:
                fams.append(GeneratorFamily(mla.names[i], IndexDomain("point", -1), 0, -w))
            else:
                fams.append(GeneratorFamily(mla.names[i], IndexDomain("all"), 1, 1 - w))
        self.families = tuple(fams)
        self._families = {f.name: f for f in fams}
        self._cache: Dict[Tuple[Generator, Generator], Dict[Generator, Q]] = {}

    def family(self, name: str) -> GeneratorFamily:
        try:
            return self._families[name]
        except KeyError:
            raise KeyError(f"unknown family {name!r}") from None

    def has_generator(self, g: Generator) -> bool:
        fam = self._families.get(g[0])
        return fam is not None and g[1] in fam.domain

    def degree(self, g: Generator) -> int:
        return self.family(g[0]).degree(g[1])

    def sort_key(self, g: Generator):
        return (self.degree(g), g[0], g[1])

    def central_families(self) -> List[str]:
        mla = self._mla
        out = []
        for i in mla.symbol_fields:
            try:
                if all(mla.V.order(i, j) == 0 for j in range(mla.V.dim)):
                    out.append(mla.names[i])
            except MissingConstant:
                pass
        return out

    def bracket(self, x: Generator, y: Generator) -> Dict[Generator, Q]:
        key = (x, y)
        hit = self._cache.get(key)
        if hit is None:
            hit = self._cache[key] = self._mla.symbol_bracket(x, y)
        return hit

    def to_json(self, lo: int = -2, hi: int = 2) -> dict:
        """Families plus the bracket table on the index slice ``[lo, hi]``."""
        mla = self._mla
        table = []
        gens = [(f.name, n) for f in self.families for n in f.domain.window(lo, hi)]
        for x, y in itertools.combinations_with_replacement(gens, 2):
            try:
                b = self.bracket(x, y)
            except BracketUnavailable:
                continue
            if b:
                table.append({"left": list(x), "right": list(y),
                              "terms": [[g[0], g[1], format_scalar(c)] for g, c in sorted(b.items())]})
        return {
            "name": self.name,
            "families": [{"name": f.name, "domain": {"kind": f.domain.kind, "bound": f.domain.bound},
                          "degree": [f.slope, f.offset]} for f in self.families],
            "brackets": [],
            "table": table,
            "slice": [lo, hi],
            "relations": mla.relations_json(),
        }


class ModeLieAlgebra:
    """Mode symbols of the basis fields of ``V`` with the bracket

        [a[m], b[n]] = sum_j C(m, j) (a_(j) b)[m + n - j]

    read from the structure constants.

    ``fields`` are the basis fields the symbols stand for (used by ``phi``);
    they default to the fields of ``V``'s closure.
    """

    def __init__(self, V: VertexAlgebraStructure, fields: Optional[Sequence[Distribution]] = None,
                 labels: Optional[Sequence[str]] = None, name: str = "modes"):
        self.V = V
        if fields is None and V.space is not None:
            fields = V.space.fields
        self.base_fields = list(fields) if fields is not None else None
        if labels is None:
            labels = [e.label for e in V.space.basis] if V.space is not None else []
        self.labels = [labels[i] if i < len(labels) and labels[i] else f"b{i}" for i in range(V.dim)]
        self.names = self._family_names()
        self.constants: set = set()
        # pivot -> (same-weight coords, lower-weight coords) with
        #   b_p[n] = sum_t same_t b_t[n] + n sum_k lower_k b_k[n-1]
        self.pivots: Dict[int, Tuple[Coords, Coords]] = {}
        self._solve_derivatives()
        self.symbol_fields = [i for i in range(V.dim) if i not in self.pivots]
        self.index = {self.names[i]: i for i in self.symbol_fields}
        self._rewrites: Dict[Tuple[int, int], Dict[Generator, Q]] = {}
        self._fields: Dict[int, Distribution] = {}
        self.presentation = ModePresentation(self, name)
        self.envelope = Envelope(self.presentation)

    def _family_names(self) -> List[str]:
        names, used = [], set()
        for i, lab in enumerate(self.labels):
            n = lab if _IDENT.match(lab) and not re.fullmatch(r"b\d+", lab) else f"b{i}"
            if n in used:
                n = f"b{i}"
            used.add(n)
            names.append(n)
        return names

    # -- derivative relations --------------------------------------------------

    def _solve_derivatives(self) -> None:
        V = self.V
        for k in range(V.dim):
            if V.weights[k] == 0 and V.derivatives.get(k) == {}:
                self.constants.add(k)
        for w in sorted(set(V.weights)):
            # relation rows: sum_t d_t b_t[n] + n sum_k e_k b_k[n-1] = 0
            rows: List[Tuple[Coords, Coords]] = []
            for k in range(V.dim):
                if V.weights[k] != w or k in self.constants:
                    continue
                d = V.derivatives.get(k)
                if d is None:
                    continue
                rows.append((dict(d), {k: Q(1)}))
            done: List[Tuple[int, Coords, Coords]] = []
            for d, e in rows:
                for piv, pd, pe in done:
                    c = d.get(piv)
                    if c:
                        axpy(d, -c, pd)
                        axpy(e, -c, pe)
                if not d:
                    raise ModeRelationError(
                        f"a combination of weight-{w} fields has vanishing derivative: {e}")
                piv = max(d)
                c = Q(d[piv])
                d = {t: v / c for t, v in d.items()}
                e = {t: v / c for t, v in e.items()}
                for _, od, oe in done:
                    oc = od.get(piv)
                    if oc:
                        axpy(od, -oc, d)
                        axpy(oe, -oc, e)
                done.append((piv, d, e))
            for piv, d, e in done:
                same = {t: -v for t, v in d.items() if t != piv}
                lower = {t: -v for t, v in e.items()}
                self.pivots[piv] = (same, lower)

    def relations_json(self) -> dict:
        enc = lambda c: {str(k): format_scalar(v) for k, v in sorted(c.items())}  # noqa: E731
        return {"constants": sorted(self.constants),
                "rewrites": [[p, enc(s), enc(l)] for p, (s, l) in sorted(self.pivots.items())]}

    # -- rewriting ---------------------------------------------------------------

    def rewrite(self, i: int, n: int) -> Dict[Generator, Q]:
        """The mode ``b_i[n]`` as a combination of symbols."""
        key = (i, n)
        hit = self._rewrites.get(key)
        if hit is not None:
            return hit
        if i in self.constants:
            out = {(self.names[i], -1): Q(1)} if n == -1 else {}
        elif i in self.pivots:
            same, lower = self.pivots[i]
            out = {}
            for t, c in same.items():
                axpy(out, c, self.rewrite(t, n))
            if n:
                for k, c in lower.items():
                    axpy(out, n * c, self.rewrite(k, n - 1))
        else:
            out = {(self.names[i], n): Q(1)}
        self._rewrites[key] = out
        return out

    def rewrite_coords(self, coords: Coords, n: int) -> Dict[Generator, Q]:
        out: Dict[Generator, Q] = {}
        for t, c in coords.items():
            axpy(out, c, self.rewrite(t, n))
        return out

    def element(self, symbols: Dict[Generator, Q], p: int = EXACT) -> AlgebraElement:
        """A combination of symbols as an element of the envelope mod ``A_p``."""
        env = self.envelope
        terms = {}
        for g, c in symbols.items():
            code = env.encode(g)
            if c and env.degree(code) < p:
                terms[(code,)] = c
        return AlgebraElement(env, terms, p)

    def mode(self, i: int, n: int, p: int = EXACT) -> AlgebraElement:
        return self.element(self.rewrite(i, n), p)

    # -- bracket -----------------------------------------------------------------

    def symbol_bracket(self, x: Generator, y: Generator) -> Dict[Generator, Q]:
        (fx, m), (fy, n) = x, y
        i, j = self.index[fx], self.index[fy]
        V = self.V
        out: Dict[Generator, Q] = {}
        try:
            N = V.order(i, j)
            for k in range(N):
                c = binomial(m, k)
                if c:
                    for t, ct in V.product(i, j, k).items():
                        axpy(out, c * ct, self.rewrite(t, m + n - k))
        except MissingConstant as e:
            raise BracketUnavailable(f"[{fx}[{m}], {fy}[{n}]]: {e}") from None
        return out

    def bracket_symbols(self, x: Dict[Generator, Q], y: Dict[Generator, Q]) -> Dict[Generator, Q]:
        out: Dict[Generator, Q] = {}
        pres = self.presentation
        for gx, cx in x.items():
            for gy, cy in y.items():
                axpy(out, cx * cy, pres.bracket(gx, gy))
        return out

    # -- fields ------------------------------------------------------------------

    def field(self, i: int) -> Distribution:
        """``b_i(x) = sum_n b_i[n] x^(-n-1)`` on the envelope."""
        f = self._fields.get(i)
        if f is None:
            w = self.V.weights[i]
            if i in self.pivots:
                same, lower = self.pivots[i]
                items = [(c, self.field(t)) for t, c in same.items()]
                items += [(-c, Derivative(self.field(k))) for k, c in lower.items()]
                f = LinearCombination(items, self.envelope)
            else:
                f = GeneratorField(self.envelope, self.names[i], weight=w)
            self._fields[i] = f
        return f

    @property
    def fields(self) -> List[Distribution]:
        return [self.field(i) for i in range(self.V.dim)]

    def basis_index(self, family: str) -> int:
        return self.index[family]

    # -- the two functionals -----------------------------------------------------

    def phi_precision(self, p: int, families: Optional[Iterable[str]] = None) -> int:
        """Smallest ``q`` such that ``phi`` maps ``A_q`` into ``U_p`` on the given
        families, from the continuity witnesses of the base fields."""
        if self.base_fields is None:
            raise PhiPrecisionError("no base fields to substitute")
        q = p
        for name in (families if families is not None else self.index):
            i = self.index[name]
            if i in self.constants:
                continue
            q = max(q, self.base_fields[i].witness(p) + 1 - self.V.weights[i])
        return q

    def phi(self, x: AlgebraElement, p: int, check: bool = True) -> AlgebraElement:
        """Substitute ``b_i[n] -> coeff(b_i, n)`` and multiply mod ``U_p``.

        With ``check`` the element must be known to the precision returned by
        :meth:`phi_precision`; without it ``x`` is taken as an exact
        representative."""
        if self.base_fields is None:
            raise PhiPrecisionError("no base fields to substitute")
        env = self.envelope
        if check:
            fams = {env.decode(g)[0] for mono in x.terms for g in mono}
            q = self.phi_precision(p, fams)
            if x.precision < q:
                raise PhiPrecisionError(f"phi mod U_{p} needs the element mod A_{q}, "
                                        f"it is known mod A_{x.precision}")
        base = self.base_fields[0].algebra
        out = base.zero(p)
        one = base.one(p)
        for mono, c in x.terms.items():
            acc = one
            for g in reversed(mono):
                fam, n = env.decode(g)
                acc = self.base_fields[self.index[fam]].act_on(n, acc, p)
                if not acc:
                    break
            if acc:
                out = out + AlgebraElement(base, {k: c * v for k, v in acc.terms.items()}, p)
        return out

    def rho(self, x: AlgebraElement, vec: Coords) -> Coords:
        """``x`` acting on a vector of basis coordinates through the structure
        constants.  Raises :class:`MissingConstant` past the cutoff."""
        V = self.V
        if vec and x.precision <= max(V.weights[k] for k in vec):
            raise ValueError("rho needs the element known beyond the weight of the vector")
        env = self.envelope
        out: Coords = {}
        for mono, c in x.terms.items():
            v = vec
            for g in reversed(mono):
                fam, n = env.decode(g)
                v = V.act(self.index[fam], n, v)
                if not v:
                    break
            axpy(out, c, v)
        return out

    def smooth_action(self, x: AlgebraElement, i: int) -> Coords:
        return self.rho(x, {i: Q(1)})

    def format(self, symbols: Dict[Generator, Q]) -> str:
        return self.envelope.format(self.element(symbols))


def mode_bracket(mla: ModeLieAlgebra, a: int, m: int, b: int, n: int) -> Dict[Generator, Q]:
    """``[a[m], b[n]]`` for basis indices, arguments rewritten first."""
    return mla.bracket_symbols(mla.rewrite(a, m), mla.rewrite(b, n))


def env_multiply(x: AlgebraElement, y: AlgebraElement, p: int) -> AlgebraElement:
    return x.algebra.multiply(x, y, p)


def phi(mla: ModeLieAlgebra, x: AlgebraElement, p: int) -> AlgebraElement:
    return mla.phi(x, p)


def smooth_action(mla: ModeLieAlgebra, x: AlgebraElement, i: int) -> Coords:
    return mla.smooth_action(x, i)


def jacobi_check(mla: ModeLieAlgebra, range_: int, families: Optional[Sequence[str]] = None) -> CheckReport:
    """Antisymmetry and the Jacobi identity on symbol triples with indices in
    ``[-range_, range_]``.  Triples needing constants past the cutoff are
    skipped; central families are left out since they bracket to zero."""
    pres = mla.presentation
    central = set(pres.central_families())
    fams = [f for f in (families if families is not None else [f.name for f in pres.families])
            if f not in central]
    gens = [(f, n) for f in fams for n in pres.family(f).domain.window(-range_, range_)]
    checked = skipped = 0
    failures = []

    def br(x, y):
        return pres.bracket(x, y)

    for x, y in itertools.combinations_with_replacement(gens, 2):
        try:
            a, b = br(x, y), br(y, x)
        except BracketUnavailable:
            skipped += 1
            continue
        checked += 1
        s = dict(a)
        axpy(s, 1, b)
        if s:
            failures.append({"law": "antisymmetry", "x": list(x), "y": list(y)})
            break
    W = mla.V.weight_cutoff
    w = {f: mla.V.weights[mla.index[f]] for f in fams}
    for x, y, z in itertools.combinations_with_replacement(gens, 3):
        if failures:
            break
        if w[x[0]] + w[y[0]] + w[z[0]] - 2 > W:
            skipped += 1
            continue
        try:
            total: Dict[Generator, Q] = {}
            for u, v, t in ((x, y, z), (y, z, x), (z, x, y)):
                axpy(total, 1, mla.bracket_symbols({u: 1}, br(v, t)))
        except BracketUnavailable:
            skipped += 1
            continue
        checked += 1
        if total:
            failures.append({"law": "jacobi", "x": list(x), "y": list(y), "z": list(z),
                             "residual": mla.format(total)})
    return CheckReport("mode algebra antisymmetry + Jacobi", not failures, checked, failures,
                       {"range": range_, "skipped": skipped})


def _families_in(f: Distribution, out: set) -> set:
    if isinstance(f, GeneratorField):
        out.add(f.family)
    for c in f.children():
        _families_in(c, out)
    return out


def ideal_relation_check(mla: ModeLieAlgebra, a: int, b: int, n: int, window: ModeWindow,
                         p: int) -> CheckReport:
    """Modes of ``(a_(n) b)(x)`` against those of ``a(x)_(n) b(x)``, compared
    under ``rho`` on every basis field and under ``phi`` mod ``U_p``."""
    V = mla.V
    fa, fb = mla.field(a), mla.field(b)
    fams = _families_in(fa, set()) | _families_in(fb, set())
    top = max(V.weights)
    q = max(top + 1, mla.phi_precision(p, fams) if mla.base_fields is not None else 0)
    try:
        coords = V.product(a, b, n)
    except MissingConstant as e:
        return CheckReport(f"ideal relation b{a}_({n})b{b}", False, 0,
                           [{"reason": str(e)}])
    rhs_field = NthProduct(fa, fb, n)
    failures = []
    checked = skipped = 0
    for m in window:
        lhs = mla.element(mla.rewrite_coords(coords, m), q)
        rhs = rhs_field.coeff(m, q)
        for v in range(V.dim):
            try:
                l, r = mla.rho(lhs, {v: Q(1)}), mla.rho(rhs, {v: Q(1)})
            except MissingConstant:
                skipped += 1
                continue
            checked += 1
            if l != r:
                failures.append({"mode": m, "functional": "rho", "vector": v,
                                 "lhs": str(l), "rhs": str(r)})
        if mla.base_fields is not None:
            l, r = mla.phi(lhs, p), mla.phi(rhs, p)
            checked += 1
            if l.terms != r.terms:
                base = l.algebra
                failures.append({"mode": m, "functional": "phi",
                                 "lhs": base.format(l), "rhs": base.format(r)})
    return CheckReport(f"ideal relation b{a}_({n})b{b}", not failures, checked, failures,
                       {"precision": q, "skipped": skipped})
