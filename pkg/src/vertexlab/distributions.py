"""Continuous distributions ``a(w) = sum a_(n) w^{-n-1}`` on a completed
enveloping algebra, as lazily evaluated expression trees.

Coefficients are computed on demand modulo ``U_p`` and memoized per node.
Every node carries a continuity witness ``p -> N(p)`` such that
``a_(n)`` lies in ``U_p`` for all ``n >= N(p)``; the witness is what makes the
infinite sums in n-th products finite.
"""

from __future__ import annotations

from dataclasses import dataclass
from gmpy2 import mpq as Q
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .graded_lie import AlgebraElement, Envelope, binomial, format_scalar, scalar
from .linalg import axpy

NEVER = -(10 ** 9)   # witness of the zero distribution


class NoWitness(Exception):
    """No finite truncation bound can be derived."""


class NotLocal(Exception):
    """Locality could not be certified on the requested window."""


@dataclass(frozen=True)
class ModeWindow:
    lo: int
    hi: int

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError(f"empty window [{self.lo}, {self.hi}]")

    def __iter__(self):
        return iter(range(self.lo, self.hi + 1))

    def __len__(self):
        return self.hi - self.lo + 1

    def doubled(self) -> "ModeWindow":
        return ModeWindow(2 * self.lo, 2 * self.hi)

    def to_json(self):
        return [self.lo, self.hi]


def default_window(weight: int) -> ModeWindow:
    r = 2 * weight + 6
    return ModeWindow(-r, r)


DEFAULT_PRECISION = 6


@dataclass(frozen=True)
class LocalityCertificate:
    """``(z-w)^order [a(z), b(w)]`` vanishes coefficientwise on ``window``
    modulo ``U_precision``."""

    order: int
    window: ModeWindow
    precision: int

    def to_json(self) -> dict:
        return {"order": self.order, "window": self.window.to_json(), "precision": self.precision}


# ---------------------------------------------------------------------------
# expression nodes


class Distribution:
    """Base node.  Subclasses define ``_act`` (the mode ``a_(r)`` applied to
    one sorted monomial mod ``U_p``) and may refine the witness.  Inside the
    act layer monomials are interned ids of the algebra, so ``_act`` takes an
    id and returns a dict keyed by ids.

    ``grade`` is the structural weight (``a_(n)`` is homogeneous of degree
    ``n - grade + 1``) or ``None``; ``leaves`` bounds the number of letters in
    any monomial of any coefficient, since straightening never lengthens a
    word.  Together they give a free witness.
    """

    kind = "abstract"

    def __init__(self, algebra: Envelope, weight: Optional[int], grade: Optional[int] = None,
                 leaves: int = 0):
        self.algebra = algebra
        self.weight = weight
        self.grade = grade
        self.leaves = leaves
        self._coeffs: Dict[int, AlgebraElement] = {}
        self._witness: Dict[int, int] = {}
        # p -> {(r, monomial id): result}
        self._acts: Dict[int, Dict[tuple, Dict[int, Q]]] = {}

    def _act(self, r: int, i: int, p: int) -> Dict[int, Q]:
        alg = self.algebra
        x = self.coeff(r, alg.tail_of_id(i, p))
        y = AlgebraElement(alg, {alg.mono_of(i): 1}, p)
        return {alg.mono_id(m): c for m, c in alg.multiply(x, y, p).terms.items()}

    def _witness_at(self, p: int) -> int:
        raise NotImplementedError

    def _degree_witness(self, p: int) -> Optional[int]:
        if self.grade is None or p < 1:
            return None
        return self.leaves * (p - 1) + self.grade

    def witness(self, p: int) -> int:
        """An ``N`` with ``a_(n)`` in ``U_p`` for every ``n >= N``."""
        w = self._witness.get(p)
        if w is None:
            w = self._witness[p] = self._witness_at(p)
        return w

    def act_id(self, r: int, i: int, p: int) -> Dict[int, Q]:
        """``a_(r)`` applied to the interned monomial ``i`` mod ``U_p``; the
        result is shared and must not be mutated."""
        cache = self._acts.get(p)
        if cache is None:
            cache = self._acts[p] = {}
        key = (r, i)
        hit = cache.get(key)
        if hit is None:
            alg = self.algebra
            split = alg.central_split(i)
            if split is not None:
                # central letters commute past every mode
                hit = alg.times_central(self.act_id(r, split[0], p), split[1], p)
            if hit is None:
                if r >= self.witness(alg.tail_of_id(i, p)):
                    hit = {}
                else:
                    hit = self._act(r, i, p)
            cache[key] = hit
        return hit

    def _acts_at(self, p: int) -> Dict[tuple, Dict[int, Q]]:
        cache = self._acts.get(p)
        if cache is None:
            cache = self._acts[p] = {}
        return cache

    # -- native evaluation ---------------------------------------------------------

    def _native(self) -> Optional[int]:
        """Handle of this node in the algebra's kernel, or ``None``."""
        h = self.__dict__.get("_handle", False)
        if h is False:
            k = self.algebra.kernel
            h = self._handle = None if k is None else self._register(k)
        return h

    def _register(self, kernel) -> int:
        return kernel.node_python(self)

    def _native_act(self, r: int, mono: tuple, p: int) -> list:
        # called back by the kernel for node types it does not know
        alg = self.algebra
        return [(alg.mono_of(k), c) for k, c in self.act_id(r, alg.mono_id(mono), p).items()]

    def act(self, r: int, mono, p: int) -> Dict[tuple, Q]:
        """``a_(r) * mono`` mod ``U_p`` for a sorted monomial outside ``U_p``."""
        h = self._native()
        if h is not None:
            return dict(self.algebra.kernel.act_on(h, r, [(mono, 1)], p))
        alg = self.algebra
        return {alg.mono_of(k): c for k, c in self.act_id(r, alg.mono_id(mono), p).items()}

    def act_on(self, r: int, y: AlgebraElement, p: int) -> AlgebraElement:
        """``a_(r) * y`` mod ``U_p``; ``y`` only needs to be known mod ``U_p``."""
        alg = self.algebra
        y = alg.reduce(y, p)
        h = self._native()
        if h is not None:
            return AlgebraElement(alg, dict(alg.kernel.act_on(h, r, list(y.terms.items()), p)), p)
        out: Dict[int, Q] = {}
        for mono, c in y.terms.items():
            axpy(out, c, self.act_id(r, alg.mono_id(mono), p))
        return AlgebraElement(alg, {alg.mono_of(k): c for k, c in out.items()}, p)

    def _compute(self, n: int, p: int) -> AlgebraElement:
        alg = self.algebra
        h = self._native()
        if h is not None:
            return AlgebraElement(alg, dict(alg.kernel.act_on(h, n, [((), 1)], p)), p)
        return AlgebraElement(alg, {alg.mono_of(k): c for k, c in self.act_id(n, 0, p).items()}, p)

    def coeff(self, n: int, p: int) -> AlgebraElement:
        """``a_(n)`` modulo ``U_p``."""
        hit = self._coeffs.get(n)
        if hit is not None and hit.precision >= p:
            return self.algebra.reduce(hit, p)
        if n >= self.witness(p):
            val = self.algebra.zero(p)
        else:
            val = self._compute(n, p)
        if hit is None or p > hit.precision:
            self._coeffs[n] = val
        return val

    def coeff_unchecked(self, n: int, p: int) -> AlgebraElement:
        """Evaluate without consulting the witness (for auditing it)."""
        alg = self.algebra
        return AlgebraElement(alg, {alg.mono_of(k): c for k, c in self._act(n, 0, p).items()}, p)

    # -- algebra of distributions ----------------------------------------------

    def __add__(self, other: "Distribution") -> "Distribution":
        return LinearCombination([(1, self), (1, other)])

    def __sub__(self, other: "Distribution") -> "Distribution":
        return LinearCombination([(1, self), (-1, other)])

    def __rmul__(self, c) -> "Distribution":
        return LinearCombination([(c, self)])

    def __neg__(self) -> "Distribution":
        return LinearCombination([(-1, self)])

    def children(self) -> Sequence["Distribution"]:
        return ()

    def to_json(self) -> dict:
        raise NotImplementedError


class Unit(Distribution):
    """The constant distribution ``1``: ``1_(-1) = 1``, all other modes zero."""

    kind = "unit"

    def __init__(self, algebra: Envelope):
        super().__init__(algebra, 0, 0, 0)

    def _act(self, r, i, p):
        return {i: 1} if r == -1 else {}

    def _register(self, kernel):
        return kernel.node_unit(self)

    def _witness_at(self, p):
        return 0

    def to_json(self):
        return {"kind": self.kind, "weight": 0}


class GeneratorField(Distribution):
    """Mode rule ``n -> scale * family[n + shift]``."""

    kind = "generator"

    def __init__(self, algebra: Envelope, family: str, shift: int = 0, scale=1,
                 weight: Optional[int] = None):
        fam = algebra.presentation.family(family)
        if fam.is_point:
            n0 = fam.domain.bound - shift
            grade = n0 + 1 - fam.degree(fam.domain.bound)
        else:
            grade = 1 - shift - fam.offset if fam.slope == 1 else None
        super().__init__(algebra, grade if weight is None else weight, grade, 1)
        self.family = family
        self.shift = shift
        self.scale = scalar(scale)

    def _act(self, r, i, p):
        alg = self.algebra
        g = alg.code(self.family, r + self.shift)
        if g is None or not self.scale:
            return {}
        res = alg._insert(g, alg.mono_of(i), p)
        k = self.scale
        return {alg.mono_id(m): k * c for m, c in res.items()}

    def _register(self, kernel):
        return kernel.node_generator(self, self.algebra._ranks[self.family], self.shift, self.scale)

    def _witness_at(self, p):
        fam = self.algebra.presentation.family(self.family)
        if not self.scale:
            return NEVER
        inf = float("inf")
        by_degree = p - self.shift - fam.offset if fam.slope == 1 else (-inf if fam.offset >= p else inf)
        d = fam.domain
        by_domain = d.bound - self.shift + 1 if d.kind in ("le", "point") else inf
        if d.kind == "point" and by_degree == -inf:
            by_domain = d.bound - self.shift
        n = min(by_degree, by_domain)
        if n == inf:
            raise NoWitness(f"field on {self.family} has no continuity witness at p={p}")
        return max(int(n), NEVER)

    def to_json(self):
        return {"kind": self.kind, "family": self.family, "shift": self.shift,
                "scale": format_scalar(self.scale), "weight": self.weight}


class LinearCombination(Distribution):
    kind = "combination"

    def __init__(self, items: Iterable[Tuple[object, Distribution]], algebra: Optional[Envelope] = None):
        items = [(scalar(c), d) for c, d in items if scalar(c)]
        if algebra is None:
            if not items:
                raise ValueError("empty combination needs an explicit algebra")
            algebra = items[0][1].algebra
        weights = {d.weight for _, d in items}
        weight = weights.pop() if len(weights) == 1 else (0 if not items else None)
        grades = {d.grade for _, d in items}
        grade = grades.pop() if len(grades) == 1 else (0 if not items else None)
        super().__init__(algebra, weight, grade, max((d.leaves for _, d in items), default=0))
        self.items = items

    def children(self):
        return [d for _, d in self.items]

    def _act(self, r, i, p):
        out: Dict = {}
        for c, d in self.items:
            axpy(out, c, d.act_id(r, i, p))
        return out

    def _register(self, kernel):
        return kernel.node_combination(self, [(c, d._native()) for c, d in self.items])

    def _witness_at(self, p):
        return max((d.witness(p) for _, d in self.items), default=NEVER)

    def to_json(self):
        return {"kind": self.kind, "weight": self.weight,
                "coefficients": [format_scalar(c) for c, _ in self.items],
                "children": [d.to_json() for _, d in self.items]}


def zero_distribution(algebra: Envelope) -> Distribution:
    return LinearCombination([], algebra)


class Derivative(Distribution):
    """``(da)_(n) = -n a_(n-1)``."""

    kind = "derivative"

    def __init__(self, child: Distribution):
        bump = lambda w: None if w is None else w + 1  # noqa: E731
        super().__init__(child.algebra, bump(child.weight), bump(child.grade), child.leaves)
        self.child = child

    def children(self):
        return [self.child]

    def _act(self, r, i, p):
        if r == 0:
            return {}
        return {m: -r * c for m, c in self.child.act_id(r - 1, i, p).items()}

    def _register(self, kernel):
        return kernel.node_derivative(self, self.child._native())

    def _witness_at(self, p):
        w = self.child.witness(p)
        return w if w == NEVER else w + 1

    def to_json(self):
        return {"kind": self.kind, "weight": self.weight, "children": [self.child.to_json()]}


def mode_product(a: Distribution, r: int, b: Distribution, s: int, p: int) -> AlgebraElement:
    """``a_(r) b_(s)`` mod ``U_p``.  Only ``b_(s)`` mod ``U_p`` is materialized;
    ``a_(r)`` acts on it monomial by monomial."""
    return a.act_on(r, b.coeff(s, p), p)


class NthProduct(Distribution):
    """``a_(n) b`` via the mode expansion of the residue formula:

        (a_(n) b)_(m) = sum_j (-1)^j C(n,j) (a_(n-j) b_(m+j) - (-1)^n b_(m+n-j) a_(j))

    Applied to a monomial ``u`` the first sum stops once ``b_(m+j)`` lies in
    ``U_T`` with ``T`` the tail bound of ``u``, and likewise the second.
    """

    kind = "nth_product"

    def __init__(self, a: Distribution, b: Distribution, n: int):
        if a.algebra is not b.algebra:
            raise ValueError("distributions live on different algebras")
        w = None if a.weight is None or b.weight is None else a.weight + b.weight - n - 1
        g = None if a.grade is None or b.grade is None else a.grade + b.grade - n - 1
        super().__init__(a.algebra, w, g, a.leaves + b.leaves)
        self.a, self.b, self.n = a, b, n
        self._plans: Dict[tuple, list] = {}

    def children(self):
        return [self.a, self.b]

    def _plan(self, m: int, T: int, p: int, extra: int):
        """The nonzero terms ``(coeff, inner, inner cache, r_in, outer, outer
        cache, r_out)`` of both j-sums for mode ``m`` on a monomial of tail
        ``T``."""
        key = (m, T, p, extra)
        plan = self._plans.get(key)
        if plan is not None:
            return plan
        a, b, n = self.a, self.b, self.n
        ca, cb = a._acts_at(p), b._acts_at(p)
        plan = []
        # first sum: a_(n-j) b_(m+j); second: b_(m+n-j) a_(j)
        nb = b.witness(T)
        j_hi = nb - m + extra if n < 0 else min(n + 1, nb - m + extra)
        for j in range(max(0, j_hi)):
            c = binomial(n, j)
            if c:
                plan.append((-c if j % 2 else c, b, cb, m + j, a, ca, n - j))
        na = a.witness(T)
        j_hi = na + extra if n < 0 else min(n + 1, na + extra)
        sign = -1 if n % 2 == 0 else 1
        for j in range(max(0, j_hi)):
            c = binomial(n, j)
            if c:
                plan.append((-sign * c if j % 2 else sign * c, a, ca, j, b, cb, m + n - j))
        self._plans[key] = plan
        return plan

    def _act(self, m, i, p, extra: int = 0):
        out: Dict = {}
        get = out.get
        for c, inner, icache, r_in, outer, cache, r_out in self._plan(m, self.algebra.tail_of_id(i, p), p, extra):
            Z = icache.get((r_in, i))
            if Z is None:
                Z = inner.act_id(r_in, i, p)
            if not Z:
                continue
            for z, cz in Z.items():
                A = cache.get((r_out, z))
                if A is None:
                    A = outer.act_id(r_out, z, p)
                if not A:
                    continue
                f = c * cz
                for w, cw in A.items():
                    out[w] = get(w, 0) + f * cw
        return {w: v for w, v in out.items() if v}

    def coeff_extended(self, m: int, p: int, extra: int) -> AlgebraElement:
        """Evaluate with both j-truncations pushed ``extra`` terms further."""
        alg = self.algebra
        h = self._native()
        if h is not None:
            return AlgebraElement(alg, dict(alg.kernel.act_extended(h, m, (), p, extra)), p)
        return AlgebraElement(alg, {alg.mono_of(k): c for k, c in self._act(m, 0, p, extra).items()}, p)

    def _register(self, kernel):
        return kernel.node_nth(self, self.a._native(), self.b._native(), self.n)

    def _witness_at(self, p):
        d = self._degree_witness(p)
        if d is not None:
            return d
        a, b, n = self.a, self.b, self.n
        N = b.witness(p)
        na = a.witness(p)
        j_hi = na if n < 0 else min(n + 1, na)
        for j in range(max(0, j_hi)):
            y = a.coeff(j, p)
            if not y:
                continue
            T = max(p, self.algebra.tail_bound(y, p))
            N = max(N, b.witness(T) - n + j)
        return N

    def to_json(self):
        return {"kind": self.kind, "n": self.n, "weight": self.weight,
                "children": [self.a.to_json(), self.b.to_json()]}


def distribution_from_json(data: dict, algebra: Envelope) -> Distribution:
    kind = data["kind"]
    if kind == "unit":
        return Unit(algebra)
    if kind == "generator":
        return GeneratorField(algebra, data["family"], data["shift"], scalar(data["scale"]), data.get("weight"))
    if kind == "combination":
        kids = [distribution_from_json(c, algebra) for c in data["children"]]
        return LinearCombination(zip([scalar(c) for c in data["coefficients"]], kids), algebra)
    if kind == "derivative":
        return Derivative(distribution_from_json(data["children"][0], algebra))
    if kind == "nth_product":
        a, b = (distribution_from_json(c, algebra) for c in data["children"])
        return NthProduct(a, b, data["n"])
    raise ValueError(f"unknown distribution node {kind!r}")


# ---------------------------------------------------------------------------
# operations


def coeff(a: Distribution, n: int, p: int) -> AlgebraElement:
    return a.coeff(n, p)


def derivative(a: Distribution, k: int = 1) -> Distribution:
    for _ in range(k):
        a = Derivative(a)
    return a


def divided_derivative(a: Distribution, k: int) -> Distribution:
    """``d^k a / k!``."""
    if k == 0:
        return a
    f = 1
    for i in range(2, k + 1):
        f *= i
    return LinearCombination([(Q(1, f), derivative(a, k))])


def binomial_expansion(n: int, direction: str, j: int) -> Q:
    """Coefficient of the ``j``-th term of ``i_{z,w}(z-w)^n`` (``"z"``, i.e.
    ``z^{n-j} w^j``) or of ``i_{w,z}(z-w)^n`` (``"w"``, i.e. ``w^{n-j} z^j``)."""
    if j < 0:
        raise ValueError("term index must be non-negative")
    c = binomial(n, j)
    if direction in ("z", "z-first"):
        return -c if j % 2 else c
    if direction in ("w", "w-first"):
        return -c if (n - j) % 2 else c
    raise ValueError(f"unknown expansion direction {direction!r}")


def commutator_modes(a: Distribution, r: int, b: Distribution, s: int, p: int) -> AlgebraElement:
    """``[a_(r), b_(s)]`` mod ``U_p``."""
    return mode_product(a, r, b, s, p) - mode_product(b, s, a, r, p)


class _CommutatorTable:
    def __init__(self, a, b, p):
        self.a, self.b, self.p = a, b, p
        self._cache: Dict[Tuple[int, int], AlgebraElement] = {}

    def __call__(self, r, s):
        v = self._cache.get((r, s))
        if v is None:
            a, b, p = self.a, self.b, self.p
            if r >= a.witness(p) and s >= b.witness(p):
                v = a.algebra.zero(p)
            else:
                v = commutator_modes(a, r, b, s, p)
            self._cache[(r, s)] = v
        return v


def locality_residual(a: Distribution, b: Distribution, N: int, r: int, s: int, p: int,
                      table=None) -> AlgebraElement:
    """Coefficient of ``z^{-r-1} w^{-s-1}`` in ``(z-w)^N [a(z), b(w)]``."""
    table = table or _CommutatorTable(a, b, p)
    acc = a.algebra.zero(p)
    for k in range(N + 1):
        c = binomial(N, k)
        v = table(r + N - k, s + k)
        if v:
            acc = acc + v.scale(-c if k % 2 else c)
    return acc


def locality_order(a: Distribution, b: Distribution, nmax: int, window: ModeWindow,
                   p: int) -> Optional[LocalityCertificate]:
    """Least ``N <= nmax`` with ``(z-w)^N [a(z), b(w)] = 0`` on the window
    mod ``U_p``, or ``None`` when there is none."""
    table = _CommutatorTable(a, b, p)
    for N in range(nmax + 1):
        if all(not locality_residual(a, b, N, r, s, p, table) for r in window for s in window):
            return LocalityCertificate(N, window, p)
    return None


def nth_product(a: Distribution, b: Distribution, n: int, *, window: Optional[ModeWindow] = None,
                precision: int = DEFAULT_PRECISION, nmax: int = 8) -> NthProduct:
    """``a_(n) b``; when ``window`` is given the pair is first certified local."""
    if window is not None and locality_order(a, b, nmax, window, precision) is None:
        raise NotLocal(f"no locality order <= {nmax} on window [{window.lo}, {window.hi}] mod U_{precision}")
    return NthProduct(a, b, n)


def normally_ordered(a: Distribution, b: Distribution, **kw) -> NthProduct:
    return nth_product(a, b, -1, **kw)


def normally_ordered_split(a: Distribution, b: Distribution, m: int, p: int) -> AlgebraElement:
    """``(a(w)_+ b(w) + b(w) a(w)_-)_(m)`` straight from the creation /
    annihilation split, as an independent route to ``(:ab:)_(m)``."""
    alg = a.algebra
    acc = alg.zero(p)
    # a_+ b: sum over k < 0 of a_(k) b_(m-k-1); b_(l) vanishes for l >= N_b(p)
    k = -1
    while m - k - 1 < b.witness(p):
        v = mode_product(a, k, b, m - k - 1, p)
        if v:
            acc = acc + v
        k -= 1
    for k in range(max(0, a.witness(p))):
        v = mode_product(b, m - k - 1, a, k, p)
        if v:
            acc = acc + v
    return acc


@dataclass
class CheckReport:
    name: str
    passed: bool
    checked: int = 0
    failures: List[dict] = None
    details: dict = None

    def __post_init__(self):
        self.failures = self.failures or []
        self.details = self.details or {}

    def to_json(self) -> dict:
        return {"check": self.name, "status": "pass" if self.passed else "fail",
                "checked": self.checked, "failures": self.failures[:20], **self.details}


def delta_expansion_check(a: Distribution, b: Distribution, window: ModeWindow, p: int,
                          order: Optional[int] = None, nmax: int = 8) -> CheckReport:
    """Compare ``[a_(r), b_(s)]`` with ``sum_{j<N} C(r,j) (a_(j) b)_(r+s-j)``
    for all ``r, s`` in the window."""
    if order is None:
        cert = locality_order(a, b, nmax, window, p)
        if cert is None:
            return CheckReport("delta_expansion", False, 0, [{"reason": "not local"}])
        order = cert.order
    prods = [NthProduct(a, b, j) for j in range(order)]
    checked = 0
    for r in window:
        for s in window:
            lhs = commutator_modes(a, r, b, s, p)
            rhs = a.algebra.zero(p)
            for j, prod in enumerate(prods):
                c = binomial(r, j)
                if c:
                    rhs = rhs + prod.coeff(r + s - j, p).scale(c)
            checked += 1
            if lhs != rhs:
                return CheckReport("delta_expansion", False, checked, [
                    {"r": r, "s": s, "lhs": str(lhs), "rhs": str(rhs)}])
    return CheckReport("delta_expansion", True, checked, details={"order": order})
