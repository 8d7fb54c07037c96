"""Finite truncations of the Dong closure of a set of mutually local fields,
the vertex algebra structure they carry, and checks of its axioms.

The closure loop is written against a small ``ops`` interface (unit,
n-th product, derivative, fingerprint, locality) so the same code closes
distributions on an algebra and quantum fields on a plain vector space.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from gmpy2 import mpq as Q
from typing import Dict, List, Optional, Sequence, Tuple

from .distributions import (
    CheckReport,
    Derivative,
    Distribution,
    LocalityCertificate,
    ModeWindow,
    NthProduct,
    Unit,
    commutator_modes,
    locality_order,
)
from .graded_lie import AlgebraElement, Envelope, binomial, format_scalar, scalar
from .linalg import SpanBasis, Vector, axpy

Coords = Dict[int, Q]


class MissingConstant(Exception):
    """A structure constant outside the computed truncation was requested."""


def fingerprint(a: Distribution, window: ModeWindow, p: int) -> Vector:
    """PBW coordinates of ``a_(n)`` mod ``U_p`` for ``n`` in the window, as
    one sparse exact vector keyed by ``(n, monomial)``."""
    out: Vector = {}
    for n in window:
        for mono, c in a.coeff(n, p).terms.items():
            out[(n, mono)] = c
    return out


class DistributionOps:
    """Closure operations for distributions on a completed enveloping algebra."""

    def __init__(self, algebra: Envelope, window: ModeWindow, precision: int, nmax: int = 8):
        self.algebra = algebra
        self.window = window
        self.precision = precision
        self.nmax = nmax
        # products are memoized so later checks reuse their cached coefficients
        self._products: Dict[Tuple[int, int, int], Tuple[NthProduct, object, object]] = {}
        self._derivatives: Dict[int, Tuple[Derivative, object]] = {}
        self._certs: Dict[Tuple[int, int], tuple] = {}
        self._unit = None

    def unit(self):
        if self._unit is None:
            self._unit = Unit(self.algebra)
        return self._unit

    def product(self, a, b, n):
        key = (id(a), id(b), n)
        hit = self._products.get(key)
        if hit is None:
            # the factors are kept alive so their ids stay unique
            hit = self._products[key] = (NthProduct(a, b, n), a, b)
        return hit[0]

    def derivative(self, a):
        hit = self._derivatives.get(id(a))
        if hit is None:
            hit = self._derivatives[id(a)] = (Derivative(a), a)
        return hit[0]

    def weight(self, a) -> Optional[int]:
        return a.weight

    def fingerprint(self, a, window: Optional[ModeWindow] = None) -> Vector:
        return fingerprint(a, window or self.window, self.precision)

    def locality(self, a, b) -> Optional[LocalityCertificate]:
        key = (id(a), id(b))
        hit = self._certs.get(key)
        if hit is None:
            hit = self._certs[key] = (locality_order(a, b, self.nmax, self.window, self.precision), a, b)
        return hit[0]

    def profile(self) -> dict:
        return {"window": self.window.to_json(), "precision": self.precision, "nmax": self.nmax}


@dataclass
class BasisEntry:
    field: object
    provenance: tuple        # ("unit",) | ("generator", k) | ("product", i, j, n) | ("derivative", i)
    weight: Optional[int]
    generation: int
    label: str = ""

    def to_json(self) -> dict:
        return {"provenance": list(self.provenance), "weight": self.weight,
                "generation": self.generation, "label": self.label}


@dataclass
class FieldSpace:
    ops: object
    basis: List[BasisEntry]
    weight_cutoff: int
    depth: int
    certificates: Dict[Tuple[int, int], LocalityCertificate] = field(default_factory=dict)
    locality_failures: List[dict] = field(default_factory=list)
    ambiguities: List[dict] = field(default_factory=list)
    span: SpanBasis = None
    _wide: Dict[int, Vector] = field(default_factory=dict, repr=False)

    def __len__(self):
        return len(self.basis)

    @property
    def fields(self):
        return [e.field for e in self.basis]

    def express(self, a) -> Optional[Coords]:
        """Coordinates of a field in the basis, by fingerprint."""
        return self.span.express(self.ops.fingerprint(a))

    def certificate(self, i: int, j: int) -> Optional[LocalityCertificate]:
        key = (min(i, j), max(i, j))
        if key not in self.certificates:
            cert = self.ops.locality(self.basis[key[0]].field, self.basis[key[1]].field)
            if cert is None:
                self.locality_failures.append({"pair": list(key), "nmax": getattr(self.ops, "nmax", None)})
                return None
            self.certificates[key] = cert
        return self.certificates[key]

    def wide_fingerprint(self, i: int) -> Vector:
        v = self._wide.get(i)
        if v is None:
            v = self._wide[i] = self.ops.fingerprint(self.basis[i].field, self.ops.window.doubled())
        return v

    def label(self, coords: Coords) -> str:
        if not coords:
            return "0"
        parts = []
        for k, c in sorted(coords.items()):
            name = self.basis[k].label or f"b{k}"
            parts.append(name if c == 1 else f"({c})*{name}")
        return " + ".join(parts)

    def to_json(self) -> dict:
        return {
            "basis": [e.to_json() for e in self.basis],
            "weight_cutoff": self.weight_cutoff,
            "depth": self.depth,
            "profile": self.ops.profile(),
            "certificates": [[i, j, c.order] for (i, j), c in sorted(self.certificates.items())],
            "locality_failures": self.locality_failures,
            "ambiguities": self.ambiguities,
        }


def _try_insert(space: FieldSpace, cand, provenance, generation, escalate: bool) -> bool:
    ops = space.ops
    fp = ops.fingerprint(cand)
    coords = space.span.express(fp)
    if coords is None:
        space.span.insert(fp)
        space.basis.append(BasisEntry(cand, provenance, ops.weight(cand), generation))
        space._wide.pop(len(space.basis) - 1, None)
        return True
    if escalate and coords:
        wide = dict(ops.fingerprint(cand, ops.window.doubled()))
        for k, c in coords.items():
            axpy(wide, -c, space.wide_fingerprint(k))
        if wide:
            space.ambiguities.append({"provenance": list(provenance), "coordinates":
                                      {str(k): format_scalar(c) for k, c in coords.items()}})
    return False


def dong_closure(ops, generators: Sequence, depth: int, weight_cutoff: int,
                 labels: Sequence[str] = (), escalate: bool = True) -> FieldSpace:
    """Iterated n-th products of ``generators`` (and the unit) of weight at
    most ``weight_cutoff``, ``depth`` generations deep, then saturated under
    the derivative."""
    space = FieldSpace(ops, [], weight_cutoff, depth, span=SpanBasis())
    _try_insert(space, ops.unit(), ("unit",), 0, False)
    space.basis[0].label = "1"
    for k, g in enumerate(generators):
        if _try_insert(space, g, ("generator", k), 0, False):
            space.basis[-1].label = labels[k] if k < len(labels) else f"g{k}"
    done = len(space.basis)
    seen_pairs = set()
    for gen in range(1, depth + 1):
        current = len(space.basis)
        for i, j in itertools.product(range(current), repeat=2):
            if (i, j) in seen_pairs:
                continue
            seen_pairs.add((i, j))
            a, b = space.basis[i], space.basis[j]
            cert = space.certificate(i, j)
            if cert is None:
                continue
            if a.weight is None or b.weight is None:
                raise ValueError("closure needs homogeneous fields")
            n_min = a.weight + b.weight - 1 - weight_cutoff
            # a window can miss commutators of high-weight fields, so the
            # products are also tried up to the weight bound
            n_top = max(cert.order, a.weight + b.weight) - 1
            for n in range(n_top, n_min - 1, -1):
                cand = ops.product(a.field, b.field, n)
                _try_insert(space, cand, ("product", i, j, n), gen, escalate)
        if len(space.basis) == current and gen > 1:
            break
    # derivative saturation
    i = 0
    while i < len(space.basis):
        e = space.basis[i]
        if e.weight is not None and 0 <= e.weight < weight_cutoff:
            _try_insert(space, ops.derivative(e.field), ("derivative", i), e.generation, escalate)
        i += 1
    _assign_labels(space)
    return space


def _assign_labels(space: FieldSpace) -> None:
    for k, e in enumerate(space.basis):
        if e.label:
            continue
        prov = e.provenance
        name = lambda i: space.basis[i].label or f"b{i}"  # noqa: E731
        if prov[0] == "product":
            _, i, j, n = prov
            e.label = f"({name(i)})_({n})({name(j)})"
        elif prov[0] == "derivative":
            e.label = f"d({name(prov[1])})"
        else:
            e.label = f"b{k}"


def close(generators: Sequence[Distribution], depth: int, weight_cutoff: int, window: ModeWindow,
          p: int, *, algebra: Optional[Envelope] = None, labels: Sequence[str] = (),
          nmax: int = 8, escalate: bool = True) -> FieldSpace:
    if algebra is None:
        if not generators:
            raise ValueError("an empty generator set needs an explicit algebra")
        algebra = generators[0].algebra
    for g in generators:
        if g.algebra is not algebra:
            raise ValueError("generators live on different algebras")
    ops = DistributionOps(algebra, window, p, nmax)
    return dong_closure(ops, list(generators), depth, weight_cutoff, labels, escalate)


# ---------------------------------------------------------------------------
# vertex algebra structure


@dataclass
class VertexAlgebraStructure:
    """Structure constants ``b_i (n) b_j = sum_k c_k b_k`` of a closure,
    stored sparsely for ``n`` below the certified locality order and products
    of weight at most the cutoff."""

    space: FieldSpace
    table: Dict[Tuple[int, int, int], Coords]
    orders: Dict[Tuple[int, int], int]
    weights: List[int]
    weight_cutoff: int
    derivatives: Dict[int, Coords]
    missing: Dict[Tuple[int, int, int], str] = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return len(self.weights)

    def order(self, i: int, j: int) -> int:
        key = (min(i, j), max(i, j))
        try:
            return self.orders[key]
        except KeyError:
            raise MissingConstant(f"no locality certificate for pair {key}") from None

    def product(self, i: int, j: int, n: int) -> Coords:
        if n >= self.order(i, j):
            return {}
        v = self.table.get((i, j, n))
        if v is None:
            reason = self.missing.get((i, j, n), "weight above cutoff")
            raise MissingConstant(f"b{i}_({n}) b{j}: {reason}")
        return v

    def act(self, i: int, n: int, vec: Coords) -> Coords:
        """``b_i (n)`` applied to a vector in basis coordinates."""
        out: Coords = {}
        for k, c in vec.items():
            axpy(out, c, self.product(i, k, n))
        return out

    def act_vec(self, a: Coords, n: int, vec: Coords) -> Coords:
        out: Coords = {}
        for i, c in a.items():
            axpy(out, c, self.act(i, n, vec))
        return out

    def derivative(self, vec: Coords) -> Coords:
        out: Coords = {}
        for k, c in vec.items():
            d = self.derivatives.get(k)
            if d is None:
                raise MissingConstant(f"d(b{k}) is outside the truncation")
            axpy(out, c, d)
        return out

    def copy(self) -> "VertexAlgebraStructure":
        return VertexAlgebraStructure(self.space, {k: dict(v) for k, v in self.table.items()},
                                      dict(self.orders), list(self.weights), self.weight_cutoff,
                                      {k: dict(v) for k, v in self.derivatives.items()}, dict(self.missing))

    def to_json(self) -> dict:
        enc = lambda c: {str(k): format_scalar(v) for k, v in sorted(c.items())}  # noqa: E731
        return {
            "dim": self.dim,
            "weights": self.weights,
            "weight_cutoff": self.weight_cutoff,
            "labels": [e.label for e in self.space.basis] if self.space else None,
            "orders": [[i, j, n] for (i, j), n in sorted(self.orders.items())],
            "table": [[i, j, n, enc(c)] for (i, j, n), c in sorted(self.table.items())],
            "derivatives": [[k, enc(c)] for k, c in sorted(self.derivatives.items())],
            "missing": [[i, j, n, why] for (i, j, n), why in sorted(self.missing.items())],
        }

    @classmethod
    def from_json(cls, data: dict, space: Optional[FieldSpace] = None) -> "VertexAlgebraStructure":
        dec = lambda c: {int(k): scalar(v) for k, v in c.items()}  # noqa: E731
        return cls(
            space,
            {(i, j, n): dec(c) for i, j, n, c in data["table"]},
            {(i, j): n for i, j, n in data["orders"]},
            list(data["weights"]),
            data["weight_cutoff"],
            {k: dec(c) for k, c in data["derivatives"]},
            {(i, j, n): why for i, j, n, why in data["missing"]},
        )

    def table_key(self) -> dict:
        """Canonical comparable form of the structure constants."""
        return {k: v for k, v in self.table.items() if v}


def _product_order(space: FieldSpace, i: int, j: int) -> Optional[int]:
    """Locality order of a pair read off its products: one more than the
    largest ``n`` with ``b_i (n) b_j`` or ``b_j (n) b_i`` nonzero, searching
    below the weight bound ``w_i + w_j`` (products there would have negative
    weight).  ``None`` if the bound itself is violated or weights are unknown."""
    ops = space.ops
    a, b = space.basis[i], space.basis[j]
    if a.weight is None or b.weight is None or a.weight < 0 or b.weight < 0:
        return None
    bound = a.weight + b.weight
    pairs = [(a.field, b.field)] if i == j else [(a.field, b.field), (b.field, a.field)]
    if any(ops.fingerprint(ops.product(x, y, bound)) for x, y in pairs):
        return None
    for n in range(bound - 1, -1, -1):
        if any(ops.fingerprint(ops.product(x, y, n)) for x, y in pairs):
            return n + 1
    return 0


def extract_structure(space: FieldSpace) -> VertexAlgebraStructure:
    """Expand every product ``b_i (n) b_j`` with ``n`` below the locality
    order and weight within the cutoff in the basis.

    The order of a pair is read off its products below the weight bound
    (and raised to its certificate when there is one, since a certificate
    only sees the commutators inside its window).  A pair whose products
    break the weight bound falls back to a certificate alone.
    """
    ops = space.ops
    B = len(space.basis)
    W = space.weight_cutoff
    table: Dict[Tuple[int, int, int], Coords] = {}
    orders: Dict[Tuple[int, int], int] = {}
    missing: Dict[Tuple[int, int, int], str] = {}
    weights = [e.weight for e in space.basis]
    for i, j in itertools.combinations_with_replacement(range(B), 2):
        cert = space.certificates.get((i, j))
        N = _product_order(space, i, j) if i else None
        if N is None:
            cert = cert or space.certificate(i, j)
            if cert is None:
                continue
        if cert is not None:
            N = cert.order if N is None else max(N, cert.order)
        orders[(i, j)] = N
    for i, j in itertools.product(range(B), repeat=2):
        N = orders.get((min(i, j), max(i, j)))
        if N is None:
            continue
        n_min = weights[i] + weights[j] - 1 - W
        for n in range(N - 1, n_min - 1, -1):
            a, b = space.basis[i].field, space.basis[j].field
            if i == 0:
                # the unit acts as the identity in mode -1 and kills the rest
                table[(i, j, n)] = {j: 1} if n == -1 else {}
                continue
            coords = space.express(ops.product(a, b, n))
            if coords is None:
                missing[(i, j, n)] = "product outside the truncated closure"
            else:
                table[(i, j, n)] = coords
    derivs: Dict[int, Coords] = {}
    for k in range(B):
        if weights[k] + 1 <= W or weights[k] == 0:
            c = space.express(ops.derivative(space.basis[k].field))
            if c is not None:
                derivs[k] = c
    return VertexAlgebraStructure(space, table, orders, weights, W, derivs, missing)


# ---------------------------------------------------------------------------
# axiom checks


def _nth_product_of_fields(V: VertexAlgebraStructure, a: int, b: int, n: int, m: int,
                           vec: Coords) -> Coords:
    """``(Y(a)_(n) Y(b))_(m)`` applied to ``vec``, using only mode actions."""
    out: Coords = {}
    # first sum: a_(n-j) b_(m+j) vec, stops once b_(m+j) kills every component
    j = 0
    while True:
        if n >= 0 and j > n:
            break
        bv = V.act(b, m + j, vec)
        if not bv and all(m + j >= V.order(b, k) for k in vec):
            break
        c = binomial(n, j)
        if c and bv:
            axpy(out, -c if j % 2 else c, V.act(a, n - j, bv))
        j += 1
    sign = -1 if n % 2 == 0 else 1
    j = 0
    while True:
        if n >= 0 and j > n:
            break
        if all(j >= V.order(a, k) for k in vec):
            break
        av = V.act(a, j, vec)
        c = binomial(n, j)
        if c and av:
            axpy(out, sign * (-c if j % 2 else c), V.act(b, m + n - j, av))
        j += 1
    return out


def check_compatibility(V: VertexAlgebraStructure, window: ModeWindow,
                        pairs: Optional[Sequence[Tuple[int, int]]] = None,
                        targets: Optional[Sequence[int]] = None) -> CheckReport:
    """``Y(a_(n) b) = Y(a)_(n) Y(b)`` on basis vectors, modes ``m`` in the
    window; instances that need constants outside the truncation are skipped."""
    B = V.dim
    pairs = pairs if pairs is not None else list(itertools.product(range(B), repeat=2))
    targets = targets if targets is not None else range(B)
    checked = skipped = 0
    failures = []
    for a, b in pairs:
        try:
            N = V.order(a, b)
        except MissingConstant:
            continue
        n_min = V.weights[a] + V.weights[b] - 1 - V.weight_cutoff
        for n in range(N - 1, n_min - 1, -1):
            ab = V.table.get((a, b, n))
            if ab is None:
                continue
            for c in targets:
                for m in window:
                    w = V.weights[a] + V.weights[b] + V.weights[c] - n - m - 2
                    if w < 0 or w > V.weight_cutoff:
                        continue
                    try:
                        lhs = V.act_vec(ab, m, {c: 1})
                        rhs = _nth_product_of_fields(V, a, b, n, m, {c: 1})
                    except MissingConstant:
                        skipped += 1
                        continue
                    checked += 1
                    if lhs != rhs:
                        failures.append({"a": a, "b": b, "n": n, "c": c, "m": m,
                                         "lhs": V.space.label(lhs) if V.space else str(lhs),
                                         "rhs": V.space.label(rhs) if V.space else str(rhs)})
    return CheckReport("Y(a_(n)b) = Y(a)_(n)Y(b)", not failures, checked, failures,
                       {"skipped": skipped})


def verify_va_axioms(V: VertexAlgebraStructure, window: ModeWindow, p: int,
                     extra_vanishing: int = 1) -> List[CheckReport]:
    """The vertex algebra axioms on the truncation: vanishing above the
    locality order, vacuum annihilation, the unit axiom, and compatibility of
    the state-field map with n-th products."""
    space = V.space
    ops = space.ops
    B = V.dim
    reports = []

    # (1) a_(n) b = 0 for n >= N
    fails, checked = [], 0
    for i, j in itertools.product(range(B), repeat=2):
        try:
            N = V.order(i, j)
        except MissingConstant:
            fails.append({"pair": [i, j], "reason": "no locality certificate"})
            continue
        for n in range(N, N + 1 + extra_vanishing):
            checked += 1
            if ops.fingerprint(ops.product(space.basis[i].field, space.basis[j].field, n)):
                fails.append({"pair": [i, j], "n": n})
    reports.append(CheckReport("a_(n)b = 0 for n >= N", not fails, checked, fails))

    # (2) a_(n) 1 = 0 for n >= 0
    fails, checked = [], 0
    unit = space.basis[0].field
    for i in range(B):
        for n in range(0, 3):
            checked += 1
            if ops.fingerprint(ops.product(space.basis[i].field, unit, n)):
                fails.append({"a": i, "n": n})
            if n < V.order(i, 0) and V.table.get((i, 0, n)):
                fails.append({"a": i, "n": n, "source": "table"})
    reports.append(CheckReport("a_(n)|0> = 0 for n >= 0", not fails, checked, fails))

    # (3) Y(|0>, w) = Id
    fails, checked = [], 0
    for j in range(B):
        for n in range(min(-1, V.weights[j] - 1 - V.weight_cutoff), V.order(0, j) + 1):
            try:
                got = V.product(0, j, n)
            except MissingConstant:
                continue
            checked += 1
            want = {j: 1} if n == -1 else {}
            if got != want:
                fails.append({"b": j, "n": n})
    reports.append(CheckReport("Y(|0>, w) = Id", not fails, checked, fails))

    # (3') compatibility
    reports.append(check_compatibility(V, window))
    return reports


def commutator_formula_check(V: VertexAlgebraStructure, window: ModeWindow, p: int,
                             pairs: Optional[Sequence[Tuple[int, int]]] = None) -> CheckReport:
    """``[a_(m), b_(n)] = sum_j C(m, j) (a_(j) b)_(m+n-j)`` for basis pairs and
    ``m, n`` in the window, mod ``U_p``.  The left side is computed in the
    algebra; on the right ``a_(j) b`` is expanded with the structure constants
    where the table has them and taken as the product distribution otherwise."""
    space = V.space
    alg = space.ops.algebra
    fields = space.fields
    B = V.dim
    pairs = pairs if pairs is not None else list(itertools.combinations_with_replacement(range(B), 2))
    fails, checked, from_table = [], 0, 0
    for i, j in pairs:
        a, b = fields[i], fields[j]
        try:
            N = V.order(i, j)
        except MissingConstant:
            fails.append({"pair": [i, j], "reason": "no locality order"})
            continue
        prods = []
        for k in range(N):
            coords = V.table.get((i, j, k))
            if coords is not None:
                from_table += 1
                prods.append([(c, fields[t]) for t, c in coords.items()])
            else:
                prods.append([(1, space.ops.product(a, b, k))])
        for m in window:
            for n in window:
                lhs = commutator_modes(a, m, b, n, p)
                rhs: Vector = {}
                for k, terms in enumerate(prods):
                    c = binomial(m, k)
                    if not c:
                        continue
                    for ct, f in terms:
                        axpy(rhs, c * ct, f.coeff(m + n - k, p).terms)
                checked += 1
                if lhs.terms != rhs:
                    fails.append({"pair": [i, j], "m": m, "n": n, "lhs": alg.format(lhs),
                                  "rhs": alg.format(AlgebraElement(alg, rhs, p))})
    return CheckReport("[a_(m), b_(n)] = sum_j C(m,j) (a_(j)b)_(m+n-j)", not fails, checked, fails,
                       {"pairs": len(pairs), "products_from_table": from_table})


def translation_check(V: VertexAlgebraStructure, i: int, window: ModeWindow) -> CheckReport:
    """``[T, a_(n)] = -n a_(n-1)`` on basis fields and ``a_(n)|0> = 0`` for
    ``n >= 0``, with ``T`` the derivative."""
    fails, checked, skipped = [], 0, 0
    for n in range(0, V.order(i, 0) + 1):
        checked += 1
        try:
            if V.product(i, 0, n):
                fails.append({"n": n, "c": 0, "reason": "a_(n)|0> != 0"})
        except MissingConstant:
            pass
    for c in range(V.dim):
        for n in window:
            try:
                e = {c: 1}
                lhs = V.derivative(V.act(i, n, e))
                axpy(lhs, -1, V.act(i, n, V.derivative(e)))
                rhs = {k: -n * v for k, v in V.act(i, n - 1, e).items()}
            except MissingConstant:
                skipped += 1
                continue
            checked += 1
            if {k: v for k, v in lhs.items() if v} != {k: v for k, v in rhs.items() if v}:
                fails.append({"n": n, "c": c})
    return CheckReport(f"[T, a_(n)] = -n a_(n-1) for b{i}", not fails, checked, fails,
                       {"skipped": skipped})


def state_field_roundtrip(V: VertexAlgebraStructure) -> CheckReport:
    """``Y(a, x)|0>`` lies in ``V[[x]]`` and its constant term is ``a``."""
    space = V.space
    fails = []
    for i in range(V.dim):
        try:
            state = V.act(i, -1, {0: 1})
        except MissingConstant:
            fails.append({"a": i, "reason": "a_(-1)|0> outside truncation"})
            continue
        for n in range(0, V.order(i, 0)):
            if V.act(i, n, {0: 1}):
                fails.append({"a": i, "n": n, "reason": "a_(n)|0> != 0"})
        if state != {i: 1}:
            fails.append({"a": i, "got": space.label(state)})
            continue
        if space is not None:
            recon = {}
            for k, c in state.items():
                axpy(recon, c, space.span.vectors[k])
            if recon != space.span.vectors[i]:
                fails.append({"a": i, "reason": "fingerprint mismatch"})
    return CheckReport("eps_V o Y = Id", not fails, V.dim, fails)
