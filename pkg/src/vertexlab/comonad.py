"""Objects and morphisms of the category of algebras with a space of mutually
local fields, the functor ``E`` with its counit and comultiplication, and
executable versions of the comonad and coalgebra laws.

An object is an algebra together with generating fields and a truncation
profile; its closure and vertex algebra structure are computed on demand.
``E(X)`` is the mode envelope of ``X``'s closure carrying the fields
``b(x) = sum_n b[n] x^(-n-1)``.  Closures over a mode envelope are read
through ``phi``: every expression is rebuilt on the algebra one level down
and fingerprinted there, so the comparisons bottom out in the concrete
algebra.  Equality of elements of a mode envelope uses both ``rho`` and
``phi`` (see :meth:`CQObject.differs`).

Morphisms are determined by the images of algebra generators.  Laws are
checked on generators: the mode symbols of an object's generating fields
with indices in the profile window.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from gmpy2 import mpq as Q
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .closure import (
    Coords,
    DistributionOps,
    FieldSpace,
    MissingConstant,
    VertexAlgebraStructure,
    dong_closure,
    extract_structure,
)
from .distributions import (
    CheckReport,
    Derivative,
    Distribution,
    GeneratorField,
    LinearCombination,
    LocalityCertificate,
    ModeWindow,
    NthProduct,
    Unit,
    locality_order,
)
from .graded_lie import (
    AlgebraElement,
    AlgebraPresentation,
    BracketUnavailable,
    Envelope,
    Generator,
    format_scalar,
    heisenberg,
    virasoro,
)
from .linalg import Vector, axpy
from .mode_env import EXACT, ModeLieAlgebra


@dataclass(frozen=True)
class Profile:
    window: ModeWindow
    precision: int
    depth: int
    cutoff: int
    nmax: int = 8

    def to_json(self) -> dict:
        return {"window": self.window.to_json(), "precision": self.precision,
                "depth": self.depth, "cutoff": self.cutoff, "nmax": self.nmax}


DEFAULT_PROFILE = Profile(ModeWindow(-6, 6), 6, 2, 4)


def transport(D: Distribution, leaf: Callable[[GeneratorField], Distribution], ops,
              memo: Dict[int, tuple]) -> Distribution:
    """Rebuild the expression ``D`` with ops of another algebra, replacing
    generator fields by ``leaf``."""
    hit = memo.get(id(D))
    if hit is not None:
        return hit[0]
    if isinstance(D, Unit):
        out = ops.unit()
    elif isinstance(D, GeneratorField):
        out = leaf(D)
    elif isinstance(D, LinearCombination):
        out = LinearCombination([(c, transport(d, leaf, ops, memo)) for c, d in D.items], ops.algebra)
    elif isinstance(D, Derivative):
        out = ops.derivative(transport(D.child, leaf, ops, memo))
    elif isinstance(D, NthProduct):
        out = ops.product(transport(D.a, leaf, ops, memo), transport(D.b, leaf, ops, memo), D.n)
    else:
        raise TypeError(f"cannot transport a {type(D).__name__}")
    memo[id(D)] = (out, D)
    return out


def _scaled(c, f: Distribution) -> Distribution:
    return f if c == 1 else LinearCombination([(c, f)], f.algebra)


def _combination(coords: Coords, fields: Sequence[Distribution], algebra: Envelope) -> Distribution:
    items = sorted(coords.items())
    if len(items) == 1 and items[0][1] == 1:
        return fields[items[0][0]]
    return LinearCombination([(c, fields[t]) for t, c in items], algebra)


class ModeOps:
    """Closure operations on a mode envelope, with fingerprints and
    certificates read one level down through ``phi``."""

    def __init__(self, mla: ModeLieAlgebra, parent_ops, profile: Profile):
        self.mla = mla
        self.algebra = mla.envelope
        self.parent_ops = parent_ops
        self.window = profile.window
        self.precision = profile.precision
        self.nmax = profile.nmax
        self._unit = Unit(self.algebra)
        self._products: Dict[tuple, tuple] = {}
        self._derivatives: Dict[int, tuple] = {}
        self._push: Dict[int, tuple] = {}

    def unit(self):
        return self._unit

    def product(self, a, b, n):
        key = (id(a), id(b), n)
        hit = self._products.get(key)
        if hit is None:
            hit = self._products[key] = (NthProduct(a, b, n), a, b)
        return hit[0]

    def derivative(self, a):
        hit = self._derivatives.get(id(a))
        if hit is None:
            hit = self._derivatives[id(a)] = (Derivative(a), a)
        return hit[0]

    def weight(self, a):
        return a.weight

    def _leaf(self, g: GeneratorField) -> Distribution:
        if g.shift:
            raise ValueError("mode fields are not shifted")
        return _scaled(g.scale, self.mla.base_fields[self.mla.index[g.family]])

    def push(self, D: Distribution) -> Distribution:
        """``phi`` applied coefficientwise: the same expression one level down."""
        return transport(D, self._leaf, self.parent_ops, self._push)

    def fingerprint(self, a, window: Optional[ModeWindow] = None) -> Vector:
        return self.parent_ops.fingerprint(self.push(a), window)

    def locality(self, a, b) -> Optional[LocalityCertificate]:
        return self.parent_ops.locality(self.push(a), self.push(b))

    def profile(self) -> dict:
        return {"window": self.window.to_json(), "precision": self.precision, "nmax": self.nmax,
                "read_through": "phi"}


# ---------------------------------------------------------------------------
# objects


class CQObject:
    """An algebra with generating fields and a truncation profile.

    ``parent`` is set for objects produced by :func:`E_object` (the object
    whose closure supplied the mode symbols) and ``mla`` is then the mode Lie
    algebra whose envelope is ``algebra``.
    """

    def __init__(self, algebra: Envelope, generators: Sequence[Distribution], labels: Sequence[str],
                 profile: Profile, provenance: Tuple[str, ...], parent: Optional["CQObject"] = None,
                 mla: Optional[ModeLieAlgebra] = None, structure: Optional[VertexAlgebraStructure] = None):
        self.algebra = algebra
        self.generators = list(generators)
        self.labels = list(labels)
        self.profile = profile
        self.provenance = tuple(provenance)
        self.parent = parent
        self.mla = mla
        self._space: Optional[FieldSpace] = None
        self._structure = structure
        self._E: Optional["CQObject"] = None
        if mla is None:
            self.ops = DistributionOps(algebra, profile.window, profile.precision, profile.nmax)
        else:
            self.ops = ModeOps(mla, parent.space.ops, profile) if parent is not None else None

    @property
    def name(self) -> str:
        return "".join(self.provenance)

    @property
    def level(self) -> int:
        return 0 if self.parent is None else self.parent.level + 1

    @property
    def is_mode(self) -> bool:
        return self.mla is not None

    @property
    def space(self) -> FieldSpace:
        if self._space is None:
            if self.ops is None:
                raise ValueError(f"{self.name} has no algebra to close fields in")
            prof = self.profile
            self._space = dong_closure(self.ops, self.generators, prof.depth, prof.cutoff, self.labels)
        return self._space

    @property
    def structure(self) -> VertexAlgebraStructure:
        if self._structure is None:
            self._structure = extract_structure(self.space)
        return self._structure

    def generator_indices(self) -> List[int]:
        """Closure basis positions of the generating fields (and the unit)."""
        return [0] + [k for k, e in enumerate(self.space.basis) if e.provenance[0] == "generator"]

    def law_generators(self) -> List[Generator]:
        """Algebra generators on which laws are checked."""
        win = self.profile.window
        if self.is_mode:
            mla = self.mla
            idx = self.parent.generator_indices() if self.parent is not None else range(mla.V.dim)
            out = []
            for i in idx:
                if i in mla.pivots:
                    continue
                fam = mla.presentation.family(mla.names[i])
                out += [(fam.name, n) for n in fam.domain.window(win.lo, win.hi)]
            return out
        pres = self.algebra.presentation
        return [(f.name, n) for f in pres.families for n in f.domain.window(win.lo, win.hi)]

    def gen(self, g: Generator) -> AlgebraElement:
        return self.algebra.gen(g[0], g[1], EXACT)

    def differs(self, x: AlgebraElement, y: AlgebraElement) -> Optional[dict]:
        """``None`` if ``x`` and ``y`` agree, else a witness.

        On a concrete algebra this is equality mod ``U_p``.  On a mode
        envelope both ``rho`` (on every basis field of weight below the
        precisions, skipping instances past the cutoff) and ``phi`` must
        agree, the latter judged by the parent object."""
        p = self.profile.precision
        if not self.is_mode:
            a, b = self.algebra.reduce(x, p), self.algebra.reduce(y, p)
            if a.terms != b.terms:
                return {"level": self.level, "lhs": self.algebra.format(a), "rhs": self.algebra.format(b)}
            return None
        mla = self.mla
        V = mla.V
        top = min(x.precision, y.precision)
        for v in range(V.dim):
            if V.weights[v] >= top:
                continue
            try:
                l, r = mla.rho(x, {v: Q(1)}), mla.rho(y, {v: Q(1)})
            except MissingConstant:
                continue
            if l != r:
                return {"level": self.level, "functional": "rho", "vector": v,
                        "lhs": str(l), "rhs": str(r)}
        if self.parent is None or mla.base_fields is None:
            return None
        w = self.parent.differs(mla.phi(x, p, check=False), mla.phi(y, p, check=False))
        if w is not None:
            w = {"functional": "phi", **w}
        return w

    def to_json(self) -> dict:
        return {"object": self.name, "provenance": list(self.provenance), "level": self.level,
                "profile": self.profile.to_json(), "generators": self.labels,
                "algebra": self.algebra.presentation.name}


def preset_object(name: str, profile: Profile = DEFAULT_PROFILE) -> CQObject:
    """The Heisenberg field ``alpha``, the Virasoro field ``L`` or the unit
    object on the scalars."""
    if name == "heisenberg":
        A = Envelope(heisenberg())
        return CQObject(A, [GeneratorField(A, "alpha", 0)], ["alpha"], profile, ("heisenberg",))
    if name == "virasoro":
        A = Envelope(virasoro())
        return CQObject(A, [GeneratorField(A, "L", -1)], ["L"], profile, ("virasoro",))
    if name in ("unit", "scalars"):
        A = Envelope(AlgebraPresentation("scalars", ()))
        return CQObject(A, [], [], profile, ("scalars",))
    raise KeyError(f"unknown preset {name!r}")


def E_object(X: CQObject) -> CQObject:
    """The mode envelope of ``X``'s closure with the fields ``b(x)``; the
    generating fields are the ``b(x)`` of ``X``'s generators."""
    if X._E is None:
        V = X.structure
        space = X.space
        labels = [e.label for e in space.basis]
        mla = ModeLieAlgebra(V, space.fields, labels, name=f"E{X.name}")
        gens = X.generator_indices()[1:]
        Y = CQObject(mla.envelope, [mla.field(i) for i in gens], [labels[i] for i in gens],
                     X.profile, ("E",) + X.provenance, parent=X, mla=mla)
        X._E = Y
    return X._E


def E_power(X: CQObject, k: int) -> CQObject:
    for _ in range(k):
        X = E_object(X)
    return X


def locality_nonincrease(X: CQObject, pairs: Optional[Sequence[Tuple[int, int]]] = None) -> CheckReport:
    """Certified order of ``(a(x), b(x))`` on ``E(X)``'s algebra is at most the
    order of ``(a, b)`` in ``X``.  Defaults to the pairs of generating fields."""
    Y = E_object(X)
    V = X.structure
    prof = X.profile
    mla = Y.mla
    idx = X.generator_indices()
    pairs = pairs if pairs is not None else list(itertools.combinations_with_replacement(idx, 2))
    fails, checked, skipped, orders = [], 0, 0, []
    for i, j in pairs:
        try:
            cert = locality_order(mla.field(i), mla.field(j), prof.nmax, prof.window, prof.precision)
        except BracketUnavailable:
            skipped += 1
            continue
        checked += 1
        src = V.order(i, j)
        got = None if cert is None else cert.order
        orders.append([i, j, got, src])
        if got is None or got > src:
            fails.append({"pair": [i, j], "order": got, "source_order": src})
    return CheckReport("locality order non-increase under E", not fails, checked, fails,
                       {"orders": orders, "skipped": skipped})


# ---------------------------------------------------------------------------
# morphisms


class CQMorphism:
    """A morphism given by generator images.

    ``image(g, p)`` is the image of an algebra generator (exact, or mod the
    target's ``p``); ``left(g, y, p)`` multiplies a target element by it on
    the left, which substitution morphisms override to act through field
    modes.  ``coords(i)`` gives the image of the source's ``i``-th closure
    basis field in the target's closure basis.
    """

    def __init__(self, source: CQObject, target: CQObject, name: str,
                 image: Callable[[Generator, int], AlgebraElement],
                 coords: Callable[[int], Optional[Coords]],
                 left: Optional[Callable[[Generator, AlgebraElement, int], AlgebraElement]] = None,
                 witness: Callable[[int], int] = lambda p: p):
        self.source, self.target, self.name = source, target, name
        self._image = image
        self._coords = coords
        self._left = left
        self.witness = witness
        self._coord_cache: Dict[int, Optional[Coords]] = {}

    def image(self, g: Generator, p: int = EXACT) -> AlgebraElement:
        return self._image(g, p)

    def coords(self, i: int) -> Optional[Coords]:
        if i not in self._coord_cache:
            self._coord_cache[i] = self._coords(i)
        return self._coord_cache[i]

    def apply(self, x: AlgebraElement, p: int) -> AlgebraElement:
        src, tgt = self.source.algebra, self.target.algebra
        out = tgt.zero(p)
        for mono, c in x.terms.items():
            acc = tgt.one(p)
            for code in reversed(mono):
                g = src.decode(code)
                if self._left is not None:
                    acc = self._left(g, acc, p)
                else:
                    acc = tgt.multiply(self.image(g, p), acc, p)
                if not acc:
                    break
            if acc:
                out = out + AlgebraElement(tgt, {k: c * v for k, v in acc.terms.items()}, acc.precision)
        return out

    def __repr__(self):
        return f"<{self.name}: {self.source.name} -> {self.target.name}>"


def _express(space: FieldSpace, D: Distribution) -> Optional[Coords]:
    return space.express(D)


def identity(X: CQObject) -> CQMorphism:
    return CQMorphism(X, X, f"id_{X.name}", lambda g, p: X.algebra.gen(g[0], g[1], p),
                      lambda i: {i: Q(1)})


def compose(f: CQMorphism, g: CQMorphism) -> CQMorphism:
    """``g o f``."""
    if f.target is not g.source:
        raise ValueError("morphisms do not compose")

    def coords(i):
        c = f.coords(i)
        if c is None:
            return None
        out: Coords = {}
        for t, ct in c.items():
            d = g.coords(t)
            if d is None:
                return None
            axpy(out, ct, d)
        return out

    def image(gen, p):
        return g.apply(f.image(gen, p), p)

    return CQMorphism(f.source, g.target, f"{g.name}.{f.name}", image, coords,
                      witness=lambda p: f.witness(g.witness(p)))


def scaling(X: CQObject, factors: Dict[str, object], name: str = "scale") -> CQMorphism:
    """The algebra automorphism ``fam[n] -> factors[fam] * fam[n]`` of a
    concrete object; the field map is found by rebuilding each closure field
    with scaled generator fields."""
    if X.is_mode:
        raise ValueError("scalings are defined on concrete objects")
    A = X.algebra
    fac = {f.name: Q(factors.get(f.name, 1)) for f in A.presentation.families}
    memo: Dict[int, tuple] = {}

    def leaf(g: GeneratorField):
        return GeneratorField(A, g.family, g.shift, g.scale * fac[g.family], weight=g.weight)

    def coords(i):
        return _express(X.space, transport(X.space.basis[i].field, leaf, X.space.ops, memo))

    return CQMorphism(X, X, name, lambda g, p: A.gen(g[0], g[1], p, fac[g[0]]), coords)


def bracket_respect_check(f: CQMorphism, indices: Sequence[int] = range(-3, 4)) -> CheckReport:
    """``f([x, y]) = [f(x), f(y)]`` on sampled generator pairs."""
    src = f.source
    A, B = src.algebra, f.target.algebra
    p = src.profile.precision
    gens = [(fam.name, n) for fam in A.presentation.families
            for n in fam.domain.window(min(indices), max(indices))]
    fails, checked = [], 0
    for x, y in itertools.combinations(gens, 2):
        try:
            X, Y = A.gen(*x, EXACT), A.gen(*y, EXACT)
            lhs = f.apply(A.commutator(X, Y, EXACT), p)
            fx, fy = f.image(x, p), f.image(y, p)
            rhs = B.commutator(fx, fy, p)
        except BracketUnavailable:
            continue
        checked += 1
        lhs, rhs = B.reduce(lhs, p), B.reduce(rhs, p)
        if lhs.terms != rhs.terms:
            fails.append({"x": list(x), "y": list(y), "lhs": B.format(lhs), "rhs": B.format(rhs)})
    return CheckReport(f"{f.name} respects brackets", not fails, checked, fails)


def counit(X: CQObject) -> CQMorphism:
    """``epsilon_X : E(X) -> X``, substituting ``b[n] -> b_(n)``."""
    Y = E_object(X)
    mla = Y.mla

    def base(g):
        return mla.base_fields[mla.index[g[0]]]

    def image(g, p):
        return base(g).coeff(g[1], p)

    def left(g, acc, p):
        return base(g).act_on(g[1], acc, p)

    def coords(i):
        return _express(X.space, Y.ops.push(Y.space.basis[i].field))

    return CQMorphism(Y, X, f"eps_{X.name}", image, coords, left,
                      witness=lambda p: mla.phi_precision(p))


def comultiplication(X: CQObject) -> CQMorphism:
    """``Delta_X : E(X) -> E(E(X))``, ``b[n] -> (b(x))[n]``: the symbol of the
    field ``b(x)``, located in ``E(X)``'s closure by fingerprint."""
    Y = E_object(X)
    Z = E_object(Y)
    m1, m2 = Y.mla, Z.mla
    hat: Dict[int, Optional[Coords]] = {}

    def hat_coords(i):
        if i not in hat:
            hat[i] = _express(Y.space, m1.field(i))
        return hat[i]

    def image(g, p):
        i = m1.index[g[0]]
        c = hat_coords(i)
        if c is None:
            raise ValueError(f"{m1.labels[i]}(x) is not in the closure of {Y.name}")
        return m2.element(m2.rewrite_coords(c, g[1]), p)

    memo: Dict[int, tuple] = {}

    def leaf(g: GeneratorField):
        c = hat_coords(m1.index[g.family])
        if c is None:
            raise ValueError(f"{g.family}(x) is not in the closure of {Y.name}")
        return _scaled(g.scale, _combination(c, m2.fields, m2.envelope))

    def coords(i):
        return _express(Z.space, transport(Y.space.basis[i].field, leaf, Z.ops, memo))

    return CQMorphism(Y, Z, f"Delta_{X.name}", image, coords)


def E_morphism(f: CQMorphism) -> CQMorphism:
    """``E(f) : E(X) -> E(Y)``, ``b[n] -> (f b)[n]`` with ``f b`` expanded in
    ``Y``'s closure basis."""
    EX, EY = E_object(f.source), E_object(f.target)
    mx, my = EX.mla, EY.mla

    def fc(i):
        c = f.coords(i)
        if c is None:
            raise ValueError(f"{f.name} does not map {mx.labels[i]} into the closure of {f.target.name}")
        return c

    def image(g, p):
        return my.element(my.rewrite_coords(fc(mx.index[g[0]]), g[1]), p)

    memo: Dict[int, tuple] = {}

    def leaf(g: GeneratorField):
        return _scaled(g.scale, _combination(fc(mx.index[g.family]), my.fields, my.envelope))

    def coords(i):
        return _express(EY.space, transport(EX.space.basis[i].field, leaf, EY.ops, memo))

    return CQMorphism(EX, EY, f"E({f.name})", image, coords)


# ---------------------------------------------------------------------------
# laws


def _law(name: str, obj: CQObject, gens: Sequence[Generator],
         lhs: Callable[[AlgebraElement], AlgebraElement],
         rhs: Callable[[AlgebraElement], AlgebraElement]) -> CheckReport:
    fails = []
    checked = 0
    for g in gens:
        x = g if isinstance(g, AlgebraElement) else obj.gen(g)
        try:
            w = obj.differs(lhs(x), rhs(x))
        except (BracketUnavailable, MissingConstant, ValueError) as e:
            w = {"error": str(e)}
        checked += 1
        if w is not None:
            where = obj.algebra.format(x) if isinstance(g, AlgebraElement) else list(g)
            fails.append({"generator": where, **w})
            break
    return CheckReport(name, not fails, checked, fails, {"object": obj.name})


def verify_comonad_laws(X: CQObject) -> List[CheckReport]:
    """Counit laws, coassociativity and invertibility of ``Delta_X``, each on
    generators of the relevant mode envelope."""
    p = X.profile.precision
    EX = E_object(X)
    E2X = E_object(EX)
    E3X = E_object(E2X)
    delta = comultiplication(X)
    eps_E = counit(EX)
    E_eps = E_morphism(counit(X))
    E_delta = E_morphism(delta)
    delta_E = comultiplication(EX)
    gens = EX.law_generators()
    reports = [
        _law("eps_E(X) . Delta_X = Id", EX, gens,
             lambda x: eps_E.apply(delta.apply(x, EXACT), p), lambda x: x),
        _law("E(eps_X) . Delta_X = Id", EX, gens,
             lambda x: E_eps.apply(delta.apply(x, EXACT), EXACT), lambda x: x),
    ]
    # coassociativity lands in E^3(X): both sides are applied to Delta_X(x)
    reports.append(_law("E(Delta_X) . Delta_X = Delta_E(X) . Delta_X", E3X,
                        [delta.apply(EX.gen(g), EXACT) for g in gens],
                        lambda d: E_delta.apply(d, EXACT), lambda d: delta_E.apply(d, EXACT)))
    reports.append(_law("Delta_X . eps_E(X) = Id", E2X, E2X.law_generators(),
                        lambda t: delta.apply(eps_E.apply(t, p), p), lambda t: t))
    for r in reports:
        r.details["profile"] = X.profile.to_json()
    return reports


def comultiplication_structure_check(X: CQObject) -> CheckReport:
    """``Delta`` matches structure constants: the closure of the fields
    ``b(x)`` reproduces ``X``'s basis and table exactly."""
    V0 = X.structure
    V1 = E_object(X).structure
    s0 = [e.provenance for e in X.space.basis]
    s1 = [e.provenance for e in E_object(X).space.basis]
    fails = []
    if s0 != s1:
        fails.append({"reason": "basis provenance differs", "lhs": len(s0), "rhs": len(s1)})
    else:
        t0, t1 = V0.table_key(), V1.table_key()
        for k in sorted(set(t0) | set(t1)):
            if t0.get(k) != t1.get(k):
                fails.append({"constant": list(k)})
                break
    return CheckReport("structure constants of F-hat match F", not fails, len(V0.table), fails)


# ---------------------------------------------------------------------------
# coalgebras


@dataclass
class CoalgebraCandidate:
    X: CQObject
    theta: CQMorphism


def scale_morphism(f: CQMorphism, c) -> CQMorphism:
    """``c * f`` on generators, a degenerate map for ``c = 0``."""
    c = Q(c)
    return CQMorphism(f.source, f.target, f"{c}*{f.name}",
                      lambda g, p: AlgebraElement(f.target.algebra,
                                                  {k: c * v for k, v in f.image(g, p).terms.items() if c * v},
                                                  f.image(g, p).precision),
                      lambda i: None if f.coords(i) is None else {t: c * v for t, v in f.coords(i).items() if c * v})


def coalgebra_check(cand: CoalgebraCandidate) -> Tuple[List[CheckReport], Optional[VertexAlgebraStructure]]:
    """The counit and coassociativity squares for ``theta : X -> E(X)``, plus
    invertibility of ``theta``.  On success returns the vertex algebra
    carried by ``X``'s fields."""
    X, theta = cand.X, cand.theta
    EX = E_object(X)
    if theta.source is not X or theta.target is not EX:
        raise ValueError("theta must map X to E(X)")
    p = X.profile.precision
    eps = counit(X)
    delta = comultiplication(X)
    E_theta = E_morphism(theta)
    gens = X.law_generators()
    reports = [
        _law("eps_X . theta = Id", X, gens, lambda x: eps.apply(theta.apply(x, EXACT), p), lambda x: x),
    ]
    E2X = E_object(EX)
    fails, checked = [], 0
    for g in gens:
        t = theta.apply(X.gen(g), EXACT)
        try:
            w = E2X.differs(E_theta.apply(t, EXACT), delta.apply(t, EXACT))
        except (BracketUnavailable, MissingConstant, ValueError) as e:
            w = {"error": str(e)}
        checked += 1
        if w is not None:
            fails.append({"generator": list(g), **w})
            break
    reports.append(CheckReport("E(theta) . theta = Delta_X . theta", not fails, checked, fails))
    # invertibility: the field map is a bijection of closure bases and eps undoes theta on E(X)
    fails = []
    B = len(X.space.basis)
    rows = [theta.coords(i) for i in range(B)]
    if any(r is None for r in rows) or len(EX.space.basis) != B or _rank(rows) < B:
        fails.append({"reason": "field map of theta is not invertible"})
    else:
        for g in EX.law_generators():
            t = EX.gen(g)
            w = EX.differs(theta.apply(eps.apply(t, p), p), t)
            if w is not None:
                fails.append({"generator": list(g), **w})
                break
    reports.append(CheckReport("theta is an isomorphism", not fails, B, fails))
    ok = all(r.passed for r in reports)
    return reports, (X.structure if ok else None)


def _rank(rows: List[Coords]) -> int:
    from .linalg import SpanBasis
    span = SpanBasis()
    return sum(1 for r in rows if r and span.insert(dict(r)))


def naturality_checks(f: CQMorphism) -> List[CheckReport]:
    """``eps_Y . E(f) = f . eps_X`` and ``Delta_Y . E(f) = E(E(f)) . Delta_X``
    on generators of ``E(X)``."""
    X, Y = f.source, f.target
    p = X.profile.precision
    Ef = E_morphism(f)
    EEf = E_morphism(Ef)
    eX, eY = counit(X), counit(Y)
    dX, dY = comultiplication(X), comultiplication(Y)
    EX = E_object(X)
    gens = EX.law_generators()
    out = []
    fails, checked = [], 0
    for g in gens:
        x = EX.gen(g)
        w = Y.differs(eY.apply(Ef.apply(x, EXACT), p), f.apply(eX.apply(x, p), p))
        checked += 1
        if w is not None:
            fails.append({"generator": list(g), **w})
            break
    out.append(CheckReport(f"eps natural along {f.name}", not fails, checked, fails))
    fails, checked = [], 0
    E2Y = E_object(E_object(Y))
    for g in gens:
        x = EX.gen(g)
        w = E2Y.differs(dY.apply(Ef.apply(x, EXACT), EXACT), EEf.apply(dX.apply(x, EXACT), EXACT))
        checked += 1
        if w is not None:
            fails.append({"generator": list(g), **w})
            break
    out.append(CheckReport(f"Delta natural along {f.name}", not fails, checked, fails))
    return out


def functoriality_checks(f: CQMorphism, g: CQMorphism) -> List[CheckReport]:
    """``E(id) = id`` and ``E(g . f) = E(g) . E(f)`` on generators."""
    X = f.source
    EX = E_object(X)
    gens = EX.law_generators()
    Eid = E_morphism(identity(X))
    Egf = E_morphism(compose(f, g))
    EgEf = compose(E_morphism(f), E_morphism(g))
    out = []
    for name, m1, m2, tgt in (("E(id) = id", Eid, identity(EX), EX),
                              ("E(g.f) = E(g).E(f)", Egf, EgEf, E_object(g.target))):
        fails, checked = [], 0
        for gen in gens:
            x = EX.gen(gen)
            a, b = m1.apply(x, EXACT), m2.apply(x, EXACT)
            checked += 1
            if a.terms != b.terms:
                fails.append({"generator": list(gen), "lhs": tgt.algebra.format(a),
                              "rhs": tgt.algebra.format(b)})
                break
        out.append(CheckReport(name, not fails, checked, fails))
    return out


# ---------------------------------------------------------------------------
# the functors R, G, U


class PrevertexObject:
    """A finite piece of ``W = sum_{p <= P} U/U_p`` with fields acting by left
    multiplication.

    For a mode-envelope object the summands are realized through ``phi`` on
    the concrete algebra at the bottom of its provenance chain, since its own
    quotients are only known up to the relations imposed by ``phi`` and
    ``rho``.
    """

    def __init__(self, source: CQObject, P: int, creation_depth: int = 1):
        self.source = source
        self.P = P
        base = source
        push: Callable[[Distribution], Distribution] = lambda D: D  # noqa: E731
        while base.is_mode:
            ops = base.ops
            push = (lambda f, o: (lambda D: f(o.push(D))))(push, ops)
            base = base.parent
        self.base = base
        self.algebra = base.algebra
        self.base_ops = base.space.ops if base.generators else base.ops
        self._push = push
        self.fields = [push(f) for f in source.generators]
        self.labels = list(source.labels)
        self.vectors = {p: self._spanning(p, creation_depth) for p in range(1, P + 1)}

    def _spanning(self, p: int, depth: int) -> List[tuple]:
        """``1`` and the single generators of degree in ``[-depth, p-1]``."""
        A = self.algebra
        out = [()]
        for fam in A.presentation.families:
            for n in fam.domain.window(-depth - 2, p + 2):
                c = A.code(fam.name, n)
                if c is not None and -depth <= A.degree(c) < p:
                    out.append((c,))
        return sorted(set(out))

    def act(self, field: Distribution, n: int, p: int, mono: tuple) -> Dict[tuple, Q]:
        y = AlgebraElement(self.algebra, {mono: Q(1)}, p)
        return field.act_on(n, y, p).terms

    def quantum_field_check(self) -> CheckReport:
        """Each field's modes annihilate each spanning vector from some index on."""
        A = self.algebra
        fails, checked, indices = [], 0, []
        for k, f in enumerate(self.fields):
            for p, vecs in self.vectors.items():
                for mono in vecs:
                    u = AlgebraElement(A, {mono: Q(1)}, p)
                    N = f.witness(A.tail_bound(u, p))
                    checked += 1
                    if self.act(f, N, p, mono) or self.act(f, N + 1, p, mono):
                        fails.append({"field": k, "p": p, "vector": A.format_monomial(mono), "N": N})
                    indices.append(N)
        return CheckReport("F_1 consists of quantum fields", not fails, checked, fails,
                           {"max_annihilation_index": max(indices, default=None)})

    def ops(self) -> "ModuleOps":
        return ModuleOps(self)


class ModuleOps:
    """Closure operations for fields acting on a prevertex object: the
    fingerprint of a field is its action on the spanning vectors of every
    summand."""

    def __init__(self, W: PrevertexObject):
        self.W = W
        base = W.base_ops
        self.algebra = base.algebra
        self.window = base.window
        self.precision = W.P
        self.nmax = base.nmax
        self._base = base

    def unit(self):
        return self._base.unit()

    def product(self, a, b, n):
        return self._base.product(a, b, n)

    def derivative(self, a):
        return self._base.derivative(a)

    def weight(self, a):
        return a.weight

    def fingerprint(self, a, window: Optional[ModeWindow] = None) -> Vector:
        out: Vector = {}
        for p, vecs in self.W.vectors.items():
            for mono in vecs:
                for n in (window or self.window):
                    for k, c in self.W.act(a, n, p, mono).items():
                        out[(p, mono, n, k)] = c
        return out

    def locality(self, a, b):
        return self._base.locality(a, b)

    def profile(self) -> dict:
        return {"window": self.window.to_json(), "summands": self.W.P, "nmax": self.nmax,
                "vectors": sum(len(v) for v in self.W.vectors.values())}


def functor_R(X: CQObject, P: int, creation_depth: int = 1) -> PrevertexObject:
    return PrevertexObject(X, P, creation_depth)


def functor_G(W: PrevertexObject, depth: Optional[int] = None,
              cutoff: Optional[int] = None) -> VertexAlgebraStructure:
    """Closure of the fields of ``W`` as operators on ``W``."""
    prof = W.source.profile
    space = dong_closure(W.ops(), W.fields, prof.depth if depth is None else depth,
                         prof.cutoff if cutoff is None else cutoff, W.labels)
    return extract_structure(space)


def functor_U(V: VertexAlgebraStructure, source: Optional[CQObject] = None,
              profile: Optional[Profile] = None) -> CQObject:
    """The mode envelope of ``V`` with the fields ``b(w)``; with ``source``
    (the object ``V`` was extracted from) it is ``E(source)``.

    The generating set is the fields of ``V``'s own generators; their closure
    is all of ``V``."""
    if source is not None:
        if source.structure is not V:
            raise ValueError("V is not the structure of the given source")
        return E_object(source)
    mla = ModeLieAlgebra(V)
    gens = [k for k, e in enumerate(V.space.basis) if e.provenance[0] == "generator"] if V.space else []
    return CQObject(mla.envelope, [mla.field(i) for i in gens], [mla.labels[i] for i in gens],
                    profile or DEFAULT_PROFILE, ("U",), mla=mla, structure=V)


def table_comparison(V: VertexAlgebraStructure, W: VertexAlgebraStructure, name: str) -> CheckReport:
    fails = []
    pv = [e.provenance for e in V.space.basis] if V.space else None
    pw = [e.provenance for e in W.space.basis] if W.space else None
    if V.weights != W.weights or (pv is not None and pw is not None and pv != pw):
        fails.append({"reason": "bases differ", "lhs": V.weights, "rhs": W.weights})
    else:
        a, b = V.table_key(), W.table_key()
        for k in sorted(set(a) | set(b)):
            if a.get(k) != b.get(k):
                fails.append({"constant": list(k),
                              "lhs": {str(t): format_scalar(c) for t, c in (a.get(k) or {}).items()},
                              "rhs": {str(t): format_scalar(c) for t, c in (b.get(k) or {}).items()}})
                if len(fails) > 5:
                    break
        if V.orders != W.orders:
            fails.append({"reason": "locality orders differ"})
    return CheckReport(name, not fails, len(V.table), fails)


def gru_check(X: CQObject, P: int = 4, creation_depth: int = 1) -> CheckReport:
    """``G(R(U(V)))`` against ``V`` for ``V`` the structure of ``X``."""
    V = X.structure
    W = functor_R(functor_U(V, X), P, creation_depth)
    VG = functor_G(W)
    r = table_comparison(V, VG, "GRU(V) = V")
    r.details["summands"] = P
    r.details["vectors"] = sum(len(v) for v in W.vectors.values())
    return r
