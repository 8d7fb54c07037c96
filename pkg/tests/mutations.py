"""Seeded corruptions of a closure's vertex algebra structure, and the
criteria (commutator formula, axioms, comonad laws) that should notice."""

from __future__ import annotations

import dataclasses
import random
from typing import List, Tuple

from gmpy2 import mpq as Q

from vertexlab.closure import (
    BasisEntry,
    DistributionOps,
    FieldSpace,
    commutator_formula_check,
    verify_va_axioms,
)
from vertexlab.comonad import CQObject, comultiplication_structure_check, verify_comonad_laws
from vertexlab.distributions import GeneratorField
from vertexlab.graded_lie import (
    AlgebraElement,
    AlgebraPresentation,
    BracketRule,
    BracketTerm,
    Envelope,
    format_poly,
)

_DELTAS = [Q(1), Q(-1), Q(1, 2), Q(-2, 3), Q(2)]


@dataclasses.dataclass
class Mutant:
    kind: str
    description: str
    V: object
    pairs: List[Tuple[int, int]]
    X: CQObject


def mutate_table(X: CQObject, rng: random.Random) -> Mutant:
    """Perturb one structure constant: a coordinate of some ``b_i (n) b_j``
    on a basis element of the right weight."""
    V = X.structure
    key = rng.choice(sorted(V.table))
    i, j, n = key
    w = V.weights[i] + V.weights[j] - n - 1
    targets = [t for t in range(V.dim) if V.weights[t] == w] or list(range(V.dim))
    t = rng.choice(targets)
    d = rng.choice(_DELTAS)
    W = V.copy()
    W.table = dict(V.table)
    coords = dict(V.table[key])
    coords[t] = coords.get(t, 0) + d
    W.table[key] = {k: c for k, c in coords.items() if c}
    Y = CQObject(X.algebra, X.generators, X.labels, X.profile, X.provenance, structure=W)
    Y._space = X.space
    return Mutant("table", f"table{list(key)}[{t}] += {d}", W, [(min(i, j), max(i, j))], Y)


class Frozen:
    """A closure field with the mode values it had on the original algebra,
    re-read on the perturbed one."""

    def __init__(self, field, target: Envelope):
        self.field, self.target = field, target
        self.weight = field.weight

    def coeff(self, n: int, p: int) -> AlgebraElement:
        src, A = self.field.algebra, self.target
        x = self.field.coeff(n, p)
        return AlgebraElement(A, {tuple(A.encode(src.decode(c)) for c in mono): v
                                  for mono, v in x.terms.items()}, p)


def mutate_bracket(X: CQObject, rng: random.Random) -> Mutant:
    """Perturb one bracket coefficient of the presentation.  The generating
    fields move to the perturbed algebra; every other closure field keeps its
    original mode values, so the table still records the old OPEs."""
    pres = X.algebra.presentation
    rules = [r for r in pres.brackets if r.terms]
    r = rng.choice(rules)
    k = rng.randrange(len(r.terms))
    d = rng.choice(_DELTAS)
    t = r.terms[k]
    coeff = t.coeff * (1 + d) if rng.random() < 0.5 else t.coeff + t.coeff.const(d)
    terms = r.terms[:k] + (BracketTerm(coeff, t.target, t.index, t.delta),) + r.terms[k + 1:]
    rules2 = tuple(BracketRule(x.left, x.right, terms) if x is r else x for x in pres.brackets)
    A = Envelope(AlgebraPresentation(pres.name + "'", pres.families, rules2, pres.unknown))
    V = X.structure
    prof = X.profile
    ops = DistributionOps(A, prof.window, prof.precision, prof.nmax)
    basis = []
    for e in V.space.basis:
        f = e.field
        if e.provenance[0] == "generator":
            f = GeneratorField(A, f.family, f.shift, f.scale, weight=f.weight)
        elif e.provenance[0] != "unit":
            f = Frozen(f, A)
        else:
            f = ops.unit()
        basis.append(BasisEntry(f, e.provenance, e.weight, e.generation, e.label))
    space = dataclasses.replace(V.space, ops=ops, basis=basis)
    W = dataclasses.replace(V, space=space)
    gen = [k for k, e in enumerate(V.space.basis) if e.provenance[0] == "generator"]
    pairs = [(i, j) for i in gen for j in gen if i <= j]
    return Mutant("bracket", f"bracket[{r.left},{r.right}] term {k}: {format_poly(t.coeff)} -> {format_poly(coeff)}",
                  W, pairs, None)


def detect(m: Mutant, window, p: int) -> List[int]:
    """Criteria among 3, 6, 7 that fail on the mutant; stops at the first."""
    r3 = commutator_formula_check(m.V, window, p, pairs=m.pairs)
    if not r3.passed:
        return [3]
    if m.kind == "bracket":
        # the table is untouched, so only the commutator formula can see it
        return []
    if not all(r.passed for r in verify_va_axioms(m.V, m.X.profile.window, m.X.profile.precision)):
        return [6]
    laws = verify_comonad_laws(m.X) + [comultiplication_structure_check(m.X)]
    if not all(r.passed for r in laws):
        return [7]
    return []
