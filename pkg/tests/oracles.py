"""Independent oracles: the rank one Fock module with ``K = 1`` and its
Sugawara Virasoro action with ``C = 1``.

Vectors are dicts from partitions (sorted tuples of positive parts, one part
``k`` per creation operator ``alpha[-k]``) to ``Fraction``.  Nothing here
touches the envelope code; envelope elements are compared by pushing them
through :func:`represent`.
"""

from __future__ import annotations

from fractions import Fraction
from math import comb
from typing import Callable, Dict, Iterator, Tuple

Vec = Dict[Tuple[int, ...], Fraction]


def energy(part: Tuple[int, ...]) -> int:
    return sum(part)


def partitions(n: int, largest: int = None) -> Iterator[Tuple[int, ...]]:
    largest = n if largest is None else largest
    if n == 0:
        yield ()
        return
    for k in range(min(n, largest), 0, -1):
        for rest in partitions(n - k, k):
            yield tuple(sorted((k,) + rest))


def basis_below(E: int):
    return [p for e in range(E) for p in partitions(e)]


def add(u: Vec, v: Vec, c=1) -> Vec:
    out = dict(u)
    for k, x in v.items():
        out[k] = out.get(k, 0) + c * x
    return {k: x for k, x in out.items() if x}


def alpha(n: int, v: Vec) -> Vec:
    out: Vec = {}
    for part, c in v.items():
        if n < 0:
            key = tuple(sorted(part + (-n,)))
            out[key] = out.get(key, 0) + c
        elif n > 0 and n in part:
            lst = list(part)
            mult = lst.count(n)
            lst.remove(n)
            key = tuple(lst)
            out[key] = out.get(key, 0) + c * n * mult
    return {k: x for k, x in out.items() if x}


def top_energy(v: Vec) -> int:
    return max((energy(p) for p in v), default=-1)


def virasoro_mode(n: int, v: Vec) -> Vec:
    """Sugawara ``L_n = 1/2 sum_j :alpha[n-j] alpha[j]:``, annihilators on the right."""
    E = top_energy(v)
    out: Vec = {}
    r = n // 2 + 1
    while r <= E:
        out = add(out, alpha(n - r, alpha(r, v)))
        r += 1
    if n % 2 == 0:
        out = add(out, alpha(n // 2, alpha(n // 2, v)), Fraction(1, 2))
    return out


def heisenberg_field(k: int, v: Vec) -> Vec:
    """Mode ``alpha_(k) = alpha[k]``."""
    return alpha(k, v)


def virasoro_field(k: int, v: Vec) -> Vec:
    """Mode ``L_(k) = L[k-1]`` of the weight two field."""
    return virasoro_mode(k - 1, v)


def binom(n: int, j: int) -> Fraction:
    if n >= 0:
        return Fraction(comb(n, j)) if j <= n else Fraction(0)
    num = 1
    for i in range(j):
        num *= n - i
    f = 1
    for i in range(2, j + 1):
        f *= i
    return Fraction(num, f)


def nth_product_mode(a: Callable[[int, Vec], Vec], b: Callable[[int, Vec], Vec], n: int, m: int,
                     v: Vec, weight_b: int, weight_a: int) -> Vec:
    """``(a_(n) b)_(m) v`` from the residue formula, truncated by energy:
    a mode ``x_(k)`` of a weight ``w`` field lowers energy by ``k + 1 - w``."""
    E = top_energy(v)
    out: Vec = {}
    j = 0
    while True:
        if n >= 0 and j > n:
            break
        if (m + j) + 1 - weight_b > E:
            break
        c = binom(n, j) * (-1) ** j
        if c:
            out = add(out, a(n - j, b(m + j, v)), c)
        j += 1
    j = 0
    while True:
        if n >= 0 and j > n:
            break
        if j + 1 - weight_a > E:
            break
        c = binom(n, j) * (-1) ** j * (-1) ** (n + 1)
        if c:
            out = add(out, b(m + n - j, a(j, v)), c)
        j += 1
    return out


def represent(x, v: Vec, which: str) -> Vec:
    """Apply an envelope element to a Fock vector: ``alpha[n]`` / ``L[n]``
    act as above and the central generator as ``1``."""
    alg = x.algebra
    out: Vec = {}
    for mono, c in x.terms.items():
        w = dict(v)
        for code in reversed(mono):
            fam, idx = alg.decode(code)
            if fam in ("K", "C"):
                continue
            w = alpha(idx, w) if which == "heisenberg" else virasoro_mode(idx, w)
            if not w:
                break
        out = add(out, w, Fraction(int(c.numerator), int(c.denominator)))
    return out
