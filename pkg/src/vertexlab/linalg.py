"""Exact sparse linear algebra over the rationals.

Vectors are dicts from hashable coordinates to nonzero ``Q`` values.
"""

from __future__ import annotations

from gmpy2 import mpq as Q
from typing import Dict, Hashable, List, Optional, Tuple

Vector = Dict[Hashable, Q]


def _norm(x: Q):
    return int(x) if x.denominator == 1 else x


def axpy(y: Vector, a: Q, x: Vector) -> None:
    """``y += a * x`` in place, dropping zeros."""
    if not a:
        return
    for k, v in x.items():
        w = y.get(k, 0) + a * v
        if w:
            y[k] = w
        else:
            del y[k]


def combine(pairs) -> Vector:
    out: Vector = {}
    for a, x in pairs:
        axpy(out, a, x)
    return out


class SpanBasis:
    """Incremental row echelon form remembering how each reduced row is made
    from the inserted vectors, so membership tests return coordinates."""

    def __init__(self):
        self.vectors: List[Vector] = []
        # pivot -> (reduced row, its expression in inserted vectors)
        self._rows: Dict[Hashable, Tuple[Vector, Dict[int, Q]]] = {}
        self._order: List[Hashable] = []

    def __len__(self) -> int:
        return len(self.vectors)

    def _reduce(self, v: Vector) -> Tuple[Vector, Dict[int, Q]]:
        r = dict(v)
        expr: Dict[int, Q] = {}
        for piv in self._order:
            c = r.get(piv)
            if c is None:
                continue
            row, rexpr = self._rows[piv]
            axpy(r, -c, row)
            axpy(expr, -c, rexpr)
        return r, expr

    def express(self, v: Vector) -> Optional[Dict[int, Q]]:
        """Coordinates of ``v`` in the inserted vectors, or ``None``."""
        r, expr = self._reduce(v)
        if r:
            return None
        return {i: -c for i, c in expr.items() if c}

    def insert(self, v: Vector) -> bool:
        """Append ``v`` if independent; return whether it was appended."""
        r, expr = self._reduce(v)
        if not r:
            return False
        idx = len(self.vectors)
        self.vectors.append(v)
        axpy(expr, 1, {idx: 1})
        piv = next(iter(r))
        c = r[piv]
        c = Q(c)
        row = {k: _norm(x / c) for k, x in r.items()}
        rexpr = {k: _norm(x / c) for k, x in expr.items()}
        for other in self._order:
            orow, oexpr = self._rows[other]
            oc = orow.get(piv)
            if oc is not None:
                axpy(orow, -oc, row)
                axpy(oexpr, -oc, rexpr)
        self._rows[piv] = (row, rexpr)
        self._order.append(piv)
        return True
