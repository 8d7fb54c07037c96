from fractions import Fraction

from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from vertexlab.closure import DistributionOps
from vertexlab.distributions import (
    Derivative,
    GeneratorField,
    ModeWindow,
    NthProduct,
    Unit,
    binomial_expansion,
    coeff,
    delta_expansion_check,
    derivative,
    locality_order,
    normally_ordered,
    normally_ordered_split,
)
from vertexlab.graded_lie import Envelope, heisenberg, virasoro

H = Envelope(heisenberg())
V = Envelope(virasoro())
alpha = GeneratorField(H, "alpha")
L = GeneratorField(V, "L", -1)
W = ModeWindow(-4, 4)


def same_field(a, b, window=W, p=4):
    ops = DistributionOps(a.algebra, window, p)
    return ops.fingerprint(a) == ops.fingerprint(b)


def test_continuity_witness_kills_high_modes():
    assert coeff(alpha, 3, 2).is_zero()
    assert alpha.witness(2) == 2


@settings(max_examples=30, deadline=None)
@given(st.integers(-6, 6))
def test_derivative_rule(n):
    p = 8
    assert coeff(Derivative(alpha), n, p) == H.gen("alpha", n - 1, p, -n)
    assert coeff(derivative(alpha, 2), n, p) == H.gen("alpha", n - 2, p, n * (n - 1))


def test_first_product_is_level():
    p = 3
    prod = NthProduct(alpha, alpha, 1)
    for m in range(-4, 5):
        want = H.gen("K", 0, p) if m == -1 else H.zero(p)
        assert prod.coeff(m, p) == want


def test_unit_products():
    one = Unit(H)
    assert same_field(NthProduct(alpha, one, -1), alpha)
    assert same_field(NthProduct(alpha, one, -2), Derivative(alpha))
    for n in range(3):
        assert not DistributionOps(H, W, 4).fingerprint(NthProduct(alpha, one, n))
    assert same_field(normally_ordered(one, alpha), alpha)


def test_normal_order_weight_and_split():
    aa = normally_ordered(alpha, alpha)
    assert aa.weight == 2
    for m in range(-4, 5):
        assert aa.coeff(m, 2) == normally_ordered_split(alpha, alpha, m, 2)


def test_normal_order_against_fock():
    aa = normally_ordered(alpha, alpha)
    for m in range(-4, 5):
        x = aa.coeff(m, 4)
        for part in oracles.basis_below(4):
            v = {part: Fraction(1)}
            want = oracles.nth_product_mode(oracles.heisenberg_field, oracles.heisenberg_field, -1, m, v, 1, 1)
            assert oracles.represent(x, v, "heisenberg") == want


@given(st.integers(0, 6), st.integers(0, 6))
def test_polynomial_expansions_agree(n, j):
    if j <= n:
        assert binomial_expansion(n, "z", j) == binomial_expansion(n, "w", n - j)


@given(st.integers(0, 12))
def test_negative_powers(j):
    assert binomial_expansion(-1, "z", j) == 1
    assert binomial_expansion(-2, "z", j) == j + 1


def test_geometric_series_truncated_product():
    # (z - w) * sum_j c_j z^{-1-j} w^j = 1 up to the truncation term
    J = 10
    c = [binomial_expansion(-1, "z", j) for j in range(J)]
    prod = {}
    for j, cj in enumerate(c):
        prod[(-j, j)] = prod.get((-j, j), 0) + cj
        prod[(-1 - j, j + 1)] = prod.get((-1 - j, j + 1), 0) - cj
    prod = {k: v for k, v in prod.items() if v}
    assert prod == {(0, 0): 1, (-J, J): -1}


def test_locality_orders():
    one = Unit(H)
    assert locality_order(one, one, 8, W, 4).order == 0
    assert locality_order(alpha, alpha, 8, ModeWindow(-6, 6), 4).order == 2
    assert locality_order(L, L, 8, ModeWindow(-6, 6), 6).order == 4


def test_delta_expansion():
    assert delta_expansion_check(alpha, alpha, W, 4).passed
    assert delta_expansion_check(L, L, ModeWindow(-3, 3), 5).passed


@settings(max_examples=20, deadline=None)
@given(st.integers(-3, 4))
def test_product_weight(n):
    assert NthProduct(L, L, n).weight == 4 - n - 1
