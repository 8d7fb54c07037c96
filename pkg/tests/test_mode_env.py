import pytest
from gmpy2 import mpq as Q
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from conftest import SMALL
from vertexlab.closure import MissingConstant
from vertexlab.mode_env import (
    ModeLieAlgebra,
    PhiPrecisionError,
    ideal_relation_check,
    jacobi_check,
    mode_bracket,
)


@pytest.fixture(scope="module")
def heis(small_heisenberg):
    return ModeLieAlgebra(small_heisenberg.structure)


@pytest.fixture(scope="module")
def vir(small_virasoro):
    return ModeLieAlgebra(small_virasoro.structure)


def test_symbols_and_constants(heis):
    assert heis.names[1] == "alpha"
    assert sorted(heis.constants) == [0, 5, 16]
    assert heis.presentation.central_families() == ["b0", "b5", "b16"]
    # the derivative field is solved away, its modes rewritten through alpha
    assert 2 in heis.pivots and 2 not in heis.symbol_fields


def test_heisenberg_bracket(heis):
    assert heis.format(mode_bracket(heis, 1, 1, 1, -1)) == "b5"
    assert heis.format(mode_bracket(heis, 1, 2, 1, -2)) == "2*b5"
    assert mode_bracket(heis, 1, 3, 1, 1) == {}


def test_virasoro_bracket(vir):
    assert vir.format(mode_bracket(vir, 1, 1, 1, -1)) == "2*L[-1]"
    assert vir.format(mode_bracket(vir, 1, 3, 1, 1)) == "2*L[3]"


@pytest.mark.parametrize("which", ["heis", "vir"])
def test_jacobi(request, which):
    r = jacobi_check(request.getfixturevalue(which), 3)
    assert r.passed and r.checked > 0


def test_ideal_relation(heis, vir):
    assert ideal_relation_check(heis, 1, 1, 1, SMALL.window, 4).passed
    assert ideal_relation_check(vir, 1, 1, 0, SMALL.window, 4).passed


@pytest.mark.parametrize("n", range(-2, 3))
def test_phi_on_generators(heis, vir, n):
    assert heis.V.space.ops.algebra.format(heis.phi(heis.mode(1, n), 4)) == f"alpha[{n}]"
    assert vir.V.space.ops.algebra.format(vir.phi(vir.mode(1, n), 4)) == f"L[{n - 1}]"


def test_phi_precision_guard(heis):
    x = heis.mode(1, 0, 1)
    with pytest.raises(PhiPrecisionError):
        heis.phi(x, 4)


def test_smooth_action(vir):
    assert vir.smooth_action(vir.mode(1, 1), 1) == {1: Q(2)}
    assert vir.smooth_action(vir.mode(1, 0), 1) == {2: Q(1)}


@settings(max_examples=25, deadline=None)
@given(st.integers(-2, 2), st.integers(-2, 2), st.sampled_from([1, 6]))
def test_rho_respects_brackets(vir, m, n, target):
    # rho([x, y]) = rho(x) rho(y) - rho(y) rho(x) on a basis vector
    p = 5
    x, y = vir.mode(1, m, p), vir.mode(1, n, p)
    env = vir.envelope
    vec = {target: Q(1)}
    try:
        lhs = vir.rho(env.commutator(x, y, p), vec)
        a = vir.rho(x, vir.rho(y, vec))
        b = vir.rho(y, vir.rho(x, vec))
    except MissingConstant:
        assume(False)
    rhs = {k: a.get(k, 0) - b.get(k, 0) for k in set(a) | set(b)}
    assert {k: v for k, v in lhs.items() if v} == {k: v for k, v in rhs.items() if v}
