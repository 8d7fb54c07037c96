import pytest
from gmpy2 import mpq as Q
from hypothesis import given, settings
from hypothesis import strategies as st

from vertexlab.distributions import GeneratorField, NthProduct
from vertexlab.graded_lie import (
    AlgebraPresentation,
    BracketRule,
    BracketTerm,
    Envelope,
    GeneratorFamily,
    IndexDomain,
    Poly,
    format_scalar,
    heisenberg,
    validate_presentation,
    virasoro,
)

HEIS = Envelope(heisenberg())
VIR = Envelope(virasoro())


def word_strategy(env, fam, lo=-3, hi=3, size=3):
    g = st.tuples(st.just(fam), st.integers(lo, hi))
    return st.lists(g, min_size=0, max_size=size)


def test_presets_validate():
    assert validate_presentation(heisenberg(), 4).valid
    assert validate_presentation(virasoro(), 4).valid


def test_bad_grading_is_reported():
    a = GeneratorFamily("a")
    rule = BracketRule("a", "a", (BracketTerm(Poly.m() - Poly.n(), "a", (1, 1, 1)),))
    rep = validate_presentation(AlgebraPresentation("bad", (a,), (rule,)), 2)
    assert not rep.valid and rep.failure["kind"] == "grading"


def test_constant_degree_family_rejected():
    f = GeneratorFamily("f", IndexDomain("all"), 0, 0)
    rep = validate_presentation(AlgebraPresentation("inf", (f,)), 2)
    assert not rep.valid and rep.failure["kind"] == "infinite_graded_piece"


def test_straightening_heisenberg():
    p = 10
    x = HEIS.straighten([("alpha", 1), ("alpha", -1)], 1, p)
    want = HEIS.straighten([("alpha", -1), ("alpha", 1)], 1, p) + HEIS.gen("K", 0, p)
    assert x == want
    assert HEIS.format(HEIS.gen("K", 0, p)) == "K"


def test_reduction_drops_left_ideal():
    x = HEIS.straighten([("alpha", -1), ("alpha", 3)], 1, 10)
    assert HEIS.reduce(x, 2).is_zero()
    assert not HEIS.reduce(x, 4).is_zero()


def test_virasoro_commutator():
    p = 10
    c = VIR.commutator(VIR.gen("L", 2, p), VIR.gen("L", -2, p), p)
    want = VIR.gen("L", 0, p, 4) + VIR.gen("C", 0, p, Q(1, 2))
    assert c == want


@settings(max_examples=40, deadline=None)
@given(word_strategy(VIR, "L"), word_strategy(VIR, "L"), word_strategy(VIR, "L"))
def test_multiplication_associative(u, v, w):
    # U_p is only a left ideal, so a left factor must be known exactly; with
    # at most 9 letters of index >= -3 nothing past U_30 can come back below U_3
    p, q = 3, 30
    x, y, z = (VIR.straighten(t, 1, q) for t in (u, v, w))
    lhs = VIR.multiply(VIR.multiply(x, y, q), z, q)
    rhs = VIR.multiply(x, VIR.multiply(y, z, q), q)
    assert VIR.reduce(lhs, p) == VIR.reduce(rhs, p)


@settings(max_examples=40, deadline=None)
@given(st.integers(-4, 4), st.integers(-4, 4))
def test_commutator_of_generators_is_bracket(m, n):
    p = 20
    x, y = VIR.gen("L", m, p), VIR.gen("L", n, p)
    got = VIR.commutator(x, y, p)
    want = VIR.zero(p)
    for (fam, idx), c in virasoro().bracket(("L", m), ("L", n)).items():
        want = want + VIR.gen(fam, idx, p, c)
    assert got == want
    assert VIR.commutator(y, x, p) == -got


def test_presentation_json_roundtrip():
    for pres in (heisenberg(), virasoro()):
        assert AlgebraPresentation.from_json(pres.to_json()) == pres


def test_scalars_serialize_as_fractions():
    assert format_scalar(Q(-3, 6)) == "-1/2"
    assert format_scalar(Q(4)) == "4/1"


@pytest.mark.parametrize("shift,weight", [(0, 1), (-1, 2)])
def test_native_kernel_matches_python(monkeypatch, shift, weight):
    native = Envelope(virasoro())
    if native.kernel is None:
        pytest.skip("native kernel not built")
    monkeypatch.setenv("VERTEXLAB_ENGINE", "python")
    py = Envelope(virasoro())
    assert py.kernel is None
    a, b = GeneratorField(native, "L", shift), GeneratorField(py, "L", shift)
    assert a.weight == weight
    for n in range(-2, 4):
        for m in range(-3, 4):
            x = NthProduct(a, a, n).coeff(m, 5)
            y = NthProduct(b, b, n).coeff(m, 5)
            assert x.terms == y.terms, (n, m)
