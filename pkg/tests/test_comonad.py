import pytest
from gmpy2 import mpq as Q

from vertexlab.comonad import (
    EXACT,
    CoalgebraCandidate,
    E_object,
    bracket_respect_check,
    coalgebra_check,
    comultiplication,
    comultiplication_structure_check,
    compose,
    counit,
    functor_R,
    functoriality_checks,
    gru_check,
    identity,
    locality_nonincrease,
    naturality_checks,
    scale_morphism,
    scaling,
    verify_comonad_laws,
)


@pytest.fixture(scope="module")
def EX(small_heisenberg):
    return E_object(small_heisenberg)


def test_E_object_is_cached_and_mode_level(small_heisenberg, EX):
    assert E_object(small_heisenberg) is EX
    assert EX.is_mode and EX.level == small_heisenberg.level + 1
    assert not small_heisenberg.is_mode


def test_differs(EX):
    g = EX.law_generators()
    x, y = EX.gen(g[3]), EX.gen(g[4])
    assert EX.differs(x, x) is None
    assert EX.differs(x, y) is not None


@pytest.mark.parametrize("name", ["small_heisenberg", "small_virasoro"])
def test_laws(request, name):
    X = request.getfixturevalue(name)
    reports = verify_comonad_laws(X)
    assert [r.passed for r in reports] == [True] * 4
    assert comultiplication_structure_check(X).passed


def test_scaled_comultiplication_breaks_counit_law(small_heisenberg, EX):
    d = comultiplication(small_heisenberg)
    bad = scale_morphism(d, 2)
    eps = counit(EX)
    x = EX.gen(EX.law_generators()[3])
    p = small_heisenberg.profile.precision
    assert EX.differs(eps.apply(d.apply(x, EXACT), p), x) is None
    assert EX.differs(eps.apply(bad.apply(x, EXACT), p), x) is not None


def test_coalgebra(small_heisenberg, EX):
    d = comultiplication(small_heisenberg)
    reports, structure = coalgebra_check(CoalgebraCandidate(EX, d))
    assert all(r.passed for r in reports) and structure is not None
    reports, structure = coalgebra_check(CoalgebraCandidate(EX, scale_morphism(d, 0)))
    assert not all(r.passed for r in reports) and structure is None


def test_scaling_morphisms(small_heisenberg):
    s = scaling(small_heisenberg, {"alpha": 2, "K": 4})
    assert bracket_respect_check(s).passed
    assert all(r.passed for r in naturality_checks(s))
    assert all(r.passed for r in functoriality_checks(s, s))
    assert not bracket_respect_check(scaling(small_heisenberg, {"alpha": 2, "K": 3})).passed


def test_identity_and_composition(small_heisenberg):
    X = small_heisenberg
    s = scaling(X, {"alpha": 2, "K": 4})
    one = identity(X)
    x = X.gen(("alpha", -1))
    p = X.profile.precision
    assert X.differs(compose(one, s).apply(x, p), s.apply(x, p)) is None
    assert X.differs(compose(s, s).apply(x, p), X.algebra.gen("alpha", -1, p, 4)) is None
    assert s.coords(1) == {1: Q(2)}


def test_locality_does_not_increase(small_heisenberg):
    assert locality_nonincrease(small_heisenberg).passed


def test_R_is_a_quantum_field_system(small_virasoro):
    assert functor_R(small_virasoro, 4).quantum_field_check().passed


def test_gru_virasoro(small_virasoro):
    r = gru_check(small_virasoro, 4)
    assert r.passed, r.failures[:2]
