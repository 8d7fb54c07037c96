import json

import pytest

from conftest import SMALL
from vertexlab.closure import (
    VertexAlgebraStructure,
    close,
    commutator_formula_check,
    extract_structure,
    state_field_roundtrip,
    translation_check,
)
from vertexlab.distributions import GeneratorField, ModeWindow, NthProduct
from vertexlab.graded_lie import Envelope, heisenberg


def test_closure_sizes(small_heisenberg, small_virasoro):
    assert len(small_heisenberg.space) == 22
    assert len(small_virasoro.space) == 11
    weights = small_heisenberg.structure.weights
    assert weights[0] == 0 and max(weights) <= 4


def test_basis_is_closed_under_products(small_heisenberg):
    space = small_heisenberg.space
    a = space.basis[1].field
    for n in (-2, -1, 0, 1):
        assert space.express(NthProduct(a, a, n)) is not None


def test_structure_json_roundtrip(small_heisenberg):
    V = small_heisenberg.structure
    data = json.loads(json.dumps(V.to_json()))
    W = VertexAlgebraStructure.from_json(data, V.space)
    assert W.table == V.table and W.orders == V.orders and W.weights == V.weights


@pytest.mark.parametrize("i", [1, 2, 5])
def test_translation(small_heisenberg, i):
    assert translation_check(small_heisenberg.structure, i, SMALL.window).passed


def test_roundtrip_small(small_virasoro):
    assert state_field_roundtrip(small_virasoro.structure).passed


def test_commutator_formula_on_generator_pair(small_virasoro):
    V = small_virasoro.structure
    assert commutator_formula_check(V, SMALL.window, 6, pairs=[(1, 1)]).passed


def test_depth_one_closure():
    A = Envelope(heisenberg())
    space = close([GeneratorField(A, "alpha")], 1, 2, ModeWindow(-3, 3), 3, labels=["alpha"])
    assert not space.locality_failures
    assert [e.provenance[0] for e in space.basis[:2]] == ["unit", "generator"]
    labels = [e.label for e in space.basis]
    assert labels == ["1", "alpha", "(alpha)_(-2)(1)", "(alpha)_(1)(alpha)", "(alpha)_(-1)(alpha)"]
    V = extract_structure(space)
    # the level K is its own weight zero field, distinct from the vacuum
    assert V.weights[3] == 0
    assert V.product(1, 1, 1) == {3: 1} and V.product(1, 1, 0) == {}


def test_mixed_algebras_rejected():
    a = GeneratorField(Envelope(heisenberg()), "alpha")
    b = GeneratorField(Envelope(heisenberg()), "alpha")
    with pytest.raises(ValueError):
        close([a, b], 1, 2, ModeWindow(-2, 2), 2)
