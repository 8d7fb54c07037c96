"""Exact computations with fields on completed enveloping algebras: n-th
products and locality, closures with their vertex algebra structure, the
mode envelope functor and its comonad laws, and a small DSL driving them."""

from .closure import (
    DistributionOps,
    FieldSpace,
    VertexAlgebraStructure,
    close,
    commutator_formula_check,
    dong_closure,
    extract_structure,
    state_field_roundtrip,
    verify_va_axioms,
)
from .comonad import (
    DEFAULT_PROFILE,
    CQMorphism,
    CQObject,
    E_object,
    Profile,
    coalgebra_check,
    comultiplication,
    counit,
    gru_check,
    preset_object,
    verify_comonad_laws,
)
from .distributions import (
    CheckReport,
    Distribution,
    GeneratorField,
    ModeWindow,
    coeff,
    derivative,
    locality_order,
    nth_product,
)
from .dsl import build, fmt, parse
from .graded_lie import AlgebraElement, AlgebraPresentation, Envelope, heisenberg, virasoro
from .mode_env import ModeLieAlgebra

__version__ = "0.1.0"
