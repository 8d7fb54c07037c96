"""Acceptance criteria 1-10.  Each test records one PASS/FAIL line, shown in
the terminal summary; budgets include building the objects involved."""

import contextlib
import random
import time
from fractions import Fraction

import pytest

import oracles
from conftest import SMALL, record
from mutations import detect, mutate_bracket, mutate_table
from vertexlab.closure import commutator_formula_check, state_field_roundtrip, verify_va_axioms
from vertexlab.comonad import DEFAULT_PROFILE, gru_check, preset_object, verify_comonad_laws
from vertexlab.distributions import Derivative, LinearCombination, NthProduct, divided_derivative

WINDOW = DEFAULT_PROFILE.window
P = DEFAULT_PROFILE.precision


@contextlib.contextmanager
def criterion(number, budget=None):
    info = {"note": ""}
    t0 = time.perf_counter()
    ok = False
    try:
        yield info
        ok = True
    finally:
        dt = time.perf_counter() - t0
        within = budget is None or dt < budget
        note = f"{dt:.1f} s" + (f" (budget {budget} s)" if budget else "") + (f"; {info['note']}" if info["note"] else "")
        print(f"criterion {number}: {'PASS' if ok and within else 'FAIL'}  {note}")
        record(number, ok and within, note)
    assert within, f"criterion {number} took {dt:.1f} s, budget {budget} s"


def fock_agrees(x, which, n, m, field, weight):
    for part in oracles.basis_below(P):
        v = {part: Fraction(1)}
        if oracles.represent(x, v, which) != oracles.nth_product_mode(field, field, n, m, v, weight, weight):
            return False
    return True


def test_criterion_01_heisenberg_ope():
    with criterion(1, budget=5) as info:
        X = preset_object("heisenberg")
        A, a = X.algebra, X.generators[0]
        K = A.gen("K", 0, P)
        checked = 0
        for n in range(0, 9):
            prod = NthProduct(a, a, n)
            for m in WINDOW:
                got = prod.coeff(m, P)
                want = K if (n == 1 and m == -1) else A.zero(P)
                assert got == want, (n, m, A.format(got))
                assert fock_agrees(got, "heisenberg", n, m, oracles.heisenberg_field, 1), (n, m)
                checked += 1
        info["note"] = f"{checked} coefficients, Fock oracle agrees"


def test_criterion_02_virasoro_ope():
    with criterion(2, budget=10) as info:
        X = preset_object("virasoro")
        A, L = X.algebra, X.generators[0]
        half_C = A.gen("C", 0, P, Fraction(1, 2))
        expected = {
            0: lambda m: Derivative(L).coeff(m, P),
            1: lambda m: LinearCombination([(2, L)], A).coeff(m, P),
            2: lambda m: A.zero(P),
            3: lambda m: half_C if m == -1 else A.zero(P),
        }
        for n, want in expected.items():
            prod = NthProduct(L, L, n)
            for m in WINDOW:
                got = prod.coeff(m, P)
                assert got == want(m), (n, m, A.format(got))
                assert fock_agrees(got, "virasoro", n, m, oracles.virasoro_field, 2), (n, m)
        info["note"] = "L_(0..3)L on [-6,6] mod U_6, Sugawara oracle agrees"


def test_criterion_03_commutator_formula():
    with criterion(3, budget=30) as info:
        X = preset_object("heisenberg", SMALL)
        V = X.structure
        r = commutator_formula_check(V, SMALL.window, SMALL.precision)
        assert r.passed, r.failures[:3]
        info["note"] = f"{V.dim} fields, {r.checked} (pair, m, n) instances"


@pytest.mark.parametrize("name", ["heisenberg", "virasoro"])
def test_criterion_04_unit_derivative(name):
    with criterion(4) as info:
        X = preset_object(name)
        ops, space = X.space.ops, X.space
        unit = space.basis[0].field
        for e in space.basis:
            for k in range(5):
                lhs = ops.fingerprint(ops.product(e.field, unit, -k - 1))
                rhs = ops.fingerprint(divided_derivative(e.field, k))
                assert lhs == rhs, (e.label, k)
        info["note"] = f"{name}: {len(space.basis)} fields, k = 0..4"


@pytest.mark.parametrize("name", ["heisenberg", "virasoro"])
def test_criterion_05_locality_certificates(name):
    with criterion(5) as info:
        space = preset_object(name).space
        assert not space.locality_failures
        B = len(space.basis)
        worst = 0
        for i in range(B):
            for j in range(i, B):
                cert = space.certificate(i, j)
                assert cert is not None and cert.order <= 8, (i, j)
                worst = max(worst, cert.order)
        info["note"] = f"{name}: {B * (B + 1) // 2} pairs, max order {worst}"


def test_criterion_06_va_axioms():
    with criterion(6, budget=60) as info:
        counts = []
        for name in ("heisenberg", "virasoro"):
            X = preset_object(name)
            reports = verify_va_axioms(X.structure, WINDOW, P)
            for r in reports:
                assert r.passed, (name, r.name, r.failures[:3])
            counts.append(f"{name} {sum(r.checked for r in reports)}")
        info["note"] = "instances: " + ", ".join(counts)


def test_criterion_07_comonad_laws():
    with criterion(7, budget=120) as info:
        counts = []
        for name in ("heisenberg", "virasoro"):
            X = preset_object(name)
            reports = verify_comonad_laws(X)
            assert len(reports) == 4
            for r in reports:
                assert r.passed, (name, r.name, r.failures[:3])
            counts.append(f"{name} {sum(r.checked for r in reports)}")
        info["note"] = "generator instances: " + ", ".join(counts)


@pytest.mark.parametrize("name", ["heisenberg", "virasoro"])
def test_criterion_08_state_field_roundtrip(name):
    with criterion(8) as info:
        r = state_field_roundtrip(preset_object(name).structure)
        assert r.passed, r.failures[:3]
        info["note"] = f"{name}: {r.checked} fields"


def test_criterion_09_gru():
    with criterion(9) as info:
        X = preset_object("heisenberg")
        r = gru_check(X, 4)
        assert r.passed, r.failures[:3]
        info["note"] = f"{r.checked} structure constants, {r.details['vectors']} spanning vectors"


def test_criterion_10_mutation_sensitivity(small_heisenberg, small_virasoro):
    with criterion(10) as info:
        rng = random.Random(20240611)
        objs = {"heisenberg": small_heisenberg, "virasoro": small_virasoro}
        caught = []
        for _ in range(10):
            name = rng.choice(sorted(objs))
            mutate = mutate_table if rng.random() < 0.6 else mutate_bracket
            m = mutate(objs[name], rng)
            hit = detect(m, SMALL.window, SMALL.precision)
            assert hit, f"{name}: {m.description} went unnoticed"
            caught.append(hit[0])
        info["note"] = "caught by criteria " + ", ".join(map(str, caught))
