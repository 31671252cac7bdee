import cmath
import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from softtorus.errors import DecompositionFailed, NotCentralPower, NotDivisible, RelationViolation, RootMismatch
from softtorus.generators import RationalAngle, UnitaryPair, clock, conjugate, haar_unitary, perturb_pair, shift, theta_pair
from softtorus.invariants import TraceKind, cut_for, scalar_commutator_check, winding
from softtorus.matcore import dagger, operator_norm
from softtorus.rotrep import (
    IrrepSpec,
    block_pair,
    decompose_exact_pair,
    irrep_at,
    matrix_unit_residual,
    matrix_units,
    principal_root,
    spectral_projections,
)

seeds = st.integers(min_value=0, max_value=2**31 - 1)
angles = st.sampled_from([RationalAngle(p, q) for q in range(1, 9) for p in range(q)])
turns = st.floats(0.0, 1.0, exclude_max=True)


def e(x):
    return cmath.exp(2j * cmath.pi * x)


def random_specs(theta, count, rng, distinct=True):
    specs = []
    for _ in range(count):
        t1, t2 = e(rng.uniform()), e(rng.uniform())
        k1, k2 = rng.integers(theta.q, size=2)
        # any q-th root is allowed; pick a random one
        specs.append(IrrepSpec(theta, t1, t2, principal_root(t1, theta.q) * e(k1 / theta.q),
                               principal_root(t2, theta.q) * e(k2 / theta.q)))
    return specs


def twisted_exact_pair(theta, specs, seed):
    a, b = block_pair(specs, theta)
    w = haar_unitary(a.shape[0], seed)
    return UnitaryPair(w @ a @ dagger(w), w @ b @ dagger(w), theta)


def canonical_multiset(theta, blocks):
    out = []
    for spec, mult in blocks:
        out += [(spec.t1, spec.t2)] * mult
    return sorted(out, key=lambda z: (cmath.phase(z[0]), cmath.phase(z[1])))


class TestIrrep:
    def test_half_canonical(self):
        p = irrep_at(IrrepSpec(RationalAngle(1, 2), 1, 1, 1, 1))
        assert np.allclose(p.u, np.diag([1, -1]))
        assert np.array_equal(p.v, [[0, 1], [1, 0]])
        assert np.allclose(p.u @ p.u, np.eye(2))

    def test_half_twisted(self):
        p = irrep_at(IrrepSpec(RationalAngle(1, 2), 1j, 1, np.exp(1j * np.pi / 4), 1))
        assert operator_norm(p.u @ p.u - 1j * np.eye(2)) <= 1e-12

    def test_q_one(self):
        p = irrep_at(IrrepSpec(RationalAngle(0), 1j, -1, 1j, -1))
        assert p.u.shape == (1, 1) and p.u[0, 0] == 1j and p.v[0, 0] == -1

    def test_root_mismatch(self):
        with pytest.raises(RootMismatch):
            IrrepSpec(RationalAngle(1, 2), 1, 1, 1j, 1)
        with pytest.raises(RootMismatch):
            IrrepSpec(RationalAngle(1, 2), 2, 1)

    def test_default_roots_are_principal(self):
        spec = IrrepSpec(RationalAngle(1, 3), -1, 1j)
        assert spec.r1 == pytest.approx(e(1 / 6))
        assert spec.r2 == pytest.approx(e(1 / 12))

    @given(angles, turns, turns)
    def test_powers_are_central(self, theta, a, b):
        q = theta.q
        spec = IrrepSpec(theta, e(a), e(b))
        p = irrep_at(spec)
        assert operator_norm(np.linalg.matrix_power(p.u, q) - spec.t1 * np.eye(q)) <= 1e-10
        assert operator_norm(np.linalg.matrix_power(p.v, q) - spec.t2 * np.eye(q)) <= 1e-10

    @given(angles, turns, turns)
    def test_scalar_commutator_and_winding(self, theta, a, b):
        p = irrep_at(IrrepSpec(theta, e(a), e(b)))
        theta_hat, residual = scalar_commutator_check(p, cut=cut_for(theta))
        assert residual <= 1e-12
        assert theta_hat == pytest.approx(theta.value, abs=1e-12)

    @given(st.sampled_from([RationalAngle(1, q) for q in range(2, 8)]), turns, turns, st.floats(1e-6, 0.5))
    def test_distinct_points_separate(self, theta, a, b, shift_by):
        spec = IrrepSpec(theta, e(a), e(b))
        other = e(a + shift_by)
        separation = abs(other - spec.t1)
        p = irrep_at(spec)
        assert operator_norm(np.linalg.matrix_power(p.u, theta.q) - other * np.eye(theta.q)) >= separation / 2


class TestProjections:
    def test_half(self):
        ps = spectral_projections(np.diag([1, -1]), 1, RationalAngle(1, 2))
        assert np.allclose(ps[0], np.diag([1, 0])) and np.allclose(ps[1], np.diag([0, 1]))

    def test_third_are_diagonal_units(self):
        ps = spectral_projections(clock(3, RationalAngle(1, 3)), 1, RationalAngle(1, 3))
        for j in range(3):
            unit = np.zeros((3, 3))
            unit[j, j] = 1
            assert np.allclose(ps[j], unit, atol=1e-14)

    @given(angles, turns, turns, seeds)
    def test_resolution_of_identity(self, theta, a, b, seed):
        spec = IrrepSpec(theta, e(a), e(b))
        p = irrep_at(spec)
        w = haar_unitary(theta.q, seed)
        ps = spectral_projections(dagger(w) @ p.u @ w, spec.r1, theta)
        assert operator_norm(sum(ps) - np.eye(theta.q)) <= 1e-12
        for x, y in itertools.product(range(theta.q), repeat=2):
            target = ps[x] if x == y else 0
            assert operator_norm(ps[x] @ ps[y] - target) <= 1e-11

    def test_not_central_power(self):
        with pytest.raises(NotCentralPower):
            spectral_projections(np.diag([1, 1j]), 1, RationalAngle(1, 2))


class TestMatrixUnits:
    def test_q2_lower_unit(self):
        theta = RationalAngle(1, 2)
        p = irrep_at(IrrepSpec(theta, 1, 1, 1, 1))
        units = matrix_units(spectral_projections(p.u, 1, theta), p.v, 1)
        assert np.allclose(units[1, 0], [[0, 0], [1, 0]])

    @given(angles, turns, turns)
    def test_adjoint_symmetry(self, theta, a, b):
        spec = IrrepSpec(theta, e(a), e(b))
        p = irrep_at(spec)
        units = matrix_units(spectral_projections(p.u, spec.r1, theta), p.v, spec.r2)
        for i, j in itertools.product(range(theta.q), repeat=2):
            assert operator_norm(dagger(units[i, j]) - units[j, i]) <= 1e-10

    def test_q3_exhaustive(self):
        theta = RationalAngle(1, 3)
        p = irrep_at(IrrepSpec(theta, 1, 1))
        units = matrix_units(spectral_projections(p.u, 1, theta), p.v, 1)
        worst = 0.0
        for i, j, k, l in itertools.product(range(3), repeat=4):
            target = units[i, l] if j == k else np.zeros((3, 3))
            worst = max(worst, np.abs(units[i, j] @ units[k, l] - target).max())
        assert worst <= 1e-12
        assert matrix_unit_residual(units) <= 1e-12

    def test_relation_violation(self):
        theta = RationalAngle(1, 2)
        ps = spectral_projections(np.diag([1, -1]), 1, theta)
        with pytest.raises(RelationViolation):
            matrix_units(ps, np.diag([1, 1j]), 1)


class TestDecompose:
    def test_canonical_half(self):
        d = decompose_exact_pair(theta_pair(RationalAngle(1, 2), 2), RationalAngle(1, 2))
        assert len(d.blocks) == 1 and d.blocks[0][1] == 2
        spec = d.blocks[0][0]
        assert spec.t1 == pytest.approx(1) and spec.t2 == pytest.approx(1)
        assert d.residual <= 1e-10

    def test_single_irrep(self):
        theta = RationalAngle(1, 3)
        spec = IrrepSpec(theta, 1j, -1)
        d = decompose_exact_pair(irrep_at(spec), theta)
        (found, mult), = d.blocks
        assert mult == 1
        assert abs(found.t1 - 1j) <= 1e-9 and abs(found.t2 + 1) <= 1e-9

    @pytest.mark.parametrize("q", range(1, 9))
    def test_twisted_conjugated_pairs(self, q):
        theta = RationalAngle(1, q)
        rng = np.random.default_rng(q)
        for trial in range(3):
            m = int(rng.integers(1, 48 // q + 1))
            specs = random_specs(theta, m, rng)
            if m > 1 and trial == 2:
                specs[-1] = specs[0]  # a repeated block
            pair = twisted_exact_pair(theta, specs, seed=100 * q + trial)
            d = decompose_exact_pair(pair, theta)
            assert d.residual <= 1e-8
            found = canonical_multiset(theta, d.blocks)
            expected = canonical_multiset(theta, [(s, 1) for s in specs])
            assert len(found) == len(expected)
            for (a1, a2), (b1, b2) in zip(found, expected):
                assert abs(a1 - b1) <= 1e-8 and abs(a2 - b2) <= 1e-8
            back = d.reassemble()
            assert max(operator_norm(back.u - pair.u), operator_norm(back.v - pair.v)) <= 10 * max(d.residual, 1e-15)

    def test_root_choice_is_immaterial(self):
        theta = RationalAngle(1, 4)
        t1, t2 = e(0.3), e(0.7)
        base = principal_root(t1, 4), principal_root(t2, 4)
        results = []
        for k1, k2 in [(0, 0), (1, 3), (2, 1)]:
            spec = IrrepSpec(theta, t1, t2, base[0] * e(k1 / 4), base[1] * e(k2 / 4))
            (found, mult), = decompose_exact_pair(irrep_at(spec), theta).blocks
            results.append((found.t1, found.t2))
        for a in results[1:]:
            assert abs(a[0] - results[0][0]) <= 1e-10 and abs(a[1] - results[0][1]) <= 1e-10

    def test_not_divisible(self):
        with pytest.raises(NotDivisible):
            decompose_exact_pair(theta_pair(RationalAngle(0), 5), RationalAngle(1, 2))

    def test_rejects_inexact_input(self):
        pair = perturb_pair(theta_pair(RationalAngle(1, 2), 2), 0.05, 1)
        with pytest.raises(DecompositionFailed):
            decompose_exact_pair(pair, RationalAngle(1, 2))

    def test_block_pair_shape(self):
        theta = RationalAngle(1, 3)
        a, b = block_pair([IrrepSpec(theta, 1, 1)] * 2, theta)
        assert np.allclose(a, np.kron(np.eye(2), clock(3, theta)))
        assert np.allclose(b, np.kron(np.eye(2), shift(3)))

    @given(seeds)
    def test_conjugation_gives_same_blocks(self, seed):
        theta = RationalAngle(1, 2)
        rng = np.random.default_rng(seed)
        pair = twisted_exact_pair(theta, random_specs(theta, 3, rng), seed)
        other = conjugate(pair, haar_unitary(pair.n, seed + 1))
        a = canonical_multiset(theta, decompose_exact_pair(pair, theta).blocks)
        b = canonical_multiset(theta, decompose_exact_pair(other, theta).blocks)
        assert np.allclose(np.array(a), np.array(b), atol=1e-8)


def test_winding_of_blocks_is_theta():
    theta = RationalAngle(1, 3)
    pair = twisted_exact_pair(theta, random_specs(theta, 4, np.random.default_rng(0)), 3)
    assert winding(pair, tk=TraceKind.NORMALIZED) == pytest.approx(1 / 3, abs=1e-10)
