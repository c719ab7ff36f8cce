"""Symplectic structure utilities: forms, products, spectra."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sympenv.errors import SymplecticError
from sympenv.symplectic import (
    SymplecticRotation,
    diamond,
    diamond_all,
    is_symplectic,
    krein_amplitude,
    krein_product,
    rotation_block,
    rotation_product,
    stability_verdict,
    standard_form,
    symplectic_residual,
)

from conftest import random_stable_symplectic, random_symplectic


class TestStandardForm:
    def test_n1(self):
        np.testing.assert_array_equal(standard_form(1),
                                      np.array([[0.0, 1.0], [-1.0, 0.0]]))

    def test_square_is_minus_identity(self):
        j = standard_form(1)
        np.testing.assert_allclose(j @ j, -np.eye(2))

    def test_antisymmetry_and_inverse(self):
        j = standard_form(2)
        np.testing.assert_array_equal(j.T, -j)
        np.testing.assert_allclose(np.linalg.inv(j), -j)

    def test_rejects_zero(self):
        with pytest.raises(ValueError):
            standard_form(0)


class TestIsSymplectic:
    def test_identity(self):
        check = is_symplectic(np.eye(2))
        assert check and check.residual == 0.0

    def test_unimodular_diag_n1(self):
        assert is_symplectic(np.diag([2.0, 0.5]))

    def test_scaling_fails(self):
        check = is_symplectic(np.diag([2.0, 2.0]))
        assert not check
        assert check.residual > 1.0  # scales the form by 4

    def test_rejects_odd_dimension(self):
        with pytest.raises(ValueError):
            is_symplectic(np.eye(3))

    def test_residual_reported_on_success(self):
        check = is_symplectic(rotation_block(0.3))
        assert check.residual < 1e-15


class TestDiamond:
    def test_identity_rotations(self):
        np.testing.assert_allclose(diamond(rotation_block(0.0),
                                           rotation_block(0.0)), np.eye(4))

    def test_block_pattern(self):
        m1 = np.array([[1.0, 2.0], [3.0, 4.0]])
        m2 = np.array([[5.0, 6.0], [7.0, 8.0]])
        expected = np.array([
            [1.0, 0.0, 2.0, 0.0],
            [0.0, 5.0, 0.0, 6.0],
            [3.0, 0.0, 4.0, 0.0],
            [0.0, 7.0, 0.0, 8.0],
        ])
        np.testing.assert_array_equal(diamond(m1, m2), expected)

    def test_eigenvalues_of_rotation_product(self):
        # dense eigensolver oracle on the assembled 4x4
        m = diamond(rotation_block(np.pi / 2), rotation_block(np.pi / 3))
        got = np.sort_complex(np.linalg.eigvals(m))
        want = np.sort_complex(np.array([
            1j, -1j, np.exp(1j * np.pi / 3), np.exp(-1j * np.pi / 3),
        ]))
        np.testing.assert_allclose(got, want, atol=1e-12)

    def test_rejects_odd_dimension(self):
        with pytest.raises(ValueError):
            diamond(np.eye(3), np.eye(2))

    def test_symplectic_closure(self, rng):
        for _ in range(20):
            m1 = random_symplectic(rng, int(rng.integers(1, 3)))
            m2 = random_symplectic(rng, int(rng.integers(1, 3)))
            assert is_symplectic(diamond(m1, m2), tol=1e-9)

    def test_diamond_all_associative_shape(self):
        out = diamond_all([rotation_block(0.1), rotation_block(0.2),
                           rotation_block(0.3)])
        assert out.shape == (6, 6)
        assert is_symplectic(out)


class TestRotationBlock:
    def test_zero_angle(self):
        np.testing.assert_array_equal(rotation_block(0.0), np.eye(2))

    def test_quarter_turn_is_standard_form(self):
        np.testing.assert_allclose(rotation_block(np.pi / 2), standard_form(1),
                                   atol=1e-16)

    def test_power_is_angle_multiple(self):
        r = rotation_block(0.4)
        np.testing.assert_allclose(r @ r @ r, rotation_block(1.2), atol=1e-15)

    @settings(max_examples=50, deadline=None)
    @given(theta=st.floats(-10.0, 10.0), power=st.integers(0, 5))
    def test_power_property(self, theta, power):
        np.testing.assert_allclose(
            np.linalg.matrix_power(rotation_block(theta), power),
            rotation_block(power * theta), atol=1e-12)


class TestKreinProduct:
    def test_circular_vector_positive(self):
        psi = np.array([1.0, 1j])
        assert krein_product(psi, psi) == pytest.approx(2.0)

    def test_conjugate_vector_negative(self):
        psi = np.array([1.0, -1j])
        assert krein_product(psi, psi) == pytest.approx(-2.0)

    def test_real_vector_isotropic(self):
        psi = np.array([1.0, 0.0])
        assert krein_product(psi, psi) == pytest.approx(0.0)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            krein_product(np.array([1.0, 0.0]), np.array([1.0, 0.0, 0.0, 0.0]))

    def test_amplitude_is_real(self, rng):
        for _ in range(10):
            psi = rng.normal(size=4) + 1j * rng.normal(size=4)
            value = krein_product(psi, psi)
            assert abs(value.imag) < 1e-12 * (1 + abs(value))
            assert krein_amplitude(psi) == pytest.approx(value.real)

    @settings(max_examples=50, deadline=None)
    @given(data=st.lists(st.floats(-3.0, 3.0), min_size=8, max_size=8))
    def test_conjugate_symmetry(self, data):
        psi = np.array(data[:2]) + 1j * np.array(data[2:4])
        phi = np.array(data[4:6]) + 1j * np.array(data[6:8])
        lhs = krein_product(psi, phi)
        rhs = krein_product(phi, psi)
        assert lhs == pytest.approx(np.conj(rhs), abs=1e-12)

    def test_conjugation_flips_amplitude(self, rng):
        for _ in range(10):
            psi = rng.normal(size=6) + 1j * rng.normal(size=6)
            assert krein_amplitude(np.conj(psi)) == pytest.approx(
                -krein_amplitude(psi))


class TestSymplecticRotation:
    def test_round_trip_through_unitary(self, rng):
        from conftest import random_orthosymplectic

        m = random_orthosymplectic(rng, 3)
        rot = SymplecticRotation.from_matrix(m)
        assert rot.unitarity_residual() < 1e-12
        np.testing.assert_allclose(
            SymplecticRotation.from_unitary(rot.unitary).matrix, m,
            atol=1e-14)

    def test_rejects_wrong_block_structure(self):
        with pytest.raises(ValueError):
            SymplecticRotation.from_matrix(np.diag([2.0, 0.5]))


class TestStabilityVerdict:
    def test_rotation_is_stable(self):
        report = stability_verdict(rotation_block(0.7))
        assert report.stable
        got = np.sort_complex(report.eigenvalues)
        want = np.sort_complex(np.array([np.exp(0.7j), np.exp(-0.7j)]))
        np.testing.assert_allclose(got, want, atol=1e-12)

    def test_shear_is_unstable_non_semisimple(self):
        report = stability_verdict(np.array([[1.0, 1.0], [0.0, 1.0]]))
        assert not report.stable
        assert any("not semi-simple" in o for o in report.offenders)
        group = report.groups[0]
        assert group.algebraic == 2 and group.geometric == 1

    def test_hyperbolic_is_unstable_off_circle(self):
        report = stability_verdict(np.diag([2.0, 0.5]))
        assert not report.stable
        assert all(not g.on_circle for g in report.groups)
        assert any("off unit circle" in o for o in report.offenders)

    def test_identity_stable_with_paired_type(self):
        report = stability_verdict(np.eye(2))
        assert report.stable
        assert report.groups[0].krein_type == (1, 1)

    def test_rejects_non_symplectic(self):
        with pytest.raises(SymplecticError):
            stability_verdict(np.diag([2.0, 2.0]))

    def test_eigenvalue_symmetry_conj_and_reciprocal(self, rng):
        # spectrum closed under conjugation and inversion
        for _ in range(15):
            n = int(rng.integers(1, 4))
            m = random_symplectic(rng, n)
            values = np.linalg.eigvals(m)
            for lam in values:
                assert np.min(np.abs(values - np.conj(lam))) < 1e-7
                assert np.min(np.abs(values - 1.0 / lam)) < 1e-7 * abs(lam)

    def test_krein_orthogonality_of_distinct_modes(self, rng):
        # eigenvectors with lam * conj(mu) != 1 are Krein-orthogonal
        for _ in range(10):
            n = int(rng.integers(2, 4))
            m, _, _ = random_stable_symplectic(rng, n)
            values, vectors = np.linalg.eig(m)
            for i in range(2 * n):
                for k in range(2 * n):
                    if abs(values[i] * np.conj(values[k]) - 1.0) > 1e-3:
                        product = krein_product(vectors[:, i], vectors[:, k])
                        assert abs(product) < 1e-8

    def test_stable_verdict_on_conjugated_rotations(self, rng):
        for _ in range(10):
            n = int(rng.integers(1, 4))
            m, _, _ = random_stable_symplectic(rng, n)
            assert stability_verdict(m).stable

    def test_residual_scaling_survives_large_matrices(self, rng):
        m = random_symplectic(rng, 2, factors=8)
        assert symplectic_residual(m) < 1e-8 * (1 + np.linalg.norm(m) ** 2)
