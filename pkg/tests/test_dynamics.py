"""Direct integration of the linear system: transfer maps and monodromy."""

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from sympenv.dynamics import (
    ConstantSegment,
    PeriodicHamiltonian,
    monodromy,
    propagate,
    transfer_map,
    transfer_map_sequence,
)
from sympenv.errors import IntegrationError
from sympenv.symplectic import is_symplectic

from conftest import (
    fodo_lattice,
    random_harmonic_lattice,
    random_lattice,
    random_piecewise_lattice,
    sho_lattice,
)
from sympenv.courant_snyder import mathieu_lattice


class TestLatticeModel:
    def test_sho_a_matrix(self):
        h = sho_lattice(kappa=1.0)
        np.testing.assert_allclose(h.a_matrix(0.3), np.eye(2))

    def test_harmonic_a_matrix_at_zero(self):
        a, q = 0.7, 0.2
        h = mathieu_lattice(a, q)
        np.testing.assert_allclose(
            h.a_matrix(0.0), np.array([[a + 2 * q, 0.0], [0.0, 1.0]]))

    def test_a_matrix_symmetric(self, rng):
        for _ in range(5):
            h = random_lattice(rng, int(rng.integers(1, 4)))
            for t in rng.uniform(0.0, h.period, size=4):
                a = h.a_matrix(t)
                np.testing.assert_allclose(a, a.T, atol=1e-12)

    def test_coefficients_periodic(self, rng):
        h = random_lattice(rng, 2)
        for t in rng.uniform(0.0, h.period, size=5):
            k0, r0, m0 = h.coefficients(t)
            k1, r1, m1 = h.coefficients(t + h.period)
            np.testing.assert_allclose(k0, k1, atol=1e-12)
            np.testing.assert_allclose(r0, r1, atol=1e-12)
            np.testing.assert_allclose(m0, m1, atol=1e-12)

    def test_rejects_asymmetric_kappa(self):
        with pytest.raises(ValueError, match="kappa"):
            PeriodicHamiltonian(2, [ConstantSegment(
                duration=1.0, kappa=np.array([[1.0, 0.5], [0.0, 1.0]]),
                r=np.zeros((2, 2)), mass_inv=np.eye(2))])

    def test_representation_tags(self, rng):
        assert sho_lattice().representation == "piecewise_constant"
        assert mathieu_lattice(0.1, 0.1).representation == "smooth"


class TestTransferMap:
    def test_free_drift(self):
        h = PeriodicHamiltonian.constant(np.array([[0.0]]), 2.5)
        tm = transfer_map(h, 0.0, 1.7)
        np.testing.assert_allclose(tm.matrix,
                                   np.array([[1.0, 1.7], [0.0, 1.0]]),
                                   atol=1e-12)

    def test_constant_focusing_closed_form(self):
        k = 1.7
        tau = 0.9
        h = PeriodicHamiltonian.constant(np.array([[k**2]]), 2.0)
        tm = transfer_map(h, 0.0, tau)
        want = np.array([
            [np.cos(k * tau), np.sin(k * tau) / k],
            [-k * np.sin(k * tau), np.cos(k * tau)],
        ])
        np.testing.assert_allclose(tm.matrix, want, atol=1e-12)
        # the exact map agrees with brute-force integration of the same piece
        sol = solve_ivp(lambda t, z: h.generator(t) @ z.reshape(2, 2) @ [1, 0]
                        if False else (h.generator(t) @ z.reshape(2, 2)).ravel(),
                        (0.0, tau), np.eye(2).ravel(), rtol=1e-11, atol=1e-13)
        np.testing.assert_allclose(sol.y[:, -1].reshape(2, 2), want,
                                   atol=1e-8)

    def test_flow_composition(self, rng):
        h = random_lattice(rng, 2)
        t0, t1, t2 = 0.0, 0.4 * h.period, 1.1 * h.period
        m02 = transfer_map(h, t0, t2).matrix
        m12 = transfer_map(h, t1, t2).matrix
        m01 = transfer_map(h, t0, t1).matrix
        np.testing.assert_allclose(m12 @ m01, m02, atol=1e-9 * (
            1 + np.linalg.norm(m02)))

    def test_symplectic_along_the_flow(self, rng):
        for _ in range(6):
            h = random_lattice(rng, int(rng.integers(1, 4)))
            tm = transfer_map(h, 0.0, rng.uniform(0.3, 1.0) * h.period)
            assert is_symplectic(tm.matrix, tol=1e-9)

    def test_identity_at_zero_interval(self, rng):
        h = random_lattice(rng, 2)
        tm = transfer_map(h, 0.5, 0.5)
        np.testing.assert_allclose(tm.matrix, np.eye(4))

    def test_smooth_path_matches_exact_on_constant_lattice(self):
        kappa = np.array([[0.9, 0.2], [0.2, -0.4]])
        h_const = PeriodicHamiltonian.constant(kappa, 1.5)
        h_smooth = PeriodicHamiltonian.from_callables(
            2, 1.5, kappa=lambda t: kappa)
        m_exact = transfer_map(h_const, 0.0, 1.5).matrix
        m_rk4 = transfer_map(h_smooth, 0.0, 1.5).matrix
        np.testing.assert_allclose(m_rk4, m_exact, atol=1e-11)

    def test_error_estimate_attached(self):
        h = mathieu_lattice(0.2, 0.1)
        tm = transfer_map(h, 0.0, h.period, steps_per_period=512,
                          error_estimate=True)
        assert tm.error_estimate is not None
        assert tm.error_estimate < 1e-9

    def test_sequence_matches_individual_maps(self, rng):
        h = random_lattice(rng, 2)
        times = np.sort(rng.uniform(0.0, h.period, size=5))
        times[0] = 0.0
        seq = transfer_map_sequence(h, times)
        for t, tm in zip(times, seq):
            direct = transfer_map(h, 0.0, t).matrix
            np.testing.assert_allclose(tm.matrix, direct, atol=1e-9 * (
                1 + np.linalg.norm(direct)))

    def test_step_underflow_rejected(self):
        h = sho_lattice()
        with pytest.raises(IntegrationError):
            transfer_map(h, 0.0, 1.0, steps_per_period=0)


class TestMonodromy:
    def test_sho_full_period_is_identity(self):
        tm = monodromy(sho_lattice(kappa=1.0, period=2 * np.pi))
        np.testing.assert_allclose(tm.matrix, np.eye(2), atol=1e-9)

    def test_fodo_is_stable_by_trace(self):
        tm = monodromy(fodo_lattice(k=2.0, l_quad=0.3, l_drift=0.7))
        assert abs(np.trace(tm.matrix)) < 2.0

    def test_mathieu_stable_point(self):
        tm = monodromy(mathieu_lattice(0.2, 0.1))
        assert abs(np.trace(tm.matrix)) < 2.0

    def test_mathieu_unstable_point(self):
        tm = monodromy(mathieu_lattice(1.0, 0.5))
        assert abs(np.trace(tm.matrix)) > 2.0

    def test_periodicity_of_the_coefficients(self, rng):
        h = random_piecewise_lattice(rng, 2)
        m1 = monodromy(h).matrix
        m2 = transfer_map(h, h.period, 2 * h.period).matrix
        np.testing.assert_allclose(m1, m2, atol=1e-10 * (1 + np.linalg.norm(m1)))

    def test_periodicity_smooth(self, rng):
        h = random_harmonic_lattice(rng, 1)
        m1 = monodromy(h).matrix
        m2 = transfer_map(h, h.period, 2 * h.period).matrix
        np.testing.assert_allclose(m1, m2, atol=1e-9 * (1 + np.linalg.norm(m1)))


class TestPropagate:
    def test_zero_stays_zero(self, rng):
        h = random_lattice(rng, 2)
        z = propagate(h, np.zeros(4), 0.8 * h.period)
        np.testing.assert_array_equal(z, np.zeros(4))

    def test_sho_quarter_period(self):
        h = sho_lattice(kappa=1.0, period=2 * np.pi)
        z = propagate(h, np.array([1.0, 0.0]), np.pi / 2)
        np.testing.assert_allclose(z, np.array([0.0, -1.0]), atol=1e-10)

    def test_one_period_equals_monodromy(self, rng):
        h = random_lattice(rng, 2)
        z0 = rng.normal(size=4)
        np.testing.assert_allclose(
            propagate(h, z0, h.period), monodromy(h).matrix @ z0, atol=1e-9)

    def test_against_adaptive_integrator(self, rng):
        # independent oracle: scipy adaptive RK on the vector equation
        h = random_harmonic_lattice(rng, 2)
        z0 = rng.normal(size=4)
        t1 = 0.8 * h.period
        got = propagate(h, z0, t1)
        sol = solve_ivp(lambda t, z: h.generator(t) @ z, (0.0, t1), z0,
                        rtol=1e-11, atol=1e-12, max_step=h.period / 16)
        np.testing.assert_allclose(got, sol.y[:, -1], rtol=0, atol=1e-7)

    def test_energy_conserved_autonomous(self, rng):
        kappa = np.array([[1.3, 0.4], [0.4, 0.8]])
        h = PeriodicHamiltonian.constant(kappa, 2.0)
        z0 = rng.normal(size=4)
        a = h.a_matrix(0.0)
        e0 = 0.5 * z0 @ a @ z0
        for t in (0.3, 0.9, 1.7):
            z = propagate(h, z0, t)
            assert 0.5 * z @ a @ z == pytest.approx(e0, rel=1e-9)

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            propagate(sho_lattice(), np.zeros(3), 1.0)
