"""Shared builders for randomized tests.

Random symplectic matrices are products of bounded rotation and
stabilizer factors so their conditioning stays moderate; random
lattices keep focusing strengths small enough that one period is
resolved comfortably at the default step policy.
"""

import numpy as np
import pytest

from sympenv.dynamics import ConstantSegment, PeriodicHamiltonian, SmoothSegment
from sympenv.envelope import EnvelopeState


def random_symmetric(rng, n, scale=1.0):
    a = rng.normal(size=(n, n)) * scale
    return 0.5 * (a + a.T)


def random_spd(rng, n, spread=0.5):
    """SPD matrix with eigenvalues in roughly [1 - spread, 1 + spread]."""
    q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    vals = 1.0 + rng.uniform(-spread, spread, size=n)
    return (q * vals) @ q.T


def random_orthosymplectic(rng, n):
    """Symplectic-orthogonal matrix from a Haar-ish random unitary."""
    z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    q, r = np.linalg.qr(z)
    q = q * (np.diag(r) / np.abs(np.diag(r)))
    x, y = q.real, -q.imag
    return np.block([[x, y], [-y, x]])


def random_stabilizer(rng, n, l_spread=0.4, q_scale=0.4):
    """Vertical-plane stabilizer [[L, 0], [Q, L^{-T}]] with bounded blocks."""
    l = np.eye(n) + l_spread * rng.normal(size=(n, n))
    # keep L comfortably invertible
    u, s, vt = np.linalg.svd(l)
    s = np.clip(s, 0.5, 2.0)
    l = (u * s) @ vt
    sym = random_symmetric(rng, n, q_scale)
    q = np.linalg.inv(l).T @ sym
    out = np.zeros((2 * n, 2 * n))
    out[:n, :n] = l
    out[n:, :n] = q
    out[n:, n:] = np.linalg.inv(l).T
    return out


def random_symplectic(rng, n, factors=4):
    m = np.eye(2 * n)
    for _ in range(factors):
        m = m @ random_orthosymplectic(rng, n) @ random_stabilizer(rng, n)
    return m


def random_stable_symplectic(rng, n, thetas=None, factors=3):
    """Stable matrix built as conjugated rotation blocks; returns
    (matrix, conjugator, angles)."""
    from sympenv.symplectic import rotation_product

    if thetas is None:
        thetas = rng.uniform(0.05, 2 * np.pi - 0.05, size=n)
    f = random_symplectic(rng, n, factors)
    m = f @ rotation_product(thetas) @ np.linalg.inv(f)
    return m, f, np.asarray(thetas, dtype=float)


def random_piecewise_lattice(rng, n, n_segments=None, strength=1.0,
                             coupled=True):
    if n_segments is None:
        n_segments = int(rng.integers(2, 5))
    segments = []
    for _ in range(n_segments):
        duration = float(rng.uniform(0.25, 0.9))
        kappa = random_symmetric(rng, n, 1.1 * strength)
        r = (rng.normal(size=(n, n)) * 0.25 * strength if coupled
             else np.zeros((n, n)))
        mass_inv = random_spd(rng, n, 0.35)
        segments.append(ConstantSegment(duration=duration, kappa=kappa, r=r,
                                        mass_inv=mass_inv))
    return PeriodicHamiltonian(n, segments)


def random_harmonic_lattice(rng, n, strength=1.0, coupled=True):
    period = float(rng.uniform(1.2, 2.8))
    a = random_symmetric(rng, n, 0.9 * strength)
    q = random_symmetric(rng, n, 0.45 * strength)
    freq = float(rng.integers(1, 4)) * 2.0 * np.pi / period
    r = (rng.normal(size=(n, n)) * 0.2 * strength if coupled
         else np.zeros((n, n)))
    mass_inv = random_spd(rng, n, 0.3)
    seg = SmoothSegment(
        duration=period,
        kappa=lambda tau, a=a, q=q, f=freq: a + 2.0 * q * np.cos(f * tau),
        r=lambda tau, r=r: r,
        mass_inv=lambda tau, m=mass_inv: m,
    )
    return PeriodicHamiltonian(n, [seg])


def random_lattice(rng, n, kind=None, strength=1.0):
    if kind is None:
        kind = "piecewise" if rng.random() < 0.5 else "harmonic"
    if kind == "piecewise":
        return random_piecewise_lattice(rng, n, strength=strength)
    return random_harmonic_lattice(rng, n, strength=strength)


def random_envelope_initial(rng, h):
    """Invertible random w0 with the slope chosen so the initial
    canonical transformation is symplectic."""
    n = h.n
    q1, _ = np.linalg.qr(rng.normal(size=(n, n)))
    q2, _ = np.linalg.qr(rng.normal(size=(n, n)))
    w0 = (q1 * rng.uniform(0.8, 1.3, size=n)) @ q2
    sym = random_symmetric(rng, n, 0.4)
    _, r0, minv0 = h.coefficients(0.0)
    w0_dot = w0 @ r0 - sym @ np.linalg.inv(w0).T @ minv0
    return EnvelopeState(w=w0, w_dot=w0_dot, t=0.0)


def fodo_lattice(k=2.0, l_quad=0.3, l_drift=0.7):
    """Alternating-gradient cell: focus, drift, defocus, drift (n = 1)."""
    zeros = np.zeros((1, 1))
    eye = np.eye(1)
    kf = np.array([[k**2]])
    return PeriodicHamiltonian(1, [
        ConstantSegment(duration=l_quad, kappa=kf, r=zeros, mass_inv=eye),
        ConstantSegment(duration=l_drift, kappa=zeros, r=zeros, mass_inv=eye),
        ConstantSegment(duration=l_quad, kappa=-kf, r=zeros, mass_inv=eye),
        ConstantSegment(duration=l_drift, kappa=zeros, r=zeros, mass_inv=eye),
    ])


def sho_lattice(kappa=1.0, period=2.0 * np.pi):
    return PeriodicHamiltonian.constant(np.array([[kappa]]), period)


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
