"""Periodic linear Hamiltonian systems and their transfer maps.

A system is ``zdot = J A(t) z`` with the quadratic-form matrix

    A(t) = [[kappa(t), R(t)], [R(t)^T, m^{-1}(t)]]

built from T-periodic coefficient matrices: ``kappa`` and ``m^{-1}``
symmetric, ``m`` invertible.  Lattices are ordered segments tiling one
period; a segment either holds constant coefficient matrices (transfer
maps are exact matrix exponentials) or callables of the local time
(maps come from fixed-step 4th-order integration).  This module is the
direct route against which the envelope factorization is checked.
"""

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from scipy.linalg import expm

from .errors import IntegrationError
from .symplectic import is_symplectic

INTEG_TOL = 1e-9           # accuracy goal per period at default settings
STEPS_PER_PERIOD = 4096    # fixed-step policy for smooth coefficients
COEFF_TOL = 1e-9           # symmetry/periodicity slack for coefficients
MASS_COND_LIMIT = 1e12


def _as_coeff_matrix(value, n, name):
    mat = np.asarray(value, dtype=float)
    if mat.shape == () and n == 1:
        mat = mat.reshape(1, 1)
    if mat.shape != (n, n):
        raise ValueError(f"{name} must be {n}x{n}, got shape {mat.shape}")
    return mat


def _check_symmetric(mat, name, tol=COEFF_TOL):
    err = np.linalg.norm(mat - mat.T)
    if err > tol * (1.0 + np.linalg.norm(mat)):
        raise ValueError(f"{name} must be symmetric (residual {err:.3e})")


@dataclass(frozen=True)
class ConstantSegment:
    """Lattice piece with constant coefficients over ``duration``."""

    duration: float
    kappa: np.ndarray
    r: np.ndarray
    mass_inv: np.ndarray

    def coefficients(self, tau):
        return self.kappa, self.r, self.mass_inv

    @property
    def constant(self):
        return True


@dataclass(frozen=True)
class SmoothSegment:
    """Lattice piece with coefficients given as callables of local time.

    The callables receive the time elapsed since the segment start and
    must return ``n x n`` arrays (or scalars for ``n = 1``).
    """

    duration: float
    kappa: Callable
    r: Callable
    mass_inv: Callable

    def coefficients(self, tau):
        return self.kappa(tau), self.r(tau), self.mass_inv(tau)

    @property
    def constant(self):
        return False


Segment = Union[ConstantSegment, SmoothSegment]


class PeriodicHamiltonian:
    """Coefficient triple ``(kappa, R, m^{-1})`` with period ``T``.

    Immutable after construction.  Coefficients are evaluated with the
    time folded into ``[0, T)``, so every transfer-map routine sees an
    exactly periodic system.
    """

    def __init__(self, n, segments, validate=True):
        if int(n) != n or n < 1:
            raise ValueError(f"dimension must be a positive integer, got {n!r}")
        self.n = int(n)
        self.segments = tuple(segments)
        if not self.segments:
            raise ValueError("need at least one segment")
        durations = np.array([s.duration for s in self.segments], dtype=float)
        if np.any(durations <= 0.0):
            raise ValueError("segment durations must be positive")
        self.boundaries = np.concatenate([[0.0], np.cumsum(durations)])
        self.period = float(self.boundaries[-1])
        if validate:
            self._validate()

    # -- constructors -------------------------------------------------------

    @classmethod
    def constant(cls, kappa, period, r=None, mass_inv=None):
        """Single constant-coefficient segment covering one period."""
        kappa = np.atleast_2d(np.asarray(kappa, dtype=float))
        n = kappa.shape[0]
        r = np.zeros((n, n)) if r is None else _as_coeff_matrix(r, n, "r")
        mass_inv = (np.eye(n) if mass_inv is None
                    else _as_coeff_matrix(mass_inv, n, "mass_inv"))
        seg = ConstantSegment(duration=float(period), kappa=kappa, r=r,
                              mass_inv=mass_inv)
        return cls(n, [seg])

    @classmethod
    def from_callables(cls, n, period, kappa, r=None, mass_inv=None):
        """Single smooth segment from coefficient callables of absolute
        time in ``[0, period)``."""
        n = int(n)

        def wrap(f, default):
            if f is None:
                return lambda tau: default
            return lambda tau: _as_coeff_matrix(f(tau), n, "coefficient")

        seg = SmoothSegment(
            duration=float(period),
            kappa=wrap(kappa, np.zeros((n, n))),
            r=wrap(r, np.zeros((n, n))),
            mass_inv=wrap(mass_inv, np.eye(n)),
        )
        return cls(n, [seg])

    # -- validation ---------------------------------------------------------

    def _validate(self):
        for k, seg in enumerate(self.segments):
            taus = ([0.0, 0.5 * seg.duration, seg.duration * (1 - 1e-9)]
                    if not seg.constant else [0.0])
            for tau in taus:
                kap, r, minv = (
                    _as_coeff_matrix(c, self.n, name)
                    for c, name in zip(seg.coefficients(tau),
                                       ("kappa", "r", "mass_inv"))
                )
                _check_symmetric(kap, f"segment {k} kappa")
                _check_symmetric(minv, f"segment {k} mass_inv")
                cond = np.linalg.cond(minv)
                if not np.isfinite(cond) or cond > MASS_COND_LIMIT:
                    raise ValueError(
                        f"segment {k}: mass_inv condition number {cond:.3e} "
                        f"exceeds {MASS_COND_LIMIT:.1e}"
                    )

    # -- evaluation ---------------------------------------------------------

    @property
    def piecewise_constant(self):
        return all(seg.constant for seg in self.segments)

    @property
    def representation(self):
        return "piecewise_constant" if self.piecewise_constant else "smooth"

    def _locate(self, t):
        """Segment index and local time for absolute time ``t``."""
        local = float(np.mod(t, self.period))
        if self.period - local < 1e-14 * self.period:
            local = 0.0
        k = int(np.searchsorted(self.boundaries, local, side="right") - 1)
        k = min(max(k, 0), len(self.segments) - 1)
        return k, local - self.boundaries[k]

    def coefficients(self, t):
        """``(kappa, R, m^{-1})`` at absolute time ``t`` (periodic)."""
        k, tau = self._locate(t)
        kap, r, minv = self.segments[k].coefficients(tau)
        return (
            _as_coeff_matrix(kap, self.n, "kappa"),
            _as_coeff_matrix(r, self.n, "r"),
            _as_coeff_matrix(minv, self.n, "mass_inv"),
        )

    def a_matrix(self, t):
        """Quadratic-form matrix ``[[kappa, R], [R^T, m^{-1}]]`` at ``t``."""
        kap, r, minv = self.coefficients(t)
        n = self.n
        a = np.empty((2 * n, 2 * n))
        a[:n, :n] = kap
        a[:n, n:] = r
        a[n:, :n] = r.T
        a[n:, n:] = minv
        return a

    def generator(self, t):
        """``J A(t)``, the right-hand side matrix of ``zdot = J A z``."""
        kap, r, minv = self.coefficients(t)
        n = self.n
        g = np.empty((2 * n, 2 * n))
        g[:n, :n] = r.T
        g[:n, n:] = minv
        g[n:, :n] = -kap
        g[n:, n:] = -r
        return g

    def pieces(self, t0, t1):
        """Split ``[t0, t1]`` at (periodically repeated) segment edges.

        Yields ``(ta, tb, segment, tau_a)`` in order, where ``tau_a`` is
        the time offset of ``ta`` from the segment start.  Each piece
        lies inside a single segment, so constant pieces admit exact
        exponentials.  Segment edges are walked by index with absolute
        accumulated times (no modular arithmetic), which keeps the walk
        monotone even when ``t0`` sits a rounding error away from an
        edge.
        """
        if t1 < t0:
            raise ValueError(f"need t0 <= t1, got [{t0}, {t1}]")
        tiny = 1e-12 * self.period
        t = float(t0)
        if t1 - t <= tiny:
            return
        k, tau = self._locate(t)
        seg_start = t - tau
        nseg = len(self.segments)
        while t < t1 - tiny:
            seg = self.segments[k]
            seg_end = seg_start + seg.duration
            if seg_end - t <= tiny:
                # at (or a rounding error past) the edge: next segment
                seg_start = seg_end
                k = (k + 1) % nseg
                continue
            tb = min(t1, seg_end)
            yield t, tb, seg, max(t - seg_start, 0.0)
            t = tb
            if tb >= seg_end - tiny:
                seg_start = seg_end
                k = (k + 1) % nseg


def a_matrix(h, t):
    """Module-level alias for :meth:`PeriodicHamiltonian.a_matrix`."""
    return h.a_matrix(t)


@dataclass(frozen=True)
class TransferMap:
    """Linear map ``z(t_end) = M z(t_start)`` with solver metadata."""

    matrix: np.ndarray
    t_start: float
    t_end: float
    method: str
    steps: int
    symplectic_residual: float
    error_estimate: Optional[float] = None

    @property
    def n(self):
        return self.matrix.shape[0] // 2


def _rk4_matrix(h, m, ta, tb, seg, tau_a, nsteps):
    """Advance ``Mdot = J A(t) M`` across one smooth piece."""
    dt = (tb - ta) / nsteps
    tau = tau_a
    for _ in range(nsteps):
        g1 = _segment_generator(h, seg, tau)
        gm = _segment_generator(h, seg, tau + 0.5 * dt)
        g4 = _segment_generator(h, seg, tau + dt)
        k1 = g1 @ m
        k2 = gm @ (m + (0.5 * dt) * k1)
        k3 = gm @ (m + (0.5 * dt) * k2)
        k4 = g4 @ (m + dt * k3)
        m = m + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        tau += dt
    return m


def _segment_generator(h, seg, tau):
    kap, r, minv = (
        _as_coeff_matrix(c, h.n, name)
        for c, name in zip(seg.coefficients(tau), ("kappa", "r", "mass_inv"))
    )
    n = h.n
    g = np.empty((2 * n, 2 * n))
    g[:n, :n] = r.T
    g[:n, n:] = minv
    g[n:, :n] = -kap
    g[n:, n:] = -r
    return g


def _propagate_matrix(h, t0, t1, steps_per_period):
    """Transfer matrix over ``[t0, t1]`` plus bookkeeping.

    Constant pieces use the scaling-and-squaring matrix exponential
    (exact up to roundoff); smooth pieces use fixed-step classical RK4
    with the step pinned to ``period / steps_per_period``.
    """
    dim = 2 * h.n
    m = np.eye(dim)
    target = h.period / steps_per_period
    steps = 0
    exact_only = True
    for ta, tb, seg, tau_a in h.pieces(t0, t1):
        if seg.constant:
            gen = _segment_generator(h, seg, 0.0)
            m = expm(gen * (tb - ta)) @ m
            steps += 1
        else:
            exact_only = False
            nsteps = max(1, int(np.ceil((tb - ta) / target - 1e-12)))
            m = _rk4_matrix(h, np.eye(dim), ta, tb, seg, tau_a, nsteps) @ m
            steps += nsteps
    method = "exact_exponential" if exact_only and steps else "rk4"
    if not exact_only and any(s.constant for s in h.segments):
        method = "mixed"
    return m, steps, method


def transfer_map(h, t0, t1, steps_per_period=STEPS_PER_PERIOD,
                 integ_tol=INTEG_TOL, error_estimate=False):
    """Solution map of ``zdot = J A(t) z`` over ``[t0, t1]``.

    The returned matrix satisfies the flow composition property and is
    symplectic up to integration accuracy; the symplectic residual is
    monitored and a residual beyond ``100 * integ_tol`` (relative)
    aborts with a diagnostic rather than returning a corrupt map.  With
    ``error_estimate=True`` the map is recomputed at half the step size
    and the step-halving estimate ``||M_h - M_{h/2}|| / 15`` attached
    (the returned matrix is still the default-step one).
    """
    if steps_per_period < 1:
        raise IntegrationError(f"steps_per_period must be >= 1, got {steps_per_period}")
    if h.period / steps_per_period < 1e-15 * h.period:
        raise IntegrationError("step size underflow")
    m, steps, method = _propagate_matrix(h, t0, t1, steps_per_period)
    estimate = None
    if error_estimate and method != "exact_exponential":
        m_fine, _, _ = _propagate_matrix(h, t0, t1, 2 * steps_per_period)
        estimate = float(np.linalg.norm(m - m_fine) / 15.0)
    elif error_estimate:
        estimate = 0.0
    check = is_symplectic(m, 100.0 * integ_tol)
    if not check:
        raise IntegrationError(
            f"transfer map over [{t0}, {t1}] lost symplecticity: residual "
            f"{check.residual:.3e} exceeds 100 * {integ_tol:.1e} * {check.scale:.3e}; "
            "reduce the step size or check the coefficients"
        )
    return TransferMap(
        matrix=m,
        t_start=float(t0),
        t_end=float(t1),
        method=method,
        steps=steps,
        symplectic_residual=check.residual,
        error_estimate=estimate,
    )


def transfer_map_sequence(h, times, steps_per_period=STEPS_PER_PERIOD,
                          integ_tol=INTEG_TOL):
    """Transfer maps from ``times[0]`` to each later entry, in one sweep.

    ``times`` must be non-decreasing.  Equivalent to calling
    :func:`transfer_map` for each interval but integrates the lattice
    only once.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size < 1:
        raise ValueError("need a 1-d array of at least one time")
    if np.any(np.diff(times) < 0):
        raise ValueError("times must be non-decreasing")
    out = []
    dim = 2 * h.n
    m = np.eye(dim)
    total_steps = 0
    t_prev = times[0]
    for t in times:
        seg_map, steps, _ = _propagate_matrix(h, t_prev, t, steps_per_period)
        m = seg_map @ m
        total_steps += steps
        t_prev = t
        check = is_symplectic(m, 100.0 * integ_tol)
        if not check:
            raise IntegrationError(
                f"transfer map at t = {t} lost symplecticity "
                f"(residual {check.residual:.3e})"
            )
        out.append(TransferMap(
            matrix=m.copy(),
            t_start=float(times[0]),
            t_end=float(t),
            method=h.representation,
            steps=total_steps,
            symplectic_residual=check.residual,
        ))
    return out


def monodromy(h, steps_per_period=STEPS_PER_PERIOD, integ_tol=INTEG_TOL,
              error_estimate=False):
    """One-period solution map ``M(T)``; the system is stable exactly
    when this matrix is stable."""
    return transfer_map(h, 0.0, h.period, steps_per_period=steps_per_period,
                        integ_tol=integ_tol, error_estimate=error_estimate)


def propagate(h, z0, t, steps_per_period=STEPS_PER_PERIOD, integ_tol=INTEG_TOL):
    """Phase-space point at time ``t`` from initial condition ``z0``."""
    z0 = np.asarray(z0, dtype=float).ravel()
    if z0.size != 2 * h.n:
        raise ValueError(f"z0 must have length {2 * h.n}, got {z0.size}")
    tm = transfer_map(h, 0.0, t, steps_per_period=steps_per_period,
                      integ_tol=integ_tol)
    return tm.matrix @ z0
