"""One-degree-of-freedom Courant-Snyder machinery.

For ``xddot + kappa(t) x = 0`` (unit mass, no cross coupling) the
envelope reduces to a scalar ``w(t)`` with

    wddot + kappa w = w^{-3}

and the classic lattice functions ``alpha = -w wdot``, ``beta = w^2``,
``gamma = (1 + alpha^2) / beta``; the transfer matrix takes the familiar
beta-form parameterized by the phase advance ``phi = int dt / w^2``.

This module is both a fast path for scalar problems and an independent
cross-check of the matrix envelope machinery at ``n = 1``.  It also
hosts the classic parametric-resonance stability chart for
``kappa(t) = a + 2 q cos(2 t)``, computed with a vectorized fixed-step
integrator over the whole ``(a, q)`` grid at once.
"""

from dataclasses import dataclass

import numpy as np

from .dynamics import STEPS_PER_PERIOD, PeriodicHamiltonian
from .errors import EnvelopeSingularityError

MATHIEU_PERIOD = np.pi     # kappa(t) = a + 2 q cos(2 t) repeats after pi
EDGE_MARGIN = 1e-9         # |trace| criterion margin at marginal cells


@dataclass(frozen=True)
class TwissState:
    """Scalar lattice functions plus accumulated phase."""

    alpha: float
    beta: float
    gamma: float
    phi: float = 0.0

    def __post_init__(self):
        if self.beta <= 0.0:
            raise ValueError(f"beta must be positive, got {self.beta}")

    @property
    def determinant_residual(self):
        """How far ``beta * gamma - alpha^2`` is from one."""
        return abs(self.beta * self.gamma - self.alpha**2 - 1.0)


def twiss_from_envelope(w, w_dot, phi=0.0):
    """Lattice functions from the scalar envelope and its slope."""
    if w == 0.0:
        raise ValueError("envelope w must be nonzero")
    beta = w * w
    alpha = -w * w_dot
    return TwissState(alpha=alpha, beta=beta, gamma=(1.0 + alpha**2) / beta,
                      phi=phi)


def envelope_from_twiss(ts):
    """Inverse of :func:`twiss_from_envelope` (positive branch)."""
    w = np.sqrt(ts.beta)
    return w, -ts.alpha / w


def scalar_envelope_rhs(w, w_dot, kappa_t):
    """Second derivative ``wddot = w^{-3} - kappa w``."""
    if w == 0.0:
        raise ValueError("scalar envelope equation is singular at w = 0")
    return w**-3 - kappa_t * w


def scalar_cs_invariant(x, x_dot, w, w_dot):
    """Conserved quantity ``x^2 / w^2 + (w xdot - wdot x)^2``."""
    if w == 0.0:
        raise ValueError("invariant is singular at w = 0")
    return (x / w) ** 2 + (w * x_dot - w_dot * x) ** 2


def cs_transfer_matrix(twiss0, twiss1, phi):
    """Beta-form transfer matrix between two lattice-function states.

    Equals ``S(1)^{-1} R(phi) S(0)`` for the scalar envelope frames
    ``S = [[1/w, 0], [-wdot, w]]``; determinant one by construction.
    """
    b0, a0 = twiss0.beta, twiss0.alpha
    b1, a1 = twiss1.beta, twiss1.alpha
    c, s = np.cos(phi), np.sin(phi)
    root = np.sqrt(b1 / b0)
    return np.array([
        [root * (c + a0 * s), np.sqrt(b1 * b0) * s],
        [(-(1.0 + a1 * a0) * s + (a0 - a1) * c) / np.sqrt(b1 * b0),
         (c - a1 * s) / root],
    ])


# ---------------------------------------------------------------------------
# Scalar envelope integration
# ---------------------------------------------------------------------------

@dataclass
class ScalarEnvelopeTrajectory:
    """Dense scalar envelope history: ``w``, ``wdot`` and the phase
    integral ``phi(t) = int_0^t ds / w(s)^2`` on a shared grid."""

    times: np.ndarray
    w: np.ndarray
    w_dot: np.ndarray
    phi: np.ndarray
    period: float

    def _index(self, t):
        tol = 1e-9 * max(1.0, self.period)
        i = int(np.searchsorted(self.times, t))
        for k in (i - 1, i, i + 1):
            if 0 <= k < self.times.size and abs(self.times[k] - t) <= tol:
                return k
        raise ValueError(
            f"t = {t} is not a grid node; pass it via t_eval when integrating"
        )

    def at(self, t):
        """``(w, wdot, phi)`` at a grid node."""
        k = self._index(t)
        return float(self.w[k]), float(self.w_dot[k]), float(self.phi[k])

    def twiss(self, t):
        w, w_dot, phi = self.at(t)
        return twiss_from_envelope(w, w_dot, phi)


def scalar_kappa(h):
    """Extract ``kappa(t)`` from an ``n = 1`` lattice with unit mass and
    no cross coupling; rejects anything else."""
    if h.n != 1:
        raise ValueError(f"scalar reduction needs n = 1, got n = {h.n}")
    for t in np.linspace(0.0, h.period, 7, endpoint=False):
        _, r, minv = h.coefficients(t)
        if abs(r[0, 0]) > 1e-12 or abs(minv[0, 0] - 1.0) > 1e-12:
            raise ValueError(
                "scalar Courant-Snyder form requires R = 0 and m = 1; "
                f"found R = {r[0, 0]:g}, m^-1 = {minv[0, 0]:g} at t = {t:g}"
            )
    return lambda t: float(h.coefficients(t)[0][0, 0])


def integrate_scalar_envelope(h, w0, w_dot0, t_end,
                              steps_per_period=STEPS_PER_PERIOD,
                              t_eval=None):
    """Integrate ``wddot = w^{-3} - kappa w`` with the phase carried along.

    ``h`` is an ``n = 1`` :class:`PeriodicHamiltonian` in scalar form
    (unit mass, no coupling).  The grid aligns to segment edges and to
    every ``t_eval`` entry; ``phi`` is integrated jointly so it is
    consistent with the dense ``w`` samples to integrator accuracy.
    """
    if not isinstance(h, PeriodicHamiltonian):
        raise TypeError("h must be a PeriodicHamiltonian")
    scalar_kappa(h)  # validates scalar form
    if w0 <= 0.0:
        raise ValueError("scalar envelope must start positive")
    target = h.period / steps_per_period
    wanted = [] if t_eval is None else sorted(float(t) for t in t_eval)

    times = [0.0]
    ws = [float(w0)]
    wds = [float(w_dot0)]
    phis = [0.0]
    y = np.array([w0, w_dot0, 0.0], dtype=float)
    tiny = 1e-12 * max(1.0, h.period)

    def seg_kappa(seg, tau):
        return float(np.asarray(seg.coefficients(tau)[0]).reshape(-1)[0])

    def f(y, kap, t):
        w = y[0]
        if w <= 0.0:
            raise EnvelopeSingularityError(
                f"scalar envelope hit w <= 0 near t = {t:.9g}", t_hi=t)
        return np.array([y[1], w**-3 - kap * w, w**-2])

    # segment-local coefficient sampling keeps every RK4 stage on the
    # correct side of a piecewise discontinuity
    for ta, tb, seg, tau_a in h.pieces(0.0, float(t_end)):
        cuts = [ta, tb] + [tc for tc in wanted if ta < tc < tb]
        cuts = sorted(cuts)
        cuts = [cuts[0]] + [c for p, c in zip(cuts, cuts[1:]) if c - p > tiny]
        for a, b in zip(cuts[:-1], cuts[1:]):
            nsteps = max(1, int(np.ceil((b - a) / target - 1e-12)))
            dt = (b - a) / nsteps
            tau = tau_a + (a - ta)
            t = a
            for _ in range(nsteps):
                kap1 = seg_kappa(seg, tau)
                kapm = seg_kappa(seg, tau + 0.5 * dt)
                kap2 = seg_kappa(seg, tau + dt)
                k1 = f(y, kap1, t)
                k2 = f(y + 0.5 * dt * k1, kapm, t)
                k3 = f(y + 0.5 * dt * k2, kapm, t)
                k4 = f(y + dt * k3, kap2, t)
                y = y + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
                tau += dt
                t += dt
                times.append(t)
                ws.append(y[0])
                wds.append(y[1])
                phis.append(y[2])
    return ScalarEnvelopeTrajectory(
        times=np.array(times), w=np.array(ws), w_dot=np.array(wds),
        phi=np.array(phis), period=h.period,
    )


def phase_integral(trajectory, t=None):
    """Accumulated phase ``phi(t)``; monotone with ``phi(0) = 0``.

    With ``t`` omitted returns the full profile aligned with
    ``trajectory.times``.
    """
    if t is None:
        return trajectory.phi.copy()
    _, _, phi = trajectory.at(float(t))
    return phi


# ---------------------------------------------------------------------------
# Parametric-resonance stability chart
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MathieuScan:
    """Stability grid for ``kappa(t) = a + 2 q cos(2 t)`` over one period.

    ``trace[i, j]`` is the one-period matrix trace at ``(a_values[i],
    q_values[j])``; ``stable`` applies the trace criterion with a small
    margin so exactly-marginal cells classify deterministically.
    """

    a_values: np.ndarray
    q_values: np.ndarray
    trace: np.ndarray
    stable: np.ndarray
    failed: np.ndarray
    edge_margin: float

    @property
    def period(self):
        return MATHIEU_PERIOD


def mathieu_scan(a_range, q_range, resolution,
                 steps=STEPS_PER_PERIOD, edge_margin=EDGE_MARGIN):
    """Trace-criterion stability chart of the classic parametric
    oscillator, vectorized over the whole parameter grid.

    ``resolution`` is an int (same for both axes) or a pair
    ``(n_a, n_q)``; each axis is sampled inclusively over its range.
    Stability per cell is ``|trace| <= 2 - edge_margin``; cells whose
    integration produced non-finite values are flagged in ``failed``
    and marked unstable.
    """
    if np.isscalar(resolution):
        res_a = res_q = int(resolution)
    else:
        res_a, res_q = (int(r) for r in resolution)
    if res_a < 2 or res_q < 2:
        raise ValueError(f"resolution must be >= 2, got ({res_a}, {res_q})")
    a_values = np.linspace(float(a_range[0]), float(a_range[1]), res_a)
    q_values = np.linspace(float(q_range[0]), float(q_range[1]), res_q)
    aa, qq = np.meshgrid(a_values, q_values, indexing="ij")
    a_flat = aa.ravel()
    q_flat = qq.ravel()

    # batched RK4 on Mdot = [[0, 1], [-kappa, 0]] M over all cells at once
    ncells = a_flat.size
    top = np.zeros((ncells, 2))     # first row of M
    bot = np.zeros((ncells, 2))     # second row of M
    top[:, 0] = 1.0
    bot[:, 1] = 1.0
    dt = MATHIEU_PERIOD / int(steps)

    def slopes(t, top, bot):
        kap = a_flat + 2.0 * q_flat * np.cos(2.0 * t)
        return bot, -kap[:, None] * top

    t = 0.0
    for _ in range(int(steps)):
        k1t, k1b = slopes(t, top, bot)
        k2t, k2b = slopes(t + 0.5 * dt, top + 0.5 * dt * k1t, bot + 0.5 * dt * k1b)
        k3t, k3b = slopes(t + 0.5 * dt, top + 0.5 * dt * k2t, bot + 0.5 * dt * k2b)
        k4t, k4b = slopes(t + dt, top + dt * k3t, bot + dt * k3b)
        top = top + (dt / 6.0) * (k1t + 2 * k2t + 2 * k3t + k4t)
        bot = bot + (dt / 6.0) * (k1b + 2 * k2b + 2 * k3b + k4b)
        t += dt

    trace = (top[:, 0] + bot[:, 1]).reshape(res_a, res_q)
    failed = ~np.isfinite(trace)
    stable = np.abs(np.where(failed, np.inf, trace)) <= 2.0 - edge_margin
    return MathieuScan(
        a_values=a_values,
        q_values=q_values,
        trace=trace,
        stable=stable,
        failed=failed,
        edge_margin=float(edge_margin),
    )


def mathieu_lattice(a, q):
    """``n = 1`` lattice for ``kappa(t) = a + 2 q cos(2 t)`` over one
    period of the modulation."""
    a = float(a)
    q = float(q)
    return PeriodicHamiltonian.from_callables(
        1, MATHIEU_PERIOD,
        kappa=lambda t: np.array([[a + 2.0 * q * np.cos(2.0 * t)]]),
    )
