"""Envelope-matrix factorization of the solution map.

The transfer map of ``zdot = J A(t) z`` factors as

    M(t) = S(t)^{-1} P(t)^{-1} S(0)

where ``S`` is the lower block-triangular canonical transformation

    S = [[w^{-T}, 0], [(w R - wdot) m, w]]

built from an ``n x n`` envelope matrix ``w(t)`` obeying a nonlinear
second-order matrix equation, and ``P(t)`` is a symplectic rotation (the
phase advance) generated by the rate ``mu = (w m w^T)^{-1}``.

Integration works on the first-order variables ``(w, V)`` with the
momentum-like ``V = (wdot - w R) m`` (so the ``S`` lower-left block is
``-V`` and no mass inversion appears in any assembled transform), and
carries the phase advance along in its unitary picture ``U = P1 - i P2``
with ``Udot = i U mu``.

The matched-envelope construction at the end of the module realizes the
stability criterion: a lattice is stable exactly when the envelope
equation admits an initial condition with symplectic ``S(0)`` whose
modulus ``sqrt(w^T w)`` returns to itself after one period.  The initial
condition is read off the horizontal polar decomposition of the inverse
normal-form conjugator of the monodromy matrix.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._linalg import sqrt_spd
from .decompositions import horizontal_polar, stable_normal_form
from .dynamics import INTEG_TOL, STEPS_PER_PERIOD, TransferMap
from .errors import EnvelopeSingularityError, UnstableMatrixError
from .symplectic import SymplecticRotation, is_symplectic, stability_verdict

REUNITARIZE_EVERY = 64     # polar-project the phase unitary this often
COND_CHECK_EVERY = 64      # envelope conditioning check cadence
W_COND_LIMIT = 1e12


@dataclass(frozen=True)
class EnvelopeState:
    """Envelope matrix and its time derivative at one instant."""

    w: np.ndarray
    w_dot: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        w = np.atleast_2d(np.asarray(self.w, dtype=float))
        w_dot = np.atleast_2d(np.asarray(self.w_dot, dtype=float))
        if w.shape != w_dot.shape or w.shape[0] != w.shape[1]:
            raise ValueError(
                f"w and w_dot must be square and matching, got {w.shape} "
                f"and {w_dot.shape}"
            )
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "w_dot", w_dot)
        object.__setattr__(self, "t", float(self.t))

    @property
    def n(self):
        return self.w.shape[0]


def _momentum(state, h):
    """``V = (wdot - w R) m`` without forming ``m`` when it can vanish."""
    kap, r, minv = h.coefficients(state.t)
    rate = state.w_dot - state.w @ r
    if not rate.any():
        return np.zeros_like(rate)
    try:
        return np.linalg.solve(minv, rate.T).T
    except np.linalg.LinAlgError as exc:
        raise EnvelopeSingularityError(
            f"mass matrix is singular at t = {state.t}: {exc}"
        ) from exc


def _rate_from_momentum(w, v, kap, r, minv):
    return v @ minv + w @ r


def envelope_transform(state, h):
    """Canonical transformation ``S = [[w^{-T}, 0], [-V, w]]``.

    Symplectic exactly when ``V w^T`` is symmetric; along envelope
    trajectories this property is preserved from the initial condition.
    """
    v = _momentum(state, h)
    n = state.n
    try:
        w_inv = np.linalg.inv(state.w)
    except np.linalg.LinAlgError as exc:
        raise EnvelopeSingularityError(
            f"envelope matrix is singular at t = {state.t}"
        ) from exc
    out = np.zeros((2 * n, 2 * n))
    out[:n, :n] = w_inv.T
    out[n:, :n] = -v
    out[n:, n:] = state.w
    return out


def envelope_transform_inverse(state, h):
    """Closed-form inverse ``S^{-1} = [[w^T, 0], [w^{-1} V w^T, w^{-1}]]``."""
    v = _momentum(state, h)
    return _transform_inverse_wv(state.w, v, state.t)


def _transform_inverse_wv(w, v, t):
    n = w.shape[0]
    try:
        w_inv = np.linalg.inv(w)
    except np.linalg.LinAlgError as exc:
        raise EnvelopeSingularityError(
            f"envelope matrix is singular at t = {t}"
        ) from exc
    out = np.zeros((2 * n, 2 * n))
    out[:n, :n] = w.T
    out[n:, :n] = w_inv @ v @ w.T
    out[n:, n:] = w_inv
    return out


def phase_advance_rate(state, h):
    """Rotation generator ``mu = (w m w^T)^{-1} = w^{-T} m^{-1} w^{-1}``.

    Symmetric, and positive-definite whenever the mass matrix is.
    Evaluates through ``m^{-1}`` directly so a vanishing inverse mass
    yields the degenerate rate ``mu = 0`` exactly.
    """
    _, _, minv = h.coefficients(state.t)
    try:
        w_inv = np.linalg.inv(state.w)
    except np.linalg.LinAlgError as exc:
        raise EnvelopeSingularityError(
            f"envelope matrix is singular at t = {state.t}"
        ) from exc
    mu = w_inv.T @ minv @ w_inv
    return 0.5 * (mu + mu.T)


class _Coeffs:
    """Coefficient sample with the derived matrices the right-hand side
    needs; ``m`` and friends are only formed when the coupling is live."""

    __slots__ = ("kappa", "r", "mass_inv", "coupled", "m_rt", "keff")

    def __init__(self, kappa, r, mass_inv, n):
        self.kappa = np.asarray(kappa, dtype=float).reshape(n, n)
        self.r = np.asarray(r, dtype=float).reshape(n, n)
        self.mass_inv = np.asarray(mass_inv, dtype=float).reshape(n, n)
        self.coupled = bool(self.r.any())
        if self.coupled:
            m = np.linalg.inv(self.mass_inv)
            self.m_rt = m @ self.r.T
            self.keff = self.kappa - self.r @ self.m_rt
        else:
            self.m_rt = None
            self.keff = self.kappa


def _coeffs(h, seg, tau):
    kap, r, minv = seg.coefficients(tau)
    return _Coeffs(kap, r, minv, h.n)


def _rhs(w, v, u, c):
    """Slopes of ``(w, V, U)`` at one coefficient sample."""
    w_inv = np.linalg.inv(w)
    a = w_inv.T @ c.mass_inv
    mu = a @ w_inv
    if c.coupled:
        w_dot = v @ c.mass_inv + w @ c.r
        v_dot = -(w_dot @ c.m_rt) - w @ c.keff + mu @ w_inv.T
    else:
        w_dot = v @ c.mass_inv
        v_dot = -(w @ c.keff) + mu @ w_inv.T
    u_dot = 1j * (u @ mu) if u is not None else None
    return w_dot, v_dot, u_dot


def envelope_rhs(state, h):
    """First-order slopes ``(w_dot, v_dot)`` of the envelope equation.

    Uses the momentum variable ``V = (wdot - w R) m``; the pair

        wdot = V m^{-1} + w R
        Vdot = -wdot m R^T - w (kappa - R m R^T) + (w^T w m w^T)^{-1}

    is algebraically equivalent to the second-order matrix envelope
    equation and avoids differentiating the mass coefficient.
    """
    kap, r, minv = h.coefficients(state.t)
    c = _Coeffs(kap, r, minv, state.n)
    v = _momentum(state, h)
    w_dot, v_dot, _ = _rhs(state.w, v, None, c)
    return w_dot, v_dot


@dataclass
class EnvelopeTrajectory:
    """Dense envelope history on an integration grid.

    Nodes are exact integrator outputs; queries off the grid re-advance
    the state from the preceding node with the same step policy, so the
    trajectory behaves like dense output at grid accuracy.
    """

    hamiltonian: object
    times: np.ndarray
    w: np.ndarray
    v: np.ndarray
    unitary: Optional[np.ndarray]
    steps_per_period: int
    max_w_condition: float

    @property
    def n(self):
        return self.w.shape[1]

    @property
    def t_start(self):
        return float(self.times[0])

    @property
    def t_end(self):
        return float(self.times[-1])

    def _node_index(self, t):
        tol = 1e-9 * max(1.0, self.hamiltonian.period)
        i = int(np.searchsorted(self.times, t))
        for k in (i - 1, i, i + 1):
            if 0 <= k < self.times.size and abs(self.times[k] - t) <= tol:
                return k
        return None

    def _at(self, t):
        """Raw ``(w, V, U)`` at time ``t`` (grid node or re-advanced)."""
        if not (self.t_start - 1e-12 <= t <= self.t_end + 1e-12):
            raise ValueError(
                f"t = {t} outside trajectory range "
                f"[{self.t_start}, {self.t_end}]"
            )
        k = self._node_index(t)
        if k is not None:
            u = self.unitary[k] if self.unitary is not None else None
            return self.w[k], self.v[k], u
        k = int(np.searchsorted(self.times, t, side="right") - 1)
        k = max(k, 0)
        w, v = self.w[k].copy(), self.v[k].copy()
        u = self.unitary[k].copy() if self.unitary is not None else None
        w, v, u, _ = _advance(self.hamiltonian, w, v, u,
                              float(self.times[k]), float(t),
                              self.hamiltonian.period / self.steps_per_period)
        return w, v, u

    def state(self, t):
        """:class:`EnvelopeState` (with ``w_dot``) at time ``t``."""
        w, v, _ = self._at(t)
        kap, r, minv = self.hamiltonian.coefficients(t)
        return EnvelopeState(w=w, w_dot=_rate_from_momentum(w, v, kap, r, minv),
                             t=t)

    def states(self):
        """All grid-node states, in order."""
        return [self.state(float(t)) for t in self.times]

    def rotation(self, t):
        """Accumulated phase-advance rotation at time ``t``."""
        if self.unitary is None:
            raise ValueError("trajectory was integrated without phase tracking")
        _, _, u = self._at(t)
        return SymplecticRotation.from_unitary(u)


def _advance(h, w, v, u, t0, t1, target_step, collect=None):
    """March ``(w, V, U)`` from ``t0`` to ``t1`` with fixed-step RK4.

    Steps align to segment edges and to ``collect["times_wanted"]``
    (sorted), so those instants land on exact grid nodes; every step end
    is appended to ``collect``.  Returns the final state and the worst
    envelope condition number seen at the check cadence.
    """
    max_cond = 1.0
    step_count = 0
    bracket_lo = t0  # last time the envelope was confirmed healthy
    wanted = collect["times_wanted"] if collect is not None else []
    for ta, tb, seg, tau_a in list(h.pieces(t0, t1)):
        cuts = [ta, tb] + [tc for tc in wanted if ta < tc < tb]
        cuts = _dedupe(sorted(cuts), 1e-12 * max(1.0, h.period))
        for a, b in zip(cuts[:-1], cuts[1:]):
            nsteps = max(1, int(np.ceil((b - a) / target_step - 1e-12)))
            dt = (b - a) / nsteps
            tau = tau_a + (a - ta)
            const_c = _coeffs(h, seg, tau) if seg.constant else None
            t_abs = a
            for _ in range(nsteps):
                if const_c is not None:
                    c1 = cm = c2 = const_c
                else:
                    c1 = _coeffs(h, seg, tau)
                    cm = _coeffs(h, seg, tau + 0.5 * dt)
                    c2 = _coeffs(h, seg, tau + dt)
                try:
                    k1 = _rhs(w, v, u, c1)
                    k2 = _rhs(w + 0.5 * dt * k1[0], v + 0.5 * dt * k1[1],
                              None if u is None else u + 0.5 * dt * k1[2], cm)
                    k3 = _rhs(w + 0.5 * dt * k2[0], v + 0.5 * dt * k2[1],
                              None if u is None else u + 0.5 * dt * k2[2], cm)
                    k4 = _rhs(w + dt * k3[0], v + dt * k3[1],
                              None if u is None else u + dt * k3[2], c2)
                except np.linalg.LinAlgError as exc:
                    raise EnvelopeSingularityError(
                        "envelope matrix lost invertibility between "
                        f"t = {bracket_lo:.9g} and t = {t_abs + dt:.9g}",
                        t_lo=bracket_lo, t_hi=t_abs + dt,
                    ) from exc
                w = w + (dt / 6.0) * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
                v = v + (dt / 6.0) * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
                if u is not None:
                    u = u + (dt / 6.0) * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
                tau += dt
                t_abs += dt
                step_count += 1
                if not np.isfinite(w).all() or not np.isfinite(v).all():
                    raise EnvelopeSingularityError(
                        "envelope integration diverged between "
                        f"t = {bracket_lo:.9g} and t = {t_abs:.9g}",
                        t_lo=bracket_lo, t_hi=t_abs,
                    )
                if step_count % COND_CHECK_EVERY == 0:
                    cond = np.linalg.cond(w)
                    max_cond = max(max_cond, cond)
                    if cond > W_COND_LIMIT:
                        raise EnvelopeSingularityError(
                            f"envelope condition number {cond:.3e} exceeds "
                            f"{W_COND_LIMIT:.1e} between t = {bracket_lo:.9g} "
                            f"and t = {t_abs:.9g}",
                            t_lo=bracket_lo, t_hi=t_abs,
                        )
                    bracket_lo = t_abs
                    if u is not None:
                        uu, _, vvt = np.linalg.svd(u)
                        u = uu @ vvt
                if collect is not None and t_abs < b - 1e-12:
                    _collect_node(collect, t_abs, w, v, u)
            if collect is not None:
                _collect_node(collect, b, w, v, u)
    cond = np.linalg.cond(w)
    max_cond = max(max_cond, cond)
    if cond > W_COND_LIMIT:
        raise EnvelopeSingularityError(
            f"envelope condition number {cond:.3e} exceeds {W_COND_LIMIT:.1e} "
            f"at t = {t1:.9g}", t_lo=bracket_lo, t_hi=t1,
        )
    return w, v, u, max_cond


def _collect_node(collect, t, w, v, u):
    collect["t"].append(t)
    collect["w"].append(w.copy())
    collect["v"].append(v.copy())
    if u is not None:
        collect["u"].append(u.copy())


def _dedupe(values, tol):
    out = [values[0]]
    for x in values[1:]:
        if x - out[-1] > tol:
            out.append(x)
    return out


def integrate_envelope(initial, h, t_end, steps_per_period=STEPS_PER_PERIOD,
                       t_eval=None, with_phase=True):
    """Integrate the matrix envelope equation from ``initial.t`` to ``t_end``.

    Returns an :class:`EnvelopeTrajectory` whose grid is aligned with
    lattice segment edges and contains every ``t_eval`` entry as an
    exact node.  With ``with_phase`` the phase-advance unitary is
    carried along (re-unitarized periodically by polar projection).

    A singular envelope matrix is a hard error: integration aborts with
    an :class:`EnvelopeSingularityError` holding a bracketing interval.
    """
    if not isinstance(initial, EnvelopeState):
        raise TypeError("initial must be an EnvelopeState")
    t0 = initial.t
    if t_end < t0:
        raise ValueError(f"t_end = {t_end} precedes initial time {t0}")
    v0 = _momentum(initial, h)
    cond0 = np.linalg.cond(initial.w)
    if not np.isfinite(cond0) or cond0 > W_COND_LIMIT:
        raise EnvelopeSingularityError(
            f"initial envelope condition number {cond0:.3e} exceeds "
            f"{W_COND_LIMIT:.1e}", t_lo=t0, t_hi=t0,
        )
    w, v = initial.w.copy(), v0.copy()
    u = np.eye(h.n, dtype=complex) if with_phase else None

    wanted = [] if t_eval is None else sorted(float(t) for t in t_eval)
    for t in wanted:
        if t < t0 - 1e-12 or t > t_end + 1e-12:
            raise ValueError(f"t_eval entry {t} outside [{t0}, {t_end}]")
    collect = {"times_wanted": wanted, "t": [t0], "w": [w.copy()],
               "v": [v.copy()], "u": [] if u is None else [u.copy()]}
    if t_end > t0:
        w, v, u, max_cond = _advance(
            h, w, v, u, t0, float(t_end), h.period / steps_per_period,
            collect=collect,
        )
    else:
        max_cond = float(np.linalg.cond(w))
    times = np.array(collect["t"])
    return EnvelopeTrajectory(
        hamiltonian=h,
        times=times,
        w=np.array(collect["w"]),
        v=np.array(collect["v"]),
        unitary=None if u is None else np.array(collect["u"]),
        steps_per_period=steps_per_period,
        max_w_condition=float(max_cond),
    )


@dataclass(frozen=True)
class PhaseAdvance:
    """Accumulated symplectic-rotation factor of the solution map."""

    rotation: SymplecticRotation
    t: float

    @property
    def matrix(self):
        return self.rotation.matrix


def phase_advance(h, trajectory, t):
    """Phase advance ``P(t)`` from an envelope trajectory with phase data.

    ``P`` starts at the identity, stays in the symplectic-orthogonal
    group (unitarity is restored by polar projection during
    integration), and its inverse is its transpose.
    """
    rot = trajectory.rotation(t)
    return PhaseAdvance(rotation=rot, t=float(t))


def solution_map_from_envelope(h, trajectory, t, integ_tol=INTEG_TOL):
    """Envelope-route transfer map ``M(t) = S(t)^{-1} P(t)^{-1} S(t0)``.

    Requires a trajectory carrying phase data that covers ``t``.  Uses
    the closed-form inverse of the canonical transformation, so the only
    numerical inversions are of the envelope matrix itself.
    """
    if trajectory.unitary is None:
        raise ValueError("trajectory was integrated without phase tracking")
    w0, v0, _ = trajectory._at(trajectory.t_start)
    wt, vt, ut = trajectory._at(float(t))
    n = trajectory.n
    s0 = np.zeros((2 * n, 2 * n))
    s0[:n, :n] = np.linalg.inv(w0).T
    s0[n:, :n] = -v0
    s0[n:, n:] = w0
    s_inv = _transform_inverse_wv(wt, vt, t)
    p = SymplecticRotation.from_unitary(ut).matrix
    matrix = s_inv @ p.T @ s0
    check = is_symplectic(matrix, 100.0 * integ_tol)
    return TransferMap(
        matrix=matrix,
        t_start=trajectory.t_start,
        t_end=float(t),
        method="envelope",
        steps=0,
        symplectic_residual=check.residual,
    )


def twiss_blocks(state, h):
    """Generalized lattice-function blocks ``(alpha, beta, gamma)``.

    ``beta = w^T w``, ``alpha = -w^T V`` and
    ``gamma = V^T V + w^{-1} w^{-T}``; the invariant quadratic form is
    ``[[gamma, alpha^T], [alpha, beta]]``, reducing at ``n = 1`` to the
    classic Courant-Snyder triple.
    """
    v = _momentum(state, h)
    w = state.w
    beta = w.T @ w
    alpha = -(w.T @ v)
    try:
        w_inv = np.linalg.inv(w)
    except np.linalg.LinAlgError as exc:
        raise EnvelopeSingularityError(
            f"envelope matrix is singular at t = {state.t}"
        ) from exc
    gamma = v.T @ v + w_inv @ w_inv.T
    return alpha, beta, gamma


def cs_invariant(z, state, h):
    """Quadratic invariant ``z^T S^T S z`` of the envelope frame.

    Constant along trajectories of the underlying linear system when
    ``state`` follows the envelope equation with symplectic ``S(0)``.
    """
    z = np.asarray(z, dtype=float).ravel()
    s = envelope_transform(state, h)
    if z.size != s.shape[0]:
        raise ValueError(f"z must have length {s.shape[0]}, got {z.size}")
    sz = s @ z
    return float(sz @ sz)


def general_invariant(z, xi, state, phase, h):
    """Invariant family ``z^T S^T P^T xi P S z`` for positive-definite ``xi``.

    Reduces to :func:`cs_invariant` at ``xi = I`` (the rotation drops
    out).  Linear in ``xi``.
    """
    z = np.asarray(z, dtype=float).ravel()
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    if xi.shape[0] != xi.shape[1] or xi.shape[0] != z.size:
        raise ValueError(f"xi must be {z.size}x{z.size}, got {xi.shape}")
    sym_err = np.linalg.norm(xi - xi.T)
    if sym_err > 1e-10 * (1.0 + np.linalg.norm(xi)):
        raise ValueError(f"xi must be symmetric (residual {sym_err:.3e})")
    if np.linalg.eigvalsh(0.5 * (xi + xi.T))[0] <= 0.0:
        raise ValueError("xi must be positive-definite")
    u = phase.matrix @ (envelope_transform(state, h) @ z)
    return float(u @ (xi @ u))


@dataclass(frozen=True)
class MatchedSolution:
    """Periodic-modulus envelope solution certifying lattice stability."""

    initial: EnvelopeState
    envelope_modulus_residual: float
    transform_symplectic_residual: float
    match_tol: float
    accepted: bool
    trajectory: EnvelopeTrajectory
    monodromy_map: TransferMap
    normal_form: object


def matched_envelope(h, steps_per_period=STEPS_PER_PERIOD, match_tol=1e-6,
                     stability_tol=1e-8, integ_tol=INTEG_TOL,
                     monodromy_map=None):
    """Construct and verify the matched envelope of a stable lattice.

    Pipeline: one-period map -> stability check -> normal form
    ``M(T) = F N F^{-1}`` -> horizontal polar decomposition of
    ``F^{-1} = u [[L, 0], [Q, L^{-1}]]`` -> initial condition

        w(0) = L^{-1},    wdot(0) = w(0) R(0) - Q m(0)^{-1}

    (matching the stabilizer factor block-for-block to the canonical
    transformation, which fixes the O(n) gauge so ``w(0)`` is
    positive-definite) -> integrate one period -> report the modulus
    return residual ``||sqrt(w^T w)(T) - sqrt(w^T w)(0)||``.

    Raises :class:`UnstableMatrixError` (with the stability report) on
    unstable lattices; envelope singularities during verification
    propagate as :class:`EnvelopeSingularityError`.
    """
    from .dynamics import monodromy as _monodromy

    mon = monodromy_map
    if mon is None:
        mon = _monodromy(h, steps_per_period=steps_per_period,
                         integ_tol=integ_tol)
    report = stability_verdict(mon.matrix, tol=stability_tol)
    if not report.stable:
        raise UnstableMatrixError(
            "lattice is unstable; no matched envelope exists: "
            + "; ".join(report.offenders),
            report=report,
        )
    nf = stable_normal_form(mon.matrix, tol=stability_tol)
    parts = horizontal_polar(np.linalg.inv(nf.conjugator),
                             symp_tol=max(100.0 * integ_tol, 1e-8))
    w0 = np.linalg.inv(parts.l)
    _, r0, minv0 = h.coefficients(0.0)
    w0_dot = w0 @ r0 - parts.q @ minv0
    initial = EnvelopeState(w=w0, w_dot=w0_dot, t=0.0)

    s0 = envelope_transform(initial, h)
    s0_check = is_symplectic(s0)

    traj = integrate_envelope(initial, h, h.period,
                              steps_per_period=steps_per_period,
                              t_eval=[h.period])
    w_final, _, _ = traj._at(h.period)
    residual = float(np.linalg.norm(
        sqrt_spd(w_final.T @ w_final) - sqrt_spd(w0.T @ w0)
    ))
    return MatchedSolution(
        initial=initial,
        envelope_modulus_residual=residual,
        transform_symplectic_residual=s0_check.residual,
        match_tol=match_tol,
        accepted=residual <= match_tol,
        trajectory=traj,
        monodromy_map=mon,
        normal_form=nf,
    )
