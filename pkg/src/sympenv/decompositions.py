"""Structural decompositions of symplectic matrices.

Two factorizations drive the rest of the package:

* the *horizontal polar decomposition*: any symplectic matrix splits
  uniquely into a symplectic rotation times a lower block-triangular
  stabilizer of the vertical Lagrangian plane, once the upper-left
  stabilizer block is required positive-definite.  An O(n) gauge
  freedom relates the non-unique variants of this (pre-Iwasawa)
  splitting.

* the *normal form for stable symplectic matrices*: a symplectic matrix
  whose powers stay bounded is symplectically similar to a diamond
  product of planar rotations.  The construction is fully explicit: it
  builds a Krein-orthonormal eigenbasis, pairs eigenvectors across
  complex conjugation, and assembles the conjugator from their real and
  imaginary parts.
"""

from dataclasses import dataclass

import numpy as np

from ._linalg import inv_sqrt_spd, polar
from .errors import KreinDegenerateError, SymplecticError, UnstableMatrixError
from .symplectic import (
    CLUSTER_TOL,
    RANK_TOL,
    STABILITY_TOL,
    SYMP_TOL,
    SymplecticRotation,
    cluster_eigenvalues,
    half_dim,
    kernel_basis,
    krein_gram,
    require_symplectic,
    rotation_product,
    stability_verdict,
    standard_form,
    symplectic_residual,
)

TWO_PI = 2.0 * np.pi


# ---------------------------------------------------------------------------
# Horizontal polar (pre-Iwasawa) decomposition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HorizontalPolarParts:
    """Factors of ``M = [[X, Y], [-Y, X]] @ [[L, 0], [Q, L^{-1}]]``.

    ``x``/``y`` are the blocks of the symplectic-rotation factor, ``l``
    is symmetric positive-definite and ``q`` satisfies ``L^T Q``
    symmetric, so the second factor stabilizes the vertical Lagrangian
    plane.
    """

    x: np.ndarray
    y: np.ndarray
    l: np.ndarray
    q: np.ndarray

    @property
    def n(self):
        return self.l.shape[0]

    @property
    def rotation(self):
        return np.block([[self.x, self.y], [-self.y, self.x]])

    @property
    def stabilizer(self):
        n = self.n
        return np.block([
            [self.l, np.zeros((n, n))],
            [self.q, np.linalg.inv(self.l)],
        ])

    def assemble(self):
        return self.rotation @ self.stabilizer


def horizontal_polar(m, symp_tol=SYMP_TOL):
    """Horizontal polar decomposition of a symplectic matrix.

    With blocks ``M = [[A, B], [C, D]]`` the factors are computed in
    closed form::

        L = (B^T B + D^T D)^{-1/2}     (unique SPD square root)
        X = D L,   Y = B L,   Q = L (B^T A + D^T C)

    The decomposition is unique; ``B^T B + D^T D`` is positive-definite
    for every symplectic matrix, so a singular value here signals a
    tolerance breach upstream and raises ``SymplecticError``.
    """
    m = require_symplectic(np.asarray(m, dtype=float), symp_tol)
    n = half_dim(m)
    a, b = m[:n, :n], m[:n, n:]
    c, d = m[n:, :n], m[n:, n:]
    try:
        l = inv_sqrt_spd(b.T @ b + d.T @ d, cond_limit=1e14)
    except np.linalg.LinAlgError as exc:
        raise SymplecticError(
            f"cannot decompose: B^T B + D^T D is numerically singular ({exc}); "
            "the input is too far from the symplectic group"
        ) from exc
    return HorizontalPolarParts(x=d @ l, y=b @ l, l=l, q=l @ (b.T @ a + d.T @ c))


@dataclass(frozen=True)
class GaugeElement:
    """Orthogonal ``n x n`` matrix generating a pre-Iwasawa gauge move."""

    c: np.ndarray

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.c, dtype=float))
        if c.shape[0] != c.shape[1]:
            raise ValueError("gauge matrix must be square")
        err = np.linalg.norm(c.T @ c - np.eye(c.shape[0]))
        if err > 1e-10 * (1.0 + np.linalg.norm(c) ** 2):
            raise ValueError(f"gauge matrix is not orthogonal (residual {err:.3e})")
        object.__setattr__(self, "c", c)

    @property
    def block(self):
        n = self.c.shape[0]
        out = np.zeros((2 * n, 2 * n))
        out[:n, :n] = self.c
        out[n:, n:] = self.c
        return out


def apply_gauge(parts, g):
    """Move a horizontal polar pair along the O(n) gauge orbit.

    Returns ``(rotation_part, stabilizer_part)`` with
    ``rotation_part = u @ g_block^T`` and ``stabilizer_part = g_block @ s``;
    their product is unchanged and the stabilizer keeps its lower
    block-triangular shape (with ``L`` no longer positive-definite in
    general).
    """
    if not isinstance(g, GaugeElement):
        g = GaugeElement(g)
    if g.c.shape[0] != parts.n:
        raise ValueError(
            f"gauge dimension {g.c.shape[0]} does not match parts dimension {parts.n}"
        )
    gb = g.block
    return parts.rotation @ gb.T, gb @ parts.stabilizer


def refix_gauge(rotation_part, stabilizer_part):
    """Recover canonical :class:`HorizontalPolarParts` from a gauged pair.

    Polar-decomposes the stabilizer's upper-left block ``L' = c L`` into
    its orthogonal factor ``c`` and SPD factor ``L``, then undoes the
    gauge.  By uniqueness of the decomposition this reproduces what
    :func:`horizontal_polar` returns on the product.
    """
    rotation_part = np.asarray(rotation_part, dtype=float)
    stabilizer_part = np.asarray(stabilizer_part, dtype=float)
    n = half_dim(stabilizer_part)
    c, l = polar(stabilizer_part[:n, :n])
    q = c.T @ stabilizer_part[n:, :n]
    gauge = GaugeElement(c)
    u = rotation_part @ gauge.block
    return HorizontalPolarParts(x=u[:n, :n], y=u[:n, n:], l=l, q=q)


# ---------------------------------------------------------------------------
# Krein-orthonormal eigenbasis and the stable normal form
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KreinPair:
    """One conjugate pair of a Krein-orthonormal eigenbasis.

    ``plus`` is the eigenvector with amplitude ``+1`` for eigenvalue
    ``value``; its complex conjugate ``minus`` is the amplitude ``-1``
    eigenvector for ``conj(value)``.
    """

    plus: np.ndarray
    value: complex

    @property
    def minus(self):
        return np.conj(self.plus)

    @property
    def angle(self):
        a = float(np.angle(self.value))
        return a + TWO_PI if a < 0 else a


def _real_plane_pairs(basis, j, amp_tol):
    """Pair a real eigenspace basis into canonically normalized planes.

    Produces ``(u_i, v_i)`` with ``u^T J u = v^T J v = 0`` across the
    set and ``u_i^T J v_k = delta_ik / 2``; then ``u + i v`` has Krein
    amplitude ``+1`` and the whole family (with conjugates) is
    Krein-orthonormal.  Greedy elimination with a globally pivoted pair
    keeps the construction stable.
    """
    work = [basis[:, i].copy() for i in range(basis.shape[1])]
    pairs = []
    while work:
        best_val = 0.0
        best = None
        jw = [j @ x for x in work]
        for a in range(len(work)):
            for b in range(a + 1, len(work)):
                v = abs(work[a] @ jw[b])
                if v > best_val:
                    best_val = v
                    best = (a, b)
        if best is None or best_val < amp_tol:
            raise KreinDegenerateError(
                "symplectic form is numerically degenerate on a real "
                "eigenspace; no signature-orthonormal eigenbasis exists "
                f"at this tolerance (best pairing {best_val:.3e})"
            )
        a, b = best
        u = work[a] / np.linalg.norm(work[a])
        v = work[b] / (2.0 * (u @ (j @ work[b])))
        # canonicalize within the plane: v -> v + c u keeps the pairing,
        # so make the pair orthogonal and of equal norm (for orthonormal
        # eigenspaces this reproduces the orthosymplectic choice)
        v = v - (u @ v) * u
        s = np.sqrt(np.linalg.norm(v) / np.linalg.norm(u))
        u, v = u * s, v / s
        rest = [work[i] for i in range(len(work)) if i not in (a, b)]
        ju, jv = j @ u, j @ v
        work = [x + 2.0 * (jv @ x) * u - 2.0 * (ju @ x) * v for x in rest]
        pairs.append((u, v))
    return pairs


def krein_orthonormal_eigenbasis(m, tol=STABILITY_TOL, cluster_tol=CLUSTER_TOL,
                                 rank_tol=RANK_TOL, amp_tol=1e-8):
    """Krein-orthonormal eigenbasis of a stable symplectic matrix.

    Returns ``n`` :class:`KreinPair` objects; together the vectors
    ``(plus_1..plus_n, minus_1..minus_n)`` span C^{2n} and satisfy, for
    the Krein product ``<.,.>``::

        M plus_l = value_l plus_l,      minus_l = conj(plus_l)
        <plus_l, plus_k>  = +delta_lk
        <minus_l, minus_k> = -delta_lk
        <plus_l, minus_k> = 0

    Eigenvalue clusters off the unit circle or with defective structure
    raise :class:`UnstableMatrixError`; a unit-circle eigenvector with
    vanishing amplitude raises :class:`KreinDegenerateError` (the
    obstruction that marks a multiple elementary divisor).

    Case split: clusters at +-1 are handled on the real eigenspace via
    canonical symplectic planes; complex conjugate cluster pairs are
    handled by diagonalizing the Krein Gram matrix on one eigenspace and
    conjugating its negative-amplitude vectors across.
    """
    m = np.asarray(m, dtype=float)
    report = stability_verdict(m, tol=tol, cluster_tol=cluster_tol,
                               rank_tol=rank_tol)
    if not report.stable:
        raise UnstableMatrixError(
            "matrix is not stable: " + "; ".join(report.offenders),
            report=report,
        )
    n = half_dim(m)
    j = standard_form(n)
    scale = np.linalg.norm(m, 2)

    values = report.eigenvalues
    pairs = []
    used = set()
    clusters = cluster_eigenvalues(values, cluster_tol)
    for ci, (center, idx) in enumerate(clusters):
        if ci in used:
            continue
        used.add(ci)
        if abs(center.imag) < cluster_tol:
            # real on-circle eigenvalue: +-1, self-conjugate eigenspace
            mu = 1.0 if center.real > 0 else -1.0
            basis = kernel_basis(m, mu, rank_tol, scale)
            if basis.shape[1] % 2 != 0:
                raise UnstableMatrixError(
                    f"eigenvalue {mu:+.0f} has odd numerical multiplicity "
                    f"{basis.shape[1]}; spectral clustering is inconsistent",
                    report=report,
                )
            for u, v in _real_plane_pairs(basis.real, j, amp_tol):
                pairs.append(KreinPair(plus=u + 1j * v, value=complex(mu)))
        else:
            # find the conjugate partner cluster
            partner = None
            for cj in range(len(clusters)):
                if cj in used:
                    continue
                if abs(np.conj(center) - clusters[cj][0]) < 10 * cluster_tol:
                    partner = cj
                    break
            if partner is None:
                raise UnstableMatrixError(
                    f"eigenvalue {center:.6g} has no conjugate partner in the "
                    "spectrum; clustering is inconsistent",
                    report=report,
                )
            used.add(partner)
            lam = center if center.imag > 0 else clusters[partner][0]
            basis = kernel_basis(m, lam, rank_tol, scale)
            gram = krein_gram(basis)
            amp, mix = np.linalg.eigh(gram)
            rotated = basis @ mix
            for i in range(rotated.shape[1]):
                if abs(amp[i]) < amp_tol:
                    raise KreinDegenerateError(
                        f"eigenvector of lambda = {lam:.6g} has vanishing "
                        f"Krein amplitude ({amp[i]:.3e}); the eigenvalue is "
                        "defective within tolerance"
                    )
                vec = rotated[:, i] / np.sqrt(abs(amp[i]))
                if amp[i] > 0:
                    pairs.append(KreinPair(plus=vec, value=lam))
                else:
                    pairs.append(KreinPair(plus=np.conj(vec), value=np.conj(lam)))
    if len(pairs) != n:
        raise UnstableMatrixError(
            f"constructed {len(pairs)} eigenvector pairs, expected {n}; "
            "spectral clustering is inconsistent",
            report=report,
        )
    pairs.sort(key=lambda p: p.angle)
    return pairs


def krein_type(m, value, tol=STABILITY_TOL, cluster_tol=CLUSTER_TOL,
               rank_tol=RANK_TOL):
    """Signature ``(p, q)`` of the Krein product on the eigenspace of
    ``value``.

    ``p + q`` equals the multiplicity of the eigenvalue.  Requires
    ``value`` on the unit circle and in the spectrum (both within
    tolerance) and a semi-simple eigenvalue so that the eigenspace
    carries the full root space.
    """
    m = np.asarray(m, dtype=float)
    value = complex(value)
    if abs(abs(value) - 1.0) > max(tol, 1e-6):
        raise ValueError(
            f"lambda = {value:.6g} is off the unit circle by "
            f"{abs(abs(value) - 1.0):.3e}; Krein type is undefined there"
        )
    m = require_symplectic(m, max(tol, SYMP_TOL))
    values = np.linalg.eigvals(m)
    clusters = cluster_eigenvalues(values, cluster_tol)
    match = min(clusters, key=lambda c: abs(c[0] - value))
    if abs(match[0] - value) > max(cluster_tol * 10, 1e-6):
        raise ValueError(
            f"lambda = {value:.6g} is not an eigenvalue (nearest is "
            f"{match[0]:.6g})"
        )
    center = match[0]
    if abs(center.imag) < cluster_tol:
        center = complex(1.0 if center.real > 0 else -1.0)
    basis = kernel_basis(m, center, rank_tol)
    if basis.shape[1] < len(match[1]):
        raise UnstableMatrixError(
            f"eigenvalue {center:.6g} is not semi-simple "
            f"(kernel dim {basis.shape[1]} < multiplicity {len(match[1])}); "
            "its eigenspace does not carry the root space"
        )
    gram = krein_gram(basis)
    vals = np.linalg.eigvalsh(gram)
    scale = max(np.max(np.abs(vals)), 1e-30)
    pos = int(np.sum(vals > 1e-8 * scale))
    neg = int(np.sum(vals < -1e-8 * scale))
    if pos + neg != basis.shape[1]:
        raise KreinDegenerateError(
            f"Krein product is numerically degenerate on the eigenspace of "
            f"{center:.6g} (Gram eigenvalues {vals})"
        )
    return pos, neg


@dataclass(frozen=True)
class NormalFormResult:
    """Conjugation of a stable symplectic matrix to rotation blocks.

    ``matrix = conjugator @ rotation_product(angles) @ inv(conjugator)``
    with a symplectic ``conjugator``.  Angles are sorted ascending in
    ``[0, 2 pi)``; the eigenvalue with positive Krein signature is
    ``exp(+i angle)``.  ``eigen_types`` carries the ``(p, q)`` signature
    of each angle's eigenvalue cluster (types can repeat when angles
    coincide).
    """

    conjugator: np.ndarray
    angles: np.ndarray
    eigen_types: tuple
    reconstruction_residual: float

    @property
    def n(self):
        return self.angles.size

    @property
    def rotation(self):
        return rotation_product(self.angles)

    def reconstruct(self):
        return self.conjugator @ self.rotation @ np.linalg.inv(self.conjugator)


def stable_normal_form(m, tol=STABILITY_TOL, cluster_tol=CLUSTER_TOL,
                       rank_tol=RANK_TOL, amp_tol=1e-8):
    """Normal form ``M = F N F^{-1}`` with ``N`` a diamond product of
    planar rotations and ``F`` symplectic.

    Implements the constructive eigenbasis route: take the
    Krein-orthonormal pairs from :func:`krein_orthonormal_eigenbasis`,
    split ``plus_l = xi_l + i eta_l`` and stack
    ``F = sqrt(2) (xi_1..xi_n, eta_1..eta_n)``.  The orthonormality
    relations make ``F`` symplectic and diagonalize ``M`` into rotation
    blocks with angles ``arg(value_l)``.

    Raises :class:`UnstableMatrixError` (off-circle or defective input,
    diagnostic names the offending eigenvalue) or
    :class:`KreinDegenerateError` (vanishing signature amplitude).
    """
    m = np.asarray(m, dtype=float)
    pairs = krein_orthonormal_eigenbasis(m, tol=tol, cluster_tol=cluster_tol,
                                         rank_tol=rank_tol, amp_tol=amp_tol)
    # angles within the eigenvalue cluster tolerance of a full turn are zero;
    # re-sort afterwards so the reported angles stay ascending
    angles = np.array([p.angle for p in pairs])
    angles = np.where(TWO_PI - angles < cluster_tol, 0.0, angles)
    order = np.argsort(angles, kind="stable")
    angles = angles[order]
    pairs = [pairs[i] for i in order]
    xi = np.column_stack([p.plus.real for p in pairs])
    eta = np.column_stack([p.plus.imag for p in pairs])
    conjugator = np.sqrt(2.0) * np.hstack([xi, eta])

    types = []
    for p in pairs:
        pos, neg = krein_type(m, p.value, tol=tol, cluster_tol=cluster_tol,
                              rank_tol=rank_tol)
        types.append((pos, neg))

    recon = conjugator @ rotation_product(angles) @ np.linalg.inv(conjugator)
    residual = float(
        np.linalg.norm(recon - m) / (1.0 + np.linalg.norm(m))
    )
    return NormalFormResult(
        conjugator=conjugator,
        angles=angles,
        eigen_types=tuple(types),
        reconstruction_residual=residual,
    )
