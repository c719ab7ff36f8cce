"""Symplectic structure utilities.

Everything specific to the symplectic form on R^{2n} lives here: the
standard form matrix, symplecticity tests, the dimension-interleaving
diamond product, planar rotation blocks, the indefinite (Krein) inner
product on C^{2n} with its signature machinery, and the spectral
stability verdict for symplectic matrices.

Conventions
-----------
Phase-space coordinates are ordered ``(x_1..x_n, p_1..p_n)``, so the
standard form is ``[[0, I], [-I, 0]]``.  A matrix ``M`` is symplectic
when ``M J M^T = J``.  The Krein product of two complex vectors is
``<psi, phi> = -i phi^* J psi``; its diagonal (the amplitude) is real,
and its sign grades eigenmodes of stable symplectic matrices.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import SymplecticError

# Default tolerances.  All structural predicates take an explicit
# tolerance; exact-arithmetic statements only hold approximately in
# floating point.
SYMP_TOL = 1e-10      # relative symplecticity residual
CLUSTER_TOL = 1e-7    # eigenvalues closer than this are one cluster
RANK_TOL = 1e-8       # singular values below RANK_TOL * ||M||_2 are zero
STABILITY_TOL = 1e-8  # |(|lambda| - 1)| allowed for "on the unit circle"


def half_dim(m):
    """Half-dimension ``n`` of a ``2n x 2n`` matrix; rejects odd or non-square."""
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if m.shape[0] % 2 != 0 or m.shape[0] == 0:
        raise ValueError(
            f"expected even dimension >= 2, got {m.shape[0]}"
        )
    return m.shape[0] // 2


def standard_form(n):
    """The standard symplectic form ``[[0, I_n], [-I_n, 0]]``."""
    if int(n) != n or n < 1:
        raise ValueError(f"half-dimension must be a positive integer, got {n!r}")
    n = int(n)
    j = np.zeros((2 * n, 2 * n))
    j[:n, n:] = np.eye(n)
    j[n:, :n] = -np.eye(n)
    return j


def symplectic_residual(m):
    """Raw Frobenius residual ``||M J M^T - J||_F``."""
    n = half_dim(m)
    j = standard_form(n)
    return float(np.linalg.norm(m @ j @ m.T - j))


@dataclass(frozen=True)
class SymplecticCheck:
    """Outcome of a symplecticity test: verdict plus the raw residual."""

    ok: bool
    residual: float
    scale: float

    def __bool__(self):
        return self.ok


def is_symplectic(m, tol=SYMP_TOL):
    """Test ``||M J M^T - J||_F <= tol * (1 + ||M||_F^2)``.

    Returns a :class:`SymplecticCheck`; truth-test it or read the
    residual off it.  The ``1 + ||M||^2`` scaling makes the test
    meaningful for badly scaled matrices.
    """
    m = np.asarray(m, dtype=float)
    residual = symplectic_residual(m)
    scale = 1.0 + float(np.linalg.norm(m)) ** 2
    return SymplecticCheck(residual <= tol * scale, residual, scale)


def require_symplectic(m, tol=SYMP_TOL, what="matrix"):
    """Raise :class:`SymplecticError` unless ``m`` passes :func:`is_symplectic`."""
    m = np.asarray(m, dtype=float)
    check = is_symplectic(m, tol)
    if not check:
        raise SymplecticError(
            f"{what} is not symplectic: residual {check.residual:.3e} "
            f"exceeds {tol:.1e} * {check.scale:.3e}",
            residual=check.residual,
        )
    return m


def diamond(m1, m2):
    """Dimension-interleaving direct sum of two even-dimensional matrices.

    For ``m1`` of size ``2i`` with blocks ``[[A1, B1], [C1, D1]]`` and
    ``m2`` of size ``2j`` with blocks ``[[A2, B2], [C2, D2]]``, the result
    is the ``2(i+j)`` matrix::

        [[A1, 0, B1, 0 ],
         [0, A2, 0,  B2],
         [C1, 0, D1, 0 ],
         [0, C2, 0,  D2]]

    which respects the ``(x.., p..)`` coordinate ordering, so the product
    of two symplectic matrices is again symplectic.
    """
    m1 = np.asarray(m1)
    m2 = np.asarray(m2)
    i = half_dim(m1)
    j = half_dim(m2)
    n = i + j
    out = np.zeros((2 * n, 2 * n), dtype=np.result_type(m1, m2))
    out[:i, :i] = m1[:i, :i]
    out[:i, n:n + i] = m1[:i, i:]
    out[n:n + i, :i] = m1[i:, :i]
    out[n:n + i, n:n + i] = m1[i:, i:]
    out[i:n, i:n] = m2[:j, :j]
    out[i:n, n + i:] = m2[:j, j:]
    out[n + i:, i:n] = m2[j:, :j]
    out[n + i:, n + i:] = m2[j:, j:]
    return out


def diamond_all(mats):
    """Left-fold of :func:`diamond` over a sequence of matrices."""
    mats = list(mats)
    if not mats:
        raise ValueError("need at least one matrix")
    out = np.asarray(mats[0])
    for m in mats[1:]:
        out = diamond(out, m)
    return out


def rotation_block(theta):
    """Planar rotation ``[[cos t, sin t], [-sin t, cos t]]`` in SO(2)."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, s], [-s, c]])


def rotation_product(thetas):
    """Diamond product of planar rotations, one angle per degree of freedom."""
    return diamond_all([rotation_block(t) for t in np.atleast_1d(thetas)])


# ---------------------------------------------------------------------------
# Krein product machinery
# ---------------------------------------------------------------------------

def krein_product(psi, phi):
    """Indefinite inner product ``-i phi^* J psi`` on C^{2n}.

    Conjugate-symmetric: ``krein_product(psi, phi) ==
    conj(krein_product(phi, psi))``.  Real vectors are isotropic.
    """
    psi = np.asarray(psi, dtype=complex).ravel()
    phi = np.asarray(phi, dtype=complex).ravel()
    if psi.shape != phi.shape:
        raise ValueError(f"dimension mismatch: {psi.shape} vs {phi.shape}")
    if psi.size % 2 != 0 or psi.size == 0:
        raise ValueError(f"vectors must have even length, got {psi.size}")
    n = psi.size // 2
    j_psi = np.concatenate([psi[n:], -psi[:n]])    # J @ psi
    return complex(-1j * np.vdot(phi, j_psi))


def krein_amplitude(psi):
    """Real diagonal value ``krein_product(psi, psi)``."""
    value = krein_product(psi, psi)
    return float(value.real)


def krein_gram(basis):
    """Hermitian Gram matrix of the Krein product on a set of columns.

    ``gram[i, j] = krein_product(basis[:, j], basis[:, i])`` so that
    eigenvalue signs of ``gram`` give the signature of the product
    restricted to the column span.
    """
    basis = np.asarray(basis, dtype=complex)
    n = basis.shape[0] // 2
    j_basis = np.vstack([basis[n:], -basis[:n]])
    gram = -1j * (basis.conj().T @ j_basis)
    return 0.5 * (gram + gram.conj().T)


def signature_on_span(basis, zero_tol=1e-10):
    """Inertia ``(positive, negative, null)`` of the Krein product on
    the span of ``basis`` columns, relative to the largest magnitude."""
    gram = krein_gram(basis)
    vals = np.linalg.eigvalsh(gram)
    scale = max(np.max(np.abs(vals)), 1.0) if vals.size else 1.0
    pos = int(np.sum(vals > zero_tol * scale))
    neg = int(np.sum(vals < -zero_tol * scale))
    return pos, neg, vals.size - pos - neg


@dataclass(frozen=True)
class SymplecticRotation:
    """Element of the symplectic-orthogonal group (unitary in disguise).

    The ``2n x 2n`` matrix ``[[p1, p2], [-p2, p1]]`` is both symplectic
    and orthogonal exactly when ``p1 - i p2`` is unitary; this class
    stores the two blocks and converts between the pictures.
    """

    p1: np.ndarray
    p2: np.ndarray

    def __post_init__(self):
        p1 = np.atleast_2d(np.asarray(self.p1, dtype=float))
        p2 = np.atleast_2d(np.asarray(self.p2, dtype=float))
        if p1.shape != p2.shape or p1.shape[0] != p1.shape[1]:
            raise ValueError("blocks must be square matrices of equal shape")
        object.__setattr__(self, "p1", p1)
        object.__setattr__(self, "p2", p2)

    @property
    def n(self):
        return self.p1.shape[0]

    @property
    def matrix(self):
        return np.block([[self.p1, self.p2], [-self.p2, self.p1]])

    @property
    def unitary(self):
        return self.p1 - 1j * self.p2

    @classmethod
    def from_matrix(cls, m, tol=1e-8):
        m = np.asarray(m, dtype=float)
        n = half_dim(m)
        rot = cls(m[:n, :n], m[:n, n:])
        err = np.linalg.norm(rot.matrix - m)
        if err > tol * (1.0 + np.linalg.norm(m)):
            raise ValueError(
                f"matrix does not have the [[P1, P2], [-P2, P1]] block "
                f"structure (mismatch {err:.3e})"
            )
        return rot

    @classmethod
    def from_unitary(cls, u):
        u = np.asarray(u, dtype=complex)
        return cls(u.real, -u.imag)

    def unitarity_residual(self):
        u = self.unitary
        return float(np.linalg.norm(u @ u.conj().T - np.eye(self.n)))


# ---------------------------------------------------------------------------
# Spectral machinery and the stability verdict
# ---------------------------------------------------------------------------

def cluster_eigenvalues(values, tol=CLUSTER_TOL):
    """Group eigenvalues whose pairwise distance is below ``tol``.

    Returns a list of ``(center, indices)`` with ``center`` the mean of
    the group, ordered by ascending argument then modulus for
    determinism.  Transitive closure: chains of close values merge.
    """
    values = np.asarray(values)
    k = values.size
    parent = list(range(k))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(k):
        for j in range(i + 1, k):
            if abs(values[i] - values[j]) < tol:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[ri] = rj
    groups = {}
    for i in range(k):
        groups.setdefault(find(i), []).append(i)
    clusters = [
        (complex(np.mean(values[idx])), sorted(idx)) for idx in groups.values()
    ]
    clusters.sort(key=lambda c: (np.angle(c[0]) % (2 * np.pi), abs(c[0])))
    return clusters


def kernel_basis(m, value, rank_tol=RANK_TOL, scale=None):
    """Orthonormal basis of the numerical kernel of ``m - value * I``.

    Singular values below ``rank_tol * scale`` count as zero, where
    ``scale`` defaults to the largest singular value of ``m`` itself
    (not of the shifted matrix, which may be entirely noise).
    Real ``value`` on a real matrix yields a real basis.
    """
    m = np.asarray(m)
    dim = m.shape[0]
    if scale is None:
        scale = np.linalg.norm(m, 2)
    if np.isrealobj(m) and np.isreal(value):
        shifted = m - float(np.real(value)) * np.eye(dim)
    else:
        shifted = m.astype(complex) - complex(value) * np.eye(dim)
    _, svals, vt = np.linalg.svd(shifted)
    k = int(np.sum(svals <= rank_tol * max(scale, 1.0)))
    if k == 0:
        return np.zeros((dim, 0), dtype=vt.dtype)
    return vt[dim - k:].conj().T


@dataclass(frozen=True)
class EigenvalueGroup:
    """One clustered eigenvalue of a symplectic matrix with its diagnostics."""

    value: complex
    algebraic: int
    geometric: int
    circle_distance: float
    on_circle: bool
    semisimple: bool
    krein_type: tuple | None = None

    def describe(self):
        bits = [f"lambda = {self.value:.12g}"]
        bits.append(f"mult {self.geometric}/{self.algebraic}")
        if not self.on_circle:
            bits.append(f"off unit circle by {self.circle_distance:.3e}")
        if not self.semisimple:
            bits.append("not semi-simple")
        if self.krein_type is not None:
            bits.append(f"type {self.krein_type}")
        return ", ".join(bits)


@dataclass(frozen=True)
class StabilityReport:
    """Spectral stability verdict for a symplectic matrix.

    ``stable`` is true when every eigenvalue sits on the unit circle
    (within ``tol``) and every clustered eigenvalue is semi-simple
    (geometric multiplicity equals algebraic).  ``offenders`` holds a
    human-readable line per violating eigenvalue group.
    """

    dim: int
    eigenvalues: np.ndarray
    groups: tuple
    stable: bool
    tol: float
    offenders: tuple = field(default_factory=tuple)
    max_modulus: float = 0.0

    def to_dict(self):
        return {
            "dim": self.dim,
            "stable": self.stable,
            "tol": self.tol,
            "max_modulus": self.max_modulus,
            "eigenvalues": [[z.real, z.imag] for z in self.eigenvalues],
            "groups": [
                {
                    "value": [g.value.real, g.value.imag],
                    "algebraic": g.algebraic,
                    "geometric": g.geometric,
                    "circle_distance": g.circle_distance,
                    "on_circle": g.on_circle,
                    "semisimple": g.semisimple,
                    "krein_type": list(g.krein_type) if g.krein_type else None,
                }
                for g in self.groups
            ],
            "offenders": list(self.offenders),
        }


def stability_verdict(m, tol=STABILITY_TOL, cluster_tol=CLUSTER_TOL,
                      rank_tol=RANK_TOL, symp_tol=None):
    """Classify a symplectic matrix as stable or unstable.

    Stable means diagonalizable with the whole spectrum on the unit
    circle, which is exactly boundedness of all powers.  Eigenvalues are
    clustered at ``cluster_tol``; the geometric multiplicity of each
    cluster is the numerical kernel dimension of ``M - lambda I`` at
    ``rank_tol``; Krein types are attached to semi-simple unit-circle
    clusters.

    Raises :class:`SymplecticError` for non-symplectic input (the
    spectral symmetries the verdict relies on would be meaningless).
    """
    m = np.asarray(m, dtype=float)
    if symp_tol is None:
        symp_tol = max(tol, SYMP_TOL)
    m = require_symplectic(m, symp_tol)
    dim = m.shape[0]
    values = np.linalg.eigvals(m)
    scale = np.linalg.norm(m, 2)

    groups = []
    offenders = []
    for center, idx in cluster_eigenvalues(values, cluster_tol):
        algebraic = len(idx)
        # pin real clusters of a real matrix to the real axis
        if abs(center.imag) < cluster_tol:
            center = complex(center.real, 0.0)
        basis = kernel_basis(m, center, rank_tol, scale)
        geometric = basis.shape[1]
        circle_distance = abs(abs(center) - 1.0)
        on_circle = circle_distance <= tol
        semisimple = geometric >= algebraic
        krein_type = None
        if on_circle and semisimple and geometric > 0:
            pos, neg, null = signature_on_span(basis)
            if null == 0:
                krein_type = (pos, neg)
        group = EigenvalueGroup(
            value=center,
            algebraic=algebraic,
            geometric=geometric,
            circle_distance=circle_distance,
            on_circle=on_circle,
            semisimple=semisimple,
            krein_type=krein_type,
        )
        groups.append(group)
        if not (on_circle and semisimple):
            offenders.append(group.describe())

    stable = not offenders
    return StabilityReport(
        dim=dim,
        eigenvalues=values,
        groups=tuple(groups),
        stable=stable,
        tol=tol,
        offenders=tuple(offenders),
        max_modulus=float(np.max(np.abs(values))),
    )
