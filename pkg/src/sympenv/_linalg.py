"""Small dense linear-algebra helpers used by several modules."""

import numpy as np


def sqrt_spd(a):
    """Unique symmetric positive-(semi)definite square root of a symmetric
    positive-(semi)definite matrix, via eigendecomposition."""
    vals, vecs = np.linalg.eigh(0.5 * (a + a.T))
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def inv_sqrt_spd(a, cond_limit=1e14):
    """Inverse square root of a symmetric positive-definite matrix.

    Raises ``np.linalg.LinAlgError`` when the matrix is numerically
    singular (eigenvalue ratio beyond ``cond_limit``).
    """
    vals, vecs = np.linalg.eigh(0.5 * (a + a.T))
    if vals[0] <= 0.0 or vals[-1] / vals[0] > cond_limit:
        raise np.linalg.LinAlgError(
            "matrix is not numerically positive-definite "
            f"(eigenvalue range [{vals[0]:.3e}, {vals[-1]:.3e}])"
        )
    return (vecs * vals**-0.5) @ vecs.T


def orthogonal_polar_factor(a):
    """Orthogonal factor ``u`` of the polar decomposition ``a = u p``
    with ``p`` symmetric positive-definite."""
    u, _, vt = np.linalg.svd(a)
    return u @ vt


def polar(a):
    """Polar decomposition ``a = u p`` (``u`` orthogonal, ``p`` SPD)."""
    u, s, vt = np.linalg.svd(a)
    return u @ vt, (vt.T * s) @ vt
