"""Lattice configuration files.

A lattice file is YAML with a fixed schema (documented in the README):
a name, the degree-of-freedom count ``n``, the period, and an ordered
list of elements whose durations tile the period.  Matrices are written
row-major as nested lists.  Two element kinds exist:

``constant``
    fields ``duration``, ``kappa``, ``r``, ``mass_inv`` (the matrix
    coefficients are held fixed over the element).

``harmonic``
    fields ``duration``, ``a``, ``q``, ``frequency`` and optional
    ``r`` / ``mass_inv`` constants; the focusing matrix is
    ``kappa(tau) = a + 2 q cos(frequency tau)`` with ``tau`` the time
    since the element start.

Everything is validated on load with field-level diagnostics; saving a
loaded config reproduces the file byte-for-byte when it was written by
:func:`save_lattice` (canonical form).
"""

import hashlib
from dataclasses import dataclass, field

import numpy as np
import yaml

from .dynamics import ConstantSegment, PeriodicHamiltonian, SmoothSegment
from .errors import LatticeFormatError


@dataclass(frozen=True)
class ConstantElement:
    duration: float
    kappa: np.ndarray
    r: np.ndarray
    mass_inv: np.ndarray

    kind = "constant"


@dataclass(frozen=True)
class HarmonicElement:
    duration: float
    a: np.ndarray
    q: np.ndarray
    frequency: float
    r: np.ndarray
    mass_inv: np.ndarray

    kind = "harmonic"


@dataclass(frozen=True)
class LatticeConfig:
    """Validated, immutable description of one lattice period."""

    name: str
    dim_n: int
    period: float
    elements: tuple
    tolerances: dict = field(default_factory=dict)

    def to_hamiltonian(self):
        """Build the runtime coefficient model for this lattice."""
        segments = []
        for el in self.elements:
            if el.kind == "constant":
                segments.append(ConstantSegment(
                    duration=el.duration, kappa=el.kappa, r=el.r,
                    mass_inv=el.mass_inv,
                ))
            else:
                segments.append(SmoothSegment(
                    duration=el.duration,
                    kappa=_harmonic_kappa(el.a, el.q, el.frequency),
                    r=_constant_fn(el.r),
                    mass_inv=_constant_fn(el.mass_inv),
                ))
        return PeriodicHamiltonian(self.dim_n, segments)

    def to_dict(self):
        out = {
            "name": self.name,
            "n": self.dim_n,
            "period": self.period,
            "elements": [],
        }
        for el in self.elements:
            if el.kind == "constant":
                out["elements"].append({
                    "kind": "constant",
                    "duration": el.duration,
                    "kappa": _matrix_to_rows(el.kappa),
                    "r": _matrix_to_rows(el.r),
                    "mass_inv": _matrix_to_rows(el.mass_inv),
                })
            else:
                out["elements"].append({
                    "kind": "harmonic",
                    "duration": el.duration,
                    "a": _matrix_to_rows(el.a),
                    "q": _matrix_to_rows(el.q),
                    "frequency": el.frequency,
                    "r": _matrix_to_rows(el.r),
                    "mass_inv": _matrix_to_rows(el.mass_inv),
                })
        if self.tolerances:
            out["tolerances"] = dict(sorted(self.tolerances.items()))
        return out

    def content_hash(self):
        """Stable hash of the canonical serialized form."""
        text = yaml.safe_dump(self.to_dict(), sort_keys=False)
        return hashlib.sha256(text.encode()).hexdigest()


def _harmonic_kappa(a, q, frequency):
    def kappa(tau):
        return a + 2.0 * q * np.cos(frequency * tau)
    return kappa


def _constant_fn(mat):
    return lambda tau: mat


def _matrix_to_rows(mat):
    return [[float(x) for x in row] for row in np.asarray(mat)]


def _parse_matrix(raw, n, where):
    try:
        mat = np.array(raw, dtype=float)
    except (TypeError, ValueError) as exc:
        raise LatticeFormatError(f"{where}: not a numeric matrix ({exc})")
    if mat.shape != (n, n):
        raise LatticeFormatError(
            f"{where}: expected a {n}x{n} matrix (rows of numbers), "
            f"got shape {mat.shape}"
        )
    return mat


def _require_symmetric(mat, where, tol=1e-9):
    err = np.linalg.norm(mat - mat.T)
    if err > tol * (1.0 + np.linalg.norm(mat)):
        raise LatticeFormatError(
            f"{where}: matrix must be symmetric (residual {err:.3e})"
        )


def lattice_from_dict(data, where="lattice"):
    """Build and validate a :class:`LatticeConfig` from plain data."""
    if not isinstance(data, dict):
        raise LatticeFormatError(f"{where}: top level must be a mapping")
    try:
        name = str(data["name"])
        n = data["n"]
        period = data["period"]
        raw_elements = data["elements"]
    except KeyError as exc:
        raise LatticeFormatError(f"{where}: missing required field {exc}")
    if not isinstance(n, int) or n < 1:
        raise LatticeFormatError(f"{where}: n must be a positive integer, got {n!r}")
    try:
        period = float(period)
    except (TypeError, ValueError):
        raise LatticeFormatError(f"{where}: period must be a number, got {period!r}")
    if period <= 0.0:
        raise LatticeFormatError(f"{where}: period must be positive, got {period}")
    if not isinstance(raw_elements, list) or not raw_elements:
        raise LatticeFormatError(f"{where}: elements must be a non-empty list")

    elements = []
    for i, raw in enumerate(raw_elements):
        where_el = f"{where}: element {i}"
        if not isinstance(raw, dict):
            raise LatticeFormatError(f"{where_el}: must be a mapping")
        kind = raw.get("kind")
        if kind not in ("constant", "harmonic"):
            raise LatticeFormatError(
                f"{where_el}: kind must be 'constant' or 'harmonic', got {kind!r}"
            )
        try:
            duration = float(raw["duration"])
        except (KeyError, TypeError, ValueError):
            raise LatticeFormatError(f"{where_el}: missing or invalid duration")
        if duration <= 0.0:
            raise LatticeFormatError(
                f"{where_el}: duration must be positive, got {duration}"
            )
        r = _parse_matrix(raw["r"], n, f"{where_el}: r") if "r" in raw \
            else np.zeros((n, n))
        mass_inv = (_parse_matrix(raw["mass_inv"], n, f"{where_el}: mass_inv")
                    if "mass_inv" in raw else np.eye(n))
        _require_symmetric(mass_inv, f"{where_el}: mass_inv")
        cond = np.linalg.cond(mass_inv)
        if not np.isfinite(cond) or cond > 1e12:
            raise LatticeFormatError(
                f"{where_el}: mass_inv condition number {cond:.3e} exceeds 1e12"
            )
        if kind == "constant":
            if "kappa" not in raw:
                raise LatticeFormatError(f"{where_el}: missing kappa")
            kappa = _parse_matrix(raw["kappa"], n, f"{where_el}: kappa")
            _require_symmetric(kappa, f"{where_el}: kappa")
            elements.append(ConstantElement(
                duration=duration, kappa=kappa, r=r, mass_inv=mass_inv,
            ))
        else:
            for key in ("a", "q", "frequency"):
                if key not in raw:
                    raise LatticeFormatError(f"{where_el}: missing {key}")
            a = _parse_matrix(raw["a"], n, f"{where_el}: a")
            q = _parse_matrix(raw["q"], n, f"{where_el}: q")
            _require_symmetric(a, f"{where_el}: a")
            _require_symmetric(q, f"{where_el}: q")
            try:
                frequency = float(raw["frequency"])
            except (TypeError, ValueError):
                raise LatticeFormatError(f"{where_el}: invalid frequency")
            elements.append(HarmonicElement(
                duration=duration, a=a, q=q, frequency=frequency, r=r,
                mass_inv=mass_inv,
            ))

    total = sum(el.duration for el in elements)
    if abs(total - period) > 1e-12 * max(1.0, period):
        raise LatticeFormatError(
            f"{where}: element durations sum to {total!r} but period is "
            f"{period!r} (relative mismatch {abs(total - period) / period:.3e})"
        )
    tolerances = data.get("tolerances", {}) or {}
    if not isinstance(tolerances, dict):
        raise LatticeFormatError(f"{where}: tolerances must be a mapping")
    tolerances = dict(tolerances)
    known = {"integ_tol", "match_tol", "symp_tol", "stability_tol"}
    for key, value in tolerances.items():
        if key not in known:
            raise LatticeFormatError(
                f"{where}: unknown tolerance {key!r} (known: {sorted(known)})"
            )
        try:
            tolerances[key] = float(value)
        except (TypeError, ValueError):
            raise LatticeFormatError(f"{where}: tolerance {key} must be a number")
    return LatticeConfig(
        name=name, dim_n=n, period=period, elements=tuple(elements),
        tolerances=tolerances,
    )


def load_lattice(path):
    """Load and validate a lattice file.

    Raises :class:`LatticeFormatError` with the offending field (and the
    numeric residual for invariant violations).
    """
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except FileNotFoundError:
        raise LatticeFormatError(f"lattice file not found: {path}")
    except yaml.YAMLError as exc:
        raise LatticeFormatError(f"{path}: YAML parse error: {exc}")
    return lattice_from_dict(data, where=str(path))


def save_lattice(config, path):
    """Write a lattice file in canonical form."""
    with open(path, "w") as fh:
        yaml.safe_dump(config.to_dict(), fh, sort_keys=False)


def load_matrix(path):
    """Read the plain-text matrix format: first line ``n``, then ``2n``
    whitespace-separated rows of ``2n`` numbers."""
    try:
        with open(path) as fh:
            lines = [ln.strip() for ln in fh if ln.strip()
                     and not ln.lstrip().startswith("#")]
    except FileNotFoundError:
        raise LatticeFormatError(f"matrix file not found: {path}")
    if not lines:
        raise LatticeFormatError(f"{path}: empty matrix file")
    try:
        n = int(lines[0])
    except ValueError:
        raise LatticeFormatError(
            f"{path}: first line must be the half-dimension n, got {lines[0]!r}"
        )
    if n < 1:
        raise LatticeFormatError(f"{path}: n must be >= 1, got {n}")
    if len(lines) != 1 + 2 * n:
        raise LatticeFormatError(
            f"{path}: expected {2 * n} matrix rows after the header, "
            f"got {len(lines) - 1}"
        )
    rows = []
    for i, ln in enumerate(lines[1:]):
        parts = ln.split()
        if len(parts) != 2 * n:
            raise LatticeFormatError(
                f"{path}: row {i + 1} has {len(parts)} entries, expected {2 * n}"
            )
        try:
            rows.append([float(p) for p in parts])
        except ValueError as exc:
            raise LatticeFormatError(f"{path}: row {i + 1}: {exc}")
    return np.array(rows)


def save_matrix(matrix, path):
    """Write the plain-text matrix format used by :func:`load_matrix`."""
    matrix = np.asarray(matrix, dtype=float)
    n = matrix.shape[0] // 2
    with open(path, "w") as fh:
        fh.write(f"{n}\n")
        for row in matrix:
            fh.write(" ".join(repr(float(x)) for x in row) + "\n")
