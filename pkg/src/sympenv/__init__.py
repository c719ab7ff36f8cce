"""Stability of linear Hamiltonian systems with periodic coefficients.

The package factors the solution map of ``zdot = J A(t) z`` through an
envelope matrix and a symplectic-rotation phase advance, decides
stability from the one-period map, and certifies stable lattices by
constructing the matched (periodic-modulus) envelope.  Structural tools
on the way: the diamond product, Krein signature machinery, the
rotation normal form for stable symplectic matrices, and the horizontal
polar decomposition.
"""

__version__ = "0.1.0"

from .courant_snyder import (
    MathieuScan,
    ScalarEnvelopeTrajectory,
    TwissState,
    cs_transfer_matrix,
    integrate_scalar_envelope,
    mathieu_lattice,
    mathieu_scan,
    phase_integral,
    scalar_cs_invariant,
    scalar_envelope_rhs,
    twiss_from_envelope,
)
from .decompositions import (
    GaugeElement,
    HorizontalPolarParts,
    KreinPair,
    NormalFormResult,
    apply_gauge,
    horizontal_polar,
    krein_orthonormal_eigenbasis,
    krein_type,
    refix_gauge,
    stable_normal_form,
)
from .dynamics import (
    ConstantSegment,
    PeriodicHamiltonian,
    SmoothSegment,
    TransferMap,
    a_matrix,
    monodromy,
    propagate,
    transfer_map,
    transfer_map_sequence,
)
from .envelope import (
    EnvelopeState,
    EnvelopeTrajectory,
    MatchedSolution,
    PhaseAdvance,
    cs_invariant,
    envelope_rhs,
    envelope_transform,
    envelope_transform_inverse,
    general_invariant,
    integrate_envelope,
    matched_envelope,
    phase_advance,
    phase_advance_rate,
    solution_map_from_envelope,
    twiss_blocks,
)
from .errors import (
    EnvelopeSingularityError,
    IntegrationError,
    KreinDegenerateError,
    LatticeFormatError,
    SympenvError,
    SymplecticError,
    UnstableMatrixError,
)
from .lattice import (
    ConstantElement,
    HarmonicElement,
    LatticeConfig,
    lattice_from_dict,
    load_lattice,
    load_matrix,
    save_lattice,
    save_matrix,
)
from .symplectic import (
    StabilityReport,
    SymplecticCheck,
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

__all__ = [name for name in dir() if not name.startswith("_")]
