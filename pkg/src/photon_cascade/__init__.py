"""Few-photon wave packets in a cascaded resonant four-wave-mixing filter."""

from .fock_sector import (
    InputSpec,
    NumberDistribution,
    SectorBasis,
    SectorState,
    TruncationError,
    coherent_sector_weights,
    sector_basis,
)
from .dynamics import (
    MediumParams,
    StageGeometry,
    closed_form_n1,
    closed_form_n2,
    cycle_length,
    propagate_sector,
    sector_hamiltonian,
    transfer_amplitudes,
)
from .cascade import (
    CascadeBranch,
    CascadeResult,
    DetectorModel,
    DetectorRecord,
    apply_stage,
    run_cascade,
    sample_cascade,
)
from .analysis import (
    detector_firing_probability,
    filter_metrics,
    misidentification_probability,
    tune_length_for_sector,
)

__version__ = "0.1.0"
