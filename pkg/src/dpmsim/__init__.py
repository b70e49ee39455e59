"""Entangled photon-pair cascade simulator with dynamic phase compensation.

Subpackage map:

* qstate: two-photon polarization algebra (kets, density matrices, negativity)
* cascade: Monte Carlo cascade emission, modulation and detection
* waveform: clock-synchronized phase-modulator waveforms
* tomography: 36-setting linear-inversion and maximum-likelihood reconstruction
* analysis: windows, arrival-time-difference profiles, negativity curves, oracle
* cli / config: batch pipelines and JSON run configuration
"""

from .cascade import (
    CoincidenceMap,
    DetectedEvent,
    EmissionEvent,
    EmitterParams,
    ImperfectionModel,
    SetupParams,
    apply_dpm,
    apply_imperfections,
    cascade_ket,
    detect,
    sample_emission,
    simulate_all_settings,
    simulate_setting,
)
from .qstate import (
    LABELS,
    PhysicalityReport,
    ProjectionSetting,
    basis_vector,
    bell_phi_plus,
    born_probability,
    check_physical,
    fidelity_to,
    ket_to_density,
    negativity,
    partial_transpose,
    tensor,
)
from .tomography import (
    CountRecord,
    MLEConfig,
    TomographyResult,
    bootstrap_uncertainties,
    mle_reconstruct,
    standard_settings,
    stokes_linear_inversion,
    systematic_angle_scan,
)
from .analysis import (
    DeltaTProfile,
    NegativityCurve,
    OscillationFit,
    TimeWindow,
    diagonal_profile,
    fit_oscillation,
    negativity_vs_window,
    oracle_rho,
    window_counts,
)
from .waveform import (
    PhaseWaveform,
    build_compensation_waveform,
    ideal_compensation_waveform,
    waveform_phase,
    zero_waveform,
)

__version__ = "0.1.0"
