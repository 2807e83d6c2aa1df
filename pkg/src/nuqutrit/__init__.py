"""Three-flavor neutrino oscillations on a simulated transmon qutrit.

Analytic mixing-matrix engine, Givens-rotation gate compilation, a noisy
three-level statevector machine with readout-error mitigation, a pulse-level
mock transmon with its calibration procedures, and a reproducible scenario
runner.
"""

__version__ = "0.1.0"

from .pmns import (  # noqa: F401
    Baseline,
    MatterParams,
    NUFIT_PARAMS,
    OscillationParams,
    build_pmns,
    evolution_operator,
    evolution_phases,
    exact_matter_oracle,
    matter_effective_params,
    oscillation_probabilities,
    oscillation_probability,
)
from .decomposition import (  # noqa: F401
    AlphaAngles,
    GateSequence,
    GivensGate,
    compile_scenario,
    decompose,
    fit_decomposition,
    givens_matrix,
    insert_evolution,
    reconstruct,
    schedule_duration,
    solve_alphas,
    verify_decomposition,
)
from .vm import (  # noqa: F401
    DEFAULT_CONFUSION,
    PhaseAdvanceModel,
    ShotCounts,
    apply_confusion,
    apply_phase_advances,
    apply_sequence,
    fit_phase_advances,
    mitigate,
    probabilities,
    sample_counts,
)
from .device import (  # noqa: F401
    GateCalibration,
    MockTransmon,
    calibration_report,
    error_amplification,
    rabi_amplitude,
    rabi_spectroscopy_12,
    readout_experiment,
    silhouette_optimize,
    simulate_pulse,
    train_discriminator,
)
from .runner import (  # noqa: F401
    ScenarioConfig,
    default_config,
    emit,
    replay,
    run_scenario,
    score,
)
