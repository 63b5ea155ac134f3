"""Simulator for heralded photonic teleportation between two atom memories."""

__version__ = "0.1.0"

from .qcore import (  # noqa: F401
    BellLabel,
    DensityMatrix,
    PureState,
    bell_decompose,
    bell_state,
    correction_for,
    depolarize,
    fidelity,
    partial_trace,
    tensor,
)
from .photonics import (  # noqa: F401
    ClickRecord,
    Detector,
    TemporalEnvelope,
    TemporalPhoton,
    coincidence_density,
    sample_click_pair,
    sample_freq_offset,
)
from .bsm import BSMEvent, Outcome, classify, contrast, dt_histogram, retained_fraction  # noqa: F401
from .protocol import (  # noqa: F401
    EfficiencyBudget,
    FidelityClass,
    InputStateLabel,
    NoiseModel,
    conditioned_state,
    predict_fidelity,
    prepare_entangled,
    prepare_input,
    success_probability,
)
from .config import ExperimentConfig, load_preset  # noqa: F401
from .simrun import calibrate_sigma_omega, load_log, run_campaign, write_log  # noqa: F401
