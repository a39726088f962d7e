"""Estimate and track the Rabi frequency of a continuously measured qubit.

Units throughout: time in microseconds, frequency in MHz (``f = Omega/2pi``)
unless a function says it works in rad/us.
"""

from .harness import SweepConfig, SweepResult, rms_error, run_sweep
from .mle import (
    EstimateResult,
    FrequencyGrid,
    GaussianPrior,
    Likelihood,
    LikelihoodCurve,
    LikelihoodError,
    estimate_frequency,
    grid_evaluate,
    log_likelihood,
    log_likelihood_gradient,
    newton_polish,
    refine_and_fit,
)
from .model import MeasurementModel, ParaState, PureState
from .projective import (
    ProjectiveRecord,
    count_switches,
    projective_fisher,
    projective_loglike,
    projective_mle,
    simulate_projective,
)
from .simulate import (
    OmegaProfile,
    ReadoutRecord,
    RecordFormatError,
    load_record,
    make_drift_profile,
    make_rng,
    save_record,
    simulate_record,
)
from .spectral import Spectrum, fft_estimate, periodogram, triangular_filter
from .tracker import DriftTrace, TrackerConfig, track

__version__ = "0.1.0"

__all__ = [
    "DriftTrace",
    "EstimateResult",
    "FrequencyGrid",
    "GaussianPrior",
    "Likelihood",
    "LikelihoodCurve",
    "LikelihoodError",
    "MeasurementModel",
    "OmegaProfile",
    "ParaState",
    "ProjectiveRecord",
    "PureState",
    "ReadoutRecord",
    "RecordFormatError",
    "Spectrum",
    "SweepConfig",
    "SweepResult",
    "TrackerConfig",
    "count_switches",
    "estimate_frequency",
    "fft_estimate",
    "grid_evaluate",
    "load_record",
    "log_likelihood",
    "log_likelihood_gradient",
    "make_drift_profile",
    "make_rng",
    "newton_polish",
    "periodogram",
    "projective_fisher",
    "projective_loglike",
    "projective_mle",
    "refine_and_fit",
    "rms_error",
    "run_sweep",
    "save_record",
    "simulate_projective",
    "simulate_record",
    "track",
    "triangular_filter",
]
