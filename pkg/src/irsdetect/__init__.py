"""Covariance change detection for IRS-assisted uplinks.

Three-hypothesis LLR detection of BS-side (Type I) and IRS-side (Type II)
covariance changes, with channel simulators and a Monte-Carlo evaluation
harness.
"""

__version__ = "0.1.0"

from ._backend import NAME as backend
from .channel import (
    Baseline,
    CcdWindow,
    ChangeScenario,
    ChannelEstimate,
    Hypothesis,
    generate_ccd_window,
    ml_channel_estimate,
    mmse_channel_estimate,
    sample_cascaded_channel,
    sample_gaussian_channel,
)
from .covariance import (
    HermitianCovariance,
    IrsPhaseVector,
    LinkParams,
    ScatteringGeometry,
    achievable_rate,
    effective_covariance,
    one_ring_covariance,
    theta,
)
from .detectors import Decision, DetectorConfig, Verdict, detect, llr_type1, llr_type2, resolve_confusion
from .estimators import (
    EstimatorBounds,
    ml_covariance_estimate,
    ml_theta_estimate,
    sample_covariance,
    solve_spectrum_problem,
)
from .evaluation import ExperimentConfig, RocPoint, TrialLog, roc_sweep, run_trials, stale_mmse_diagnostic
