"""Bivariate episodic point-process model of social-media posting times.

Simulation, composite-likelihood EM fitting, goodness-of-fit diagnostics,
variance estimation, and cohort analytics for event sequences of original
posts and reposts arriving in episodes.
"""

from .analytics import (
    batch_fit,
    covariate_correlations,
    curve_pca,
    derived_metrics,
    hazard_curves,
    three_group_cluster,
)
from .clem import (
    AscentError,
    EStepStats,
    FitConfig,
    FitResult,
    composite_loglik,
    direct_fit,
    e_step,
    fit,
    m_step,
    moment_init,
    result_from_params,
)
from .gof import (
    empirical_gap_cdf,
    envelope,
    offspring_cdf_check,
    rescaled_parent_check,
)
from .hazard import BSplineHazard, SinusoidalHazard
from .uncertainty import (
    VarianceEstimate,
    bootstrap_corr,
    sandwich,
    simulation_cov,
    window_score,
)
from .model import (
    EpisodeDecomposition,
    EventSequence,
    LabelAssignment,
    ModelParams,
    OffspringFamily,
    c_coefficient,
    complete_log_density,
    decompose,
    expected_episode_length,
    expected_events_per_episode,
    offspring_cdf,
    offspring_log_pdf,
    offspring_mean,
    pack_params,
    param_names,
    unpack_params,
)
from .simulate import simulate
from .windows import (
    WindowPartition,
    WindowStats,
    dp_loglik,
    enumerate_loglik,
    partition,
    posterior_stats,
)

__all__ = [
    "AscentError",
    "BSplineHazard",
    "EStepStats",
    "EpisodeDecomposition",
    "EventSequence",
    "FitConfig",
    "FitResult",
    "LabelAssignment",
    "ModelParams",
    "OffspringFamily",
    "SinusoidalHazard",
    "VarianceEstimate",
    "WindowPartition",
    "WindowStats",
    "batch_fit",
    "bootstrap_corr",
    "c_coefficient",
    "complete_log_density",
    "composite_loglik",
    "covariate_correlations",
    "curve_pca",
    "decompose",
    "derived_metrics",
    "direct_fit",
    "dp_loglik",
    "e_step",
    "empirical_gap_cdf",
    "enumerate_loglik",
    "envelope",
    "expected_episode_length",
    "expected_events_per_episode",
    "fit",
    "hazard_curves",
    "m_step",
    "moment_init",
    "offspring_cdf",
    "offspring_cdf_check",
    "offspring_log_pdf",
    "offspring_mean",
    "pack_params",
    "param_names",
    "partition",
    "posterior_stats",
    "rescaled_parent_check",
    "result_from_params",
    "sandwich",
    "simulate",
    "simulation_cov",
    "three_group_cluster",
    "unpack_params",
    "window_score",
]

__version__ = "0.1.0"
