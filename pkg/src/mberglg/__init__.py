"""Correlated binary regression with a generalized log-gamma random intercept.

The joint pmf of each cluster is available in closed form (a signed sum over
subsets of the success positions), which gives an exact marginal likelihood,
analytic score and observed information, randomized quantile residuals, and
a simulation-study engine, all exposed through the ``mberglg`` CLI.
"""

from .data import DataFormatError, ModelSpec, load_dataset
from .distribution import (
    NumericalBreakdownError,
    QuadratureError,
    enumerate_all_outcomes,
    joint_log_pmf,
    marginal_corr,
    marginal_cov,
    marginal_mean,
    marginal_var,
    pmf_quadrature_oracle,
    subset_enumerator,
    univariate_pmf,
)
from .fit import FitConfig, FitReport, fit_ml, initialize
from .glg import GLGParams, glg_log_pdf, glg_moments, glg_sample
from .glmm import GlmmSpec, glmm_fit, glmm_loglik
from .inference import (
    ClusterData,
    Dataset,
    ScoreInfo,
    Theta,
    loglik,
    observed_information,
    score,
    score_info,
)
from .montecarlo import (
    MCCell,
    MCReport,
    MCScenarioConfig,
    generate_cluster,
    generate_dataset,
    parse_summary,
    run_study,
    summarize_report,
)
from .residuals import EnvelopeBand, ResidualRecord, quantile_residuals, simulate_envelope

__version__ = "0.1.0"

__all__ = [
    "ClusterData",
    "DataFormatError",
    "Dataset",
    "EnvelopeBand",
    "FitConfig",
    "FitReport",
    "GLGParams",
    "GlmmSpec",
    "MCCell",
    "MCReport",
    "MCScenarioConfig",
    "ModelSpec",
    "NumericalBreakdownError",
    "QuadratureError",
    "ResidualRecord",
    "ScoreInfo",
    "Theta",
    "enumerate_all_outcomes",
    "fit_ml",
    "generate_cluster",
    "generate_dataset",
    "glg_log_pdf",
    "glg_moments",
    "glg_sample",
    "glmm_fit",
    "glmm_loglik",
    "initialize",
    "joint_log_pmf",
    "load_dataset",
    "loglik",
    "marginal_corr",
    "marginal_cov",
    "marginal_mean",
    "marginal_var",
    "observed_information",
    "parse_summary",
    "pmf_quadrature_oracle",
    "quantile_residuals",
    "run_study",
    "score",
    "score_info",
    "simulate_envelope",
    "subset_enumerator",
    "summarize_report",
    "univariate_pmf",
]
