"""Random-intercept Bernoulli-normal baseline fitted by Gauss-Hermite quadrature.

Comparison model only: the intercept is ``b_i ~ Normal(0, sigma**2)``
(``sigma`` is a standard deviation) under a probit or complementary log-log
link, and the marginal likelihood integral is approximated with fixed
Gauss-Hermite nodes.  Derivatives are numeric throughout; accuracy is gated
by node-refinement checks in the tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr, logsumexp

from .fit import FitConfig, FitReport, OptimResult, _se_from_information, _wald_columns, minimize_bfgs
from .inference import Dataset
from .numdiff import central_gradient, central_hessian

__all__ = ["GlmmSpec", "glmm_loglik", "glmm_fit"]

_LINKS = ("probit", "cloglog")


@dataclass(frozen=True)
class GlmmSpec:
    """Link and quadrature settings for the normal-intercept baseline."""

    link: str = "cloglog"
    quadrature_nodes: int = 21
    sigma_param: str = "sd"

    def __post_init__(self):
        if self.link not in _LINKS:
            raise ValueError(f"link must be one of {_LINKS}, got {self.link!r}")
        if self.quadrature_nodes < 5 or self.quadrature_nodes % 2 == 0:
            raise ValueError("quadrature_nodes must be odd and >= 5 (keeps a node at the mode)")
        if self.sigma_param != "sd":
            raise ValueError("only the standard-deviation parameterization is supported")


def _bernoulli_log_pmf(y: np.ndarray, eta: np.ndarray, link: str) -> np.ndarray:
    """log P(y | linear predictor eta), elementwise; eta may be (N, K)."""
    if link == "probit":
        return np.where(y[:, None] == 1, log_ndtr(eta), log_ndtr(-eta))
    with np.errstate(over="ignore"):
        t = np.exp(eta)
    log_p0 = -t  # P(y=0) = exp(-exp(eta))
    with np.errstate(divide="ignore"):
        log_p1 = np.log(-np.expm1(-t))
    return np.where(y[:, None] == 1, log_p1, log_p0)


def glmm_loglik(beta: np.ndarray, sigma: float, data: Dataset, spec: GlmmSpec) -> float:
    """Marginal log-likelihood with the random intercept integrated out."""
    if sigma <= 0.0:
        raise ValueError("sigma must be positive")
    y, X, idx = data.stacked()
    starts = np.flatnonzero(np.r_[True, np.diff(idx) != 0])
    nodes, weights = np.polynomial.hermite.hermgauss(spec.quadrature_nodes)
    eta = (X @ np.asarray(beta, dtype=float))[:, None] + math.sqrt(2.0) * sigma * nodes[None, :]
    logp = _bernoulli_log_pmf(y, eta, spec.link)
    per_cluster = np.add.reduceat(logp, starts, axis=0)  # (n, K)
    log_weights = np.log(weights) - 0.5 * math.log(math.pi)
    cluster_ll = logsumexp(per_cluster + log_weights[None, :], axis=1)
    if np.isnan(cluster_ll).any():
        raise ArithmeticError("non-finite integrand in the quadrature sum")
    return float(cluster_ll.sum())


def glmm_fit(data: Dataset, spec: GlmmSpec, cfg: FitConfig | None = None) -> FitReport:
    """Fit the baseline by BFGS over ``(beta, zeta = log sigma)`` with numeric gradients."""
    cfg = cfg or FitConfig(gradient_tolerance=1e-5)
    # reuse the pooled-GLM start; probit fits tolerate the cloglog start fine
    from .fit import initialize

    theta0 = initialize(data, cfg)
    x0 = np.concatenate([theta0.beta, [math.log(cfg.phi_init)]])

    def objective(x) -> float:
        sigma = math.exp(float(np.clip(x[-1], -300.0, 300.0)))
        return -glmm_loglik(x[:-1], sigma, data, spec)

    def value_and_grad(x):
        return objective(x), central_gradient(objective, x, rel_step=1e-6)

    opt: OptimResult = minimize_bfgs(
        value_and_grad, x0, gtol=cfg.gradient_tolerance, max_iterations=cfg.max_iterations
    )
    beta_hat = opt.x[:-1]
    sigma_hat = math.exp(float(opt.x[-1]))
    p = data.p
    ll = glmm_loglik(beta_hat, sigma_hat, data, spec)

    def loglik_at(v):  # (beta, sigma) coordinates for the observed information
        return glmm_loglik(v[:-1], float(v[-1]), data, spec)

    estimates = np.concatenate([beta_hat, [sigma_hat]])
    info = -central_hessian(loglik_at, estimates, rel_step=1e-4)
    se, info_msg = _se_from_information(info)
    wald_z, p_values = _wald_columns(estimates, se)
    return FitReport(
        model=f"normal-{spec.link}",
        param_names=[f"beta{q}" for q in range(p)] + ["sigma"],
        estimates=estimates,
        se=se,
        wald_z=wald_z,
        p_values=p_values,
        loglik=float(ll),
        aic=-2.0 * float(ll) + 2.0 * (p + 1),
        converged=opt.converged,
        iterations=opt.iterations,
        gradient_norm=float(np.abs(opt.grad).max()),
        lambda_hat=float(sigma_hat),
        lambda_se=float(se[-1]) if np.isfinite(se[-1]) else np.nan,
        n_clusters=data.n,
        n_obs=data.n_obs,
        message=(opt.message + ("; " + info_msg if info_msg else "")).strip("; "),
    )
