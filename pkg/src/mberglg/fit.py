"""Maximum-likelihood fitting: initialization, quasi-Newton driver, Wald inference.

The optimizer is a self-contained BFGS (inverse-Hessian secant updates with
an Armijo backtracking line search) run in the unconstrained coordinates
``(beta, zeta = log phi)``.  Non-convergence is reported, not raised, so
simulation studies can tabulate failures.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

from .distribution import NumericalBreakdownError
from .inference import (
    Dataset,
    LogLikelihoodEvaluator,
    Theta,
    grad_phi_to_zeta,
    info_phi_to_zeta,
    loglik,
    observed_information,
)

__all__ = ["FitConfig", "FitReport", "OptimResult", "initialize", "fit_ml", "minimize_bfgs"]

_SEPARATION_BOUND = 10.0


@dataclass
class FitConfig:
    """Knobs of the ML driver; defaults give reproducible desk-scale fits."""

    max_iterations: int = 500
    gradient_tolerance: float = 1e-6  # on max |score| in (beta, zeta) coordinates
    init_strategy: str = "glm-cloglog"  # or "user-supplied"
    beta_init: np.ndarray | None = None
    phi_init: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.gradient_tolerance <= 0.0:
            raise ValueError("gradient_tolerance must be positive")
        if self.init_strategy not in ("glm-cloglog", "user-supplied"):
            raise ValueError(f"unknown init_strategy {self.init_strategy!r}")
        if self.init_strategy == "user-supplied" and self.beta_init is None:
            raise ValueError("user-supplied initialization requires beta_init")
        if self.phi_init <= 0.0:
            raise ValueError("phi_init must be positive")


@dataclass(eq=False)
class FitReport:
    """Estimates and Wald inference from one maximum-likelihood fit.

    ``estimates`` holds the coefficients followed by the dispersion-type
    parameter named in ``param_names`` (``phi`` for the log-gamma intercept
    model, ``sigma`` for the normal-intercept baselines).  ``lambda_hat`` is
    the same dispersion reported on the shape scale (``phi**-0.5`` resp.
    ``sigma``), with a delta-method standard error.
    """

    model: str
    param_names: list[str]
    estimates: np.ndarray
    se: np.ndarray
    wald_z: np.ndarray
    p_values: np.ndarray
    loglik: float
    aic: float
    converged: bool
    iterations: int
    gradient_norm: float
    lambda_hat: float
    lambda_se: float
    n_clusters: int
    n_obs: int
    model_spec: dict | None = None
    message: str = ""

    @property
    def beta(self) -> np.ndarray:
        return self.estimates[:-1]

    @property
    def dispersion(self) -> float:
        return float(self.estimates[-1])

    @property
    def theta_hat(self) -> Theta:
        if self.model != "mberglg":
            raise ValueError(f"theta_hat is only defined for the mberglg model, not {self.model!r}")
        return Theta(beta=self.beta.copy(), phi=self.dispersion)

    def to_dict(self) -> dict:
        out = {
            "model": self.model,
            "parameters": list(self.param_names),
            "estimates": [float(v) for v in self.estimates],
            "se": [float(v) for v in self.se],
            "wald_z": [float(v) for v in self.wald_z],
            "p_values": [float(v) for v in self.p_values],
            "loglik": float(self.loglik),
            "aic": float(self.aic),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "gradient_norm": float(self.gradient_norm),
            "lambda_hat": float(self.lambda_hat),
            "lambda_se": float(self.lambda_se),
            "n_clusters": int(self.n_clusters),
            "n_obs": int(self.n_obs),
            "message": self.message,
        }
        if self.model_spec is not None:
            out["model_spec"] = self.model_spec
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "FitReport":
        return cls(
            model=d["model"],
            param_names=list(d["parameters"]),
            estimates=np.asarray(d["estimates"], dtype=float),
            se=np.asarray(d["se"], dtype=float),
            wald_z=np.asarray(d["wald_z"], dtype=float),
            p_values=np.asarray(d["p_values"], dtype=float),
            loglik=float(d["loglik"]),
            aic=float(d["aic"]),
            converged=bool(d["converged"]),
            iterations=int(d["iterations"]),
            gradient_norm=float(d["gradient_norm"]),
            lambda_hat=float(d["lambda_hat"]),
            lambda_se=float(d["lambda_se"]),
            n_clusters=int(d["n_clusters"]),
            n_obs=int(d["n_obs"]),
            model_spec=d.get("model_spec"),
            message=d.get("message", ""),
        )


# ---------------------------------------------------------------------------
# Initialization: pooled Bernoulli GLM with the complementary log-log link
# ---------------------------------------------------------------------------


def _irls_cloglog(y: np.ndarray, X: np.ndarray, max_iter: int = 30) -> np.ndarray:
    n, p = X.shape
    beta = np.zeros(p)
    ybar = min(max(y.mean(), 1e-6), 1.0 - 1e-6)
    if np.allclose(X[:, 0], 1.0):
        beta[0] = math.log(-math.log(1.0 - ybar))
    for _ in range(max_iter):
        eta = X @ beta
        t = np.exp(np.clip(eta, -30.0, 30.0))
        u = np.clip(-np.expm1(-t), 1e-10, 1.0 - 1e-10)
        dmu = t * np.exp(-t)  # du/deta
        w = dmu ** 2 / (u * (1.0 - u))
        z = eta + (y - u) / np.maximum(dmu, 1e-10)
        wx = X * w[:, None]
        try:
            new = np.linalg.solve(X.T @ wx + 1e-10 * np.eye(p), wx.T @ z)
        except np.linalg.LinAlgError:
            break
        if not np.isfinite(new).all():
            break
        step = new - beta
        beta = new
        if np.abs(step).max() < 1e-10:
            break
    return beta


def initialize(data: Dataset, cfg: FitConfig) -> Theta:
    """Starting point: independence-GLM coefficients plus ``cfg.phi_init``.

    Separation (diverging coefficients) is clipped to ``|beta| <= 10`` with a
    warning rather than failing, since the marginal likelihood is better
    behaved than the working GLM.
    """
    y, X, _ = data.stacked()
    if y.min() == y.max():
        raise ValueError("dataset is degenerate: responses are all equal")
    if cfg.init_strategy == "user-supplied":
        beta = np.asarray(cfg.beta_init, dtype=float).copy()
        if beta.size != data.p:
            raise ValueError(f"beta_init has {beta.size} entries, expected {data.p}")
    else:
        beta = _irls_cloglog(y, X)
        if not np.isfinite(beta).all() or np.abs(beta).max() > _SEPARATION_BOUND:
            warnings.warn(
                "separation suspected in the initializing GLM; coefficients clipped",
                RuntimeWarning,
                stacklevel=2,
            )
            beta = np.clip(np.nan_to_num(beta), -_SEPARATION_BOUND, _SEPARATION_BOUND)
    return Theta(beta=beta, phi=cfg.phi_init)


# ---------------------------------------------------------------------------
# BFGS with Armijo backtracking (maximization via negated objective)
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class OptimResult:
    x: np.ndarray
    value: float
    grad: np.ndarray
    iterations: int
    converged: bool
    message: str = ""


def minimize_bfgs(
    value_and_grad,
    x0: np.ndarray,
    *,
    gtol: float = 1e-6,
    max_iterations: int = 500,
    armijo_c1: float = 1e-4,
    max_backtracks: int = 60,
) -> OptimResult:
    """Minimize a smooth function with BFGS inverse-Hessian updates.

    ``value_and_grad(x)`` returns ``(f, g)`` and may raise
    :class:`NumericalBreakdownError` or return non-finite values at bad
    trial points; the line search treats both as a failed step and
    backtracks.  Accepted steps always satisfy the Armijo sufficient
    decrease, so progress is monotone.
    """

    def safe_eval(x):
        try:
            f, g = value_and_grad(x)
        except NumericalBreakdownError:
            return np.inf, None
        if not np.isfinite(f):
            return np.inf, None
        return f, g

    x = np.asarray(x0, dtype=float).copy()
    f, g = safe_eval(x)
    if g is None:
        return OptimResult(x, np.inf, np.full_like(x, np.nan), 0, False, "objective undefined at start")
    n = x.size
    h_inv = np.eye(n)
    iterations = 0
    message = "gradient tolerance reached"
    while np.abs(g).max() > gtol:
        if iterations >= max_iterations:
            message = "iteration limit reached"
            break
        direction = -h_inv @ g
        slope = float(g @ direction)
        if not np.isfinite(slope) or slope >= 0.0:
            h_inv = np.eye(n)
            direction = -g
            slope = float(g @ direction)
        step = 1.0
        accepted = False
        for _ in range(max_backtracks):
            x_new = x + step * direction
            f_new, g_new = safe_eval(x_new)
            if g_new is not None and f_new <= f + armijo_c1 * step * slope:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            message = "line search failed"
            break
        s = x_new - x
        yv = g_new - g
        sy = float(s @ yv)
        if sy > 1e-12 * float(np.linalg.norm(s) * np.linalg.norm(yv) + 1e-300):
            rho = 1.0 / sy
            v = np.eye(n) - rho * np.outer(s, yv)
            h_inv = v @ h_inv @ v.T + rho * np.outer(s, s)
        x, f, g = x_new, f_new, g_new
        iterations += 1
    converged = bool(np.abs(g).max() <= gtol)
    return OptimResult(x, f, g, iterations, converged, message)


# ---------------------------------------------------------------------------
# ML driver
# ---------------------------------------------------------------------------

_ZETA_CLIP = 300.0  # keeps exp(zeta) inside double range


def _wald_columns(estimates: np.ndarray, se: np.ndarray):
    with np.errstate(invalid="ignore", divide="ignore"):
        z = estimates / se
        p = 2.0 * (1.0 - ndtr(np.abs(z)))
    return z, p


def _se_from_information(info: np.ndarray) -> tuple[np.ndarray, str]:
    try:
        cov = np.linalg.inv(info)
        diag = np.diag(cov)
        if (diag <= 0.0).any() or not np.isfinite(diag).all():
            raise np.linalg.LinAlgError
        return np.sqrt(diag), ""
    except np.linalg.LinAlgError:
        return np.full(info.shape[0], np.nan), "observed information singular or indefinite; standard errors unavailable"


def fit_ml(data: Dataset, cfg: FitConfig | None = None) -> FitReport:
    """Maximize the marginal likelihood over ``(beta, zeta)`` and report Wald inference.

    Non-convergence yields ``converged=False`` in the report rather than an
    exception.  Standard errors come from the inverse observed information
    at the optimum, in ``(beta, phi)`` coordinates.
    """
    cfg = cfg or FitConfig()
    theta0 = initialize(data, cfg)
    evaluator = LogLikelihoodEvaluator(data)

    def neg_value_and_grad(x):
        zeta = float(np.clip(x[-1], -_ZETA_CLIP, _ZETA_CLIP))
        phi = math.exp(zeta)
        value, grad = evaluator.value_and_grad(x[:-1], phi)
        return -value, -grad_phi_to_zeta(grad, phi)

    x0 = np.concatenate([theta0.beta, [theta0.zeta]])
    opt = minimize_bfgs(
        neg_value_and_grad,
        x0,
        gtol=cfg.gradient_tolerance,
        max_iterations=cfg.max_iterations,
    )
    theta = Theta.from_zeta_vector(opt.x)
    p = data.p
    names = [f"beta{q}" for q in range(p)] + ["phi"]
    estimates = theta.as_vector()
    ll = loglik(theta, data)
    se = np.full(p + 1, np.nan)
    message = opt.message
    if np.isfinite(ll):
        try:
            info = observed_information(theta, data)
            se, info_msg = _se_from_information(info)
            if info_msg:
                message = (message + "; " + info_msg).strip("; ")
        except (ArithmeticError, ValueError) as exc:
            message = (message + f"; information unavailable: {exc}").strip("; ")
    wald_z, p_values = _wald_columns(estimates, se)
    phi_hat = theta.phi
    lambda_hat = phi_hat ** -0.5
    lambda_se = 0.5 * phi_hat ** -1.5 * se[-1] if np.isfinite(se[-1]) else np.nan
    return FitReport(
        model="mberglg",
        param_names=names,
        estimates=estimates,
        se=se,
        wald_z=wald_z,
        p_values=p_values,
        loglik=float(ll),
        aic=-2.0 * float(ll) + 2.0 * (p + 1),
        converged=opt.converged,
        iterations=opt.iterations,
        gradient_norm=float(np.abs(opt.grad).max()),
        lambda_hat=lambda_hat,
        lambda_se=float(lambda_se),
        n_clusters=data.n,
        n_obs=data.n_obs,
        message=message,
    )


def wald_interval(estimate: float, se: float, level: float = 0.95) -> tuple[float, float]:
    half = ndtri(0.5 + level / 2.0) * se
    return estimate - half, estimate + half
