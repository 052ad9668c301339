"""Log-likelihood, analytic score, and observed information for (beta, phi).

Per cluster the log pmf is ``log F`` with ``F = sum_k s_k exp(t_k)``,
``t_k = -phi*log1p(c_k/phi)`` and ``s_k = (-1)**k_plus`` (see
:mod:`mberglg.distribution`).  Writing ``D = phi + c`` the per-term
derivatives are

    dt/dbeta_q      = -phi * d1_q / D            d1_q = dc/dbeta_q
    dt/dphi         = -log1p(c/phi) + c/D
    d2t/dbeta_q dbeta_r = -phi*d2_qr/D + phi*d1_q*d1_r/D**2
    d2t/dphi dbeta_q    = -d1_q * c / D**2
    d2t/dphi**2         = c**2 / (phi * D**2)

with ``d1_q = sum_j (1 + k_j - y_j) mu_j x_jq`` and
``d2_qr = sum_j (1 + k_j - y_j) mu_j x_jq x_jr``.  Gradient and Hessian of
``log F`` then follow from weighted averages of these per-term quantities,
the weights being the signed relative magnitudes ``s_k exp(t_k - t_max)``
(``t_max`` is attained at the empty subset since ``t`` decreases in ``c``).
Everything is gated in the tests by central finite differences.

:class:`LogLikelihoodEvaluator` groups clusters by success count and
evaluates value and gradient batched across clusters; it is the hot path
for the fitting driver and is tested against the reference per-cluster
functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .distribution import (
    DEFAULT_MAX_SUCCESSES,
    NumericalBreakdownError,
    _as_binary_vector,
    _check_phi,
    _log_terms,
    _subset_offsets,
    joint_log_pmf,
    subset_bits,
)

__all__ = [
    "Theta",
    "ClusterData",
    "Dataset",
    "ScoreInfo",
    "loglik",
    "score",
    "observed_information",
    "score_info",
    "LogLikelihoodEvaluator",
    "grad_phi_to_zeta",
    "info_phi_to_zeta",
]


@dataclass(frozen=True, eq=False)
class Theta:
    """Model parameters: regression coefficients and precision ``phi > 0``.

    ``zeta = log(phi)`` is the unconstrained coordinate used by the
    optimizer; reports stay in ``(beta, phi, lam = phi**-0.5)`` space.
    """

    beta: np.ndarray
    phi: float

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float)
        if beta.ndim != 1 or beta.size < 1 or not np.isfinite(beta).all():
            raise ValueError("beta must be a finite 1-D vector")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "phi", _check_phi(self.phi))

    @property
    def p(self) -> int:
        return self.beta.size

    @property
    def zeta(self) -> float:
        return math.log(self.phi)

    @property
    def lam(self) -> float:
        return self.phi ** -0.5

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.beta, [self.phi]])

    @classmethod
    def from_zeta_vector(cls, x: np.ndarray) -> "Theta":
        x = np.asarray(x, dtype=float)
        return cls(beta=x[:-1].copy(), phi=math.exp(x[-1]))


@dataclass(frozen=True, eq=False)
class ClusterData:
    """One subject's binary responses and the matching covariate rows."""

    y: np.ndarray
    X: np.ndarray

    def __post_init__(self):
        y = _as_binary_vector(self.y)
        X = np.asarray(self.X, dtype=float)
        if X.ndim != 2 or X.shape[0] != y.size:
            raise ValueError(
                f"X must be a {y.size} x p matrix matching y, got shape {X.shape}"
            )
        if not np.isfinite(X).all():
            raise ValueError("X must be finite")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)

    @property
    def m(self) -> int:
        return self.y.size

    @property
    def p(self) -> int:
        return self.X.shape[1]


@dataclass(eq=False)
class Dataset:
    """Ordered clusters sharing one covariate dimension."""

    clusters: list[ClusterData]
    subject_ids: list[str] | None = None

    def __post_init__(self):
        if not self.clusters:
            raise ValueError("dataset needs at least one cluster")
        p = self.clusters[0].p
        for i, c in enumerate(self.clusters):
            if c.p != p:
                raise ValueError(f"cluster {i} has {c.p} covariates, expected {p}")
        if self.subject_ids is not None and len(self.subject_ids) != len(self.clusters):
            raise ValueError("subject_ids length must match the cluster count")

    @property
    def n(self) -> int:
        return len(self.clusters)

    @property
    def p(self) -> int:
        return self.clusters[0].p

    @property
    def n_obs(self) -> int:
        return sum(c.m for c in self.clusters)

    def stacked(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(y, X, cluster_index) with rows concatenated in cluster order."""
        y = np.concatenate([c.y for c in self.clusters])
        X = np.vstack([c.X for c in self.clusters])
        idx = np.repeat(np.arange(self.n), [c.m for c in self.clusters])
        return y, X, idx


@dataclass(eq=False)
class ScoreInfo:
    """Bundle of log-likelihood, score, and observed information at one theta."""

    loglik: float
    score: np.ndarray
    observed_info: np.ndarray


# ---------------------------------------------------------------------------
# Reference per-cluster derivatives
# ---------------------------------------------------------------------------


def _cluster_parts(cluster: ClusterData, beta: np.ndarray, phi: float, max_successes: int):
    """Per-subset offsets c, signs, and the c-derivative ingredients."""
    y, X = cluster.y, cluster.X
    mu = np.exp(X @ beta)
    ones = y == 1
    s = int(ones.sum())
    if s > max_successes:
        raise ValueError(
            f"cluster has {s} successes; subset expansion is capped at {max_successes}"
        )
    base0 = float(mu[~ones].sum())
    offsets, kplus = _subset_offsets(base0, mu[ones])
    bits = subset_bits(np.arange(2 ** s), s).astype(float)
    # dc/dbeta per subset: failure rows always contribute, success rows when selected
    v0 = mu[~ones] @ X[~ones]  # (p,)
    w_ones = mu[ones, None] * X[ones]  # (s, p)
    d1 = v0 + bits @ w_ones  # (S, p)
    m0 = np.einsum("j,jq,jr->qr", mu[~ones], X[~ones], X[~ones])
    m_ones = np.einsum("j,jq,jr->jqr", mu[ones], X[ones], X[ones])  # (s, p, p)
    d2 = m0 + np.einsum("ks,sqr->kqr", bits, m_ones)  # (S, p, p)
    return offsets, kplus, d1, d2


def _cluster_weights(offsets: np.ndarray, kplus: np.ndarray, phi: float):
    """Signed relative weights w_k = s_k exp(t_k - t_max) and their sum F."""
    log_terms = _log_terms(offsets, phi)
    rel = np.exp(log_terms - log_terms[0])  # empty subset holds the max
    w = np.where((kplus & 1).astype(bool), -rel, rel)
    f_rel = float(w.sum())
    if f_rel <= 0.0:
        f_rel = math.fsum(w.tolist())
        if f_rel <= 0.0:
            raise NumericalBreakdownError(
                "alternating subset sum cancelled to a non-positive value"
            )
    return w, f_rel, float(log_terms[0])


def _cluster_score(cluster: ClusterData, theta: Theta, max_successes: int) -> np.ndarray:
    offsets, kplus, d1, _ = _cluster_parts(cluster, theta.beta, theta.phi, max_successes)
    phi = theta.phi
    w, f_rel, _ = _cluster_weights(offsets, kplus, phi)
    big_d = phi + offsets
    t_beta = -phi * d1 / big_d[:, None]
    t_phi = -np.log1p(offsets / phi) + offsets / big_d
    g_beta = w @ t_beta / f_rel
    g_phi = float(w @ t_phi) / f_rel
    return np.concatenate([g_beta, [g_phi]])


def _cluster_hessian(cluster: ClusterData, theta: Theta, max_successes: int) -> np.ndarray:
    offsets, kplus, d1, d2 = _cluster_parts(cluster, theta.beta, theta.phi, max_successes)
    phi = theta.phi
    p = cluster.p
    w, f_rel, _ = _cluster_weights(offsets, kplus, phi)
    big_d = phi + offsets
    ratio = offsets / big_d
    t_beta = -phi * d1 / big_d[:, None]
    t_phi = -np.log1p(offsets / phi) + ratio
    t_bb = (
        -phi * d2 / big_d[:, None, None]
        + phi * np.einsum("kq,kr->kqr", d1, d1) / (big_d ** 2)[:, None, None]
    )
    t_pb = -d1 * (offsets / big_d ** 2)[:, None]
    t_pp = offsets * ratio / (phi * big_d)
    g_beta = w @ t_beta / f_rel
    g_phi = float(w @ t_phi) / f_rel
    s_bb = np.einsum("k,kqr->qr", w, np.einsum("kq,kr->kqr", t_beta, t_beta) + t_bb) / f_rel
    s_pb = w @ (t_phi[:, None] * t_beta + t_pb) / f_rel
    s_pp = float(w @ (t_phi ** 2 + t_pp)) / f_rel
    hess = np.empty((p + 1, p + 1))
    hess[:p, :p] = s_bb - np.outer(g_beta, g_beta)
    hess[:p, p] = hess[p, :p] = s_pb - g_phi * g_beta
    hess[p, p] = s_pp - g_phi ** 2
    return hess


def loglik(theta: Theta, data: Dataset, *, max_successes: int = DEFAULT_MAX_SUCCESSES) -> float:
    """Sum of per-cluster log pmfs; identical code path to ``joint_log_pmf``."""
    phi = theta.phi
    return sum(
        joint_log_pmf(c.y, np.exp(c.X @ theta.beta), phi, max_successes=max_successes)
        for c in data.clusters
    )


def score(theta: Theta, data: Dataset, *, max_successes: int = DEFAULT_MAX_SUCCESSES) -> np.ndarray:
    """Analytic gradient of the log-likelihood in (beta, phi) coordinates."""
    total = np.zeros(theta.p + 1)
    for c in data.clusters:
        total += _cluster_score(c, theta, max_successes)
    return total


def observed_information(
    theta: Theta, data: Dataset, *, max_successes: int = DEFAULT_MAX_SUCCESSES
) -> np.ndarray:
    """Negative Hessian of the log-likelihood, symmetrized as (M + M')/2."""
    p = theta.p
    total = np.zeros((p + 1, p + 1))
    for c in data.clusters:
        total -= _cluster_hessian(c, theta, max_successes)
    if not np.isfinite(total).all():
        raise ArithmeticError("observed information has non-finite entries")
    return 0.5 * (total + total.T)


def score_info(theta: Theta, data: Dataset) -> ScoreInfo:
    return ScoreInfo(
        loglik=loglik(theta, data),
        score=score(theta, data),
        observed_info=observed_information(theta, data),
    )


def grad_phi_to_zeta(grad: np.ndarray, phi: float) -> np.ndarray:
    """Chain rule: gradient in (beta, zeta=log phi) from gradient in (beta, phi)."""
    out = np.array(grad, dtype=float, copy=True)
    out[-1] *= phi
    return out


def info_phi_to_zeta(info: np.ndarray, phi: float) -> np.ndarray:
    """Jacobian sandwich J' I J with J = diag(1, ..., 1, phi).

    This is the delta-method transform of the information (the gradient
    correction term is dropped, so standard errors satisfy
    ``se_phi = phi * se_zeta`` exactly).
    """
    j = np.ones(info.shape[0])
    j[-1] = phi
    return info * np.outer(j, j)


# ---------------------------------------------------------------------------
# Batched evaluator (hot path for fitting and simulation studies)
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class _SizeGroup:
    cluster_idx: np.ndarray  # (G,)
    ones_rows: np.ndarray  # (G, s) row indices into the stacked arrays
    bits: np.ndarray  # (2**s, s)
    odd: np.ndarray  # (2**s,) bool, sign parity


class LogLikelihoodEvaluator:
    """Vectorized log-likelihood and gradient over a fixed dataset.

    Clusters are grouped by success count so each group evaluates its
    ``2**s`` subset terms for all member clusters at once.  Agrees with
    :func:`loglik` / :func:`score` to roundoff; raises
    :class:`NumericalBreakdownError` exactly when they would.
    """

    def __init__(self, data: Dataset, *, max_successes: int = DEFAULT_MAX_SUCCESSES):
        y, X, cl = data.stacked()
        self.n = data.n
        self.p = data.p
        self.X = X
        zero_rows = np.flatnonzero(y == 0)
        self._zero_rows = zero_rows
        self._zero_cl = cl[zero_rows]
        self.groups: list[_SizeGroup] = []
        ones_rows_by_cluster: list[np.ndarray] = [
            np.flatnonzero((cl == i) & (y == 1)) for i in range(self.n)
        ]
        sizes = np.array([r.size for r in ones_rows_by_cluster])
        if sizes.max() > max_successes:
            worst = int(sizes.argmax())
            raise ValueError(
                f"cluster {worst} has {sizes.max()} successes; subset expansion "
                f"is capped at {max_successes}"
            )
        for s in np.unique(sizes):
            idx = np.flatnonzero(sizes == s)
            if s == 0:
                self._empty_clusters = idx
                continue
            rows = np.vstack([ones_rows_by_cluster[i] for i in idx])
            bits = subset_bits(np.arange(2 ** int(s)), int(s)).astype(float)
            self.groups.append(
                _SizeGroup(
                    cluster_idx=idx,
                    ones_rows=rows,
                    bits=bits,
                    odd=(bits.sum(axis=1).astype(np.int64) & 1).astype(bool),
                )
            )
        if not hasattr(self, "_empty_clusters"):
            self._empty_clusters = np.empty(0, dtype=np.int64)

    def _base_parts(self, beta: np.ndarray):
        mu = np.exp(self.X @ beta)
        base0 = np.bincount(self._zero_cl, weights=mu[self._zero_rows], minlength=self.n)
        return mu, base0

    def value(self, beta: np.ndarray, phi: float) -> float:
        mu, base0 = self._base_parts(beta)
        lt0 = np.log1p(base0 / phi)
        total = float(-phi * lt0[self._empty_clusters].sum())
        for g in self.groups:
            mu_ones = mu[g.ones_rows]
            offsets = base0[g.cluster_idx][:, None] + mu_ones @ g.bits.T
            rel = np.exp(-phi * (np.log1p(offsets / phi) - lt0[g.cluster_idx][:, None]))
            f_rel = rel[:, ~g.odd].sum(axis=1) - rel[:, g.odd].sum(axis=1)
            if not (f_rel > 0.0).all():
                self._rescue_or_raise(f_rel)
            total += float((-phi * lt0[g.cluster_idx] + np.log(f_rel)).sum())
        return total

    def value_and_grad(self, beta: np.ndarray, phi: float) -> tuple[float, np.ndarray]:
        """Log-likelihood and its gradient in (beta, phi) coordinates."""
        mu, base0 = self._base_parts(beta)
        lt0 = np.log1p(base0 / phi)
        mu_z = mu[self._zero_rows]
        v0 = np.zeros((self.n, self.p))
        for q in range(self.p):
            v0[:, q] = np.bincount(
                self._zero_cl, weights=mu_z * self.X[self._zero_rows, q], minlength=self.n
            )
        total = 0.0
        g_beta = np.zeros(self.p)
        g_phi = 0.0
        emp = self._empty_clusters
        if emp.size:
            big_d0 = phi + base0[emp]
            total += float(-phi * lt0[emp].sum())
            g_beta += (-phi * v0[emp] / big_d0[:, None]).sum(axis=0)
            g_phi += float((-lt0[emp] + base0[emp] / big_d0).sum())
        for g in self.groups:
            mu_ones = mu[g.ones_rows]  # (G, s)
            offsets = base0[g.cluster_idx][:, None] + mu_ones @ g.bits.T  # (G, S)
            lt = np.log1p(offsets / phi)
            rel = np.exp(-phi * (lt - lt0[g.cluster_idx][:, None]))
            w = np.where(g.odd[None, :], -rel, rel)
            f_rel = w.sum(axis=1)
            if not (f_rel > 0.0).all():
                self._rescue_or_raise(f_rel)
            big_d = phi + offsets
            x_ones = self.X[g.ones_rows]  # (G, s, p)
            w1 = mu_ones[:, :, None] * x_ones  # (G, s, p)
            d1 = v0[g.cluster_idx][:, None, :] + np.einsum("gsp,Ss->gSp", w1, g.bits)
            t_beta = -phi * d1 / big_d[:, :, None]
            t_phi = -lt + offsets / big_d
            total += float((-phi * lt0[g.cluster_idx] + np.log(f_rel)).sum())
            g_beta += (np.einsum("gS,gSp->gp", w, t_beta) / f_rel[:, None]).sum(axis=0)
            g_phi += float(((w * t_phi).sum(axis=1) / f_rel).sum())
        return total, np.concatenate([g_beta, [g_phi]])

    @staticmethod
    def _rescue_or_raise(f_rel: np.ndarray):
        raise NumericalBreakdownError(
            f"{int((f_rel <= 0).sum())} cluster(s) cancelled to a non-positive pmf"
        )
