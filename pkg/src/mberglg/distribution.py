"""Exact joint pmf of a correlated binary vector with a shared gamma frailty.

A cluster of binary outcomes ``y`` with per-observation rates
``mu_j = exp(x_j' beta)`` and precision ``phi`` (shape ``lam = phi**-0.5``
of the log-gamma random intercept under the complementary log-log link)
has closed-form joint pmf

    f(y; mu, phi) = sum over subsets k of the success positions of
                    (-1)**k_plus * (1 + c_k/phi)**(-phi)

where ``c_k = sum_j mu_j * (1 + k_j - y_j) >= 0``.  Each term lies in
(0, 1], so the sum is evaluated in the log domain: positive- and
negative-sign terms are reduced by separate log-sum-exp passes and
combined with ``log1p``; if the two groups cancel almost completely the
sum is recomputed with exact compensated summation, and a sum that is
still non-positive raises :class:`NumericalBreakdownError` instead of
silently returning ``-inf``.

The subset count is ``2**y_plus``; inputs beyond a configurable cap are
rejected (``DEFAULT_MAX_SUCCESSES``).
"""

from __future__ import annotations

import math

import numpy as np
from scipy.integrate import quad
from scipy.special import gammaln
from scipy.stats import gamma as gamma_dist

DEFAULT_MAX_SUCCESSES = 30

# Above this many successes the 2**s term array is no longer materialized in
# one block; terms stream through in chunks of 2**16 (no compensated-sum
# rescue on that path, it exists only to honor the configurable cap).
_MATERIALIZE_LIMIT = 22
_CHUNK_BITS = 16

# Relative cancellation beyond which the log-domain difference is distrusted
# and the sum is redone with exact summation in the linear domain.
_CANCELLATION_GUARD = 1e-13


class NumericalBreakdownError(ArithmeticError):
    """The alternating subset sum cancelled to a non-positive value."""


class QuadratureError(ArithmeticError):
    """Adaptive quadrature failed to reach the requested accuracy."""


def _as_binary_vector(y) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1 or y.size < 1:
        raise ValueError("y must be a non-empty 1-D vector")
    out = y.astype(np.int64, copy=True)
    if not np.array_equal(out, y) or not np.isin(out, (0, 1)).all():
        raise ValueError("y entries must be 0 or 1")
    return out


def _as_mu_vector(mu, length: int | None = None) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    if mu.ndim != 1 or mu.size < 1:
        raise ValueError("mu must be a non-empty 1-D vector")
    if not (np.isfinite(mu).all() and (mu > 0.0).all()):
        raise ValueError("mu entries must be positive and finite")
    if length is not None and mu.size != length:
        raise ValueError(f"length mismatch: y has {length} entries, mu has {mu.size}")
    return mu


def _check_phi(phi: float) -> float:
    phi = float(phi)
    if not (np.isfinite(phi) and phi > 0.0):
        raise ValueError(f"phi must be a positive real, got {phi}")
    return phi


def subset_bits(indices: np.ndarray, n_bits: int) -> np.ndarray:
    """Binary expansion of subset indices: row i is the n_bits of indices[i]."""
    idx = indices.astype(np.uint64)[:, None]
    return ((idx >> np.arange(n_bits, dtype=np.uint64)) & np.uint64(1)).astype(np.int64)


def subset_enumerator(y):
    """Yield every vector ``k`` with ``0 <= k_j <= y_j`` and its sum ``k_plus``.

    There are exactly ``2**sum(y)`` items; bit ``i`` of the enumeration index
    toggles the i-th success position in within-cluster order.
    """
    y = _as_binary_vector(y)
    ones = np.flatnonzero(y == 1)
    s = ones.size
    for idx in range(2 ** s):
        k = np.zeros(y.size, dtype=np.int64)
        for bit in range(s):
            if (idx >> bit) & 1:
                k[ones[bit]] = 1
        yield k, int(k.sum())


def _subset_offsets(base0: float, mu_ones: np.ndarray):
    """Materialized ``(c_k, k_plus)`` for every subset of the success positions."""
    s = mu_ones.size
    bits = subset_bits(np.arange(2 ** s), s)
    offsets = base0 + bits @ mu_ones
    kplus = bits.sum(axis=1)
    return offsets, kplus


def _subset_offsets_chunks(base0: float, mu_ones: np.ndarray):
    s = mu_ones.size
    total = 2 ** s
    step = 2 ** _CHUNK_BITS
    for lo in range(0, total, step):
        idx = np.arange(lo, min(lo + step, total))
        bits = subset_bits(idx, s)
        yield base0 + bits @ mu_ones, bits.sum(axis=1)


def _log_terms(offsets: np.ndarray, phi: float) -> np.ndarray:
    """log of (1 + c/phi)**(-phi) per subset; always <= 0."""
    return -phi * np.log1p(offsets / phi)


def _combine_pos_neg(lse_pos: float, lse_neg: float) -> float | None:
    """log(e**lse_pos - e**lse_neg), or None when cancellation is distrusted."""
    if lse_neg == -np.inf:
        return lse_pos
    if lse_pos > lse_neg:
        ratio = math.exp(lse_neg - lse_pos)
        if 1.0 - ratio > _CANCELLATION_GUARD:
            return lse_pos + math.log1p(-ratio)
    return None


def _logsumexp_shifted(values: np.ndarray, shift: float) -> float:
    """logsumexp of `values` whose maximum is known to be <= shift."""
    if values.size == 0:
        return -np.inf
    return shift + math.log(float(np.exp(values - shift).sum()))


def signed_log_sum(log_terms: np.ndarray, kplus: np.ndarray) -> float:
    """log of ``sum (-1)**kplus * exp(log_terms)``, which must be positive.

    Positive- and negative-sign groups are reduced separately and combined
    via ``log1p``.  Near-total cancellation falls back to exact compensated
    summation (``math.fsum``) after rescaling by the largest term; a result
    that is still non-positive raises :class:`NumericalBreakdownError`.
    """
    log_terms = np.asarray(log_terms, dtype=float)
    kplus = np.asarray(kplus)
    odd = (kplus & 1).astype(bool)
    m = float(log_terms.max())
    lse_pos = _logsumexp_shifted(log_terms[~odd], m)
    lse_neg = _logsumexp_shifted(log_terms[odd], m)
    combined = _combine_pos_neg(lse_pos, lse_neg)
    if combined is not None:
        return combined
    signed = np.where(odd, -1.0, 1.0) * np.exp(log_terms - m)
    total = math.fsum(signed.tolist())
    if total <= 0.0:
        raise NumericalBreakdownError(
            "alternating subset sum cancelled to a non-positive value "
            f"(residual {total:.3e} relative to the largest term)"
        )
    return m + math.log(total)


def joint_log_pmf(y, mu, phi, *, max_successes: int = DEFAULT_MAX_SUCCESSES) -> float:
    """Log joint pmf of the binary vector ``y`` given rates ``mu`` and precision ``phi``.

    Cost is ``O(2**sum(y))``; clusters with more than ``max_successes``
    successes are rejected.
    """
    y = _as_binary_vector(y)
    mu = _as_mu_vector(mu, y.size)
    phi = _check_phi(phi)
    ones = y == 1
    s = int(ones.sum())
    if s > max_successes:
        raise ValueError(
            f"cluster has {s} successes; subset expansion is capped at "
            f"{max_successes} (override with max_successes=)"
        )
    base0 = float(mu[~ones].sum())
    mu_ones = mu[ones]
    if s <= _MATERIALIZE_LIMIT:
        offsets, kplus = _subset_offsets(base0, mu_ones)
        return signed_log_sum(_log_terms(offsets, phi), kplus)
    # Streaming path for very large (but still capped) clusters.
    shift = -phi * math.log1p(base0 / phi)  # the empty subset is always the max
    pos_parts, neg_parts = [], []
    for offsets, kplus in _subset_offsets_chunks(base0, mu_ones):
        rel = np.exp(_log_terms(offsets, phi) - shift)
        odd = (kplus & 1).astype(bool)
        pos_parts.append(math.fsum(rel[~odd].tolist()))
        neg_parts.append(math.fsum(rel[odd].tolist()))
    total = math.fsum(pos_parts) - math.fsum(neg_parts)
    if total <= 0.0:
        raise NumericalBreakdownError(
            "alternating subset sum cancelled to a non-positive value"
        )
    return shift + math.log(total)


def log_p_zero(mu, phi):
    """log P(y_j = 0) = -phi*log1p(mu/phi); vectorized in ``mu``."""
    return -phi * np.log1p(np.asarray(mu, dtype=float) / phi)


def univariate_pmf(y: int, mu: float, phi: float) -> float:
    """Marginal pmf of one coordinate: P(0) = (phi/(phi+mu))**phi, P(1) its complement."""
    if y not in (0, 1):
        raise ValueError("y must be 0 or 1")
    mu = float(mu)
    if not (mu > 0.0 and np.isfinite(mu)):
        raise ValueError("mu must be positive and finite")
    phi = _check_phi(phi)
    lp0 = -phi * math.log1p(mu / phi)
    return math.exp(lp0) if y == 0 else -math.expm1(lp0)


def marginal_mean(mu, phi):
    """E(y_j) = 1 - (phi/(phi+mu))**phi; vectorized in ``mu``."""
    phi = _check_phi(phi)
    mu = np.asarray(mu, dtype=float)
    out = -np.expm1(-phi * np.log1p(mu / phi))
    return float(out) if out.ndim == 0 else out


def marginal_var(mu, phi):
    """Var(y_j) = p(1-p) with p = marginal_mean(mu, phi)."""
    p = marginal_mean(mu, phi)
    return p * (1.0 - p)


def marginal_cov(mu_j: float, mu_k: float, phi: float) -> float:
    """Cov(y_j, y_k) under the shared random intercept.

    Equals ``q(mu_j + mu_k) - q(mu_j) q(mu_k)`` with ``q(m) = P(y = 0 at rate m)``;
    the shared frailty makes this nonnegative, and the evaluation below
    (exp * expm1 of a nonnegative exponent gap) preserves that in floating
    point up to a final clamp at zero.
    """
    phi = _check_phi(phi)
    for name, value in (("mu_j", mu_j), ("mu_k", mu_k)):
        if not (np.isfinite(value) and value > 0.0):
            raise ValueError(f"{name} must be positive and finite")
    log_q_j = -phi * math.log1p(mu_j / phi)
    log_q_k = -phi * math.log1p(mu_k / phi)
    log_q_jk = -phi * math.log1p((mu_j + mu_k) / phi)
    gap = log_q_jk - (log_q_j + log_q_k)  # >= 0 up to roundoff
    return max(math.exp(log_q_j + log_q_k) * math.expm1(gap), 0.0)


def marginal_corr(mu_j: float, mu_k: float, phi: float) -> float:
    """Intraclass correlation from the implemented moments."""
    cov = marginal_cov(mu_j, mu_k, phi)
    return cov / math.sqrt(marginal_var(mu_j, phi) * marginal_var(mu_k, phi))


def pmf_quadrature_oracle(y, mu, phi, *, abs_tol: float = 1e-12) -> float:
    """Joint pmf by adaptive quadrature of the gamma-frailty integral.

    Evaluates ``E_T[ exp(-T*c0) * prod_ones(1 - exp(-mu_j*T)) ]`` with
    ``T ~ Gamma(phi, rate=phi)`` and ``c0`` the summed rates of the failure
    positions, integrating in log(t) coordinates so the integrand is a
    smooth bump for any ``phi``.  Test oracle only; the closed form in
    :func:`joint_log_pmf` is the production path.
    """
    y = _as_binary_vector(y)
    mu = _as_mu_vector(mu, y.size)
    phi = _check_phi(phi)
    ones = y == 1
    base0 = float(mu[~ones].sum())
    mu_ones = mu[ones]
    lg = gammaln(phi)

    def log_integrand(v: float) -> float:
        s = math.exp(v)  # s = phi * t is Gamma(phi, 1)
        val = phi * v - s * (1.0 + base0 / phi) - lg
        for m in mu_ones:
            val += math.log(-math.expm1(-m * s / phi))
        return val

    s_lo = max(float(gamma_dist.ppf(1e-18, phi)), 1e-290)
    s_hi = float(gamma_dist.isf(1e-18, phi))
    v_lo, v_hi = math.log(s_lo) - 2.0, math.log(s_hi) + 2.0
    result = quad(
        lambda v: math.exp(log_integrand(v)),
        v_lo,
        v_hi,
        epsabs=abs_tol,
        epsrel=1e-11,
        limit=400,
        full_output=True,
    )
    if len(result) > 3:
        raise QuadratureError(f"quadrature did not converge: {result[3]}")
    value, abserr = result[0], result[1]
    if abserr > 1e-9:
        raise QuadratureError(f"quadrature error estimate too large: {abserr:.3e}")
    return float(value)


def enumerate_all_outcomes(mu, phi, *, max_size: int = 20):
    """All ``2**m`` outcomes and their probabilities, as ``(outcomes, probs)`` arrays.

    ``outcomes`` has shape ``(2**m, m)``; probabilities sum to one (used as
    the exhaustive oracle for normalization and moment checks).
    """
    mu = _as_mu_vector(mu)
    phi = _check_phi(phi)
    m = mu.size
    if m > max_size:
        raise ValueError(f"enumeration over 2**{m} outcomes refused (max_size={max_size})")
    outcomes = subset_bits(np.arange(2 ** m), m)
    probs = np.array([math.exp(joint_log_pmf(row, mu, phi)) for row in outcomes])
    return outcomes, probs
