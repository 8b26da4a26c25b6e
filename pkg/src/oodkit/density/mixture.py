"""Discretized mixture of logistics over integer subpixel values.

The pmf of a component with location mu and scale s at value x in [0, 255] is
F((x + 0.5 - mu)/s) - F((x - 0.5 - mu)/s) with F the logistic CDF; the x = 0
bin uses 0 as its lower limit and the x = 255 bin uses 1 as its upper limit,
so the 256 bins always sum to exactly 1. Everything is evaluated in log space:

    log(F(a) - F(b)) = log F(a) + log F(-b) + log(1 - exp(b - a))

which stays finite for any finite arguments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logsumexp

from ..errors import DomainError, ValidationError

LOG_SCALE_FLOOR = -7.0


@dataclass(frozen=True)
class MixtureParams:
    """K-component parameters in subpixel units."""

    logits: np.ndarray
    locations: np.ndarray
    log_scales: np.ndarray

    def __post_init__(self):
        lg = np.asarray(self.logits, dtype=np.float64)
        mu = np.asarray(self.locations, dtype=np.float64)
        ls = np.asarray(self.log_scales, dtype=np.float64)
        if not (lg.shape == mu.shape == ls.shape) or lg.ndim != 1 or lg.size < 1:
            raise ValidationError("logits, locations, log_scales must be equal-length 1-d arrays")
        if not (np.isfinite(lg).all() and np.isfinite(mu).all() and np.isfinite(ls).all()):
            raise ValidationError("mixture parameters must be finite")
        object.__setattr__(self, "logits", lg)
        object.__setattr__(self, "locations", mu)
        object.__setattr__(self, "log_scales", np.maximum(ls, LOG_SCALE_FLOOR))

    @property
    def num_components(self) -> int:
        return self.logits.size


def _softplus(z):
    return np.logaddexp(0.0, z)


def _log1mexp(z):
    """log(1 - exp(z)) for z < 0, switching forms at -log 2 for accuracy."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    hi = z > -np.log(2.0)
    out[hi] = np.log(-np.expm1(z[hi]))
    out[~hi] = np.log1p(-np.exp(z[~hi]))
    return out


def component_log_pmf(x, locations, log_scales):
    """Per-component log bin mass. x: (N,), params broadcastable to (N, K)."""
    x = np.asarray(x, dtype=np.float64)[:, None]
    s = np.exp(np.maximum(log_scales, LOG_SCALE_FLOOR))
    a = (x + 0.5 - locations) / s
    b = (x - 0.5 - locations) / s
    lp = -_softplus(-a) - _softplus(b) + _log1mexp(b - a)
    is0 = (x == 0.0)[:, 0]
    is255 = (x == 255.0)[:, 0]
    if is0.any():
        lp[is0] = -_softplus(-a[is0])
    if is255.any():
        lp[is255] = -_softplus(b[is255])
    return lp


def mixture_log_pmf(x, logits, locations, log_scales):
    """log pmf of the mixture. x: (N,), params (N, K) or (K,)."""
    logits = np.atleast_2d(logits)
    locations = np.atleast_2d(locations)
    log_scales = np.atleast_2d(log_scales)
    lp = component_log_pmf(x, locations, log_scales)
    log_w = logits - logsumexp(logits, axis=1, keepdims=True)
    return logsumexp(log_w + lp, axis=1)


def component_grad_terms(x, locations, log_scales):
    """(d log pmf_k / d mu_k, d log pmf_k / d log s_k), both (N, K).

    All terms are bounded combinations of sigmoids, so the gradients stay
    finite even deep in the tails where the pmf itself underflows.
    """
    x = np.asarray(x, dtype=np.float64)[:, None]
    s = np.exp(np.maximum(log_scales, LOG_SCALE_FLOOR))
    a = (x + 0.5 - locations) / s
    b = (x - 0.5 - locations) / s
    sig_na = expit(-a)
    sig_b = expit(b)
    z = b - a  # = -1/s < 0
    with np.errstate(over="ignore"):
        zterm = z / np.expm1(-z)
    d_mu = (sig_b - sig_na) / s
    d_ls = -a * sig_na + b * sig_b + zterm
    is0 = (x == 0.0)[:, 0]
    is255 = (x == 255.0)[:, 0]
    if is0.any():
        d_mu[is0] = np.broadcast_to(-sig_na / s, d_mu.shape)[is0]
        d_ls[is0] = (-a * sig_na)[is0]
    if is255.any():
        d_mu[is255] = np.broadcast_to(sig_b / s, d_mu.shape)[is255]
        d_ls[is255] = (b * sig_b)[is255]
    return d_mu, d_ls


def discretized_logistic_mixture_logpmf(params: MixtureParams, x) -> float | np.ndarray:
    """Natural-log probability of subpixel value(s) x under the mixture.

    x must be integer-valued and within [0, 255]; scalar in, scalar out.
    """
    arr = np.asarray(x)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(arr == np.round(arr)):
            raise DomainError("subpixel values must be integers")
    if arr.min() < 0 or arr.max() > 255:
        raise DomainError(f"subpixel values must lie in [0, 255], got range "
                          f"[{arr.min()}, {arr.max()}]")
    out = mixture_log_pmf(arr.astype(np.float64), params.logits, params.locations,
                          params.log_scales)
    return float(out[0]) if scalar else out
