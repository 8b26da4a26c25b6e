"""OOD scores and the two-tier score order.

The long-range score of a sample over a transform family is

    sum over t in family of [ loglik(identity) - loglik(t) ]

(higher means more in-distribution). The conditional correction pre-filters
samples whose raw identity log-likelihood falls below a cutoff fitted on the
training split; filtered samples form a tier that ranks strictly below every
passed sample and is ordered internally by raw log-likelihood, so detection
metrics stay well-defined without sentinel values.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import total_ordering

import numpy as np

from .errors import CacheCompletenessError, DomainError, ValidationError

LN2 = math.log(2.0)


class Tier(enum.IntEnum):
    FILTERED = 0
    PASSED = 1


@total_ordering
@dataclass(frozen=True)
class OodScore:
    tier: Tier
    value: float

    @property
    def sort_key(self) -> tuple[int, float]:
        return (int(self.tier), self.value)

    def __eq__(self, other):
        return isinstance(other, OodScore) and self.sort_key == other.sort_key

    def __lt__(self, other):
        return self.sort_key < other.sort_key

    def __hash__(self):
        return hash(self.sort_key)


def passed(value: float) -> OodScore:
    return OodScore(Tier.PASSED, float(value))


def filtered(identity_ll: float) -> OodScore:
    return OodScore(Tier.FILTERED, float(identity_ll))


CUTOFF_METHODS = ("mad3", "percentile")


@dataclass(frozen=True)
class Cutoff:
    method: str
    tau: float
    multiplier: float = 3.0      # mad3
    tail_mass: float = 0.005     # percentile

    def __post_init__(self):
        if self.method not in CUTOFF_METHODS:
            raise ValidationError(f"unknown cutoff method {self.method!r}")
        if not math.isfinite(self.tau):
            raise ValidationError("cutoff tau must be finite")


def fit_cutoff(train_lls, method: str = "mad3", tail_mass: float = 0.005) -> Cutoff:
    """Fit the low-likelihood cutoff on training-split log-likelihoods.

    mad3: median minus 3 times the raw median absolute deviation (no
    consistency constant). percentile: the linearly interpolated quantile at
    tail_mass (default 0.5% of training samples fall below tau).
    """
    lls = np.asarray(list(train_lls), dtype=np.float64)
    if lls.size < 2:
        raise ValidationError("need at least 2 training log-likelihoods")
    if method == "mad3":
        med = float(np.median(lls))
        mad = float(np.median(np.abs(lls - med)))
        return Cutoff("mad3", med - 3.0 * mad)
    if method == "percentile":
        if not 0.0 < tail_mass < 1.0:
            raise ValidationError("tail_mass must lie in (0, 1)")
        return Cutoff("percentile", float(np.quantile(lls, tail_mass)), tail_mass=tail_mass)
    raise ValidationError(f"unknown cutoff method {method!r}")


def lr_score(ll_map: dict[str, float], family) -> float:
    """Summed identity-vs-transform log-likelihood gap over the family."""
    if "identity" not in ll_map:
        raise CacheCompletenessError([("<sample>", "identity")])
    identity_ll = ll_map["identity"]
    missing = [tid for tid in family.transform_ids if tid not in ll_map]
    if missing:
        raise CacheCompletenessError([("<sample>", tid) for tid in missing])
    return float(sum(identity_ll - ll_map[tid] for tid in family.transform_ids))


def conditional_score(identity_ll: float, aggregated: float, cutoff: Cutoff) -> OodScore:
    """Filter below the cutoff (boundary value passes)."""
    if not (math.isfinite(identity_ll) and math.isfinite(aggregated)):
        raise ValidationError("scores must be finite")
    if identity_ll < cutoff.tau:
        return filtered(identity_ll)
    return passed(aggregated)


def ic_score(identity_ll_nats: float, complexity_bits: float) -> float:
    """Input Complexity score: negative base-2 log-likelihood minus the
    compressed length in bits. Lower means more in-distribution; eval
    negates it so every method ranks higher-is-ID."""
    if complexity_bits < 0:
        raise DomainError("complexity must be non-negative")
    return -(identity_ll_nats / LN2) - complexity_bits


def lrat_score(ll_foreground: float, ll_background: float) -> float:
    """Likelihood-ratio score: foreground minus background log-likelihood."""
    return ll_foreground - ll_background
