"""Prediction gain, pseudo-counts and the exploration bonus built on them.

Everything here is a pure function of its arguments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

from pseudocount.errors import DomainError, NotLearningPositiveError


@dataclass(frozen=True)
class ProbabilityPair:
    """Model probability of a state before (``rho``) and after (``rho_prime``)
    one more training step on that state."""

    rho: float
    rho_prime: float

    def __post_init__(self):
        if not 0.0 <= self.rho < 1.0:
            raise DomainError(f"rho must lie in [0, 1), got {self.rho!r}", field="rho")
        if not 0.0 < self.rho_prime <= 1.0:
            raise DomainError(
                f"rho_prime must lie in (0, 1], got {self.rho_prime!r}", field="rho_prime"
            )


@dataclass(frozen=True)
class PGOutcome:
    """Prediction gain in nats, tagged with the model update count ``step_index``.

    ``log_rho`` and ``log_rho_prime`` are the two log-probabilities the gain
    was computed from, when the producing model reports them.
    """

    pg: float
    step_index: int
    log_rho: Optional[float] = None
    log_rho_prime: Optional[float] = None


@dataclass(frozen=True)
class BonusConfig:
    c: float = 0.1
    decay_exponent: float = -0.5
    reward_clip: Tuple[float, float] = (-1.0, 1.0)
    subsample_fraction: float = 1.0

    def __post_init__(self):
        if not self.c >= 0.0:
            raise DomainError(f"c must be nonnegative, got {self.c!r}", field="c")
        lo, hi = self.reward_clip
        if not lo < hi:
            raise DomainError(f"empty reward clip interval {self.reward_clip!r}", field="reward_clip")
        object.__setattr__(self, "reward_clip", (float(lo), float(hi)))
        if not 0.0 < self.subsample_fraction <= 1.0:
            raise DomainError(
                f"subsample_fraction must lie in (0, 1], got {self.subsample_fraction!r}",
                field="subsample_fraction",
            )


@dataclass(frozen=True)
class PseudoCountResult:
    pc: float
    n_hat: float


def prediction_gain(p: ProbabilityPair) -> float:
    """Return ``log(rho_prime) - log(rho)``."""
    if p.rho <= 0.0:
        raise DomainError("prediction gain undefined for rho <= 0", field="rho")
    if p.rho_prime <= 0.0:
        raise DomainError("prediction gain undefined for rho_prime <= 0", field="rho_prime")
    return math.log(p.rho_prime) - math.log(p.rho)


def exact_pseudo_count(p: ProbabilityPair) -> PseudoCountResult:
    """Pseudo-count and pseudo-count total implied by a probability pair.

    Requires ``rho_prime > rho``. For the empirical count model this recovers
    the visit count. The difference ``rho_prime - rho`` is ill-conditioned
    for large tables, so a pair of :class:`fractions.Fraction` values (as
    :meth:`EmpiricalCountModel.probability_pair` returns) is computed exactly
    and only rounded at the end.
    """
    if not p.rho_prime > p.rho:
        raise NotLearningPositiveError(float(p.rho), float(p.rho_prime))
    gap = p.rho_prime - p.rho
    pc = p.rho * (1 - p.rho_prime) / gap
    n_hat = pc / p.rho if p.rho > 0 else (1 - p.rho_prime) / gap
    return PseudoCountResult(pc=float(pc), n_hat=float(n_hat))


def approx_pseudo_count(pg: float) -> float:
    """``1 / (exp(pg) - 1)``; infinite at ``pg == 0``."""
    if pg < 0.0 or math.isnan(pg):
        raise DomainError(f"pg must be nonnegative, got {pg!r}", field="pg")
    if pg == 0.0:
        return math.inf
    return 1.0 / math.expm1(pg)


def decayed_pg(pg: float, n: int, cfg: BonusConfig) -> float:
    """Thresholded prediction gain scaled by ``c * n**decay_exponent``."""
    if n < 1:
        raise DomainError(f"step count must be >= 1, got {n!r}", field="n")
    gain = max(pg, 0.0)
    # c == 0 must win over an infinite gain from a zero-probability state
    if gain == 0.0 or cfg.c == 0.0:
        return 0.0
    return cfg.c * float(n) ** cfg.decay_exponent * gain


def exploration_bonus(pg: float, n: int, cfg: BonusConfig) -> float:
    """Reward bonus ``PC**-1/2`` with ``PC = 1 / expm1(decayed_pg)``.

    Evaluated as ``sqrt(expm1(decayed_pg))`` so no infinite pseudo-count is
    formed when the gain is zero.
    """
    return math.sqrt(math.expm1(decayed_pg(pg, n, cfg)))


def combined_reward(r_ext: float, bonus: float, cfg: BonusConfig) -> float:
    lo, hi = cfg.reward_clip
    return min(max(r_ext + bonus, lo), hi)
