"""Count-based exploration with density-model pseudo-counts."""

from pseudocount.bonus import (
    BonusConfig,
    PGOutcome,
    ProbabilityPair,
    PseudoCountResult,
    approx_pseudo_count,
    combined_reward,
    decayed_pg,
    exact_pseudo_count,
    exploration_bonus,
    prediction_gain,
)
from pseudocount.density import (
    DensityModel,
    EmpiricalCountModel,
    QuantizedFrame,
    preprocess,
)

__version__ = "0.1.0"

__all__ = [
    "BonusConfig",
    "DensityModel",
    "EmpiricalCountModel",
    "PGOutcome",
    "ProbabilityPair",
    "PseudoCountResult",
    "QuantizedFrame",
    "approx_pseudo_count",
    "combined_reward",
    "decayed_pg",
    "exact_pseudo_count",
    "exploration_bonus",
    "prediction_gain",
    "preprocess",
]
