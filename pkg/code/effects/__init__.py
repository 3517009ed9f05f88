"""
Treatment-effect estimators targeting the effect on the treated.
"""

from .estimators import EffectEstimate, marginal_odds_difference, matched_difference, odds_weighting
from .pencomp import fit_penalized_spline, pencomp

__all__ = [
    "EffectEstimate",
    "fit_penalized_spline",
    "marginal_odds_difference",
    "matched_difference",
    "odds_weighting",
    "pencomp",
]
