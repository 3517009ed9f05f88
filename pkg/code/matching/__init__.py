"""
Optimal full matching on propensity-score logits.
"""

from .flow import full_match
from .results import (
    MatchedSet,
    MatchResult,
    MatchSpec,
    effective_sample_size,
    match_weights,
    summarize_match,
)

__all__ = [
    "MatchedSet",
    "MatchResult",
    "MatchSpec",
    "effective_sample_size",
    "full_match",
    "match_weights",
    "summarize_match",
]
