"""
Balance diagnostics, Monte Carlo summaries and figures.
"""

from .balance import (
    BalanceReport,
    BalanceRow,
    average_by_class,
    balance_overview,
    balance_report,
    pooled_sd,
    ps_distribution_summary,
    standardized_difference,
)
from .summary import EstimateRecord, McSummary, UnmatchedRecord, bias_rmse, summarize_replications

__all__ = [
    "BalanceReport",
    "BalanceRow",
    "EstimateRecord",
    "McSummary",
    "UnmatchedRecord",
    "average_by_class",
    "balance_overview",
    "balance_report",
    "bias_rmse",
    "pooled_sd",
    "ps_distribution_summary",
    "standardized_difference",
    "summarize_replications",
]
