"""
SVG figures for balance, estimator error and score distributions.

Figures are rendered with the Agg backend and a fixed SVG hash salt and no
date metadata, so the same inputs always give the same bytes.
"""

from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from diagnostics.balance import ClassRow  # noqa: E402
from diagnostics.summary import SummaryRow  # noqa: E402
from mepscore_types import PathLike  # noqa: E402
from utils.logging import get_logger  # noqa: E402

logger = get_logger(__name__)

_SVG_SALT = "mepscore"
SIZE_CLASS_ORDER = ("large", "moderate", "small")


def _save(fig, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with plt.rc_context({"svg.hashsalt": _SVG_SALT, "svg.fonttype": "none"}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    logger.debug("figure_written", path=str(path))
    return path


def _ordered_classes(present: Iterable[str]) -> List[str]:
    present = list(dict.fromkeys(present))
    known = [c for c in SIZE_CLASS_ORDER if c in present]
    return known + [c for c in present if c not in known]


def _grouped_bars(ax, groups: Sequence[str], series: Mapping[str, Sequence[float]]) -> None:
    width = 0.8 / max(len(series), 1)
    x = np.arange(len(groups))
    for k, (label, values) in enumerate(series.items()):
        ax.bar(x + (k - (len(series) - 1) / 2) * width, values, width, label=label)
    ax.set_xticks(x)
    ax.set_xticklabels(groups)
    ax.legend(fontsize=8)


def balance_bars(rows: Sequence[ClassRow], path: PathLike, families: Sequence[str] = ("X", "W")) -> Path:
    """Average |d_s| by size class and sample, one panel per variable family."""
    families = [f for f in families if any(r.family == f for r in rows)]
    fig, axes = plt.subplots(1, max(len(families), 1), figsize=(5 * max(len(families), 1), 4), squeeze=False)
    for ax, family in zip(axes[0], families):
        family_rows = [r for r in rows if r.family == family]
        classes = _ordered_classes(r.size_class for r in family_rows)
        samples = list(dict.fromkeys(r.sample for r in family_rows))
        lookup = {(r.sample, r.size_class): r.mean_abs_d for r in family_rows}
        series = {s: [lookup.get((s, c), np.nan) for c in classes] for s in samples}
        _grouped_bars(ax, classes, series)
        ax.set_title(f"Average |standardized difference| in {family}")
        ax.set_ylabel("|d_s|")
    fig.tight_layout()
    return _save(fig, path)


def rmse_bars(rows: Sequence[SummaryRow], path: PathLike, caliper: float) -> Path:
    """RMSE by size class: one panel per estimator, bars per PS kind."""
    wanted = [r for r in rows if np.isnan(r.caliper) or r.caliper == caliper]
    estimators = list(dict.fromkeys(r.estimator for r in wanted))
    fig, axes = plt.subplots(1, max(len(estimators), 1), figsize=(4 * max(len(estimators), 1), 4), squeeze=False)
    for ax, estimator in zip(axes[0], estimators):
        est_rows = [r for r in wanted if r.estimator == estimator]
        classes = _ordered_classes(r.size_class for r in est_rows)
        kinds = list(dict.fromkeys(r.ps_kind for r in est_rows))
        lookup = {(r.ps_kind, r.size_class): r.rmse for r in est_rows}
        series = {k or "none": [lookup.get((k, c), np.nan) for c in classes] for k in kinds}
        _grouped_bars(ax, classes, series)
        ax.set_title(estimator)
        ax.set_ylabel("RMSE")
    fig.tight_layout()
    return _save(fig, path)


def logit_histograms(
    logits: Mapping[str, np.ndarray], treatment: np.ndarray, path: PathLike, bins: int = 30
) -> Path:
    """Treated and control PS-logit histograms, one panel per PS kind."""
    treatment = np.asarray(treatment)
    kinds = list(logits)
    fig, axes = plt.subplots(1, max(len(kinds), 1), figsize=(4 * max(len(kinds), 1), 3.5), squeeze=False, sharey=True)
    finite_all = np.concatenate([np.asarray(v)[np.isfinite(v)] for v in logits.values()]) if kinds else np.zeros(1)
    edges = np.linspace(float(finite_all.min()), float(finite_all.max()) + 1e-9, bins + 1)
    for ax, kind in zip(axes[0], kinds):
        values = np.asarray(logits[kind])
        ax.hist(values[treatment == 1], bins=edges, alpha=0.6, label="treated")
        ax.hist(values[treatment == 0], bins=edges, alpha=0.6, label="control")
        ax.set_title(kind)
        ax.set_xlabel("PS logit")
        ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def write_study_figures(
    class_rows: Sequence[ClassRow],
    summary_rows: Sequence[SummaryRow],
    logits: Mapping[str, np.ndarray],
    treatment: np.ndarray,
    directory: PathLike,
    caliper: float,
) -> Dict[str, Path]:
    directory = Path(directory)
    return {
        "balance": balance_bars(class_rows, directory / "balance.svg"),
        "rmse": rmse_bars(summary_rows, directory / "rmse.svg", caliper),
        "ps_logits": logit_histograms(logits, treatment, directory / "ps_logits.svg"),
    }
