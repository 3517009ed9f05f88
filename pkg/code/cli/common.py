"""
Steps shared by the data modes: load, fit the measurement and HLM layers,
score, match, and write the run files.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

from config import RunConfig
from matching import MatchResult, MatchSpec, full_match
from mepscore_types import Dataset, count_by_treatment
from models import EbPredictions, HlmFit, MeasurementModel, PsFit, build_sigma, fit_all, fit_all_with_tables, fit_propensity
from utils.file_utils import load_csem_tables, load_dataset
from utils.logging import get_logger
from utils.manifest import variance_source, write_run_files

logger = get_logger(__name__)


@dataclass
class ScoredData:
    dataset: Dataset
    scores: Dict[str, PsFit] = field(default_factory=dict)
    fits: Dict[str, HlmFit] = field(default_factory=dict)
    eb: Optional[EbPredictions] = None
    sigma: Optional[MeasurementModel] = None

    @property
    def n_treated(self) -> int:
        return count_by_treatment(self.dataset)[1]


def score_dataset(config: RunConfig, need_eb: bool = False) -> ScoredData:
    """Load the input and compute every requested propensity score kind."""
    dataset = load_dataset(config.input)
    kinds = config.kinds()
    data = ScoredData(dataset)

    if need_eb or any(k in ("rc", "ml") for k in kinds):
        if config.csem_dir:
            data.fits, data.eb, data.sigma = fit_all_with_tables(dataset, load_csem_tables(config.csem_dir))
        else:
            data.sigma = build_sigma(dataset)
            data.fits, data.eb = fit_all(dataset, data.sigma)

    for kind in kinds:
        data.scores[kind] = fit_propensity(kind, dataset, eb=data.eb, sigma=data.sigma)
    return data


def match_spec(config: RunConfig, n_treated: int) -> MatchSpec:
    return MatchSpec(
        caliper_logits=config.caliper,
        max_controls_per_treated=config.max_controls,
        max_treated_per_control=config.max_treated or max(n_treated, 1),
    )


def match_all(config: RunConfig, data: ScoredData) -> Dict[str, MatchResult]:
    spec = match_spec(config, data.n_treated)
    results = {}
    for kind, ps in data.scores.items():
        result = full_match(ps, data.dataset, spec)
        if not result.feasible:
            logger.warning("matching_infeasible", ps_kind=kind, caliper=spec.caliper_logits)
        results[kind] = result
    return results


def output_dir(config: RunConfig) -> Path:
    path = Path(config.output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def finish(config: RunConfig, decisions: Optional[Mapping[str, Any]] = None) -> None:
    merged: Dict[str, Any] = dict(variance_source(bool(config.csem_dir) and config.needs_input))
    merged.update(decisions or {})
    files = write_run_files(config.output_dir, config.as_dict(), config.mode, config.seed, merged)
    logger.info("run_files_written", directory=str(config.output_dir), files=sorted(files))
