"""
Monte Carlo replication engine.

Each replication draws a population, fits the HLM with the true constant
CSEM, scores every school with each propensity-score kind, matches at every
caliper and records estimates, unmatched percentages and balance. Replication
``r`` draws from its own stream seeded by ``(master_seed, r)``, so results do
not depend on execution order or worker count. Results are reduced in
replication order.
"""

import multiprocessing as mp
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from diagnostics.balance import ClassRow, average_by_class, balance_report
from diagnostics.summary import EstimateRecord, McSummary, UnmatchedRecord, summarize_replications
from effects import marginal_odds_difference, matched_difference, odds_weighting, pencomp
from matching import MatchSpec, full_match, match_weights
from models import build_sigma, fit_all, fit_propensity
from utils.exceptions import MepscoreError, NumericalError
from utils.logging import get_logger

from .calibration import Calibration, calibrate_effect
from .population import generate_population, mask_cells
from .settings import SimConfig

logger = get_logger(__name__)

MAX_FAILURE_FRACTION = 0.01
# Stream index reserved for effect calibration; replication indices stay below it
CALIBRATION_STREAM = 2**32 - 1
NO_CALIPER = float("nan")


@dataclass(frozen=True)
class ReplicationRecord:
    """Everything one replication contributes to the study."""

    index: int
    seed: Tuple[int, int]
    true_ett: float
    treated_fraction: float
    estimates: Tuple[EstimateRecord, ...]
    unmatched: Tuple[UnmatchedRecord, ...]
    balance: Tuple[ClassRow, ...]
    tau_sq: Tuple[float, float]
    logits: Dict[str, np.ndarray] = field(default_factory=dict, compare=False)
    treatment: Optional[np.ndarray] = field(default=None, compare=False)

    @property
    def match_failures(self) -> Tuple[Tuple[str, float], ...]:
        """(ps kind, caliper) pairs whose matching produced no set."""
        return tuple((u.ps_kind, u.caliper) for u in self.unmatched if u.no_sets)

    def logit_variance(self, kind: str, group: Optional[int] = None) -> float:
        values = self.logits[kind]
        if group is not None and self.treatment is not None:
            values = values[self.treatment == group]
        return float(np.var(values, ddof=1))


@dataclass(frozen=True)
class StudyResult:
    config: SimConfig
    records: Tuple[ReplicationRecord, ...]
    summary: McSummary
    balance: Tuple[ClassRow, ...]
    failures: Tuple[Tuple[int, str], ...] = ()
    calibration: Optional[Calibration] = None

    @property
    def n_failed(self) -> int:
        return len(self.failures)


def replication_seed(config: SimConfig, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([config.master_seed, index])


def run_replication(config: SimConfig, index: int) -> ReplicationRecord:
    """Run replication ``index`` of a calibrated study."""
    if config.effect_amplitude is None:
        raise NumericalError("run_replication needs a calibrated effect amplitude")
    rng = np.random.default_rng(replication_seed(config, index))
    population = generate_population(config, rng)
    dataset = population.dataset
    if config.mask_fraction > 0:
        dataset = mask_cells(dataset, config.mask_fraction, rng)

    treatment = dataset.treatment_vector().astype(int)
    n_treated = int(treatment.sum())
    classes = config.size_classes()
    keys = config.cell_keys

    sigma = build_sigma(dataset)
    fits, eb = fit_all(dataset, sigma)
    fit = next(iter(fits.values()))

    kinds = list(config.ps_kinds)
    if config.mask_fraction > 0 and "naive" in kinds:
        kinds.remove("naive")

    estimates: List[EstimateRecord] = []
    unmatched: List[UnmatchedRecord] = []
    samples: Dict[str, np.ndarray] = {}
    logits: Dict[str, np.ndarray] = {}

    def record(kind: str, name: str, caliper: float, key, point: float) -> None:
        estimates.append(EstimateRecord(index, kind, name, caliper, key[0], classes[key], point))

    for kind in kinds:
        ps = fit_propensity(kind, dataset, eb=eb, sigma=sigma)
        logits[kind] = np.asarray(ps.logit)
        for caliper in config.calipers:
            spec = MatchSpec(
                caliper_logits=caliper,
                max_controls_per_treated=config.max_controls_per_treated,
                max_treated_per_control=config.max_treated_per_control or max(n_treated, 1),
            )
            result = full_match(ps, dataset, spec)
            unmatched.append(
                UnmatchedRecord(
                    index, kind, caliper, 100.0 * result.unmatched_fraction(n_treated), no_sets=not result.sets
                )
            )
            if caliper == config.chart_caliper:
                samples[f"matched_{kind}"] = match_weights(result, dataset.school_ids)
            if not result.sets:
                logger.warning("replication_no_matched_sets", replication=index, ps_kind=kind, caliper=caliper)
                continue
            for key in keys:
                record(kind, "matching", caliper, key, matched_difference(result, dataset, key, kind).point)

        for key in keys:
            record(kind, "weighting", NO_CALIPER, key, odds_weighting(ps, dataset, key).point)
            record(
                kind,
                "weighting_unnormalized",
                NO_CALIPER,
                key,
                odds_weighting(ps, dataset, key, normalized=False).point,
            )
            record(
                kind,
                "pencomp",
                NO_CALIPER,
                key,
                pencomp(ps, dataset, key, max_knots=config.pencomp_max_knots).point,
            )

    for key in keys:
        record("none", "marginal_odds", NO_CALIPER, key, marginal_odds_difference(dataset, key).point)

    observed, _ = dataset.obtained_matrix(keys)
    report = balance_report(
        {"X": population.truth.true_scores, "W": observed, "Xhat": eb.matrix(keys)},
        treatment,
        samples,
        keys,
    )

    return ReplicationRecord(
        index=index,
        seed=(config.master_seed, index),
        true_ett=population.truth.treated_effect(treatment),
        treated_fraction=n_treated / len(treatment),
        estimates=tuple(estimates),
        unmatched=tuple(unmatched),
        balance=tuple(average_by_class(report.rows, classes)),
        tau_sq=(fit.tau1_sq, fit.tau2_sq),
        logits=logits,
        treatment=treatment,
    )


def _guarded_replication(config: SimConfig, index: int) -> Tuple[int, Optional[ReplicationRecord], str]:
    try:
        return index, run_replication(config, index), ""
    except (MepscoreError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        return index, None, f"{type(exc).__name__}: {exc}"


def _run_all(config: SimConfig, workers: int) -> List[Tuple[int, Optional[ReplicationRecord], str]]:
    tasks = [(config, r) for r in range(config.n_replications)]
    if workers <= 1:
        return [_guarded_replication(*task) for task in tasks]
    with mp.Pool(processes=workers) as pool:
        return pool.starmap(_guarded_replication, tasks)


def average_balance(records: Sequence[ReplicationRecord]) -> List[ClassRow]:
    """Mean of the per-replication class averages, in order of first appearance."""
    grouped: Dict[Tuple[str, str, str], List[float]] = {}
    for rec in records:
        for row in rec.balance:
            grouped.setdefault((row.sample, row.family, row.size_class), []).append(row.mean_abs_d)
    return [ClassRow(s, f, c, float(np.mean(v))) for (s, f, c), v in grouped.items()]


def calibrated(config: SimConfig) -> Tuple[SimConfig, Optional[Calibration]]:
    """Return the config with an effect amplitude, calibrating when none is set."""
    if config.effect_amplitude is not None:
        return config, None
    calibration = calibrate_effect(config, np.random.SeedSequence([config.master_seed, CALIBRATION_STREAM]))
    return config.with_amplitude(calibration.amplitude), calibration


def run_study(config: SimConfig, workers: int = 1) -> StudyResult:
    """
    Run every replication and summarize them.

    Raises:
        NumericalError: More than 1% of the replications failed
    """
    config, calibration = calibrated(config)
    logger.info(
        "study_started",
        replications=config.n_replications,
        design=config.size_design,
        workers=workers,
        amplitude=round(config.effect_amplitude, 6),
    )

    outcomes = _run_all(config, workers)
    records = tuple(rec for _, rec, _ in outcomes if rec is not None)
    failures = tuple((index, message) for index, rec, message in outcomes if rec is None)
    for index, message in failures:
        logger.warning("replication_failed", replication=index, error=message)
    if len(failures) > MAX_FAILURE_FRACTION * config.n_replications:
        raise NumericalError(
            f"{len(failures)} of {config.n_replications} replications failed "
            f"(first: replication {failures[0][0]}: {failures[0][1]})"
        )

    summary = summarize_replications(
        (e for rec in records for e in rec.estimates),
        (u for rec in records for u in rec.unmatched),
        true_ett=config.target_ett,
        n_failed=len(failures),
    )
    if summary.n_no_sets:
        logger.warning("study_matching_without_sets", count=summary.n_no_sets)
    logger.info(
        "study_completed", replications=len(records), failed=len(failures), no_matched_sets=summary.n_no_sets
    )
    return StudyResult(
        config=config,
        records=records,
        summary=summary,
        balance=tuple(average_balance(records)),
        failures=failures,
        calibration=calibration,
    )
