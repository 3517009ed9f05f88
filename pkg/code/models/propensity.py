"""
Propensity score estimators: naive, regression calibration and ML.

All three share one logistic form in (score block, covariate block); they
differ in which scores enter and how the fitted coefficients are turned into
per-school probabilities:

- naive: obtained averages W in both the fit and the scoring
- rc: empirical-Bayes predictions X-hat in both the fit and the scoring
- ml: fit on W over complete schools, then score every school with the
  normal-mixture marginal at X-hat and its error variance
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit, logit

from mepscore_types import CellKey, Dataset, PsKind, format_cell_key
from models.hlm import EbPredictions
from models.logistic import ETA_LIMIT, LogisticFit, fit_logistic
from models.measure import MeasurementModel
from models.mixture import LOGISTIC_MIXTURE, MixtureConstants, mixture_probability
from utils.exceptions import DataError
from utils.logging import get_logger

logger = get_logger(__name__)

# Probabilities are kept this far from 0 and 1 so every logit is finite
_PROBABILITY_FLOOR = 1e-15


@dataclass(frozen=True)
class FitInfo:
    deviance: float
    iterations: int
    converged: bool
    separation: bool
    n_fit: int


@dataclass(frozen=True)
class PsFit:
    """Coefficients and per-school scores of one propensity model."""

    kind: PsKind
    beta0: float
    beta_w: Tuple[float, ...]
    beta_z: Tuple[float, ...]
    cell_keys: Tuple[CellKey, ...]
    covariate_names: Tuple[str, ...]
    school_ids: Tuple[str, ...]
    probability: np.ndarray
    logit: np.ndarray
    fit_info: FitInfo
    _index: Dict[str, int] = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        for name in ("probability", "logit"):
            values = np.array(getattr(self, name), dtype=float, copy=True)
            values.setflags(write=False)
            object.__setattr__(self, name, values)
        object.__setattr__(self, "_index", {sid: i for i, sid in enumerate(self.school_ids)})

    def score(self, school_id: str) -> float:
        return float(self.probability[self._index[school_id]])

    def logit_of(self, school_id: str) -> float:
        return float(self.logit[self._index[school_id]])

    def coefficients(self) -> Dict[str, object]:
        return {
            "kind": self.kind,
            "beta0": float(self.beta0),
            "beta_w": {format_cell_key(k): float(b) for k, b in zip(self.cell_keys, self.beta_w)},
            "beta_z": {n: float(b) for n, b in zip(self.covariate_names, self.beta_z)},
            "deviance": float(self.fit_info.deviance),
            "iterations": int(self.fit_info.iterations),
            "converged": bool(self.fit_info.converged),
            "separation": bool(self.fit_info.separation),
            "n_fit": int(self.fit_info.n_fit),
        }


def _model_keys(dataset: Dataset, keys: Optional[Sequence[CellKey]]) -> Tuple[CellKey, ...]:
    keys = tuple(dataset.cell_keys if keys is None else keys)
    unknown = [k for k in keys if k not in dataset.cell_keys]
    if unknown:
        raise DataError(f"unknown model cells: {', '.join(format_cell_key(k) for k in unknown)}")
    return keys


def _design(scores: np.ndarray, covariates: np.ndarray) -> np.ndarray:
    return np.column_stack([np.ones(scores.shape[0]), scores, covariates])


def _column_names(keys: Sequence[CellKey], covariate_names: Sequence[str]) -> List[str]:
    return ["intercept"] + [format_cell_key(k) for k in keys] + list(covariate_names)


def _incomplete_schools(dataset: Dataset, keys: Sequence[CellKey]) -> List[str]:
    _, observed = dataset.obtained_matrix(keys)
    return [dataset.records[i].school_id for i in np.flatnonzero(~observed.all(axis=1))]


def _bounded_logit(probability: np.ndarray) -> np.ndarray:
    return logit(np.clip(probability, _PROBABILITY_FLOOR, 1.0 - _PROBABILITY_FLOOR))


def _build_fit(
    kind: PsKind,
    fit: LogisticFit,
    dataset: Dataset,
    keys: Sequence[CellKey],
    probability: np.ndarray,
    logits: np.ndarray,
    n_fit: int,
) -> PsFit:
    n_cells = len(keys)
    coefficients = fit.coefficients
    result = PsFit(
        kind=kind,
        beta0=coefficients[0],
        beta_w=tuple(coefficients[1 : 1 + n_cells]),
        beta_z=tuple(coefficients[1 + n_cells :]),
        cell_keys=tuple(keys),
        covariate_names=tuple(dataset.covariate_names),
        school_ids=dataset.school_ids,
        probability=probability,
        logit=logits,
        fit_info=FitInfo(fit.deviance, fit.iterations, fit.converged, fit.separation, n_fit),
    )
    logger.info(
        "ps_fit_completed",
        kind=kind,
        n_fit=n_fit,
        converged=fit.converged,
        separation=fit.separation,
        logit_sd=round(float(np.std(logits)), 6),
    )
    return result


def _logistic_scores(fit: LogisticFit, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    eta = np.clip(fit.linear_predictor(x), -ETA_LIMIT, ETA_LIMIT)
    return expit(eta), eta


def ps_naive(dataset: Dataset, keys: Optional[Sequence[CellKey]] = None) -> PsFit:
    """
    Logistic propensity model on obtained averages and covariates.

    Raises:
        DataError: Any school has a withheld or absent model cell
    """
    keys = _model_keys(dataset, keys)
    incomplete = _incomplete_schools(dataset, keys)
    if incomplete:
        shown = ", ".join(incomplete[:20])
        more = f" (+{len(incomplete) - 20} more)" if len(incomplete) > 20 else ""
        raise DataError(
            f"naive propensity scores need every model cell observed; withheld at: {shown}{more}"
        )

    obtained, _ = dataset.obtained_matrix(keys)
    x = _design(obtained, dataset.covariate_matrix())
    fit = fit_logistic(x, dataset.treatment_vector(), _column_names(keys, dataset.covariate_names))
    probability, logits = _logistic_scores(fit, x)
    return _build_fit("naive", fit, dataset, keys, probability, logits, len(dataset))


def ps_rc(
    dataset: Dataset, eb: EbPredictions, keys: Optional[Sequence[CellKey]] = None
) -> PsFit:
    """Regression calibration: the same logistic model with X-hat in place of W."""
    keys = _model_keys(dataset, keys)
    xhat = eb.matrix(keys)
    if not np.all(np.isfinite(xhat)):
        raise DataError("empirical-Bayes predictions are missing for some model cells")

    x = _design(xhat, dataset.covariate_matrix())
    fit = fit_logistic(x, dataset.treatment_vector(), _column_names(keys, dataset.covariate_names))
    probability, logits = _logistic_scores(fit, x)
    return _build_fit("rc", fit, dataset, keys, probability, logits, len(dataset))


def ml_marginal_ps(
    beta0: float,
    beta_w: np.ndarray,
    beta_z: np.ndarray,
    xhat: np.ndarray,
    variances: np.ndarray,
    z: np.ndarray,
    constants: MixtureConstants = LOGISTIC_MIXTURE,
) -> np.ndarray:
    """
    Marginal treatment probability for one school or a block of schools.

    The linear predictor is evaluated at ``xhat`` and its variance is
    sum_k beta_w[k]^2 * variances[k] (diagonal error covariance). A NaN
    variance is allowed only where the corresponding coefficient is zero.

    Raises:
        DataError: A cell with a nonzero coefficient has no variance
    """
    beta_w = np.asarray(beta_w, dtype=float)
    beta_z = np.asarray(beta_z, dtype=float)
    xhat = np.atleast_2d(np.asarray(xhat, dtype=float))
    variances = np.atleast_2d(np.asarray(variances, dtype=float))
    z = np.asarray(z, dtype=float).reshape(xhat.shape[0], beta_z.size)

    lacking = np.isnan(variances) & (beta_w != 0)[None, :]
    if lacking.any():
        raise DataError(f"missing error variance for {int(lacking.sum())} cell(s) with nonzero coefficient")

    eta = beta0 + xhat @ beta_w + z @ beta_z
    spread = np.nan_to_num(variances, nan=0.0) @ (beta_w**2)
    return np.asarray(mixture_probability(eta, spread, constants))


def ps_ml(
    dataset: Dataset,
    eb: EbPredictions,
    sigma: MeasurementModel,
    keys: Optional[Sequence[CellKey]] = None,
) -> PsFit:
    """
    ML propensity scores for every school.

    Coefficients come from the logistic fit of T on (W, Z) over schools with
    every model cell observed; each school is then scored through the mixture
    at its X-hat. Absent cells (no test takers) carry no error variance.

    Raises:
        DataError: No complete schools of one class, or a sized cell has no
            error variance
    """
    keys = _model_keys(dataset, keys)
    obtained, observed = dataset.obtained_matrix(keys)
    complete = observed.all(axis=1)
    if not complete.any():
        raise DataError("ML propensity scores need at least one school with every model cell observed")

    covariates = dataset.covariate_matrix()
    treatment = dataset.treatment_vector()
    x = _design(obtained[complete], covariates[complete])
    fit = fit_logistic(x, treatment[complete], _column_names(keys, dataset.covariate_names))

    n_cells = len(keys)
    coefficients = np.asarray(fit.coefficients)
    beta_w = coefficients[1 : 1 + n_cells]
    beta_z = coefficients[1 + n_cells :]

    xhat = eb.matrix(keys)
    if not np.all(np.isfinite(xhat)):
        raise DataError("empirical-Bayes predictions are missing for some model cells")
    variances = np.array(sigma.matrix(keys), copy=True)
    absent = np.isnan(dataset.size_matrix(keys))
    variances[absent] = 0.0

    lacking = np.isnan(variances)
    if lacking.any():
        rows, cols = np.nonzero(lacking)
        cells = [f"{dataset.records[r].school_id}/{format_cell_key(keys[c])}" for r, c in zip(rows[:10], cols[:10])]
        raise DataError(f"missing error variance for ML scoring: {', '.join(cells)}")

    probability = ml_marginal_ps(fit.coefficients[0], beta_w, beta_z, xhat, variances, covariates)
    probability = np.clip(probability, _PROBABILITY_FLOOR, 1.0 - _PROBABILITY_FLOOR)
    return _build_fit(
        "ml", fit, dataset, keys, probability, _bounded_logit(probability), int(complete.sum())
    )


def fit_propensity(
    kind: str,
    dataset: Dataset,
    eb: Optional[EbPredictions] = None,
    sigma: Optional[MeasurementModel] = None,
    keys: Optional[Sequence[CellKey]] = None,
) -> PsFit:
    """Dispatch by estimator name."""
    if kind == "naive":
        return ps_naive(dataset, keys)
    if kind in ("rc", "ml") and eb is None:
        raise DataError(f"{kind} propensity scores need empirical-Bayes predictions")
    if kind == "rc":
        return ps_rc(dataset, eb, keys)
    if kind == "ml":
        if sigma is None:
            raise DataError("ml propensity scores need a measurement model")
        return ps_ml(dataset, eb, sigma, keys)
    raise DataError(f"unknown propensity score kind: {kind}")
