"""
Two-level hierarchical model for subgroup average scores.

For one assessment, the obtained average of subgroup k at school i is

    W_ik = gamma0 + Z_i gamma_z + delta_c_i + delta_s_ik + eps_ik

with school effects delta_c ~ N(0, tau1_sq), subgroup-within-school effects
delta_s ~ N(0, tau2_sq) and known error variances Var(eps_ik) from a
MeasurementModel. Variance components are fitted by restricted maximum
likelihood with gamma profiled out by generalized least squares. The
per-school covariance tau1_sq * J + diag(tau2_sq + d_k) is handled through
its rank-one inverse, so every evaluation is a handful of bincount sums.

Withheld cells never enter the likelihood but still receive empirical-Bayes
predictions from the fixed effects plus the predicted school effect.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from scipy.optimize import minimize

from mepscore_types import CellKey, Dataset
from models.measure import CsemTable, MeasurementModel, build_sigma, merge_sigma, sigma_from_tables
from utils.exceptions import DataError, NumericalError
from utils.logging import get_logger

logger = get_logger(__name__)

# Optimizer settings for the log-variance search
REML_FATOL = 1e-8
REML_XATOL = 1e-7
REML_MAX_ITER = 500

# Relative pivot size below which a design column counts as dependent
_RANK_TOLERANCE = 1e-10

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class HlmFit:
    """Fixed effects, variance components and optimizer status for one assessment."""

    assessment_key: str
    gamma0: float
    gamma_z: Tuple[float, ...]
    tau1_sq: float
    tau2_sq: float
    objective: float
    converged: bool
    iterations: int
    covariate_names: Tuple[str, ...] = ()
    n_schools: int = 0
    n_cells: int = 0

    @property
    def tau1(self) -> float:
        return float(np.sqrt(self.tau1_sq))

    @property
    def tau2(self) -> float:
        return float(np.sqrt(self.tau2_sq))

    def fixed_mean(self, covariates: np.ndarray) -> np.ndarray:
        """gamma0 + Z gamma_z for each row of ``covariates``."""
        covariates = np.asarray(covariates, dtype=float)
        if covariates.ndim == 1:
            covariates = covariates[None, :]
        return self.gamma0 + covariates @ np.asarray(self.gamma_z, dtype=float)

    def as_dict(self) -> Dict[str, object]:
        return {
            "assessment": self.assessment_key,
            "gamma0": float(self.gamma0),
            "gamma_z": {n: float(g) for n, g in zip(self.covariate_names, self.gamma_z)},
            "tau1_sq": float(self.tau1_sq),
            "tau2_sq": float(self.tau2_sq),
            "objective": float(self.objective),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "n_schools": self.n_schools,
            "n_cells": self.n_cells,
        }


@dataclass(frozen=True)
class EbPredictions:
    """
    Shrinkage predictions of subgroup true scores.

    ``xhat`` and ``cond_var`` are laid out (schools x cell_keys) in dataset
    order; ``school_effects`` holds the predicted school intercept for each
    assessment.
    """

    school_ids: Tuple[str, ...]
    cell_keys: Tuple[CellKey, ...]
    xhat: np.ndarray
    cond_var: np.ndarray
    school_effects: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name in ("xhat", "cond_var"):
            values = np.array(getattr(self, name), dtype=float, copy=True)
            values.setflags(write=False)
            object.__setattr__(self, name, values)

    def matrix(self, keys: Optional[Sequence[CellKey]] = None) -> np.ndarray:
        if keys is None:
            return self.xhat
        return self.xhat[:, [self.cell_keys.index(k) for k in keys]]

    def value(self, school_id: str, key: CellKey) -> float:
        return float(self.xhat[self.school_ids.index(school_id), self.cell_keys.index(key)])


@dataclass
class _Design:
    """Observed cells of one assessment, flattened for vectorized sums."""

    school_rows: np.ndarray  # dataset row of each included school
    x: np.ndarray  # (schools, 1 + p) design rows
    owner: np.ndarray  # included-school index of each observed cell
    y: np.ndarray
    d: np.ndarray
    names: Tuple[str, ...]


def _assessment_columns(dataset: Dataset, assessment: str) -> List[int]:
    columns = [j for j, key in enumerate(dataset.cell_keys) if key[1] == assessment]
    if not columns:
        raise DataError(f"unknown assessment: {assessment}")
    return columns


def _build_design(dataset: Dataset, sigma: MeasurementModel, assessment: str) -> _Design:
    columns = _assessment_columns(dataset, assessment)
    obtained, observed = dataset.obtained_matrix()
    obtained = obtained[:, columns]
    observed = observed[:, columns]
    variances = sigma.matrix([dataset.cell_keys[j] for j in columns])

    lacking = observed & np.isnan(variances)
    if lacking.any():
        rows, cols = np.nonzero(lacking)
        cells = [
            f"{dataset.records[r].school_id}/{dataset.cell_keys[columns[c]][0]}"
            for r, c in zip(rows[:10], cols[:10])
        ]
        raise DataError(f"no error variance for observed cells on {assessment}: {', '.join(cells)}")

    school_rows = np.flatnonzero(observed.any(axis=1))
    if school_rows.size < 2:
        raise DataError(
            f"assessment {assessment} needs at least 2 schools with observed cells, found {school_rows.size}"
        )

    z = dataset.covariate_matrix()[school_rows]
    x = np.column_stack([np.ones(school_rows.size), z])
    names = ("intercept",) + tuple(dataset.covariate_names)
    _check_rank(x, names)

    sub = observed[school_rows]
    owner, col = np.nonzero(sub)
    return _Design(
        school_rows=school_rows,
        x=x,
        owner=owner,
        y=obtained[school_rows][owner, col],
        d=variances[school_rows][owner, col],
        names=names,
    )


def _check_rank(x: np.ndarray, names: Sequence[str]) -> None:
    """Raise DataError naming the columns involved in any linear dependence."""
    if x.shape[0] < x.shape[1]:
        raise DataError(
            f"more fixed effects ({x.shape[1]}) than schools with observed cells ({x.shape[0]})"
        )
    _, r, pivots = scipy.linalg.qr(x, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    rank = int(np.sum(diag > _RANK_TOLERANCE * diag[0])) if diag[0] > 0 else 0
    if rank == x.shape[1]:
        return

    # Express each dependent column through the leading block to find its partners
    coef = scipy.linalg.lstsq(r[:rank, :rank], r[:rank, rank:])[0] if rank else np.zeros((0, 0))
    involved = set(pivots[rank:].tolist())
    if rank:
        for k in range(rank):
            if np.any(np.abs(coef[k]) > 1e-8):
                involved.add(int(pivots[k]))
    named = [names[k] for k in sorted(involved)]
    raise DataError(f"collinear covariates in GLS design: {', '.join(named)}")


def _profile(design: _Design, tau1_sq: float, tau2_sq: float):
    """GLS fixed effects and restricted log-likelihood at one variance pair."""
    n_inc = design.x.shape[0]
    a = tau2_sq + design.d
    w = 1.0 / a
    s = np.bincount(design.owner, weights=w, minlength=n_inc)
    wy = np.bincount(design.owner, weights=w * design.y, minlength=n_inc)
    denom = 1.0 + tau1_sq * s

    q = s / denom  # 1' V^-1 1 per school
    xtvx = (design.x * q[:, None]).T @ design.x
    xtvy = design.x.T @ (wy / denom)
    try:
        cho = scipy.linalg.cho_factor(xtvx)
    except np.linalg.LinAlgError as e:
        raise NumericalError(f"GLS system is not positive definite: {e}") from e
    gamma = scipy.linalg.cho_solve(cho, xtvy)

    resid = design.y - (design.x @ gamma)[design.owner]
    wr = np.bincount(design.owner, weights=w * resid, minlength=n_inc)
    wr2 = np.bincount(design.owner, weights=w * resid**2, minlength=n_inc)
    quad = float(np.sum(wr2) - np.sum(tau1_sq / denom * wr**2))

    logdet_v = float(np.sum(np.log(a)) + np.sum(np.log(denom)))
    logdet_xtvx = float(2.0 * np.sum(np.log(np.diag(cho[0]))))
    n_obs, p = design.y.size, design.x.shape[1]
    loglik = -0.5 * (logdet_v + logdet_xtvx + quad + (n_obs - p) * _LOG_2PI)
    return gamma, loglik


def reml_objective(
    dataset: Dataset,
    sigma: MeasurementModel,
    assessment: str,
    tau1_sq: float,
    tau2_sq: float,
) -> float:
    """Restricted log-likelihood at (tau1_sq, tau2_sq) with gamma profiled out."""
    if tau1_sq < 0 or tau2_sq < 0:
        raise DataError("variance components must be nonnegative")
    design = _build_design(dataset, sigma, assessment)
    return _profile(design, tau1_sq, tau2_sq)[1]


def _search(design: _Design, start: np.ndarray, free: Tuple[bool, bool], floor: float):
    """
    Nelder-Mead over the free log-variances; fixed components stay at zero.

    Log-variances at or below ``floor`` are read as exact zeros.
    """

    def unpack(theta: np.ndarray) -> Tuple[float, float]:
        values = [0.0, 0.0]
        it = iter(theta)
        for k in range(2):
            if free[k]:
                t = next(it)
                values[k] = 0.0 if t <= floor else float(np.exp(t))
        return values[0], values[1]

    def negloglik(theta: np.ndarray) -> float:
        return -_profile(design, *unpack(theta))[1]

    x0 = np.array([start[k] for k in range(2) if free[k]])
    scale = max(1.0, abs(negloglik(x0)))
    result = minimize(
        negloglik,
        x0,
        method="Nelder-Mead",
        options={
            "xatol": REML_XATOL,
            "fatol": REML_FATOL * scale,
            "maxiter": REML_MAX_ITER,
            "initial_simplex": _initial_simplex(x0),
        },
    )
    tau1_sq, tau2_sq = unpack(result.x)
    return tau1_sq, tau2_sq, -float(result.fun), bool(result.success), int(result.nit)


def _initial_simplex(x0: np.ndarray) -> np.ndarray:
    simplex = [x0]
    for k in range(x0.size):
        vertex = x0.copy()
        vertex[k] += 1.0
        simplex.append(vertex)
    return np.array(simplex)


def fit_hlm(dataset: Dataset, sigma: MeasurementModel, assessment: str) -> HlmFit:
    """
    Fit variance components and fixed effects for one assessment by REML.

    The interior optimum is found on the log scale; the three boundary cases
    (tau1_sq = 0, tau2_sq = 0, both zero) are fitted separately and the best
    restricted likelihood wins, boundaries first on ties.

    Raises:
        DataError: Fewer than two usable schools, or collinear covariates
        NumericalError: GLS system breaks down
    """
    design = _build_design(dataset, sigma, assessment)

    total = float(np.var(design.y)) - float(np.mean(design.d))
    scale = max(float(np.var(design.y)), float(np.mean(design.d)), 1e-12)
    guess = max(0.5 * total, 0.01 * scale)
    start = np.log(np.array([guess, guess]))
    floor = float(np.log(scale * 1e-12))

    candidates = []
    gamma0, loglik0 = _profile(design, 0.0, 0.0)
    candidates.append((0.0, 0.0, loglik0, True, 0))
    candidates.append(_search(design, start, (False, True), floor))
    candidates.append(_search(design, start, (True, False), floor))
    candidates.append(_search(design, start, (True, True), floor))

    best = candidates[0]
    for candidate in candidates[1:]:
        if candidate[2] > best[2]:
            best = candidate
    tau1_sq, tau2_sq, loglik, converged, iterations = best
    gamma, _ = _profile(design, tau1_sq, tau2_sq)

    fit = HlmFit(
        assessment_key=assessment,
        gamma0=float(gamma[0]),
        gamma_z=tuple(float(g) for g in gamma[1:]),
        tau1_sq=tau1_sq,
        tau2_sq=tau2_sq,
        objective=loglik,
        converged=converged,
        iterations=iterations,
        covariate_names=tuple(dataset.covariate_names),
        n_schools=int(design.school_rows.size),
        n_cells=int(design.y.size),
    )
    if not converged:
        logger.warning("hlm_not_converged", assessment=assessment, iterations=iterations)
    logger.debug(
        "hlm_fit_completed",
        assessment=assessment,
        tau1_sq=round(tau1_sq, 4),
        tau2_sq=round(tau2_sq, 4),
        objective=round(loglik, 6),
        converged=converged,
    )
    return fit


def predict_eb(
    fit: HlmFit, dataset: Dataset, sigma: MeasurementModel, assessment: str
) -> EbPredictions:
    """
    Best linear unbiased predictions for every cell of ``assessment``.

    Observed cells of a school inform its school effect and their own
    subgroup effects; withheld and absent cells get a zero subgroup effect.
    Conditional variances treat the fitted parameters as known.

    Raises:
        NumericalError: The fit did not converge
    """
    if not fit.converged:
        raise NumericalError(f"HLM fit for {assessment} did not converge; refusing to predict")

    columns = _assessment_columns(dataset, assessment)
    keys = [dataset.cell_keys[j] for j in columns]
    obtained, observed = dataset.obtained_matrix(keys)
    variances = sigma.matrix(keys)
    n, k = obtained.shape
    t1, t2 = fit.tau1_sq, fit.tau2_sq

    mean = fit.fixed_mean(dataset.covariate_matrix())
    # Cells without a variance cannot inform the prediction
    usable = observed & ~np.isnan(variances)

    a = np.where(usable, t2 + np.nan_to_num(variances, nan=1.0), np.inf)
    w = np.where(usable, 1.0 / a, 0.0)
    r = np.where(usable, obtained - mean[:, None], 0.0)
    s = w.sum(axis=1)
    c = t1 / (1.0 + t1 * s)
    wr = (w * r).sum(axis=1)

    vinv_r = w * r - (c * wr)[:, None] * w
    school_effect = t1 * wr / (1.0 + t1 * s)
    subgroup_effect = np.where(usable, t2 * vinv_r, 0.0)
    xhat = mean[:, None] + school_effect[:, None] + subgroup_effect

    # g = t1 * 1 + t2 * e_k over the school's usable cells
    g_w = t1 * s[:, None] + np.where(usable, t2 * w, 0.0)  # w'g
    g_wg = t1**2 * s[:, None] + np.where(usable, (2.0 * t1 * t2 + t2**2) * w, 0.0)  # g'Wg
    explained = g_wg - c[:, None] * g_w**2
    cond_var = np.clip(t1 + t2 - explained, 0.0, t1 + t2)

    full_xhat = np.full((n, len(dataset.cell_keys)), np.nan)
    full_var = np.full_like(full_xhat, np.nan)
    full_xhat[:, columns] = xhat
    full_var[:, columns] = cond_var

    return EbPredictions(
        school_ids=dataset.school_ids,
        cell_keys=dataset.cell_keys,
        xhat=full_xhat,
        cond_var=full_var,
        school_effects={assessment: school_effect},
    )


def merge_predictions(predictions: Sequence[EbPredictions]) -> EbPredictions:
    """Combine per-assessment predictions into one layout."""
    if not predictions:
        raise DataError("no predictions to merge")
    base = predictions[0]
    xhat = np.array(base.xhat, copy=True)
    cond_var = np.array(base.cond_var, copy=True)
    effects: Dict[str, np.ndarray] = dict(base.school_effects)
    for pred in predictions[1:]:
        present = ~np.isnan(pred.xhat)
        xhat[present] = pred.xhat[present]
        cond_var[present] = pred.cond_var[present]
        effects.update(pred.school_effects)
    return EbPredictions(base.school_ids, base.cell_keys, xhat, cond_var, effects)


def fit_all(
    dataset: Dataset, sigma: MeasurementModel
) -> Tuple[Dict[str, HlmFit], EbPredictions]:
    """Fit each assessment separately and merge the predictions."""
    fits: Dict[str, HlmFit] = {}
    predictions = []
    for assessment in dataset.assessment_keys:
        fit = fit_hlm(dataset, sigma, assessment)
        fits[assessment] = fit
        predictions.append(predict_eb(fit, dataset, sigma, assessment))
    return fits, merge_predictions(predictions)


def fit_hlm_two_pass(
    dataset: Dataset, table: CsemTable, assessment: str
) -> Tuple[HlmFit, EbPredictions]:
    """
    Fit twice: CSEMs at the obtained averages, then at the first-pass predictions.

    Returns the second-pass fit and predictions.
    """
    fit, eb, _ = _two_pass(dataset, table, assessment)
    return fit, eb


def _two_pass(
    dataset: Dataset, table: CsemTable, assessment: str
) -> Tuple[HlmFit, EbPredictions, MeasurementModel]:
    """Second-pass fit, predictions and the variances that fit was given."""
    tables = {assessment: table}
    keys = dataset.keys_for(assessment)

    first_sigma = build_sigma(dataset, tables, keys=keys)
    first_fit = fit_hlm(dataset, first_sigma, assessment)
    first_eb = predict_eb(first_fit, dataset, first_sigma, assessment)

    second_sigma = sigma_from_tables(dataset, tables, first_eb.xhat)
    second_fit = fit_hlm(dataset, second_sigma, assessment)
    second_eb = predict_eb(second_fit, dataset, second_sigma, assessment)

    logger.info(
        "hlm_two_pass_completed",
        assessment=assessment,
        tau1_sq_pass1=round(first_fit.tau1_sq, 4),
        tau1_sq_pass2=round(second_fit.tau1_sq, 4),
        tau2_sq_pass1=round(first_fit.tau2_sq, 4),
        tau2_sq_pass2=round(second_fit.tau2_sq, 4),
    )
    return second_fit, second_eb, second_sigma


def fit_all_with_tables(
    dataset: Dataset, tables: Mapping[str, CsemTable]
) -> Tuple[Dict[str, HlmFit], EbPredictions, MeasurementModel]:
    """
    Fit every assessment, two-pass where a CSEM table is available.

    Assessments without a table use the per-cell CSEMs of the dataset. The
    returned measurement model holds the variances the final fits used.
    """
    fits: Dict[str, HlmFit] = {}
    predictions = []
    sigmas = []
    for assessment in dataset.assessment_keys:
        keys = dataset.keys_for(assessment)
        table = tables.get(assessment)
        if table is None:
            sigma = build_sigma(dataset, keys=keys)
            fit = fit_hlm(dataset, sigma, assessment)
            eb = predict_eb(fit, dataset, sigma, assessment)
        else:
            fit, eb, sigma = _two_pass(dataset, table, assessment)
        fits[assessment] = fit
        predictions.append(eb)
        sigmas.append(sigma)
    return fits, merge_predictions(predictions), merge_sigma(sigmas)
