"""
Synthetic school populations with known true scores and potential outcomes.

True subgroup scores follow a two-level model with a school effect and a
subgroup effect; obtained averages add measurement error whose variance
shrinks with subgroup size. Assignment depends on the obtained averages,
so it is confounded by true scores only through a noisy proxy.
"""

from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
from scipy.special import expit

from mepscore_types import Dataset, SchoolRecord, SubgroupCell
from utils.exceptions import DataError
from utils.logging import get_logger

from .settings import SimConfig, size_laws

logger = get_logger(__name__)

SeedLike = Union[int, np.random.SeedSequence, np.random.Generator, None]


@dataclass(frozen=True)
class LatentTruth:
    """Unobservable quantities behind a generated population (rows follow the dataset)."""

    true_scores: np.ndarray
    errors: np.ndarray
    sizes: np.ndarray
    effects: np.ndarray
    outcome_control: np.ndarray
    outcome_treated: np.ndarray
    propensity: np.ndarray

    @property
    def obtained(self) -> np.ndarray:
        return self.true_scores + self.errors

    def treated_effect(self, treatment: np.ndarray) -> float:
        """Finite-population ETT: mean effect over treated cells."""
        treated = np.asarray(treatment) == 1
        if not treated.any():
            return float("nan")
        return float(np.mean(self.effects[treated]))


@dataclass(frozen=True)
class Population:
    dataset: Dataset
    truth: LatentTruth


def _rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def effect_function(config: SimConfig, true_scores: np.ndarray, amplitude: Optional[float] = None) -> np.ndarray:
    """Treatment effect a * exp(-X / scale), decreasing in the true score."""
    a = config.effect_amplitude if amplitude is None else amplitude
    if a is None:
        raise DataError("effect amplitude is not set; calibrate it first")
    return a * np.exp(-np.asarray(true_scores) / config.effect_scale)


def draw_assignment_inputs(config: SimConfig, rng: np.random.Generator) -> Tuple[np.ndarray, ...]:
    """
    Covariates, true scores, sizes, errors and treatment for one population.

    Returns:
        (z, x, sizes, errors, propensity, treatment)
    """
    n, p = config.n_schools, config.n_covariates
    z = rng.beta(config.covariate_shape[0], config.covariate_shape[1], size=(n, p))
    school = rng.normal(0.0, config.tau1, size=n)
    subgroup = rng.normal(0.0, config.tau2, size=(n, 4))
    x = config.gamma0 + (z @ np.asarray(config.gamma_z))[:, None] + school[:, None] + subgroup

    sizes = np.column_stack([law.sample(rng, n) for law in size_laws(config.size_design)])
    errors = rng.standard_normal((n, 4)) * (config.sigma / np.sqrt(sizes))
    w = x + errors

    eta = (
        config.beta0
        + (w - w.mean(axis=0)) @ np.asarray(config.beta_w)
        + (z - z.mean(axis=0)) @ np.asarray(config.beta_z)
    )
    propensity = expit(eta)
    treatment = (rng.random(n) < propensity).astype(int)
    return z, x, sizes, errors, propensity, treatment


def generate_population(config: SimConfig, seed: SeedLike = None) -> Population:
    """
    Draw one population of schools.

    The observed dataset carries covariates, treatment, subgroup sizes,
    obtained averages, the constant CSEM and the observed outcome. Everything
    else is kept in the returned LatentTruth.
    """
    rng = _rng(seed)
    z, x, sizes, errors, propensity, treatment = draw_assignment_inputs(config, rng)
    noise = rng.standard_normal(x.shape) * (config.sigma / np.sqrt(sizes))
    effects = effect_function(config, x)
    y0 = x + noise
    y1 = y0 + effects
    observed = np.where(treatment[:, None] == 1, y1, y0)

    keys = config.cell_keys
    width = len(str(config.n_schools))
    records = []
    for i in range(config.n_schools):
        cells = tuple(
            SubgroupCell(
                subgroup_key=key[0],
                assessment_key=key[1],
                size=int(sizes[i, j]),
                obtained_avg=float(x[i, j] + errors[i, j]),
                csem=float(config.sigma),
                outcome_avg=float(observed[i, j]),
            )
            for j, key in enumerate(keys)
        )
        records.append(
            SchoolRecord(
                school_id=f"S{i + 1:0{width}d}",
                treatment=int(treatment[i]),
                covariates=tuple(float(v) for v in z[i]),
                cells=cells,
            )
        )

    dataset = Dataset(tuple(records), config.covariate_names, keys)
    truth = LatentTruth(
        true_scores=x,
        errors=errors,
        sizes=sizes,
        effects=effects,
        outcome_control=y0,
        outcome_treated=y1,
        propensity=propensity,
    )
    logger.debug(
        "population_generated",
        n_schools=config.n_schools,
        n_treated=int(treatment.sum()),
        design=config.size_design,
    )
    return Population(dataset, truth)


def mask_cells(dataset: Dataset, fraction: float, seed: SeedLike = None) -> Dataset:
    """Withhold a random ``fraction`` of the observed cells."""
    if not 0.0 <= fraction < 1.0:
        raise DataError(f"mask fraction must be in [0, 1), got {fraction}")
    observed = [
        (record.school_id, cell.key)
        for record in dataset.records
        for cell in record.cells
        if not cell.withheld
    ]
    n_mask = int(round(fraction * len(observed)))
    if n_mask == 0:
        return dataset
    picks = _rng(seed).choice(len(observed), size=n_mask, replace=False)
    logger.debug("cells_masked", n_masked=n_mask, n_observed=len(observed))
    return dataset.with_masked_cells(observed[k] for k in sorted(picks))
