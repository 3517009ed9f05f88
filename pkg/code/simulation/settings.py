"""
Simulation settings and subgroup-size laws.
"""

from dataclasses import asdict, dataclass, replace
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.optimize import brentq

from mepscore_types import PS_KINDS, CellKey
from utils.exceptions import DataError

SIM_ASSESSMENT = "sim"

# Decision values for the covariate part of the true-score model
DEFAULT_GAMMA_Z = 38.94
DEFAULT_GAMMA0 = 1325.0

SIZE_DESIGNS = ("mixed", "all-large")


def truncated_geometric_pmf(upper: int, target_mean: float) -> np.ndarray:
    """
    pmf on {1, ..., upper} proportional to q**m with mean ``target_mean``.

    Raises:
        DataError: Target mean outside (1, (upper + 1) / 2)
    """
    support = np.arange(1, upper + 1, dtype=float)
    if not 1.0 < target_mean < (upper + 1) / 2.0:
        raise DataError(f"target mean {target_mean} not attainable on 1..{upper} with a decreasing pmf")

    def pmf(log_q: float) -> np.ndarray:
        logw = (support - 1.0) * log_q
        w = np.exp(logw - logw.max())
        return w / w.sum()

    def gap(log_q: float) -> float:
        return float(pmf(log_q) @ support) - target_mean

    log_q = brentq(gap, np.log(1e-9), np.log(1.0 - 1e-12), xtol=1e-14, rtol=1e-14, maxiter=500)
    return pmf(log_q)


@dataclass(frozen=True)
class SizeLaw:
    """Categorical distribution of subgroup sizes."""

    name: str
    pmf: Tuple[float, ...]

    @property
    def support(self) -> np.ndarray:
        return np.arange(1, len(self.pmf) + 1)

    @property
    def mean(self) -> float:
        return float(np.asarray(self.pmf) @ self.support)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.choice(self.support, size=size, p=np.asarray(self.pmf))


def large_law() -> SizeLaw:
    return SizeLaw("large", tuple(np.full(120, 1.0 / 120)))


def moderate_law() -> SizeLaw:
    return SizeLaw("moderate", tuple(truncated_geometric_pmf(120, 44.0)))


def small_law() -> SizeLaw:
    return SizeLaw("small", tuple(truncated_geometric_pmf(60, 6.0)))


def size_laws(design: str) -> Tuple[SizeLaw, ...]:
    """One law per subgroup, in subgroup order."""
    if design == "all-large":
        law = large_law()
        return (law, law, law, law)
    if design == "mixed":
        moderate, small = moderate_law(), small_law()
        return (moderate, moderate, small, small)
    raise DataError(f"unknown size design: {design} (choose from {', '.join(SIZE_DESIGNS)})")


@dataclass(frozen=True)
class SimConfig:
    """Data-generating parameters and study settings."""

    n_schools: int = 500
    n_covariates: int = 6
    covariate_shape: Tuple[float, float] = (1.5, 0.5)
    gamma0: float = DEFAULT_GAMMA0
    gamma_z: Tuple[float, ...] = (DEFAULT_GAMMA_Z,) * 6
    tau1: float = 40.229
    tau2: float = 59.149
    sigma: float = 250.0
    beta0: float = -1.386
    beta_w: Tuple[float, ...] = (-0.0115,) * 4
    beta_z: Tuple[float, ...] = (0.05, 0.05, 0.0, 0.0, 0.0, 0.0)
    size_design: str = "mixed"
    calipers: Tuple[float, ...] = (0.5, 0.7, 1.0)
    max_controls_per_treated: int = 5
    # None means "as many as there are treated schools"
    max_treated_per_control: Optional[int] = None
    effect_amplitude: Optional[float] = None
    effect_scale: float = 1000.0
    target_ett: float = 5.5
    n_replications: int = 200
    master_seed: int = 7
    mask_fraction: float = 0.0
    pencomp_max_knots: int = 20
    figure_caliper: Optional[float] = None
    calibration_cells: int = 100_000
    ps_kinds: Tuple[str, ...] = ("ml", "rc", "naive")

    def __post_init__(self) -> None:
        if self.n_schools < 2:
            raise DataError("n_schools must be at least 2")
        if len(self.gamma_z) != self.n_covariates or len(self.beta_z) != self.n_covariates:
            raise DataError("gamma_z and beta_z must have one entry per covariate")
        if len(self.beta_w) != 4:
            raise DataError("beta_w must have one entry per subgroup (4)")
        if min(self.tau1, self.tau2, self.sigma) < 0:
            raise DataError("variance parameters must be nonnegative")
        if self.size_design not in SIZE_DESIGNS:
            raise DataError(f"unknown size design: {self.size_design}")
        if not self.calipers or min(self.calipers) <= 0:
            raise DataError("calipers must be positive")
        if self.figure_caliper is not None and self.figure_caliper not in self.calipers:
            raise DataError(f"figure caliper {self.figure_caliper} is not one of the study calipers")
        if not 0.0 <= self.mask_fraction < 1.0:
            raise DataError("mask_fraction must be in [0, 1)")
        if self.n_replications < 1:
            raise DataError("n_replications must be at least 1")
        unknown = [k for k in self.ps_kinds if k not in PS_KINDS]
        if unknown or not self.ps_kinds:
            raise DataError(f"unknown propensity score kinds: {unknown}")

    @property
    def subgroup_keys(self) -> Tuple[str, ...]:
        return ("s1", "s2", "s3", "s4")

    @property
    def cell_keys(self) -> Tuple[CellKey, ...]:
        return tuple((s, SIM_ASSESSMENT) for s in self.subgroup_keys)

    @property
    def covariate_names(self) -> Tuple[str, ...]:
        return tuple(f"c{k + 1}" for k in range(self.n_covariates))

    def size_classes(self) -> Dict[CellKey, str]:
        return {key: law.name for key, law in zip(self.cell_keys, size_laws(self.size_design))}

    @property
    def chart_caliper(self) -> float:
        return self.figure_caliper if self.figure_caliper is not None else max(self.calipers)

    def with_amplitude(self, amplitude: float) -> "SimConfig":
        return replace(self, effect_amplitude=float(amplitude))

    def as_dict(self) -> Dict[str, object]:
        return asdict(self)
