"""
Statistical models: measurement error, HLM shrinkage and propensity scores.
"""

from .hlm import (
    EbPredictions,
    HlmFit,
    fit_all,
    fit_all_with_tables,
    fit_hlm,
    fit_hlm_two_pass,
    predict_eb,
    reml_objective,
)
from .logistic import LogisticFit, fit_logistic
from .measure import CsemTable, MeasurementModel, build_sigma, lookup_csem
from .mixture import (
    FROZEN_APPROXIMATION_TOLERANCE,
    LOGISTIC_MIXTURE,
    MixtureConstants,
    approximation_grid,
    logistic_normal_oracle,
    mixture_probability,
)
from .propensity import PsFit, fit_propensity, ml_marginal_ps, ps_ml, ps_naive, ps_rc

__all__ = [
    "CsemTable",
    "EbPredictions",
    "FROZEN_APPROXIMATION_TOLERANCE",
    "HlmFit",
    "LOGISTIC_MIXTURE",
    "LogisticFit",
    "MeasurementModel",
    "MixtureConstants",
    "PsFit",
    "approximation_grid",
    "build_sigma",
    "fit_all",
    "fit_all_with_tables",
    "fit_hlm",
    "fit_hlm_two_pass",
    "fit_logistic",
    "fit_propensity",
    "logistic_normal_oracle",
    "lookup_csem",
    "ml_marginal_ps",
    "mixture_probability",
    "predict_eb",
    "ps_ml",
    "ps_naive",
    "ps_rc",
    "reml_objective",
]
