"""Scaling laws, loss-to-loss links, and their translation machinery.

The core objects are a parametric loss surface L(N, D) fit to training runs,
and shifted power-law links that map losses between training distributions
and evaluation metrics. Links translate whole laws in closed form, so a law
fit on one distribution plus a few runs on another yields the second law
without a full run grid. A small simulator of sketched linear regression
provides the solvable model in which those link relationships hold exactly.
"""

from .core import (
    DatasetId,
    FitMeta,
    LossLink,
    MetricId,
    NumericalError,
    PairedPoint,
    RunRecord,
    ScalingLaw,
    ValidationError,
    flops_of,
    pair_records,
)
from .errormap import ErrorMap, fit_error_map, predict_error, softmin
from .estimators import ErrorMapRegressor, LossLinkRegressor, ScalingLawRegressor
from .lawfit import (
    DecayCurve,
    FitConfig,
    StartGrid,
    fit_decay_curve,
    fit_law,
    fit_law_points,
    law_objective,
    optimal_model_size,
    predict_decay,
    predict_loss,
    r_squared,
)
from .linsim import (
    LinSimConfig,
    LinSimResult,
    delta_bisect,
    delta_closed,
    expansion_loss,
    simulate_loss,
    spectrum,
    theory_loss,
)
from .losslink import (
    FREE,
    apply_link,
    compose_links,
    estimate_conditional_entropy,
    fit_link,
    fit_link_arrays,
    identity_link,
    translate_law,
    with_endpoints,
)
from .workflows import (
    PREDICTION_METHODS,
    ScenarioSpec,
    TranslateScenarioResult,
    predict_large_test,
    relative_error,
    translate_law_scenario,
)

__version__ = "0.1.0"

__all__ = [
    "DatasetId",
    "MetricId",
    "RunRecord",
    "PairedPoint",
    "FitMeta",
    "ScalingLaw",
    "LossLink",
    "ValidationError",
    "NumericalError",
    "flops_of",
    "pair_records",
    "FitConfig",
    "StartGrid",
    "fit_law",
    "fit_law_points",
    "law_objective",
    "predict_loss",
    "optimal_model_size",
    "r_squared",
    "DecayCurve",
    "fit_decay_curve",
    "predict_decay",
    "FREE",
    "fit_link",
    "fit_link_arrays",
    "apply_link",
    "identity_link",
    "translate_law",
    "compose_links",
    "estimate_conditional_entropy",
    "with_endpoints",
    "ErrorMap",
    "fit_error_map",
    "predict_error",
    "softmin",
    "LinSimConfig",
    "LinSimResult",
    "simulate_loss",
    "spectrum",
    "delta_bisect",
    "delta_closed",
    "theory_loss",
    "expansion_loss",
    "ScenarioSpec",
    "TranslateScenarioResult",
    "PREDICTION_METHODS",
    "translate_law_scenario",
    "predict_large_test",
    "relative_error",
    "ScalingLawRegressor",
    "LossLinkRegressor",
    "ErrorMapRegressor",
]
