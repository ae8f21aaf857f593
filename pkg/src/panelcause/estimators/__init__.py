from .did import DDResult, dd_impute_counterfactual, dd_twfe, dd_two_unit, pretrend_test
from .effects import (EstimatorResult, counterfactual_matrix, effects_from_counterfactual,
                      estimate_effects)
from .mc import McFit, default_lambda_grid, matrix_complete, mc_cv_lambda, svt
from .scen import ScenFit, elastic_net, scen_cv_lambda, scen_fit, soft_threshold

__all__ = [
    "DDResult", "dd_two_unit", "dd_twfe", "pretrend_test", "dd_impute_counterfactual",
    "ScenFit", "elastic_net", "soft_threshold", "scen_fit", "scen_cv_lambda",
    "McFit", "svt", "matrix_complete", "mc_cv_lambda", "default_lambda_grid",
    "EstimatorResult", "effects_from_counterfactual", "counterfactual_matrix",
    "estimate_effects",
]
