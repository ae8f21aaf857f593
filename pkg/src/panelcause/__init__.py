"""panelcause: counterfactual estimation on outcome panels.

Builds an asset-based wealth index, trains outcome predictors under a
worst-quintile-bias penalty so downstream effect estimates do not attenuate,
and estimates treatment effects by difference-in-differences, synthetic
controls with elastic net, and matrix completion, with a bootstrap ATE
pipeline and a simulation-based estimator-validation battery.
"""

from .bootstrap import BootstrapSummary, SplitEnsemble, ate_timepath, bootstrap_ate
from .estimators import (DDResult, EstimatorResult, McFit, ScenFit,
                         counterfactual_matrix, dd_impute_counterfactual, dd_twfe,
                         dd_two_unit, effects_from_counterfactual, elastic_net,
                         estimate_effects, matrix_complete, mc_cv_lambda,
                         pretrend_test, scen_cv_lambda, scen_fit, svt)
from .loss import (BerksonMap, LossConfig, SurrogateModel, berkson_dd_bias,
                   custom_loss, sample_quintile_bias, slope_diagnostic,
                   sweep_lambda_b, train_surrogate)
from .panel import (GeoUnit, GridNetwork, IdwResult, PanelMatrix,
                    TreatmentAssignment, apply_treatment, assign_treatment,
                    density_prefilter, haversine_km, idw_impute, load_geo_units,
                    load_grid, load_panel, save_panel)
from .validation import (SimScenario, ValidationReport, generate_panel,
                         kfold_control_cv, placebo_last_pretreat,
                         simulate_berkson, simulate_pretrend)
from .wealth import (AssetTable, WealthIndex, build_index, cluster_mean,
                     load_asset_table, quintile_bounds, quintile_of)

__version__ = "0.1.0"
