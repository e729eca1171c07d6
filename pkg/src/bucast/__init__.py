"""Bottom-up hierarchical inflation forecasting toolkit."""

from .ensemble import (
    ForestModel,
    RegressionTree,
    SubsetEnsemble,
    fit_csr,
    fit_forest,
    fit_tree,
    predict_forest,
)
from .evaluate import (
    build_report,
    dm_test,
    format_report_table,
    rmse,
    selection_frequencies,
)
from .factors import (
    FactorDecomposition,
    extract_factors,
    fit_factor_augmented,
    fit_farmpredict,
    fit_target_factor,
    preselect_by_tstat,
    select_k_icp2,
)
from .harness import (
    ExperimentPlan,
    ForecastStore,
    ModelSpec,
    accumulate_12m,
    accumulate_values,
    aggregate_bottom_up,
    combine_forecasts,
    run_expanding_window,
)
from .linear import (
    LinearFit,
    PenaltyPath,
    fit_adalasso,
    fit_ar_bic,
    fit_augmented_ar,
    fit_hnkpc,
    fit_lasso,
    fit_ols,
    fit_ridge,
    forecast_ar_bic,
    forecast_hist_mean,
    forecast_rw,
)
from .panel import (
    AGGREGATE_COMPONENT,
    AGGREGATE_LEVEL,
    DisaggregationScheme,
    Predictor,
    SeriesPanel,
    last_available_weights,
    read_panel_csv,
    truncate_panel,
    validate_panel,
    write_panel_csv,
)
from .preprocess import (
    FULL_INFORMATION,
    OWN_LAGS_ONLY,
    OWN_PLUS_CONTROLS,
    DesignMatrix,
    apply_transform,
    build_design,
    observed_predictors,
    standardize,
)
from .synthetic import GroundTruth, SyntheticSpec, generate

__all__ = [
    "AGGREGATE_COMPONENT",
    "AGGREGATE_LEVEL",
    "DesignMatrix",
    "DisaggregationScheme",
    "ExperimentPlan",
    "FactorDecomposition",
    "ForecastStore",
    "ForestModel",
    "FULL_INFORMATION",
    "GroundTruth",
    "LinearFit",
    "ModelSpec",
    "OWN_LAGS_ONLY",
    "OWN_PLUS_CONTROLS",
    "PenaltyPath",
    "Predictor",
    "RegressionTree",
    "SeriesPanel",
    "SubsetEnsemble",
    "SyntheticSpec",
    "accumulate_12m",
    "accumulate_values",
    "aggregate_bottom_up",
    "apply_transform",
    "build_design",
    "build_report",
    "combine_forecasts",
    "dm_test",
    "extract_factors",
    "fit_adalasso",
    "fit_ar_bic",
    "fit_augmented_ar",
    "fit_csr",
    "fit_factor_augmented",
    "fit_farmpredict",
    "fit_forest",
    "fit_hnkpc",
    "fit_lasso",
    "fit_ols",
    "fit_ridge",
    "fit_target_factor",
    "fit_tree",
    "forecast_ar_bic",
    "forecast_hist_mean",
    "forecast_rw",
    "format_report_table",
    "generate",
    "last_available_weights",
    "observed_predictors",
    "predict_forest",
    "preselect_by_tstat",
    "read_panel_csv",
    "rmse",
    "run_expanding_window",
    "select_k_icp2",
    "selection_frequencies",
    "standardize",
    "truncate_panel",
    "validate_panel",
    "write_panel_csv",
]

__version__ = "0.1.0"
