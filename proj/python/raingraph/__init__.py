"""Long-range station-rainfall forecasting toolkit.

Thin re-export of the compiled extension: orographic field simulation,
Granger/Pearson screening helpers, GPD tail fitting and mapping, forecast
metrics, IDW gridding and the pipeline stage runner.
"""

try:
    from ._raingraph import *  # noqa: F401,F403  (installed package layout)
except ImportError:  # pragma: no cover - build-tree layout
    from _raingraph import *  # noqa: F401,F403

__all__ = [
    "percentile",
    "pearson",
    "chi_square_sf",
    "granger_lag",
    "rmse",
    "accuracy",
    "smape",
    "nse",
    "huber_loss",
    "simulate_field",
    "gpd_cdf",
    "gpd_quantile",
    "fit_gpd_mle",
    "pot_excesses",
    "season_of",
    "map_tail_value",
    "idw_interpolate",
    "run_stage",
    "stage_names",
    "generate_dataset",
]
