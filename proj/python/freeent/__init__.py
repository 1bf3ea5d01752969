"""Free entropy estimators for random matrix ensembles."""

from ._freeent import (
    ConfigError,
    Error,
    EstimatorFailure,
    InfeasibleTarget,
    InvalidArgument,
    __version__,
    arcsine_moments,
    ball_volume_hit_or_miss,
    config_hash,
    free_product_moments,
    log_ball_volume,
    log_hciz,
    moment_distance,
    parse_config,
    plot_table,
    run_experiment,
    sample_spectra,
    scalar_maxent,
    semicircle_moments,
)

__all__ = [
    "ConfigError",
    "Error",
    "EstimatorFailure",
    "InfeasibleTarget",
    "InvalidArgument",
    "__version__",
    "arcsine_moments",
    "ball_volume_hit_or_miss",
    "config_hash",
    "free_product_moments",
    "log_ball_volume",
    "log_hciz",
    "moment_distance",
    "parse_config",
    "plot_table",
    "run_experiment",
    "sample_spectra",
    "scalar_maxent",
    "semicircle_moments",
]
