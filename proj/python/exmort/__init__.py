"""Bayesian spatio-temporal excess mortality."""

from ._core import (
    ConfigError,
    DataError,
    NumericalError,
    PCPhiPrior,
    bym2_joint_precision,
    constrained_generalized_inverse,
    excess_summary,
    fit_simulated,
    icar_structure,
    load_config,
    pc_prec_log_density,
    pc_prec_sd_tail,
    quantile,
    run,
    rw1_structure,
    rw2_structure,
    score_predictions,
    version,
    write_demo_dataset,
)

__version__ = version()

__all__ = [
    "ConfigError",
    "DataError",
    "NumericalError",
    "PCPhiPrior",
    "bym2_joint_precision",
    "constrained_generalized_inverse",
    "excess_summary",
    "fit_simulated",
    "icar_structure",
    "load_config",
    "pc_prec_log_density",
    "pc_prec_sd_tail",
    "quantile",
    "run",
    "rw1_structure",
    "rw2_structure",
    "score_predictions",
    "version",
    "write_demo_dataset",
]
