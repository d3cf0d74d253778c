"""Experiment configuration, drivers, rate fits and result emission."""
from .config import ExperimentConfig, load_config, parse_text
from .experiments import (
    RUNNERS,
    clt_enumerate,
    run_fluctuation_growth,
    run_gp_suite,
    run_meanfield_convergence,
    run_minimize,
    run_scatter,
)
from .fitting import RateFit, fit_rate
from .output import Results, emit

__all__ = [
    "ExperimentConfig",
    "load_config",
    "parse_text",
    "RUNNERS",
    "clt_enumerate",
    "run_fluctuation_growth",
    "run_gp_suite",
    "run_meanfield_convergence",
    "run_minimize",
    "run_scatter",
    "RateFit",
    "fit_rate",
    "Results",
    "emit",
]
