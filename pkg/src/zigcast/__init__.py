"""Probabilistic building energy demand with a zero-inflated gamma MLP."""

__version__ = "0.1.0"

from .zig import (ZigParams, link_transform, mean_nll, regularized_lower_incomplete_gamma,  # noqa: E402
                  zig_cdf, zig_log_pdf, zig_mean, zig_sample)
from .nn import MlpModel, TrainConfig, fit, forward, load_model, save_model  # noqa: E402
from .eta import apply_eta, fit_eta  # noqa: E402
from .evaluation import backtest_report, feature_importance, ks_statistic, pit_values, rmse  # noqa: E402

__all__ = [
    "ZigParams", "link_transform", "mean_nll", "regularized_lower_incomplete_gamma", "zig_cdf",
    "zig_log_pdf", "zig_mean", "zig_sample", "MlpModel", "TrainConfig", "fit", "forward",
    "load_model", "save_model", "apply_eta", "fit_eta", "backtest_report", "feature_importance",
    "ks_statistic", "pit_values", "rmse",
]
