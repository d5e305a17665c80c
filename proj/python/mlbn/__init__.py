"""Multilevel SMC for Bayesian neural networks under trace-class priors."""

import json

from . import _core
from ._core import (
    DegeneracyError,
    allocate_samples,
    fit_loglog_slope,
    forward,
    gen_regression,
    increment_second_moment,
    param_count,
    posterior_mean,
    prior_sample,
    prior_variances,
    rl_action_prob,
)

__all__ = [
    "DegeneracyError",
    "allocate_samples",
    "default_config",
    "fit_loglog_slope",
    "forward",
    "gen_regression",
    "increment_second_moment",
    "param_count",
    "posterior_mean",
    "prior_sample",
    "prior_variances",
    "rl_action_prob",
    "run_bench",
    "run_rate_check",
]


def default_config():
    """Default experiment settings as a dict."""
    return json.loads(_core.default_config())


def run_bench(out_dir, **overrides):
    """Cost-against-MSE benchmark; keyword arguments override config fields."""
    return _core.run_bench(json.dumps(overrides), str(out_dir))


def run_rate_check(**overrides):
    return _core.run_rate_check(json.dumps(overrides))
