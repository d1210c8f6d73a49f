"""Calibrated log-optimal portfolio simulator."""

import json
import os

from ._calport import (
    CalportError,
    bcrp,
    cover_weight,
    forecast_grid_size,
    growth_rate,
    kkt_residual,
    lattice_denominator,
    log_optimal_portfolio,
    project_l1_ball,
    run_command,
    solve_zero_sum_game,
    verify,
)

__all__ = [
    "CalportError",
    "bcrp",
    "cover_weight",
    "forecast_grid_size",
    "growth_rate",
    "kkt_residual",
    "lattice_denominator",
    "log_optimal_portfolio",
    "project_l1_ball",
    "run",
    "run_command",
    "solve_zero_sum_game",
    "verify",
]


def run(config, base_dir=""):
    """Run every seed of a config (dict or path to a JSON file) and return the report dict."""
    from ._calport import run_report

    if isinstance(config, (str, os.PathLike)):
        path = os.fspath(config)
        with open(path, encoding="utf-8") as f:
            text = f.read()
        base_dir = base_dir or os.path.dirname(os.path.abspath(path))
    else:
        text = json.dumps(config)
    return json.loads(run_report(text, os.fspath(base_dir)))
