"""Python bindings for the shared-control game core."""

import json

from ._core import (
    CostParams,
    DesignResult,
    Error,
    GameSystem,
    GlobalObjective,
    RiccatiSolution,
    RlsEstimator,
    check_config,
    closed_loop_matrix,
    coupled_riccati_residuals,
    design_automation,
    evaluate_design,
    evaluate_global_cost,
    identify_gains,
    max_real_eigenvalue,
    solve_care,
    solve_coupled_riccati,
)
from . import _core

__all__ = [
    "CostParams",
    "DesignResult",
    "Error",
    "GameSystem",
    "GlobalObjective",
    "RiccatiSolution",
    "RlsEstimator",
    "check_config",
    "closed_loop_matrix",
    "coupled_riccati_residuals",
    "design_automation",
    "design_dict",
    "evaluate_design",
    "evaluate_global_cost",
    "identify_gains",
    "identify_trace",
    "max_real_eigenvalue",
    "run_scenario",
    "solve_care",
    "solve_coupled_riccati",
]


def run_scenario(config, adaptive=None, seed=None):
    """Runs the offline scenario; the summary comes back as a dict."""
    out = _core.run_scenario(str(config), adaptive, seed)
    out["summary"] = json.loads(out["summary"])
    return out


def design_dict(design, sys):
    return json.loads(_core.design_json(design, sys))


def identify_trace(config, trace, lambda_f=1.0, p0=1e8):
    return [json.loads(p) for p in _core.identify_trace(str(config), str(trace), lambda_f, p0)]
