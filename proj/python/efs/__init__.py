"""Exact sampling from expectations: Bernoulli factories, races, urn mechanisms and matching."""

import json

from ._core import (
    AgentType,
    BudgetExceeded,
    ContractViolation,
    InvalidParameter,
    SolverFailure,
    UrnEnvironment,
    allocate,
    bernoulli_race,
    charges,
    closed_form_bias,
    estimate_gamma,
    exact_exp_weights,
    exact_linear_weights,
    exact_urn_marginals,
    exact_urn_payment,
    two_urn_example,
    exp_race,
    flip_expression,
    gamma_min_load,
    gamma_sample_size,
    market_size_for_doubling_dim,
    max_weight_k_matching,
    online_match,
    reduction_params,
    sinkhorn_matching_opt,
    solve_offline,
    suite_names,
    urn_lambda,
)

__version__ = "0.1.0"


def run_suite(name, seed=7, scale=1.0, significance=1e-3):
    """Runs a verification suite and returns its checks as dicts."""
    from ._core import run_suite_json

    return [json.loads(s) for s in run_suite_json(name, seed, scale, significance)]
