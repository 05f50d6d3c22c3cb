"""
Command documentation for the lasso-condition CLI.

Each command is documented with its purpose, config parameters and the
artifacts it writes. `python -m app.main docs [command]` prints these entries.
"""

COMMON_FLAGS = [
    {"name": "--config", "type": "path", "description": "JSON or YAML experiment config"},
    {"name": "--seed", "type": "integer", "description": "Master seed, overrides the config"},
    {"name": "--workers", "type": "integer", "description": "Worker processes for Monte Carlo trials"},
    {"name": "--out", "type": "path", "description": "Output directory for artifacts"},
    {"name": "--log-level", "type": "string", "description": "DEBUG, INFO, WARNING or ERROR"},
]

COMMAND_DOCS = {
    "solve": {
        "description": "Solve one LASSO instance to a certified duality gap",
        "parameters": [
            {"name": "instance", "type": "object", "required": True, "description": "{y, A, lambda}"},
            {"name": "gap_tol", "type": "number", "default": 1e-12},
            {"name": "max_sweeps", "type": "integer", "default": 100000},
            {"name": "check_every", "type": "integer", "default": 1},
            {"name": "backend", "type": "string", "default": "reference", "description": "reference or library"},
            {"name": "tau", "type": "number", "default": 0.0, "description": "Threshold for the reported support"},
        ],
        "outputs": {"solution.json": ["solution", "support", "tau"]},
    },
    "condition": {
        "description": "Sigma-certificate and condition upper bound; exact condition for single-row instances",
        "parameters": [
            {"name": "instance", "type": "object", "required": True},
            {"name": "gap_tol", "type": "number", "default": 1e-12},
            {"name": "tau", "type": "number", "default": 1e-9},
            {"name": "probe_radius", "type": "number", "default": None,
             "description": "Search for a support change at this radius"},
            {"name": "probe_samples", "type": "integer", "default": 200},
        ],
        "outputs": {"certificate.json": ["solution", "certificate", "exact_stsp", "exact_condition", "probe"]},
    },
    "certify": {
        "description": "Variable-precision support selection that abstains instead of answering wrongly",
        "parameters": [
            {"name": "instance", "type": "object", "default": "y=[1], A=[[0.9, 0.3]], lambda=0.01",
             "description": "Entries may be rational strings such as \"1/3\""},
            {"name": "n0", "type": "integer", "default": 1},
            {"name": "n_max", "type": "integer", "default": 60},
            {"name": "serve_exact", "type": "boolean", "default": False},
        ],
        "outputs": {"outcome.json": ["outcome", "oracle_support"]},
        "exit": "0 with status 'abstained' when no certificate is reached",
    },
    "ensemble-t24": {
        "description": "Empirical law of the scaled reciprocal condition of random single-row instances",
        "parameters": [
            {"name": "dist", "type": "object", "default": {"kind": "exp1"},
             "description": "kind: exp1, normal (mu, sigma2) or uniform01"},
            {"name": "N_grid", "type": "array", "default": [100, 1000]},
            {"name": "trials", "type": "integer", "default": 500},
            {"name": "y", "type": "number", "default": 1.0},
            {"name": "lambda", "type": "number", "default": 0.01},
        ],
        "outputs": {
            "t24_trials.csv": ["dist", "trial", "N", "stsp", "tie", "zero_boundary", "scaled_inv_cond"],
            "t24_summary.csv": ["dist", "N", "n_trials", "n_kept", "n_ties", "ks_distance",
                                "zero_boundary_fraction", "n_infinite_cond"],
        },
    },
    "figure1": {
        "description": "Support recovery of a double-precision solver on single-row instances with y = 1",
        "parameters": [
            {"name": "N_grid", "type": "array", "default": [10, 100, 1000, 10000]},
            {"name": "trials", "type": "integer", "default": 20},
            {"name": "thresholds", "type": "array", "default": [1e-3, 1e-12]},
            {"name": "lambda", "type": "number", "default": 0.01},
            {"name": "dists", "type": "array", "default": ["exp1", "normal(1,1e-4)", "uniform01"]},
            {"name": "solver", "type": "string", "default": "reference"},
            {"name": "gap_tol", "type": "number", "default": 1e-12},
            {"name": "max_sweeps", "type": "integer", "default": 100000},
            {"name": "check_every", "type": "integer", "default": 0},
        ],
        "outputs": {
            "trials.csv": ["seed", "trial", "N", "m", "dist", "cond", "oracle_support", "solver_support",
                           "success", "threshold", "converged"],
            "summary.csv": ["dist", "N", "threshold", "success_rate", "n_success", "n_trials",
                            "prop_cond_above_1000", "median_cond_correct", "median_cond_incorrect",
                            "converged_fraction"],
        },
    },
    "wainwright": {
        "description": "Gaussian-ensemble parameters, hypothesis verdicts and the condition bound K_hat",
        "parameters": [
            {"name": "Sigma", "type": "matrix or 'identity'", "default": "identity"},
            {"name": "v", "type": "array", "required": True},
            {"name": "eta", "type": "number", "default": 0.0},
            {"name": "m", "type": "integer", "required": True},
            {"name": "lambda", "type": "number", "required": True},
            {"name": "c3", "type": "number", "default": 1.0, "description": "Assumed universal constant"},
            {"name": "c_bar", "type": "number", "default": "max(c3, 1)", "description": "Assumed universal constant"},
            {"name": "epsilon_rule", "type": "string", "default": "general"},
            {"name": "norm_tail_draws", "type": "integer", "default": 0},
            {"name": "condition_tail_draws", "type": "integer", "default": 0},
        ],
        "outputs": {"wainwright.json": ["spec", "assumptions", "simple_hypotheses", "digits_bound",
                                        "norm_tail", "condition_tail"]},
    },
    "adversary": {
        "description": "Build the finite-precision adversary and run capped victims on the inner ball",
        "parameters": [
            {"name": "center", "type": "object", "default": "y=[1], A=[[0.9, 0.8999]], lambda=0.01"},
            {"name": "k", "type": "integer", "default": 12},
            {"name": "r", "type": "number", "default": "midpoint of (stsp, 2^-(k+1))"},
            {"name": "n_samples", "type": "integer", "default": 100},
            {"name": "victims", "type": "array", "default": ["truncate_then_solve", "capped_certified_selector"]},
        ],
        "outputs": {
            "kit.json": ["center", "d1", "d2", "witness", "center_stsp", "inner_radius", "r", "k", "S1", "S2",
                         "shrink_delta", "precision_bits"],
            "failure_<victim>.json": ["k", "victim", "entries"],
            "adversary_summary.csv": ["victim", "n_samples", "n_wrong", "n_abstained", "digit_blind"],
        },
    },
    "gaps": {
        "description": "Scaled gap between the two largest |a_i|, compared with Exp(1)",
        "parameters": [
            {"name": "dist", "type": "object", "default": {"kind": "uniform01"}},
            {"name": "N", "type": "integer", "default": 1000},
            {"name": "trials", "type": "integer", "default": 1000},
        ],
        "outputs": {"gaps.csv": ["trial", "scaled_delta"],
                    "gaps_summary.json": ["dist", "N", "trials", "ks_distance_exp1", "mean"]},
    },
    "check": {
        "description": "Check the environment and that the numerical dependencies import",
        "parameters": [],
        "outputs": {},
    },
    "docs": {
        "description": "Print command documentation",
        "parameters": [{"name": "command", "type": "string", "required": False}],
        "outputs": {},
    },
    "schema": {
        "description": "Print the JSON schema of the experiment config",
        "parameters": [],
        "outputs": {},
    },
}


def get_command_docs(command: str) -> dict:
    """Get documentation for a specific command."""
    if command in COMMAND_DOCS:
        return {**COMMAND_DOCS[command], "flags": COMMON_FLAGS}
    return {"error": f"Command '{command}' not found in documentation"}


def get_all_docs() -> dict:
    """Get documentation for all commands."""
    return COMMAND_DOCS
