"""Linear-attention transformers that run Newton-type solvers in-context.

The package provides the numerical iterations (matrix inversion by
Newton-Schulz and its higher-order family, damped Newton on the
regularized logistic loss), mechanical weight constructions that
realize them as linear-attention layers with ReLU feed-forward blocks,
and a reproducible experiment harness.
"""

from .builders import (
    BudgetReport,
    FfnBuilder,
    build_inversion_block,
    build_linreg_transformer,
    build_logreg_newton_step,
    logistic_step_forward,
    make_inversion_prompt,
    make_linreg_prompt,
    make_logistic_prompt,
    read_inversion_iterate,
    read_linreg_prediction,
    read_logistic_iterate,
    run_constructed_newton,
    width_depth_budget,
)
from .datagen import gen_linreg_data, gen_logreg_data, make_covariance
from .errors import (
    BudgetError,
    ConvergenceError,
    DefinitenessError,
    ScanAnomalyError,
    ShapeMismatchError,
    SymmetryError,
)
from .harness import (
    ExperimentConfig,
    run_invert_experiment,
    run_linreg_experiment,
    run_logreg_experiment,
)
from .inversion import (
    MAX_ORDER,
    InverseRun,
    fitted_order,
    hyperpower_step,
    newton_step,
    predicted_steps,
    run_inverse,
)
from .linalg import (
    as_matrix,
    frobenius_norm,
    load_matrix_csv,
    matmul,
    save_matrix_csv,
    solve_spd,
    spectral_norm_est,
)
from .logistic import (
    IterateTrace,
    LogisticProblem,
    NewtonState,
    bounded_error_source,
    damped_step,
    decrease_bound,
    iterate_norm_bound,
    loss_grad_hess,
    margin_probabilities,
    newton_decrement,
    omega,
    omega_star,
    optimum,
    quadratic_phase_epsilon,
    run_inexact_newton,
    scaled_decrement,
    scan_constant_decrease,
    suboptimality_bound,
)
from .pwl import PwlApprox, build_pwl, eval_pwl, pwl_product, signed_copy
from .transformer import (
    AttentionHead,
    PromptLayout,
    RowBlock,
    TransformerLayer,
    assemble_blocks,
    attention_forward,
    ffn_forward,
    load_model,
    model_forward,
    save_model,
)

__version__ = "0.1.0"

__all__ = [
    "AttentionHead",
    "BudgetError",
    "BudgetReport",
    "ConvergenceError",
    "DefinitenessError",
    "ExperimentConfig",
    "FfnBuilder",
    "InverseRun",
    "IterateTrace",
    "LogisticProblem",
    "MAX_ORDER",
    "NewtonState",
    "PromptLayout",
    "PwlApprox",
    "RowBlock",
    "ScanAnomalyError",
    "ShapeMismatchError",
    "SymmetryError",
    "TransformerLayer",
    "as_matrix",
    "assemble_blocks",
    "attention_forward",
    "bounded_error_source",
    "build_inversion_block",
    "build_linreg_transformer",
    "build_logreg_newton_step",
    "build_pwl",
    "damped_step",
    "decrease_bound",
    "eval_pwl",
    "ffn_forward",
    "fitted_order",
    "frobenius_norm",
    "gen_linreg_data",
    "gen_logreg_data",
    "hyperpower_step",
    "iterate_norm_bound",
    "load_matrix_csv",
    "load_model",
    "logistic_step_forward",
    "loss_grad_hess",
    "make_covariance",
    "make_inversion_prompt",
    "make_linreg_prompt",
    "make_logistic_prompt",
    "margin_probabilities",
    "matmul",
    "model_forward",
    "newton_decrement",
    "newton_step",
    "omega",
    "omega_star",
    "optimum",
    "predicted_steps",
    "pwl_product",
    "quadratic_phase_epsilon",
    "read_inversion_iterate",
    "read_linreg_prediction",
    "read_logistic_iterate",
    "run_constructed_newton",
    "run_inexact_newton",
    "run_invert_experiment",
    "run_inverse",
    "run_linreg_experiment",
    "run_logreg_experiment",
    "save_matrix_csv",
    "save_model",
    "scaled_decrement",
    "scan_constant_decrease",
    "signed_copy",
    "solve_spd",
    "spectral_norm_est",
    "suboptimality_bound",
    "width_depth_budget",
]
