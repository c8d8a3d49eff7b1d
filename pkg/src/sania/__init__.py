"""Parameter-free Polyak-step-size optimization toolkit.

Update rules (plain, preconditioned and second-order Polyak steps), diagonal
preconditioner states including square-root-free scale-invariant variants and
a Hutchinson diagonal estimator, GLM objectives with exact derivative oracles,
dataset tooling for ill-conditioning experiments, and a reproducible harness.
"""

from .datasets import (
    BatchSchedule,
    ScalingVector,
    SparseDataset,
    batches,
    generate_synthetic,
    load_libsvm,
    parse_libsvm,
    scale_columns,
    serialize_libsvm,
)
from .estimator import SaniaClassifier
from .harness import RunConfig, TrainTrace, cubic_robustness, invariance_report, lr_sweep, run
from .linsolve import CubicSearchResult, PcgOutcome, cubic_kappa_search, eig_sym, pcg, solve_shifted_diag
from .methods import METHOD_NAMES
from .objectives import BatchEval, LogisticLoss, NonlinearLeastSquares, build_objective
from .preconditioners import AdaGrad, AdaGradSqr, Adam, AdamSqr, FixedDiag, Hutchinson, Identity
from .steppers import (
    StepContext,
    StepResult,
    cubic_polyak_step,
    grad_reg_newton_step,
    preconditioned_sgd_step,
    psps_step,
    sania_lambda,
    sania_pcg_convex_step,
    sania_pcg_nonconvex_step,
    sania_qn_step,
    sgd_step,
    sps_step,
)

__version__ = "0.1.0"

__all__ = [
    "AdaGrad", "AdaGradSqr", "Adam", "AdamSqr", "BatchEval", "BatchSchedule",
    "CubicSearchResult", "FixedDiag", "Hutchinson", "Identity", "LogisticLoss",
    "METHOD_NAMES", "NonlinearLeastSquares", "PcgOutcome", "RunConfig",
    "SaniaClassifier", "ScalingVector", "SparseDataset", "StepContext",
    "StepResult", "TrainTrace", "batches", "build_objective",
    "cubic_kappa_search", "cubic_polyak_step", "cubic_robustness", "eig_sym",
    "generate_synthetic", "grad_reg_newton_step", "invariance_report",
    "load_libsvm", "lr_sweep", "parse_libsvm", "pcg", "preconditioned_sgd_step",
    "psps_step", "run", "sania_lambda", "sania_pcg_convex_step",
    "sania_pcg_nonconvex_step", "sania_qn_step", "scale_columns",
    "serialize_libsvm", "sgd_step", "solve_shifted_diag", "sps_step",
]
