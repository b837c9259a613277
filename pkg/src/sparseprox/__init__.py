"""Sparse recovery with the L1 minus alpha*L2 penalty.

The package splits into a closed-form prox core (prox), problem and matrix
generators (problems), iterative solvers (solvers), planted stationary
points (construct), benchmark campaigns (bench), and figure rendering
(plots).  The sparseprox console script fronts all of it.
"""

from .bench import (
    ExperimentSpec,
    ResultRow,
    ResultTable,
    mean_mse,
    read_csv,
    run_experiment,
    success_rates,
    trial_seed,
    write_csv,
)
from .construct import ConstructionResult, construct_instance, pocs_sign_vector
from .problems import (
    ConvergenceError,
    ProblemInstance,
    gen_gaussian,
    gen_oversampled_dct,
    gen_partial_dct,
    gen_sparse_signal,
    lipschitz_constant,
    make_instance,
    oracle_mse,
    spectral_normalize,
)
from .prox import PenaltySpec, ProxResult, eval_penalty, prox_l1_al2, soft_shrink
from .solvers import (
    ScheduleSpec,
    SolverConfig,
    SolverTrace,
    admm_solve,
    check_stationarity,
    dca_solve,
    fbs_accelerated,
    fbs_solve,
    gradient,
    l1_init,
    rel_error,
    schedule_value,
    solve,
)

__version__ = "0.1.0"

__all__ = [
    "ConstructionResult",
    "ConvergenceError",
    "ExperimentSpec",
    "PenaltySpec",
    "ProblemInstance",
    "ProxResult",
    "ResultRow",
    "ResultTable",
    "ScheduleSpec",
    "SolverConfig",
    "SolverTrace",
    "admm_solve",
    "check_stationarity",
    "construct_instance",
    "dca_solve",
    "eval_penalty",
    "fbs_accelerated",
    "fbs_solve",
    "gen_gaussian",
    "gen_oversampled_dct",
    "gen_partial_dct",
    "gen_sparse_signal",
    "gradient",
    "l1_init",
    "lipschitz_constant",
    "make_instance",
    "mean_mse",
    "oracle_mse",
    "pocs_sign_vector",
    "prox_l1_al2",
    "read_csv",
    "rel_error",
    "run_experiment",
    "schedule_value",
    "solve",
    "spectral_normalize",
    "success_rates",
    "trial_seed",
    "write_csv",
]
