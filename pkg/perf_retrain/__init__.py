"""Retraining under performative distribution shift.

Linear shift models, quadratic losses, closed-form solution concepts, the
four retraining procedures and Monte Carlo checks of their behaviour.
"""

from __future__ import annotations

from ._version import __version__, version_info
from .dynamics import (
    Algorithm,
    BatchResult,
    Mode,
    RegSchedule,
    RunConfig,
    SampleSchedule,
    StepRecord,
    Trajectory,
    run,
    run_batch,
    run_reg_rerm,
    run_reg_rrm,
    run_rerm,
    run_rrm,
)
from .errors import (
    ConfigError,
    DimensionMismatchError,
    NonContractiveError,
    RetrainError,
    ScheduleModeMismatchError,
    UnsupportedLossError,
    WrongRegimeError,
)
from .experiments import (
    ExperimentName,
    ExperimentSpec,
    StatSummary,
    TheoremCheckResult,
    TolerancePolicy,
    Verdict,
    default_spec,
    run_all,
    run_experiment,
    run_replicated,
)
from .loss import QuadraticLoss, Regularizer
from .oracle import SolutionReport, lambda_star, solve_mean_shift, solve_scalar, theta_ps
from .rng import RngStream
from .shift_model import BaseNoise, LinearShiftModel, NoiseKind, ScalarShiftModel

__all__ = [
    "Algorithm",
    "BaseNoise",
    "BatchResult",
    "ConfigError",
    "DimensionMismatchError",
    "ExperimentName",
    "ExperimentSpec",
    "LinearShiftModel",
    "Mode",
    "NoiseKind",
    "NonContractiveError",
    "QuadraticLoss",
    "RegSchedule",
    "Regularizer",
    "RetrainError",
    "RngStream",
    "RunConfig",
    "SampleSchedule",
    "ScalarShiftModel",
    "ScheduleModeMismatchError",
    "SolutionReport",
    "StatSummary",
    "StepRecord",
    "TheoremCheckResult",
    "TolerancePolicy",
    "Trajectory",
    "UnsupportedLossError",
    "Verdict",
    "WrongRegimeError",
    "__version__",
    "default_spec",
    "lambda_star",
    "run",
    "run_all",
    "run_batch",
    "run_experiment",
    "run_reg_rerm",
    "run_reg_rrm",
    "run_replicated",
    "run_rerm",
    "run_rrm",
    "solve_mean_shift",
    "solve_scalar",
    "theta_ps",
    "version_info",
]
