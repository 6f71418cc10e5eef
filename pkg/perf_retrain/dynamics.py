"""Retraining procedures under a linear shift.

* R-RM       ``theta_t = argmin E_{D(theta_{t-1})} l``
* R-ERM      ``theta_t = argmin 1/N_t sum_i l(z_i)``, ``z_i ~ D(theta_{t-1})``
* Reg-R-RM   R-RM plus ``lambda_{t-1} R(theta, theta_{t-1})``
* Reg-R-ERM  R-ERM plus ``lambda_{t-1} R(theta, theta_{t-1})``

With a quadratic loss every step is closed form, so a trajectory only needs
the (sample) mean of the data drawn at ``theta_{t-1}``. The engine
:func:`run_batch` advances many replications at once; each replication reads
only its own stream.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from . import oracle
from .errors import (
    DimensionMismatchError,
    NonContractiveError,
    ScheduleModeMismatchError,
    UnsupportedLossError,
)
from .loss import QuadraticLoss, Regularizer
from .rng import RngStream, check_seed
from .shift_model import LinearShiftModel, ScalarShiftModel, ShiftModel, as_linear

logger = logging.getLogger(__name__)

DIVERGENCE_NORM = 1e12


class Mode(str, Enum):
    EXACT = "exact"
    INTEGER = "integer"
    EFFECTIVE = "effective"


class Algorithm(str, Enum):
    RRM = "rrm"
    RERM = "rerm"
    REG_RRM = "reg-rrm"
    REG_RERM = "reg-rerm"

    @property
    def empirical(self) -> bool:
        return self in (Algorithm.RERM, Algorithm.REG_RERM)

    @property
    def regularized(self) -> bool:
        return self in (Algorithm.REG_RRM, Algorithm.REG_RERM)


class SampleKind(str, Enum):
    CONSTANT = "constant"
    LOG_GROWTH = "log"
    INVERSE_T = "inverse-t"
    CUSTOM = "custom"


@dataclass(frozen=True)
class SampleSchedule:
    """Number of samples ``N_t`` drawn at step ``t >= 1``.

    ``n`` is the constant size, or ``N_1`` for ``INVERSE_T`` (``N_t = N_1 / t``).
    ``LOG_GROWTH`` is ``max(1, ceil(log(t + 1)))``. ``values[t-1]`` is ``N_t``
    for ``CUSTOM``.
    """

    kind: SampleKind = SampleKind.CONSTANT
    n: float = 1
    values: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", SampleKind(self.kind))
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if self.n <= 0:
            msg = f"sample size must be positive, got {self.n}"
            raise ValueError(msg)
        if any(v <= 0 for v in self.values):
            msg = "custom sample sizes must be positive"
            raise ValueError(msg)
        if self.kind is SampleKind.CUSTOM and not self.values:
            msg = "a custom sample schedule needs values"
            raise ValueError(msg)

    @classmethod
    def constant(cls, n: float) -> SampleSchedule:
        return cls(SampleKind.CONSTANT, n)

    @classmethod
    def log_growth(cls) -> SampleSchedule:
        return cls(SampleKind.LOG_GROWTH)

    @classmethod
    def inverse_t(cls, n1: float = 1.0) -> SampleSchedule:
        return cls(SampleKind.INVERSE_T, n1)

    @classmethod
    def custom(cls, values: Sequence[float]) -> SampleSchedule:
        return cls(SampleKind.CUSTOM, values=tuple(values))

    def at(self, t: int) -> float:
        if t < 1:
            msg = f"sample sizes are indexed from t=1, got t={t}"
            raise ValueError(msg)
        if self.kind is SampleKind.CONSTANT:
            return float(self.n)
        if self.kind is SampleKind.LOG_GROWTH:
            return float(max(1, math.ceil(math.log(t + 1))))
        if self.kind is SampleKind.INVERSE_T:
            return self.n / t
        if t > len(self.values):
            msg = f"custom sample schedule has {len(self.values)} entries, step {t} requested"
            raise ValueError(msg)
        return self.values[t - 1]

    def sizes(self, horizon: int) -> np.ndarray:
        """``N_1 .. N_T``."""
        return np.array([self.at(t) for t in range(1, horizon + 1)], dtype=np.float64)

    def integral(self, horizon: int) -> bool:
        if self.kind is SampleKind.INVERSE_T:
            return False
        sizes = self.sizes(horizon)
        return bool(np.all(sizes == np.floor(sizes)))


class RegKind(str, Enum):
    NONE = "none"
    CONSTANT = "constant"
    LINEAR = "linear"
    CUSTOM = "custom"


@dataclass(frozen=True)
class RegSchedule:
    """Regularization weights ``lambda_t`` for ``t >= 0``; step ``t`` uses ``lambda_{t-1}``.

    ``LINEAR`` is ``lambda_t = t + offset``: ``offset=0`` gives ``lambda_t = t``,
    ``offset=1`` gives ``lambda_t = t + 1``.
    """

    kind: RegKind = RegKind.NONE
    value: float = 0.0
    offset: float = 0.0
    values: tuple[float, ...] = ()
    reg: Regularizer = field(default_factory=Regularizer)

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", RegKind(self.kind))
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if not isinstance(self.reg, Regularizer):
            object.__setattr__(self, "reg", Regularizer(self.reg))
        if self.value < 0 or self.offset < 0 or any(v < 0 for v in self.values):
            msg = "regularization weights must be non-negative"
            raise ValueError(msg)
        if self.kind is RegKind.CUSTOM and not self.values:
            msg = "a custom regularization schedule needs values"
            raise ValueError(msg)

    @classmethod
    def none(cls) -> RegSchedule:
        return cls()

    @classmethod
    def constant(cls, value: float, reg: Regularizer | str = "proximal") -> RegSchedule:
        return cls(RegKind.CONSTANT, value=value, reg=Regularizer(reg) if isinstance(reg, str) else reg)

    @classmethod
    def linear(cls, offset: float = 0.0, reg: Regularizer | str = "proximal") -> RegSchedule:
        return cls(RegKind.LINEAR, offset=offset, reg=Regularizer(reg) if isinstance(reg, str) else reg)

    @classmethod
    def custom(cls, values: Sequence[float], reg: Regularizer | str = "proximal") -> RegSchedule:
        return cls(RegKind.CUSTOM, values=tuple(values), reg=Regularizer(reg) if isinstance(reg, str) else reg)

    def at(self, t: int) -> float:
        if self.kind is RegKind.NONE:
            return 0.0
        if self.kind is RegKind.CONSTANT:
            return float(self.value)
        if self.kind is RegKind.LINEAR:
            return float(t) + self.offset
        if t >= len(self.values):
            msg = f"custom regularization schedule has {len(self.values)} entries, lambda_{t} requested"
            raise ValueError(msg)
        return self.values[t]

    def weights(self, horizon: int) -> np.ndarray:
        """``lambda_0 .. lambda_{T-1}``, the weights used by steps 1..T."""
        return np.array([self.at(t) for t in range(horizon)], dtype=np.float64)


@dataclass(frozen=True, eq=False)
class RunConfig:
    horizon: int
    theta0: np.ndarray | None = None
    seed: int = 0
    mode: Mode = Mode.EXACT
    samples: SampleSchedule = field(default_factory=SampleSchedule)
    regularization: RegSchedule = field(default_factory=RegSchedule)
    record_metrics: bool = True
    replication: int = 0

    def __post_init__(self) -> None:
        if self.horizon < 1:
            msg = f"horizon T must be at least 1, got {self.horizon}"
            raise ValueError(msg)
        object.__setattr__(self, "seed", check_seed(self.seed))
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.theta0 is not None:
            object.__setattr__(self, "theta0", np.atleast_1d(np.asarray(self.theta0, dtype=np.float64)))


@dataclass(frozen=True)
class StepRecord:
    t: int
    n_t: float | None
    lambda_t: float | None
    pr: float | None = None
    dist2_ps: float | None = None
    dist2_po: float | None = None


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Iterates ``theta_0 .. theta_T`` (fewer when the run diverged and stopped)."""

    algorithm: Algorithm
    iterates: np.ndarray
    per_step: tuple[StepRecord, ...]
    diverged: bool

    @property
    def final(self) -> np.ndarray:
        return self.iterates[-1]


@dataclass(frozen=True, eq=False)
class BatchResult:
    """Iterates of several replications, shape ``(R, T + 1, d)``.

    ``diverged_at[r]`` is the first step whose iterate left the
    ``DIVERGENCE_NORM`` ball, or -1. Diverged rows keep that iterate.
    """

    replications: tuple[int, ...]
    iterates: np.ndarray
    diverged_at: np.ndarray

    @property
    def diverged(self) -> np.ndarray:
        return self.diverged_at >= 0

    def sq_error(self, reference: np.ndarray) -> np.ndarray:
        """``||theta_t - reference||^2``, shape ``(R, T + 1)``."""
        return np.sum((self.iterates - reference) ** 2, axis=-1)


def _check_inputs(algorithm: Algorithm, model: LinearShiftModel, loss, config: RunConfig) -> None:
    if not isinstance(loss, QuadraticLoss):
        msg = f"closed-form retraining steps need a QuadraticLoss, got {type(loss).__name__}"
        raise UnsupportedLossError(msg)
    if loss.d != model.d:
        msg = f"loss has dimension {loss.d}, model has {model.d}"
        raise DimensionMismatchError(msg)
    if config.theta0 is not None and config.theta0.shape != (model.d,):
        msg = f"theta0 must have dimension {model.d}, got shape {config.theta0.shape}"
        raise DimensionMismatchError(msg)
    if algorithm.empirical and config.mode is Mode.EXACT:
        msg = f"{algorithm.value} draws samples; use mode 'integer' or 'effective'"
        raise ScheduleModeMismatchError(msg)
    if not algorithm.empirical and config.mode is not Mode.EXACT:
        msg = f"{algorithm.value} uses exact expectations; mode must be 'exact'"
        raise ScheduleModeMismatchError(msg)
    if config.mode is Mode.INTEGER and not config.samples.integral(config.horizon):
        msg = (
            f"sample schedule '{config.samples.kind.value}' gives non-integer N_t; "
            "use mode 'effective'"
        )
        raise ScheduleModeMismatchError(msg)


def _draw_noise(
    model: LinearShiftModel, config: RunConfig, sizes: np.ndarray, replication: int
) -> np.ndarray:
    """Base-noise average added at each step, shape ``(T, d)``.

    Integer mode returns the mean of ``N_t`` base draws; effective mode returns
    a Gaussian with covariance ``I / N_t``. Pushed through ``Sigma0 + Sigma(theta)``
    either becomes the deviation of the sample mean from ``mean_of(theta)``.
    """
    rng = RngStream(config.seed, replication).generator()
    if config.mode is Mode.EFFECTIVE:
        return rng.standard_normal((sizes.shape[0], model.d)) / np.sqrt(sizes)[:, None]
    counts = sizes.astype(np.int64)
    z0 = model.base.draw(rng, int(counts.sum()), model.d)
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    return np.add.reduceat(z0, starts, axis=0) / counts[:, None]


def run_batch(
    algorithm: Algorithm | str,
    model: ShiftModel,
    loss: QuadraticLoss,
    config: RunConfig,
    replications: Sequence[int],
) -> BatchResult:
    algorithm = Algorithm(algorithm)
    linear = as_linear(model)
    _check_inputs(algorithm, linear, loss, config)
    horizon, d, count = config.horizon, linear.d, len(replications)

    lambdas = config.regularization.weights(horizon) if algorithm.regularized else np.zeros(horizon)
    reg = config.regularization.reg
    noise = None
    if algorithm.empirical:
        sizes = config.samples.sizes(horizon)
        noise = np.stack([_draw_noise(linear, config, sizes, r) for r in replications])

    iterates = np.empty((count, horizon + 1, d))
    iterates[:, 0] = np.zeros(d) if config.theta0 is None else config.theta0
    diverged_at = np.full(count, -1, dtype=np.int64)
    mean_shift = linear.is_mean_shift

    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(1, horizon + 1):
            previous = iterates[:, t - 1]
            zbar = linear.mu0 + np.einsum("ij,rj->ri", linear.mu_map, previous)
            if noise is not None:
                if mean_shift:
                    zbar = zbar + np.einsum("ij,rj->ri", linear.sigma0, noise[:, t - 1])
                else:
                    scale = linear.sigma0 + np.einsum("ijk,rk->rij", linear.sigma_map, previous)
                    zbar = zbar + np.einsum("rij,rj->ri", scale, noise[:, t - 1])
            if algorithm.regularized:
                current = loss.regularized_step(zbar, lambdas[t - 1], previous, reg)
            else:
                current = zbar
            frozen = diverged_at >= 0
            current = np.where(frozen[:, None], previous, current)
            norms = np.linalg.norm(current, axis=1)
            newly = ~frozen & ~(norms <= DIVERGENCE_NORM)
            diverged_at[newly] = t
            iterates[:, t] = current
            if np.all(diverged_at >= 0):
                iterates[:, t + 1 :] = current[:, None, :]
                break

    if np.any(diverged_at >= 0):
        logger.warning(
            "%s: %d of %d replications left the ||theta|| <= %g ball",
            algorithm.value,
            int(np.sum(diverged_at >= 0)),
            count,
            DIVERGENCE_NORM,
        )
    return BatchResult(tuple(int(r) for r in replications), iterates, diverged_at)


def reference_points(model: ShiftModel, loss: QuadraticLoss) -> tuple[np.ndarray | None, np.ndarray | None]:
    """``(theta_PS, theta_PO)`` when closed forms exist, else ``None`` entries."""
    linear = as_linear(model)
    try:
        ps = oracle.theta_ps(linear)
    except NonContractiveError:
        return None, None
    if linear.is_mean_shift:
        return ps, ps
    if linear.d == 1 and linear.sigma0[0, 0] > 0 and linear.mu_map[0, 0] < 1:
        report = oracle.solve_scalar(ScalarShiftModel.from_linear(linear))
        return ps, np.array([report.theta_po])
    return ps, None


def _records(
    model: LinearShiftModel,
    loss: QuadraticLoss,
    config: RunConfig,
    algorithm: Algorithm,
    iterates: np.ndarray,
) -> tuple[StepRecord, ...]:
    ps, po = reference_points(model, loss) if config.record_metrics else (None, None)
    records = []
    for t, theta in enumerate(iterates):
        n_t = lam = None
        if t >= 1:
            n_t = config.samples.at(t) if algorithm.empirical else None
            lam = config.regularization.at(t - 1) if algorithm.regularized else 0.0
        if not config.record_metrics:
            records.append(StepRecord(t, n_t, lam))
            continue
        with np.errstate(over="ignore", invalid="ignore"):
            records.append(
                StepRecord(
                    t,
                    n_t,
                    lam,
                    pr=oracle.pr_analytic(model, loss, theta),
                    dist2_ps=None if ps is None else float(np.sum((theta - ps) ** 2)),
                    dist2_po=None if po is None else float(np.sum((theta - po) ** 2)),
                )
            )
    return tuple(records)


def run(
    algorithm: Algorithm | str,
    model: ShiftModel,
    loss: QuadraticLoss,
    config: RunConfig,
) -> Trajectory:
    """One trajectory on replication ``config.replication``, truncated at divergence."""
    algorithm = Algorithm(algorithm)
    linear = as_linear(model)
    batch = run_batch(algorithm, linear, loss, config, [config.replication])
    stop = int(batch.diverged_at[0])
    iterates = batch.iterates[0] if stop < 0 else batch.iterates[0, : stop + 1]
    logger.debug("%s: %d steps, final theta %s", algorithm.value, iterates.shape[0] - 1, iterates[-1])
    return Trajectory(
        algorithm=algorithm,
        iterates=iterates,
        per_step=_records(linear, loss, config, algorithm, iterates),
        diverged=stop >= 0,
    )


def run_rrm(model: ShiftModel, loss: QuadraticLoss, config: RunConfig) -> Trajectory:
    return run(Algorithm.RRM, model, loss, config)


def run_rerm(model: ShiftModel, loss: QuadraticLoss, config: RunConfig) -> Trajectory:
    return run(Algorithm.RERM, model, loss, config)


def run_reg_rrm(model: ShiftModel, loss: QuadraticLoss, config: RunConfig) -> Trajectory:
    return run(Algorithm.REG_RRM, model, loss, config)


def run_reg_rerm(model: ShiftModel, loss: QuadraticLoss, config: RunConfig) -> Trajectory:
    return run(Algorithm.REG_RERM, model, loss, config)
