"""JSON configuration blocks.

Every block is a frozen dataclass whose fields default to ``None`` ("not
given"). A config file is parsed strictly, command-line flags are merged over
it and the consumers fill in whatever is still unset, so the precedence is
defaults < file < flags.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, ClassVar

import numpy as np

from . import oracle
from .dynamics import Algorithm, Mode, RegSchedule, RunConfig, SampleKind, SampleSchedule
from .errors import ConfigError, UnsupportedLossError, WrongRegimeError
from .experiments import ExperimentName, ExperimentSpec, TolerancePolicy, default_spec
from .loss import QuadraticLoss, Regularizer, RegularizerKind
from .shift_model import LinearShiftModel, ScalarShiftModel, ShiftModel, as_linear

logger = logging.getLogger(__name__)

DEFAULT_HORIZON = 100
DEFAULT_SEED = 0
DEFAULT_THREADS = 1


def _key(f: dataclasses.Field) -> str:
    return f.metadata.get("key", f.name)


def _plain(value):
    if isinstance(value, (tuple, list)):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    return value


class _Block:
    """Strict ``from_dict``/``to_dict`` and override merging shared by all blocks."""

    @classmethod
    def from_dict(cls, data, path: str):
        if not isinstance(data, dict):
            msg = f"'{path}' must be a JSON object"
            raise ConfigError(msg)
        names = {_key(f): f.name for f in fields(cls)}
        for key in data:
            if key not in names:
                msg = f"unknown config key '{path}.{key}'"
                raise ConfigError(msg)
        return cls(**{names[key]: value for key, value in data.items()})

    def to_dict(self) -> dict:
        return {
            _key(f): _plain(getattr(self, f.name))
            for f in fields(self)
            if getattr(self, f.name) is not None
        }

    def merged(self, other):
        """``self`` with every field that ``other`` sets replaced."""
        changes = {f.name: getattr(other, f.name) for f in fields(other) if getattr(other, f.name) is not None}
        return dataclasses.replace(self, **changes)

    def is_empty(self) -> bool:
        return all(getattr(self, f.name) is None for f in fields(self))


def _number(value, path: str) -> float:
    try:
        return float(value)
    except (TypeError, ValueError) as exc:
        msg = f"'{path}' must be a number, got {value!r}"
        raise ConfigError(msg) from exc


def _integer(value, path: str) -> int:
    number = _number(value, path)
    if number != int(number):
        msg = f"'{path}' must be an integer, got {value!r}"
        raise ConfigError(msg)
    return int(number)


@dataclass(frozen=True)
class ShiftBlock(_Block):
    """``shift``: scalars for d = 1, or a vector ``mu0`` with matrix ``sigma0``/``mu`` and an order-3 ``sigma``."""

    d: int | None = None
    sigma0: Any = None
    sigma: Any = None
    mu0: Any = None
    mu: Any = None
    base: str | None = None

    def to_model(self) -> ShiftModel:
        filled = DEFAULT_SHIFT.merged(self)
        mu0 = np.atleast_1d(np.asarray(filled.mu0, dtype=np.float64))
        d = int(filled.d) if filled.d is not None else mu0.shape[0]
        if mu0.shape[0] == 1 and d > 1:
            mu0 = np.full(d, mu0[0])
        scalar = all(np.size(v) == 1 for v in (filled.sigma0, filled.sigma, filled.mu))
        if d == 1 and scalar and _number(np.ravel(filled.sigma0)[0], "shift.sigma0") > 0:
            return ScalarShiftModel(
                float(np.ravel(filled.sigma0)[0]),
                float(np.ravel(filled.sigma)[0]),
                float(mu0[0]),
                float(np.ravel(filled.mu)[0]),
                filled.base,
            )
        return LinearShiftModel(filled.sigma0, filled.sigma, mu0, filled.mu, filled.base)

    @classmethod
    def of(cls, model: ShiftModel) -> ShiftBlock:
        """The block describing a d = 1 model."""
        if isinstance(model, ScalarShiftModel):
            return cls(1, model.sigma0, model.sigma, model.mu0, model.mu, model.base.kind.value)
        linear = as_linear(model)
        if linear.d != 1:
            msg = "only d = 1 models can be written as scalar shift blocks"
            raise ConfigError(msg)
        return cls(
            1,
            float(linear.sigma0[0, 0]),
            float(linear.sigma_map[0, 0, 0]),
            float(linear.mu0[0]),
            float(linear.mu_map[0, 0]),
            linear.base.kind.value,
        )


DEFAULT_SHIFT = ShiftBlock(d=None, sigma0=1.0, sigma=0.0, mu0=1.0, mu=0.5, base="gaussian")


@dataclass(frozen=True)
class LossBlock(_Block):
    """``loss``: ``kind`` is ``squared`` (A = I) or ``mahalanobis`` with matrix or scalar ``a``.

    ``quadratic`` is accepted as another name for ``mahalanobis``.
    """

    KINDS: ClassVar[tuple[str, ...]] = ("squared", "mahalanobis", "quadratic")

    kind: str | None = None
    a: Any = None

    def to_loss(self, d: int) -> QuadraticLoss:
        kind = self.kind or ("mahalanobis" if self.a is not None else "squared")
        if kind not in self.KINDS:
            msg = f"loss '{kind}' has no closed-form retraining step; use squared or mahalanobis"
            raise UnsupportedLossError(msg)
        if kind == "squared" or self.a is None:
            if self.a is not None:
                msg = "'loss.a' is only used with loss kind 'mahalanobis'"
                raise ConfigError(msg)
            return QuadraticLoss.squared(d)
        a = np.asarray(self.a, dtype=np.float64)
        if a.size == 1:
            a = a.reshape(()) * np.eye(d)
        return QuadraticLoss(a)


@dataclass(frozen=True)
class RunBlock(_Block):
    """``run``: algorithm, schedules and horizon of a trajectory.

    ``lambda`` is a number, a list (custom ``lambda_0, lambda_1, ...``),
    ``"star"`` for the oracle ridge weight, ``"t"`` or ``"t+1"``.
    """

    algo: str | None = None
    reg: str | None = None
    lam: Any = field(default=None, metadata={"key": "lambda"})
    horizon: int | None = field(default=None, metadata={"key": "T"})
    samples: Any = field(default=None, metadata={"key": "N"})
    sample_schedule: str | None = None
    mode: str | None = None
    theta0: Any = None

    def algorithm(self) -> Algorithm:
        try:
            return Algorithm(self.algo or Algorithm.RRM.value)
        except ValueError as exc:
            msg = f"unknown algorithm '{self.algo}'; use one of {', '.join(a.value for a in Algorithm)}"
            raise ConfigError(msg) from exc

    def regularizer(self) -> Regularizer:
        default = RegularizerKind.RIDGE if self.lam == "star" else RegularizerKind.PROXIMAL
        try:
            return Regularizer(self.reg or default)
        except ValueError as exc:
            msg = f"unknown regularizer '{self.reg}'; use proximal or ridge"
            raise ConfigError(msg) from exc

    def regularization(self, model: ShiftModel) -> RegSchedule:
        if not self.algorithm().regularized:
            return RegSchedule.none()
        reg = self.regularizer()
        lam = self.lam
        if lam is None:
            msg = "'run.lambda' is required for regularized algorithms"
            raise ConfigError(msg)
        if isinstance(lam, (list, tuple)):
            return RegSchedule.custom([_number(v, "run.lambda") for v in lam], reg)
        if isinstance(lam, str):
            token = lam.strip().lower().replace(" ", "")
            if token == "star":
                return RegSchedule.constant(_lambda_star(model), reg)
            if token == "t":
                return RegSchedule.linear(0.0, reg)
            if token == "t+1":
                return RegSchedule.linear(1.0, reg)
        return RegSchedule.constant(_number(lam, "run.lambda"), reg)

    def sample_schedule_value(self) -> SampleSchedule:
        try:
            kind = SampleKind(self.sample_schedule or SampleKind.CONSTANT.value)
        except ValueError as exc:
            msg = f"unknown sample schedule '{self.sample_schedule}'"
            raise ConfigError(msg) from exc
        if kind is SampleKind.CUSTOM:
            if not isinstance(self.samples, (list, tuple)):
                msg = "a custom sample schedule needs 'run.N' as a list"
                raise ConfigError(msg)
            return SampleSchedule.custom([_number(v, "run.N") for v in self.samples])
        n = 1.0 if self.samples is None else _number(self.samples, "run.N")
        if kind is SampleKind.LOG_GROWTH:
            return SampleSchedule.log_growth()
        if kind is SampleKind.INVERSE_T:
            return SampleSchedule.inverse_t(n)
        return SampleSchedule.constant(n)

    def horizon_value(self) -> int:
        return DEFAULT_HORIZON if self.horizon is None else _integer(self.horizon, "run.T")

    def mode_value(self, algorithm: Algorithm, samples: SampleSchedule, horizon: int) -> Mode:
        if self.mode is not None:
            try:
                return Mode(self.mode)
            except ValueError as exc:
                msg = f"unknown mode '{self.mode}'; use exact, integer or effective"
                raise ConfigError(msg) from exc
        if not algorithm.empirical:
            return Mode.EXACT
        return Mode.INTEGER if samples.integral(horizon) else Mode.EFFECTIVE

    def to_run_config(self, model: ShiftModel, seed: int) -> RunConfig:
        algorithm = self.algorithm()
        samples = self.sample_schedule_value()
        horizon = self.horizon_value()
        theta0 = None if self.theta0 is None else np.atleast_1d(np.asarray(self.theta0, dtype=np.float64))
        return RunConfig(
            horizon=horizon,
            theta0=theta0,
            seed=seed,
            mode=self.mode_value(algorithm, samples, horizon),
            samples=samples,
            regularization=self.regularization(model),
        )


def _lambda_star(model: ShiftModel) -> float:
    if not isinstance(model, ScalarShiftModel):
        msg = "lambda 'star' is defined for the scalar shift model with sigma0 > 0"
        raise WrongRegimeError(msg)
    value, valid = oracle.lambda_star(model)
    if not valid:
        msg = f"lambda* = {value} is not a valid ridge weight for this instance"
        raise WrongRegimeError(msg)
    logger.info("lambda* = %.12g", value)
    return value


@dataclass(frozen=True)
class ExperimentBlock(_Block):
    """``experiment``: ``name`` is the check run when the command line names none."""

    name: str | None = None
    replications: int | None = field(default=None, metadata={"key": "reps"})
    mc_samples: int | None = None
    horizons: Any = None
    rel_tol: float | None = None
    se_mult: float | None = None
    abs_tol: float | None = None

    def to_spec(
        self,
        name: ExperimentName | str,
        shift: ShiftBlock,
        run: RunBlock,
        loss: LossBlock,
        seed: int,
        threads: int,
    ) -> ExperimentSpec:
        """Default spec of ``name`` with every configured value applied."""
        spec = default_spec(name)
        changes: dict[str, Any] = {"seed": seed, "threads": threads}
        if not shift.is_empty():
            changes["model"] = ShiftBlock.of(spec.model).merged(shift).to_model()
        d = as_linear(changes.get("model", spec.model)).d
        if not loss.is_empty():
            changes["loss"] = loss.to_loss(d)
        if self.replications is not None:
            changes["replications"] = _integer(self.replications, "experiment.reps")
        if self.mc_samples is not None:
            changes["mc_samples"] = _integer(self.mc_samples, "experiment.mc_samples")
        if self.horizons is not None:
            changes["horizons"] = tuple(_integer(t, "experiment.horizons") for t in self.horizons)
        if run.horizon is not None:
            changes["horizon"] = _integer(run.horizon, "run.T")
        if run.samples is not None:
            changes["samples"] = _number(run.samples, "run.N")
        if run.theta0 is not None:
            changes["theta0"] = run.theta0
        tolerance = {
            key: _number(getattr(self, key), f"experiment.{key}")
            for key in ("rel_tol", "se_mult", "abs_tol")
            if getattr(self, key) is not None
        }
        if tolerance:
            changes["tolerance"] = dataclasses.replace(TolerancePolicy(), **tolerance)
        return dataclasses.replace(spec, **changes)


@dataclass(frozen=True)
class SweepBlock(_Block):
    """``sweep``: ``grid`` maps parameter names to value lists, ``outputs`` names the columns."""

    PARAMETERS: ClassVar[tuple[str, ...]] = ("sigma0", "sigma", "mu0", "mu", "N", "T")
    OUTPUTS: ClassVar[tuple[str, ...]] = (
        "theta_ps",
        "theta_po",
        "gap",
        "relative_gap",
        "lambda_star",
        "lambda_star_valid",
        "pr_at_ps",
        "pr_at_po",
        "plateau",
        "final_mse",
        "contractive",
    )
    DEFAULT_OUTPUTS: ClassVar[tuple[str, ...]] = ("theta_ps", "theta_po", "gap", "relative_gap", "lambda_star")

    grid: Any = None
    outputs: Any = None

    def checked_grid(self) -> dict[str, list[float]]:
        if not isinstance(self.grid, dict) or not self.grid:
            msg = "the sweep needs a non-empty 'sweep.grid'"
            raise ConfigError(msg)
        grid = {}
        for key, values in self.grid.items():
            if key not in self.PARAMETERS:
                msg = f"unknown sweep parameter 'sweep.grid.{key}'; use one of {', '.join(self.PARAMETERS)}"
                raise ConfigError(msg)
            values = list(values) if isinstance(values, (list, tuple)) else [values]
            if not values:
                msg = f"'sweep.grid.{key}' is empty"
                raise ConfigError(msg)
            grid[key] = [_number(v, f"sweep.grid.{key}") for v in values]
        return grid

    def checked_outputs(self) -> list[str]:
        outputs = list(self.outputs) if self.outputs is not None else list(self.DEFAULT_OUTPUTS)
        for name in outputs:
            if name not in self.OUTPUTS:
                msg = f"unknown sweep output '{name}'; use one of {', '.join(self.OUTPUTS)}"
                raise ConfigError(msg)
        return outputs


@dataclass(frozen=True)
class OutputBlock(_Block):
    FORMATS: ClassVar[tuple[str, ...]] = ("csv", "json")

    path: str | None = None
    format: str | None = None

    def format_or(self, default: str) -> str:
        value = self.format or default
        if value not in self.FORMATS:
            msg = f"unknown output format '{value}'; use csv or json"
            raise ConfigError(msg)
        return value


_BLOCKS: dict[str, type[_Block]] = {
    "shift": ShiftBlock,
    "loss": LossBlock,
    "run": RunBlock,
    "experiment": ExperimentBlock,
    "sweep": SweepBlock,
    "output": OutputBlock,
}


@dataclass(frozen=True)
class CliConfig:
    shift: ShiftBlock = field(default_factory=ShiftBlock)
    loss: LossBlock = field(default_factory=LossBlock)
    run: RunBlock = field(default_factory=RunBlock)
    experiment: ExperimentBlock = field(default_factory=ExperimentBlock)
    sweep: SweepBlock = field(default_factory=SweepBlock)
    output: OutputBlock = field(default_factory=OutputBlock)
    seed: int | None = None
    threads: int | None = None

    @classmethod
    def from_dict(cls, data) -> CliConfig:
        if not isinstance(data, dict):
            msg = "the config file must hold a JSON object"
            raise ConfigError(msg)
        values: dict[str, Any] = {}
        for key, value in data.items():
            if key in _BLOCKS:
                values[key] = _BLOCKS[key].from_dict(value, key)
            elif key in ("seed", "threads"):
                values[key] = _integer(value, key)
            else:
                msg = f"unknown config key '{key}'"
                raise ConfigError(msg)
        return cls(**values)

    @classmethod
    def load(cls, path: str | Path) -> CliConfig:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            msg = f"cannot read config file {path}: {exc}"
            raise ConfigError(msg) from exc
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            msg = f"config file {path} is not valid JSON: {exc}"
            raise ConfigError(msg) from exc
        return cls.from_dict(data)

    def merged(self, other: CliConfig) -> CliConfig:
        """Overrides from ``other`` (typically the command-line flags) applied on top of ``self``."""
        changes: dict[str, Any] = {name: getattr(self, name).merged(getattr(other, name)) for name in _BLOCKS}
        for name in ("seed", "threads"):
            if getattr(other, name) is not None:
                changes[name] = getattr(other, name)
        return dataclasses.replace(self, **changes)

    @property
    def seed_value(self) -> int:
        return DEFAULT_SEED if self.seed is None else self.seed

    @property
    def threads_value(self) -> int:
        return DEFAULT_THREADS if self.threads is None else self.threads

    def to_dict(self) -> dict:
        """The configuration written into artifacts.

        ``threads`` is left out: it changes speed, never results, and two runs
        that differ only in thread count write identical files.
        """
        data: dict[str, Any] = {
            name: getattr(self, name).to_dict() for name in _BLOCKS if not getattr(self, name).is_empty()
        }
        data["seed"] = self.seed_value
        return data
