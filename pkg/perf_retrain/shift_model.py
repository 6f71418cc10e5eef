"""Linear distribution shifts.

A deployed parameter ``theta`` induces the law

    z_theta = (Sigma0 + Sigma(theta)) z0 + mu0 + mu(theta)

where ``z0`` is zero-mean, identity-covariance base noise and both ``Sigma(.)``
and ``mu(.)`` are linear. ``Sigma(.)`` is stored as an order-3 coefficient array
``S`` with ``Sigma(theta)[i, j] = sum_k S[i, j, k] * theta[k]``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Union

import numpy as np

from .errors import DimensionMismatchError
from .rng import RngStream, as_generator

logger = logging.getLogger(__name__)


class NoiseKind(str, Enum):
    GAUSSIAN = "gaussian"
    RADEMACHER = "rademacher"


@dataclass(frozen=True)
class BaseNoise:
    """Law of ``z0``: zero mean, identity covariance."""

    kind: NoiseKind = NoiseKind.GAUSSIAN

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", NoiseKind(self.kind))

    def draw(self, rng: np.random.Generator, n: int, d: int) -> np.ndarray:
        if self.kind is NoiseKind.GAUSSIAN:
            return rng.standard_normal((n, d))
        return 2.0 * rng.integers(0, 2, size=(n, d)).astype(np.float64) - 1.0


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=np.float64)
    array.flags.writeable = False
    return array


def _as_matrix(name: str, value, d: int) -> np.ndarray:
    """A d x d matrix; a single number stands for that multiple of the identity."""
    value = np.asarray(value, dtype=np.float64)
    if value.size == 1:
        return value.reshape(()) * np.eye(d)
    if value.shape != (d, d):
        msg = f"{name} must have shape {(d, d)} for d={d}, got {value.shape}"
        raise DimensionMismatchError(msg)
    return value


@dataclass(frozen=True, eq=False)
class LinearShiftModel:
    """The map ``theta -> D(theta)``.

    Full rank of ``Sigma0 + Sigma(theta)`` is not required at construction;
    sampling is well defined either way and :meth:`is_full_rank` checks a
    visited point on demand.
    """

    sigma0: np.ndarray
    sigma_map: np.ndarray
    mu0: np.ndarray
    mu_map: np.ndarray
    base: BaseNoise = field(default_factory=BaseNoise)

    def __post_init__(self) -> None:
        mu0 = np.atleast_1d(np.asarray(self.mu0, dtype=np.float64))
        if mu0.ndim != 1:
            msg = f"mu0 must be a vector, got shape {mu0.shape}"
            raise DimensionMismatchError(msg)
        d = mu0.shape[0]
        sigma_map = np.asarray(self.sigma_map, dtype=np.float64)
        if sigma_map.size == 1 and d == 1:
            sigma_map = sigma_map.reshape(1, 1, 1)
        elif sigma_map.size == 1 and not sigma_map.any():
            sigma_map = np.zeros((d, d, d))
        if sigma_map.shape != (d, d, d):
            msg = f"sigma_map must have shape {(d, d, d)} for d={d}, got {sigma_map.shape}"
            raise DimensionMismatchError(msg)
        object.__setattr__(self, "mu0", _frozen(mu0))
        object.__setattr__(self, "sigma0", _frozen(_as_matrix("sigma0", self.sigma0, d)))
        object.__setattr__(self, "mu_map", _frozen(_as_matrix("mu_map", self.mu_map, d)))
        object.__setattr__(self, "sigma_map", _frozen(sigma_map))
        if not isinstance(self.base, BaseNoise):
            object.__setattr__(self, "base", BaseNoise(self.base))

    @classmethod
    def mean_shift(
        cls,
        mu0,
        mu_map,
        sigma0=1.0,
        base: BaseNoise | NoiseKind | str = NoiseKind.GAUSSIAN,
    ) -> LinearShiftModel:
        """A shift with ``Sigma(.) = 0``; scalar ``sigma0``/``mu_map`` mean multiples of I."""
        d = np.atleast_1d(np.asarray(mu0)).shape[0]
        base = base if isinstance(base, BaseNoise) else BaseNoise(NoiseKind(base))
        return cls(sigma0, np.zeros((d, d, d)), mu0, mu_map, base)

    @property
    def d(self) -> int:
        return self.mu0.shape[0]

    @property
    def is_mean_shift(self) -> bool:
        return not np.any(self.sigma_map)

    @property
    def mu_norm(self) -> float:
        """Largest singular value of the linear map ``mu``."""
        return float(np.linalg.norm(self.mu_map, 2))

    @property
    def contractive(self) -> bool:
        return self.mu_norm < 1.0

    def check_theta(self, theta) -> np.ndarray:
        theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
        if theta.shape != (self.d,):
            msg = f"theta must have dimension {self.d}, got shape {theta.shape}"
            raise DimensionMismatchError(msg)
        return theta

    def scale_at(self, theta) -> np.ndarray:
        """``Sigma0 + Sigma(theta)``."""
        theta = self.check_theta(theta)
        return self.sigma0 + np.einsum("ijk,k->ij", self.sigma_map, theta)

    def mean_of(self, theta) -> np.ndarray:
        theta = self.check_theta(theta)
        return self.mu0 + np.einsum("ij,j->i", self.mu_map, theta)

    def cov_of(self, theta) -> np.ndarray:
        scale = self.scale_at(theta)
        return scale @ scale.T

    def transform(self, z0: np.ndarray, theta) -> np.ndarray:
        """Push base draws (rows of ``z0``) through the law at ``theta``."""
        scale = self.scale_at(theta)
        return np.einsum("ij,nj->ni", scale, z0) + self.mean_of(theta)

    def sample(self, theta, n: int, stream: RngStream | np.random.Generator) -> np.ndarray:
        if n < 1:
            msg = f"number of samples must be positive, got {n}"
            raise ValueError(msg)
        theta = self.check_theta(theta)
        z0 = self.base.draw(as_generator(stream), n, self.d)
        return self.transform(z0, theta)

    def is_full_rank(self, theta) -> bool:
        rank = np.linalg.matrix_rank(self.scale_at(theta))
        if rank < self.d:
            logger.warning("Sigma0 + Sigma(theta) has rank %d < %d at theta=%s", rank, self.d, theta)
        return bool(rank == self.d)

    def sensitivity_bound(self) -> float:
        """Upper bound on the W1 sensitivity of ``theta -> D(theta)``.

        Uses the coupling through a shared ``z0``:
        ``W1 <= E||Sigma(delta) z0 + mu(delta)|| <= ||mu|| + ||Sigma(delta)||_F``
        and ``||Sigma||`` is taken as the 2 -> Frobenius norm of the map.
        """
        d = self.d
        sigma_norm = float(np.linalg.norm(self.sigma_map.reshape(d * d, d), 2))
        return self.mu_norm + sigma_norm * np.sqrt(d)


@dataclass(frozen=True)
class ScalarShiftModel:
    """``z_theta = (sigma0 + sigma*theta) z0 + mu0 + mu*theta``."""

    sigma0: float
    sigma: float
    mu0: float
    mu: float
    base: BaseNoise = field(default_factory=BaseNoise)

    def __post_init__(self) -> None:
        for name in ("sigma0", "sigma", "mu0", "mu"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not self.sigma0 > 0:
            msg = f"sigma0 must be positive, got {self.sigma0}"
            raise ValueError(msg)
        if self.sigma < 0:
            msg = f"sigma must be non-negative, got {self.sigma}"
            raise ValueError(msg)
        if not isinstance(self.base, BaseNoise):
            object.__setattr__(self, "base", BaseNoise(self.base))

    @property
    def contractive(self) -> bool:
        return abs(self.mu) < 1.0

    @property
    def d(self) -> int:
        return 1

    def to_linear(self) -> LinearShiftModel:
        return LinearShiftModel(
            [[self.sigma0]], [[[self.sigma]]], [self.mu0], [[self.mu]], self.base
        )

    @classmethod
    def from_linear(cls, model: LinearShiftModel) -> ScalarShiftModel:
        if model.d != 1:
            msg = f"a scalar view needs d=1, got d={model.d}"
            raise DimensionMismatchError(msg)
        return cls(
            float(model.sigma0[0, 0]),
            float(model.sigma_map[0, 0, 0]),
            float(model.mu0[0]),
            float(model.mu_map[0, 0]),
            model.base,
        )


ShiftModel = Union[LinearShiftModel, ScalarShiftModel]


def as_linear(model: ShiftModel) -> LinearShiftModel:
    if isinstance(model, ScalarShiftModel):
        return model.to_linear()
    return model


def sample(model: ShiftModel, theta, n: int, stream: RngStream | np.random.Generator) -> np.ndarray:
    """``n`` i.i.d. rows from ``D(theta)``; identical stream and inputs give identical bits."""
    return as_linear(model).sample(theta, n, stream)


def mean_of(model: ShiftModel, theta) -> np.ndarray:
    return as_linear(model).mean_of(theta)


def cov_of(model: ShiftModel, theta) -> np.ndarray:
    return as_linear(model).cov_of(theta)


def sensitivity_bound(model: ShiftModel) -> float:
    return as_linear(model).sensitivity_bound()
