"""Quadratic losses ``l(z; theta) = 1/2 (theta - z)^T A (theta - z)``.

All minimizers used by the retraining procedures are closed form: the
empirical risk minimizer is the sample mean (whatever ``A`` is) and the
regularized one solves ``(A + lam I) theta = A zbar + lam r``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import linalg

from .errors import DimensionMismatchError

SYMMETRY_TOL = 1e-12


class RegularizerKind(str, Enum):
    PROXIMAL = "proximal"
    RIDGE = "ridge"


@dataclass(frozen=True)
class Regularizer:
    """``R(theta, anchor)``: proximal ``1/2||theta - anchor||^2`` or ridge ``1/2||theta||^2``.

    Both are 1-strongly convex in ``theta``.
    """

    kind: RegularizerKind = RegularizerKind.PROXIMAL

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", RegularizerKind(self.kind))

    def center(self, anchor: np.ndarray) -> np.ndarray:
        """The point the regularizer pulls towards."""
        if self.kind is RegularizerKind.PROXIMAL:
            return anchor
        return np.zeros_like(anchor)

    def value(self, theta, anchor) -> float:
        diff = np.atleast_1d(theta) - self.center(np.atleast_1d(anchor))
        return 0.5 * float(diff @ diff)


@dataclass(frozen=True, eq=False)
class QuadraticLoss:
    """Mahalanobis loss with a symmetric positive-definite ``A``.

    ``gamma`` (strong convexity in theta) is the smallest eigenvalue of ``A``,
    ``beta_z`` (smoothness in z) the largest.
    """

    a_mat: np.ndarray

    def __post_init__(self) -> None:
        a = np.atleast_2d(np.asarray(self.a_mat, dtype=np.float64))
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            msg = f"A must be a square matrix, got shape {a.shape}"
            raise DimensionMismatchError(msg)
        if np.max(np.abs(a - a.T), initial=0.0) > SYMMETRY_TOL:
            msg = "A must be symmetric"
            raise ValueError(msg)
        eigenvalues = linalg.eigh(a, eigvals_only=True)
        if eigenvalues[0] <= 0:
            msg = f"A must be positive definite, smallest eigenvalue is {eigenvalues[0]}"
            raise ValueError(msg)
        a.flags.writeable = False
        object.__setattr__(self, "a_mat", a)
        object.__setattr__(self, "_eigenvalues", eigenvalues)

    @classmethod
    def squared(cls, d: int = 1) -> QuadraticLoss:
        return cls(np.eye(d))

    @property
    def d(self) -> int:
        return self.a_mat.shape[0]

    @property
    def gamma(self) -> float:
        return float(self._eigenvalues[0])

    @property
    def beta_z(self) -> float:
        return float(self._eigenvalues[-1])

    @property
    def isotropic_scale(self) -> float | None:
        """``c`` when ``A == c I`` exactly, else ``None``."""
        c = self.a_mat[0, 0]
        if np.array_equal(self.a_mat, c * np.eye(self.d)):
            return float(c)
        return None

    def _check(self, array, name: str) -> np.ndarray:
        array = np.asarray(array, dtype=np.float64)
        if array.ndim == 0:
            array = array.reshape(1)
        if array.shape[-1] != self.d:
            msg = f"{name} must have trailing dimension {self.d}, got shape {array.shape}"
            raise DimensionMismatchError(msg)
        return array

    def value(self, z, theta):
        """Loss of each row of ``z`` at ``theta`` (a float for a single point)."""
        diff = self._check(theta, "theta") - self._check(z, "z")
        values = 0.5 * np.einsum("...i,ij,...j->...", diff, self.a_mat, diff)
        return float(values) if values.ndim == 0 else values

    def grad_theta(self, z, theta) -> np.ndarray:
        diff = self._check(theta, "theta") - self._check(z, "z")
        return np.einsum("ij,...j->...i", self.a_mat, diff)

    def erm_minimizer(self, samples) -> np.ndarray:
        samples = self._samples(samples)
        return samples.mean(axis=0)

    def reg_erm_minimizer(
        self, samples, lam: float, anchor, reg: Regularizer
    ) -> np.ndarray:
        samples = self._samples(samples)
        return self.regularized_step(samples.mean(axis=0), lam, self._check(anchor, "anchor"), reg)

    def regularized_step(
        self, zbar: np.ndarray, lam: float, anchor: np.ndarray, reg: Regularizer
    ) -> np.ndarray:
        """Minimizer of ``loss at zbar + lam R(theta, anchor)``; rows of ``zbar`` are independent problems."""
        if lam < 0:
            msg = f"regularization weight must be non-negative, got {lam}"
            raise ValueError(msg)
        if lam == 0:
            return np.array(zbar, dtype=np.float64, copy=True)
        center = reg.center(anchor)
        c = self.isotropic_scale
        if c is not None:
            return (c * zbar + lam * center) / (c + lam)
        factor = linalg.cho_factor(self.a_mat + lam * np.eye(self.d))
        rhs = np.einsum("ij,...j->...i", self.a_mat, zbar) + lam * center
        return linalg.cho_solve(factor, rhs.T).T

    def _samples(self, samples) -> np.ndarray:
        samples = np.asarray(samples, dtype=np.float64)
        if samples.ndim == 1 and self.d == 1:
            samples = samples.reshape(-1, 1)
        if samples.ndim != 2 or samples.shape[0] == 0:
            msg = "empirical risk needs at least one sample"
            raise ValueError(msg)
        if samples.shape[1] != self.d:
            msg = f"samples must have {self.d} columns, got {samples.shape[1]}"
            raise DimensionMismatchError(msg)
        return samples


def loss_value(loss: QuadraticLoss, z, theta):
    return loss.value(z, theta)


def loss_grad_theta(loss: QuadraticLoss, z, theta) -> np.ndarray:
    return loss.grad_theta(z, theta)


def erm_minimizer(loss: QuadraticLoss, samples) -> np.ndarray:
    return loss.erm_minimizer(samples)


def reg_erm_minimizer(loss: QuadraticLoss, samples, lam: float, anchor, reg: Regularizer) -> np.ndarray:
    return loss.reg_erm_minimizer(samples, lam, anchor, reg)
