"""Closed-form ground truth for linear shifts under quadratic loss.

Nothing here simulates retraining; these are the reference values the
simulations in :mod:`perf_retrain.dynamics` are checked against.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import NonContractiveError, WrongRegimeError
from .loss import QuadraticLoss
from .rng import RngStream, as_generator
from .shift_model import LinearShiftModel, ScalarShiftModel, ShiftModel, as_linear

logger = logging.getLogger(__name__)

GOLDEN_RATIO = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class RegimeFlags:
    contractive: bool
    lambda_star_valid: bool


@dataclass(frozen=True, eq=False)
class SolutionReport:
    """Solution concepts of one instance.

    ``theta_stat`` equals ``theta_po`` for every instance covered here because
    the performative risk is a convex quadratic.
    """

    theta_ps: float | np.ndarray
    theta_stat: float | np.ndarray
    theta_po: float | np.ndarray
    pr_at_ps: float
    pr_at_po: float
    gap: float
    lambda_star: float | None
    regime_flags: RegimeFlags

    @property
    def relative_gap(self) -> float:
        return self.gap / self.pr_at_po if self.pr_at_po else math.nan

    def to_dict(self) -> dict:
        def plain(value):
            if isinstance(value, np.ndarray):
                return [float(v) for v in value]
            return value if value is None else float(value)

        return {
            "theta_ps": plain(self.theta_ps),
            "theta_stat": plain(self.theta_stat),
            "theta_po": plain(self.theta_po),
            "pr_at_ps": float(self.pr_at_ps),
            "pr_at_po": float(self.pr_at_po),
            "gap": float(self.gap),
            "lambda_star": plain(self.lambda_star),
            "contractive": self.regime_flags.contractive,
            "lambda_star_valid": self.regime_flags.lambda_star_valid,
        }


def theta_ps(model: ShiftModel) -> np.ndarray:
    """Fixed point of repeated risk minimization, ``(I - mu)^-1 mu0``.

    For a quadratic loss the retraining step is the mean map, so this holds
    for any linear shift, with or without a covariance part.
    """
    model = as_linear(model)
    system = np.eye(model.d) - model.mu_map
    try:
        return np.linalg.solve(system, model.mu0)
    except np.linalg.LinAlgError as exc:
        msg = "I - mu is singular; repeated risk minimization has no unique fixed point"
        raise NonContractiveError(msg) from exc


def theta_ps_mean_shift(model: LinearShiftModel, loss: QuadraticLoss | None = None) -> np.ndarray:
    """``theta_PS`` of a mean shift; ``loss`` is accepted because the answer does not depend on A."""
    model = as_linear(model)
    if loss is not None and loss.d != model.d:
        msg = f"loss has dimension {loss.d}, model has {model.d}"
        raise WrongRegimeError(msg)
    if not model.is_mean_shift:
        msg = "theta_ps_mean_shift needs Sigma(theta) = 0"
        raise WrongRegimeError(msg)
    if not model.contractive:
        msg = f"retraining needs ||mu||_* < 1, got {model.mu_norm:g}"
        raise NonContractiveError(msg)
    return theta_ps(model)


def pr_analytic_scalar(model: ScalarShiftModel, theta: float) -> float:
    """``PR(theta) = ((sigma0 + sigma theta)^2 + ((1 - mu) theta - mu0)^2) / 2``."""
    scale = model.sigma0 + model.sigma * theta
    offset = (1.0 - model.mu) * theta - model.mu0
    return 0.5 * (scale * scale + offset * offset)


def pr_difference_scalar(model: ScalarShiftModel, a: float, b: float) -> float:
    """``PR(a) - PR(b)`` in factored form, accurate when ``a`` and ``b`` are close."""
    one_minus_mu = 1.0 - model.mu
    scale_sum = 2.0 * model.sigma0 + model.sigma * (a + b)
    offset_sum = one_minus_mu * (a + b) - 2.0 * model.mu0
    return 0.5 * (a - b) * (model.sigma * scale_sum + one_minus_mu * offset_sum)


def pr_analytic(model: ShiftModel, loss: QuadraticLoss, theta) -> float:
    """Exact ``PR(theta) = 1/2 (theta - m)^T A (theta - m) + 1/2 tr(A C)``."""
    linear = as_linear(model)
    theta = linear.check_theta(theta)
    residual = theta - linear.mean_of(theta)
    a = loss.a_mat
    return 0.5 * float(residual @ a @ residual) + 0.5 * float(np.trace(a @ linear.cov_of(theta)))


def lambda_star(model: ScalarShiftModel) -> tuple[float | None, bool]:
    """Ridge weight whose regularized fixed point is ``theta_PO``, and whether it is usable.

    The value is ``None`` when the denominator vanishes. A negative weight
    would break strong convexity of the retraining objective, so it is
    reported but flagged invalid.
    """
    one_minus_mu = 1.0 - model.mu
    denominator = model.mu0 * one_minus_mu - model.sigma0 * model.sigma
    if denominator == 0:
        return None, False
    value = model.sigma * (model.mu0 * model.sigma + one_minus_mu * model.sigma0) / denominator
    return value, bool(denominator > 0 and value >= 0)


def solve_scalar(model: ScalarShiftModel) -> SolutionReport:
    if model.mu >= 1:
        msg = f"the scalar shift needs mu < 1 (||mu||_* < 1), got mu={model.mu:g}"
        raise NonContractiveError(msg)
    one_minus_mu = 1.0 - model.mu
    ps = model.mu0 / one_minus_mu
    if model.sigma == 0:
        po = ps
    else:
        po = (one_minus_mu * model.mu0 - model.sigma0 * model.sigma) / (
            one_minus_mu * one_minus_mu + model.sigma * model.sigma
        )
    pr_ps = pr_analytic_scalar(model, ps)
    pr_po = pr_analytic_scalar(model, po)
    lam, valid = lambda_star(model)
    if not model.contractive:
        logger.warning("mu=%g: closed forms reported but retraining does not converge", model.mu)
    return SolutionReport(
        theta_ps=ps,
        theta_stat=po,
        theta_po=po,
        pr_at_ps=pr_ps,
        pr_at_po=pr_po,
        gap=pr_ps - pr_po,
        lambda_star=lam,
        regime_flags=RegimeFlags(contractive=model.contractive, lambda_star_valid=valid),
    )


def solve_mean_shift(model: LinearShiftModel, loss: QuadraticLoss) -> SolutionReport:
    """Mean shifts: all three solution concepts coincide and there is no gap."""
    ps = theta_ps_mean_shift(model, loss)
    pr = pr_analytic(model, loss, ps)
    return SolutionReport(
        theta_ps=ps,
        theta_stat=ps.copy(),
        theta_po=ps.copy(),
        pr_at_ps=pr,
        pr_at_po=pr,
        gap=0.0,
        lambda_star=None,
        regime_flags=RegimeFlags(contractive=True, lambda_star_valid=False),
    )


def pr_samples(
    model: ShiftModel,
    loss: QuadraticLoss,
    theta,
    n: int,
    stream: RngStream | np.random.Generator,
) -> np.ndarray:
    """Per-draw losses ``l(z_i; theta)`` for ``z_i ~ D(theta)``."""
    linear = as_linear(model)
    return loss.value(linear.sample(theta, n, stream), linear.check_theta(theta))


def pr_monte_carlo(
    model: ShiftModel,
    loss: QuadraticLoss,
    theta,
    n: int,
    stream: RngStream | np.random.Generator,
) -> tuple[float, float]:
    """Monte Carlo estimate of ``PR(theta)`` and its standard error."""
    if n < 2:
        msg = f"a standard error needs at least 2 draws, got {n}"
        raise ValueError(msg)
    values = pr_samples(model, loss, theta, n, stream)
    return float(np.mean(values)), float(np.std(values, ddof=1) / math.sqrt(n))


def pr_grad_fd(pr_fn: Callable, theta, step: float = 1e-6):
    """Central finite-difference gradient of ``pr_fn``; a float for scalar ``theta``."""
    if step <= 0:
        msg = f"finite-difference step must be positive, got {step}"
        raise ValueError(msg)
    if np.ndim(theta) == 0:
        theta = float(theta)
        return (pr_fn(theta + step) - pr_fn(theta - step)) / (2.0 * step)
    theta = np.asarray(theta, dtype=np.float64)
    grad = np.empty_like(theta)
    for k in range(theta.shape[0]):
        offset = np.zeros_like(theta)
        offset[k] = step
        grad[k] = (pr_fn(theta + offset) - pr_fn(theta - offset)) / (2.0 * step)
    return grad


def pr_grad_monte_carlo(
    model: ShiftModel,
    loss: QuadraticLoss,
    theta,
    n: int,
    stream: RngStream,
    step: float = 1e-4,
) -> tuple[np.ndarray, np.ndarray]:
    """Finite-difference gradient of Monte Carlo PR under common random numbers.

    The same base draws are pushed through ``D(theta +/- step e_k)``, so the
    per-draw differences are i.i.d. and their spread gives the standard error
    of each gradient coordinate.
    """
    linear = as_linear(model)
    theta = linear.check_theta(theta)
    if n < 2:
        msg = f"a standard error needs at least 2 draws, got {n}"
        raise ValueError(msg)
    z0 = linear.base.draw(as_generator(stream), n, linear.d)
    grad = np.empty(linear.d)
    std_error = np.empty(linear.d)
    for k in range(linear.d):
        offset = np.zeros(linear.d)
        offset[k] = step
        plus = loss.value(linear.transform(z0, theta + offset), theta + offset)
        minus = loss.value(linear.transform(z0, theta - offset), theta - offset)
        per_draw = (plus - minus) / (2.0 * step)
        grad[k] = np.mean(per_draw)
        std_error[k] = np.std(per_draw, ddof=1) / math.sqrt(n)
    return grad, std_error


def golden_section(
    objective: Callable[[float], float],
    lo: float,
    hi: float,
    tol: float = 1e-10,
    difference: Callable[[float, float], float] | None = None,
    max_iter: int = 500,
) -> float:
    """Minimize a unimodal function on ``[lo, hi]`` by golden-section search.

    ``difference(a, b)`` (``f(a) - f(b)``) replaces the subtraction of two
    objective values when supplied; comparing raw values cannot resolve the
    minimizer below roughly the square root of machine precision.
    """
    if difference is None:
        def difference(a: float, b: float) -> float:
            return objective(a) - objective(b)

    a, b = lo, hi
    x1 = b - GOLDEN_RATIO * (b - a)
    x2 = a + GOLDEN_RATIO * (b - a)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if difference(x1, x2) < 0:
            b, x2 = x2, x1
            x1 = b - GOLDEN_RATIO * (b - a)
        else:
            a, x1 = x1, x2
            x2 = a + GOLDEN_RATIO * (b - a)
    return 0.5 * (a + b)


def theta_po_numeric_scalar(model: ScalarShiftModel) -> float:
    """Independent numerical minimizer of ``pr_analytic_scalar``."""
    if model.mu >= 1:
        msg = f"the scalar shift needs mu < 1, got mu={model.mu:g}"
        raise NonContractiveError(msg)
    bound = 10.0 * (abs(model.mu0) + model.sigma0 + 1.0) / (1.0 - model.mu)
    return golden_section(
        lambda theta: pr_analytic_scalar(model, theta),
        -bound,
        bound,
        tol=1e-10,
        difference=lambda a, b: pr_difference_scalar(model, a, b),
    )


def rerm_mse_closed_form(
    mu: float,
    mu0,
    sigma0: float,
    n: float,
    horizon: int | Sequence[int] | np.ndarray,
    theta0=None,
):
    """``E||theta_T - theta_PS||^2`` of R-ERM with constant ``N`` on ``mu(theta) = mu theta``.

    With ``theta0 = 0`` this is
    ``||mu0||^2 mu^{2T} / (1 - mu)^2 + (d sigma0^2 / N)(1 - mu^{2T}) / (1 - mu^2)``.
    """
    mu0 = np.atleast_1d(np.asarray(mu0, dtype=np.float64))
    d = mu0.shape[0]
    ps = mu0 / (1.0 - mu)
    start = np.zeros(d) if theta0 is None else np.atleast_1d(np.asarray(theta0, dtype=np.float64))
    bias0 = float(np.sum((start - ps) ** 2))
    t = np.asarray(horizon, dtype=np.float64)
    decay = mu ** (2.0 * t)
    if mu * mu == 1.0:
        variance = d * sigma0**2 / n * t
    else:
        variance = d * sigma0**2 / n * (1.0 - decay) / (1.0 - mu * mu)
    result = bias0 * decay + variance
    return float(result) if np.ndim(result) == 0 else result


def rerm_plateau(mu: float, sigma0: float, n: float, d: int = 1) -> float:
    """``lim_T E||theta_T - theta_PS||^2 = d sigma0^2 / (N (1 - mu^2))``."""
    return d * sigma0**2 / (n * (1.0 - mu * mu))


@dataclass(frozen=True, eq=False)
class MseDecomposition:
    """Bias (``t1``) and sampling-noise (``t2``) parts of ``E||theta_t - theta_PS||^2``, index t = 0..T."""

    t1: np.ndarray
    t2: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.t1 + self.t2


def reg_rerm_mse_analytic(
    mu: float,
    mu0,
    sigma0: float,
    sample_sizes: Sequence[float] | np.ndarray,
    lambdas: Sequence[float] | np.ndarray,
    theta0=None,
) -> MseDecomposition:
    """Proximal Reg-R-ERM error on ``mu(theta) = mu theta`` with ``Sigma0 = sigma0 I``.

    ``sample_sizes[t-1]`` is ``N_t`` and ``lambdas[t-1]`` the weight used by
    step ``t`` (that is, ``lambda_{t-1}``). The error follows

        e_t = rho_t e_{t-1} + Z_t / (1 + lambda_{t-1}),
        rho_t = (lambda_{t-1} + mu) / (lambda_{t-1} + 1),
        Z_t ~ N(0, sigma0^2 / N_t I),

    so ``T1 = (prod rho)^2 ||e_0||^2`` and
    ``T2 = d sigma0^2 sum_i (prod_{j>i} rho_j)^2 / (N_i (1 + lambda_{i-1})^2)``.
    """
    mu0 = np.atleast_1d(np.asarray(mu0, dtype=np.float64))
    d = mu0.shape[0]
    sizes = np.asarray(sample_sizes, dtype=np.float64)
    lams = np.asarray(lambdas, dtype=np.float64)
    if sizes.shape != lams.shape:
        msg = "sample_sizes and lambdas must cover the same steps"
        raise ValueError(msg)
    ps = mu0 / (1.0 - mu)
    start = np.zeros(d) if theta0 is None else np.atleast_1d(np.asarray(theta0, dtype=np.float64))
    t1 = np.empty(sizes.shape[0] + 1)
    t2 = np.empty(sizes.shape[0] + 1)
    t1[0] = float(np.sum((start - ps) ** 2))
    t2[0] = 0.0
    for t in range(1, sizes.shape[0] + 1):
        lam = lams[t - 1]
        rho = (lam + mu) / (lam + 1.0)
        t1[t] = rho * rho * t1[t - 1]
        t2[t] = rho * rho * t2[t - 1] + d * sigma0**2 / (sizes[t - 1] * (1.0 + lam) ** 2)
    return MseDecomposition(t1=t1, t2=t2)
