from __future__ import annotations

import numpy as np
import pytest

from perf_retrain import loss as loss_mod
from perf_retrain.errors import DimensionMismatchError
from perf_retrain.loss import QuadraticLoss, Regularizer, RegularizerKind


def test_value_and_gradient():
    loss = QuadraticLoss(2.0 * np.eye(2))
    assert loss_mod.loss_value(loss, [1.0, 0.0], [0.0, 0.0]) == pytest.approx(1.0)
    rows = loss.value(np.array([[1.0, 0.0], [0.0, 2.0], [0.0, 0.0]]), [0.0, 0.0])
    np.testing.assert_allclose(rows, [1.0, 4.0, 0.0])
    np.testing.assert_allclose(loss_mod.loss_grad_theta(loss, [1.0, 0.0], [0.0, 1.0]), [-2.0, 2.0])


def test_curvature_constants():
    loss = QuadraticLoss(np.diag([1.0, 3.0]))
    assert loss.gamma == pytest.approx(1.0)
    assert loss.beta_z == pytest.approx(3.0)
    assert loss.isotropic_scale is None
    assert QuadraticLoss(4.0 * np.eye(3)).isotropic_scale == 4.0


@pytest.mark.parametrize(
    ("a_mat", "error", "message"),
    [
        (np.ones((2, 3)), DimensionMismatchError, "square"),
        (np.array([[1.0, 0.5], [0.0, 1.0]]), ValueError, "symmetric"),
        (np.array([[1.0, 0.0], [0.0, -1.0]]), ValueError, "positive definite"),
    ],
)
def test_invalid_matrices(a_mat, error, message):
    with pytest.raises(error) as excinfo:
        QuadraticLoss(a_mat)
    assert message in str(excinfo.value)


def test_erm_minimizer_is_sample_mean(rng):
    loss = QuadraticLoss(np.array([[2.0, 0.5], [0.5, 1.0]]))
    samples = rng.normal(size=(50, 2))
    np.testing.assert_allclose(loss_mod.erm_minimizer(loss, samples), samples.mean(axis=0))
    assert QuadraticLoss.squared(1).erm_minimizer([1.0, 2.0, 6.0]) == pytest.approx([3.0])
    with pytest.raises(ValueError) as excinfo:
        loss.erm_minimizer(np.empty((0, 2)))
    assert "at least one sample" in str(excinfo.value)


@pytest.mark.parametrize(
    ("kind", "expected"),
    [(RegularizerKind.PROXIMAL, 3.0), (RegularizerKind.RIDGE, 1.0)],
)
def test_regularized_step_isotropic(kind, expected):
    loss = QuadraticLoss.squared(1)
    step = loss.regularized_step(np.array([2.0]), 1.0, np.array([4.0]), Regularizer(kind))
    assert step == pytest.approx([expected])


def test_regularized_step_general_matrix():
    loss = QuadraticLoss(np.diag([1.0, 3.0]))
    step = loss.regularized_step(np.array([1.0, 1.0]), 1.0, np.zeros(2), Regularizer("proximal"))
    np.testing.assert_allclose(step, [0.5, 0.75])
    batch = loss.regularized_step(np.array([[1.0, 1.0], [2.0, 0.0]]), 1.0, np.zeros((2, 2)), Regularizer())
    np.testing.assert_allclose(batch, [[0.5, 0.75], [1.0, 0.0]])


def test_zero_weight_returns_copy():
    zbar = np.array([1.5, -2.0])
    step = QuadraticLoss.squared(2).regularized_step(zbar, 0.0, np.zeros(2), Regularizer())
    np.testing.assert_array_equal(step, zbar)
    assert step is not zbar


def test_negative_weight_rejected():
    with pytest.raises(ValueError) as excinfo:
        QuadraticLoss.squared(1).regularized_step(np.array([1.0]), -0.1, np.array([0.0]), Regularizer())
    assert "non-negative" in str(excinfo.value)


def test_reg_erm_minimizer_is_stationary(rng):
    a = np.array([[2.0, 0.3], [0.3, 0.5]])
    loss = QuadraticLoss(a)
    samples = rng.normal(size=(20, 2))
    anchor = np.array([0.4, -1.0])
    for kind in RegularizerKind:
        reg = Regularizer(kind)
        theta = loss_mod.reg_erm_minimizer(loss, samples, 0.7, anchor, reg)
        grad = a @ (theta - samples.mean(axis=0)) + 0.7 * (theta - reg.center(anchor))
        np.testing.assert_allclose(grad, 0.0, atol=1e-12)


def test_regularizer_value():
    assert Regularizer("proximal").value([1.0, 1.0], [0.0, 1.0]) == pytest.approx(0.5)
    assert Regularizer("ridge").value([1.0, 1.0], [0.0, 1.0]) == pytest.approx(1.0)


def _random_loss(rng):
    d = int(rng.integers(1, 11))
    b = rng.normal(size=(d, d))
    return QuadraticLoss(0.5 * (b @ b.T + b.T @ b) / d + 0.1 * np.eye(d))


def test_gradient_matches_central_differences(rng):
    step = 1e-5
    for _ in range(1000):
        loss = _random_loss(rng)
        z = rng.normal(size=loss.d)
        theta = rng.normal(size=loss.d)
        grad = loss_mod.loss_grad_theta(loss, z, theta)
        numeric = np.array(
            [
                (loss_mod.loss_value(loss, z, theta + offset) - loss_mod.loss_value(loss, z, theta - offset))
                / (2.0 * step)
                for offset in step * np.eye(loss.d)
            ]
        )
        assert np.linalg.norm(numeric - grad) <= 1e-6 * np.linalg.norm(grad)


def test_gradient_is_beta_z_lipschitz_in_z(rng):
    for _ in range(1000):
        loss = _random_loss(rng)
        z1, z2, theta = rng.normal(size=(3, loss.d))
        change = np.linalg.norm(loss.grad_theta(z1, theta) - loss.grad_theta(z2, theta))
        assert change <= loss.beta_z * np.linalg.norm(z1 - z2) * (1.0 + 1e-12)
        assert loss.gamma <= loss.beta_z
