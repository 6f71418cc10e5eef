"""Shared instances.

``po_instance`` is the scalar covariance shift whose solution concepts differ
(theta_PS = 1, theta_PO = 0.6); ``mean_shift`` is the scalar mean shift with
theta_PS = 2 used by most convergence tests.
"""

from __future__ import annotations

import numpy as np
import pytest

from perf_retrain.loss import QuadraticLoss
from perf_retrain.shift_model import LinearShiftModel, ScalarShiftModel


@pytest.fixture
def po_instance():
    return ScalarShiftModel(sigma0=0.5, sigma=0.5, mu0=1.0, mu=0.0)


@pytest.fixture
def mean_shift():
    return LinearShiftModel.mean_shift([1.0], 0.5, sigma0=1.0)


@pytest.fixture
def squared():
    return QuadraticLoss.squared(1)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
