import numpy as np
import pytest

from core.errors import ShapeError
from core.model.Losses import compute_losses, masked_mse


def test_perfect_prediction(rng):
    X = rng.uniform(-1, 1, (4, 3, 3))
    M = rng.integers(0, 2, (4, 3, 3))
    M[0, 0, 0], M[0, 0, 1] = 0, 1
    losses = compute_losses(X, X, M)
    assert losses.L == losses.L_obs == losses.L_mask == 0.0


def test_decomposition(rng):
    X = rng.uniform(-1, 1, (8, 5, 5))
    X_hat = rng.uniform(-1, 1, (8, 5, 5))
    M = (rng.random((8, 5, 5)) > 0.3).astype(np.int8)
    losses = compute_losses(X, X_hat, M)
    total = losses.observed + losses.masked
    assert total == X.size
    assert losses.L == pytest.approx((losses.observed * losses.L_obs + losses.masked * losses.L_mask) / total)


def test_single_observed_entry():
    losses = compute_losses(np.array([[0.5]]), np.array([[0.3]]), np.array([[1]]))
    assert losses.L == pytest.approx(0.04)
    assert losses.L_obs == pytest.approx(0.04)
    assert losses.L_mask is None
    assert losses.as_row() == {"L": losses.L, "L_obs": losses.L_obs, "L_mask": None}


def test_all_masked(rng):
    X = rng.uniform(-1, 1, (3, 3))
    losses = compute_losses(X, np.zeros_like(X), np.zeros((3, 3)))
    assert losses.L_obs is None
    assert losses.L_mask == pytest.approx(np.mean(X ** 2))


def test_shape_mismatch():
    with pytest.raises(ShapeError, match="compute_losses"):
        compute_losses(np.zeros((3, 3)), np.zeros((3, 4)), np.ones((3, 3)))


def test_masked_mse_against_target(rng):
    X_hat = rng.uniform(-1, 1, (2, 3, 3))
    M = np.ones((2, 3, 3))
    assert masked_mse(X_hat, -X_hat, M) is None
    M[1, 2, 2] = 0
    assert masked_mse(X_hat, -X_hat, M) == pytest.approx(4 * X_hat[1, 2, 2] ** 2)
