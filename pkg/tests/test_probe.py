import numpy as np
import pytest

from core.data.Batch import BatchSampler
from core.data.seeding import rng_for
from core.errors import ConfigError, ProbeError
from core.interp.Probe import cosine_rows, fit_probe, probe_targets, ridge_fit


def gradient_descent_ridge(H, Y, lam, iterations=3000):  # iterative reference for the closed form
    Hc, Yc = H - H.mean(axis=0), Y - Y.mean(axis=0)
    step = 1.0 / (np.linalg.norm(Hc, 2) ** 2 + lam)
    W = np.zeros((H.shape[1], Y.shape[1]))
    for _ in range(iterations):
        W -= step * (Hc.T @ (Hc @ W - Yc) + lam * W)
    return W


class TestRidge:
    def test_recovers_linear_map(self, rng):
        H = rng.normal(size=(200, 5))
        W_true, b_true = rng.normal(size=(5, 2)), np.array([0.3, -1.0])
        W, b = ridge_fit(H, H @ W_true + b_true, 1e-10)
        np.testing.assert_allclose(W, W_true, atol=1e-6)
        np.testing.assert_allclose(b, b_true, atol=1e-6)

    def test_matches_gradient_descent(self, rng):
        H = rng.normal(size=(100, 4))
        Y = rng.normal(size=(100, 3))
        W, _ = ridge_fit(H, Y, 0.1)
        np.testing.assert_allclose(W, gradient_descent_ridge(H, Y, 0.1), atol=1e-8)

    def test_singular_without_ridge(self, rng):
        h = rng.normal(size=(50, 1))
        with pytest.raises(ProbeError):
            ridge_fit(np.hstack([h, h]), rng.normal(size=(50, 1)), 0.0)

    def test_cosine(self):
        P = np.array([[1.0, 0.0], [0.0, 2.0]])
        assert cosine_rows(P, P) == pytest.approx(1.0)
        assert cosine_rows(P, -P) == pytest.approx(-1.0)
        assert cosine_rows(P, -P, absolute=True) == pytest.approx(1.0)


class TestTargets:
    def test_masked_row(self, tiny_data):
        batch = BatchSampler(tiny_data, 0, 2).batch(1)
        Y, sel = probe_targets(batch, "masked_row")
        assert Y.shape == (2, 9, 3) and sel.all()
        np.testing.assert_array_equal(Y[0, 4], np.where(batch.M[0, 1] != 0, batch.X[0, 1], 0.0))

    def test_element_selects_masked(self, tiny_data):
        batch = BatchSampler(tiny_data, 0, 2).batch(1)
        Y, sel = probe_targets(batch, "element")
        np.testing.assert_array_equal(sel, batch.M.reshape(2, 9) == 0)

    def test_unknown_target(self, tiny_data):
        with pytest.raises(ConfigError):
            probe_targets(BatchSampler(tiny_data, 0, 2).batch(1), "trace")


class TestFitProbe:
    def test_per_layer_results(self, encoder, tiny_data):
        result = fit_probe(encoder, tiny_data, samples=40)
        assert result.layers == [0, 1, 2]
        assert len(result.train_mse) == len(result.test_mse) == len(result.cosine) == 3
        assert all(-1.0 <= c <= 1.0 for c in result.cosine)
        assert result.best_layer() in result.layers
        assert result.n_train == 32 * 9 and result.n_test == 8 * 9

    def test_singular_vector_cosine_is_absolute(self, encoder, tiny_data):
        result = fit_probe(encoder, tiny_data, target="singular_vector", layers=[2], samples=30)
        assert 0.0 <= result.cosine[0] <= 1.0

    def test_shuffled_targets_carry_no_signal(self, encoder, tiny_data):
        samples, seed = 64, 5
        result = fit_probe(encoder, tiny_data, samples=samples, train_fraction=0.5, seed=seed,
                           shuffle_targets=True)
        batch = BatchSampler(tiny_data, seed, samples).sample(rng_for(seed, "probe"), samples)
        Y, sel = probe_targets(batch, "masked_row")
        Y_test = Y[32:][sel[32:]]
        spread = ((Y_test - Y_test.mean(axis=0)) ** 2).mean()
        assert min(result.test_mse) >= 0.9 * spread

    def test_bad_split(self, encoder, tiny_data):
        with pytest.raises(ProbeError):
            fit_probe(encoder, tiny_data, samples=4, train_fraction=1.0)

    def test_layer_out_of_range(self, encoder, tiny_data):
        with pytest.raises(ProbeError):
            fit_probe(encoder, tiny_data, layers=[5], samples=10)
