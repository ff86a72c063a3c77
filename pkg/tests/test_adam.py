import numpy as np
import pytest

from core.autograd.Adam import Adam, AdamState
from core.errors import NonFiniteError, ShapeError


def scalar_adam(x, grads, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8):  # textbook reference in plain floats
    m = v = 0.0
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        x -= lr * (m / (1 - b1 ** t)) / ((v / (1 - b2 ** t)) ** 0.5 + eps)
    return x


class TestAdamStep:
    def test_matches_scalar_oracle(self):
        grads = [0.3, -1.2, 2.5, 0.0, -0.7, 1e-3, 4.0, -2.0, 0.5, 0.25]
        params = {"w": np.array([1.5])}
        opt = Adam(lr=1e-3)
        for g in grads:
            opt.step(params, {"w": np.array([g])})
        assert params["w"][0] == pytest.approx(scalar_adam(1.5, grads, lr=1e-3), abs=1e-12)
        assert opt.state.t == len(grads)

    def test_first_step_moves_by_lr(self):
        params = {"w": np.array([0.0, 0.0])}
        Adam(lr=1e-4).step(params, {"w": np.array([3.0, -0.02])})
        np.testing.assert_allclose(params["w"], [-1e-4, 1e-4], rtol=1e-5)

    def test_zero_gradient_leaves_parameters(self):
        params = {"w": np.array([1.0, -2.0])}
        Adam().step(params, {"w": np.zeros(2)})
        np.testing.assert_array_equal(params["w"], [1.0, -2.0])

    def test_only_given_parameters_move(self):
        params = {"a": np.ones(2), "b": np.ones(2)}
        opt = Adam()
        opt.step(params, {"a": np.ones(2)})
        np.testing.assert_array_equal(params["b"], np.ones(2))
        assert set(opt.state.m) == {"a"}

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            Adam().step({"w": np.ones(3)}, {"w": np.ones(2)})

    def test_non_finite_gradient_leaves_state(self):
        params = {"w": np.ones(2)}
        opt = Adam()
        with pytest.raises(NonFiniteError):
            opt.step(params, {"w": np.array([np.nan, 1.0])})
        assert opt.state.t == 0
        np.testing.assert_array_equal(params["w"], np.ones(2))

    def test_state_resumes(self):
        grads = [np.array([0.5]), np.array([-0.25]), np.array([1.0])]
        full = {"w": np.array([2.0])}
        opt = Adam()
        for g in grads:
            opt.step(full, {"w": g})
        split = {"w": np.array([2.0])}
        first = Adam()
        first.step(split, {"w": grads[0]})
        state = AdamState(**first.state.hyperparameters(), m={k: v.copy() for k, v in first.state.m.items()},
                          v={k: v.copy() for k, v in first.state.v.items()})
        second = Adam(state)
        for g in grads[1:]:
            second.step(split, {"w": g})
        np.testing.assert_array_equal(full["w"], split["w"])
