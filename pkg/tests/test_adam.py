import numpy as np
import pytest

from pose2press.autodiff import AdamState, Parameter, Tensor, adam_step, mse_loss, zero_grads
from pose2press.errors import ConfigError


def test_first_step_magnitude_is_learning_rate():
    # bias-corrected first step moves by lr against the gradient sign
    p = Parameter(np.array([1.0, -2.0]), name="w", dtype=np.float64)
    p.grad = np.array([0.5, -3.0])
    state = AdamState(learning_rate=0.01)
    before = p.data.copy()
    adam_step([p], state)
    delta = p.data - before
    assert np.allclose(np.abs(delta), 0.01, rtol=1e-6)
    assert np.all(np.sign(delta) == -np.sign([0.5, -3.0]))
    assert state.step == 1


def test_zero_gradient_leaves_parameters_unchanged():
    p = Parameter(np.array([1.0, 2.0, 3.0]), name="w", dtype=np.float64)
    state = AdamState(learning_rate=0.1)
    before = p.data.copy()
    for _ in range(5):
        p.grad = np.zeros(3)
        adam_step([p], state)
    assert np.array_equal(p.data, before)


def test_scalar_quadratic_converges_toward_minimum():
    # 50 steps on f(w) = (w - 3)^2 from w=0 at lr 0.1
    w = Parameter(np.array([0.0]), name="w", dtype=np.float64)
    target = Tensor(np.array([3.0]))
    state = AdamState(learning_rate=0.1)
    start_distance = abs(w.data[0] - 3.0)
    for _ in range(50):
        zero_grads([w])
        loss = mse_loss(w, target)
        loss.backward()
        adam_step([w], state)
    assert abs(w.data[0] - 3.0) < start_distance


def test_missing_gradient_raises():
    p = Parameter(np.ones(2), name="w")
    q = Parameter(np.ones(2), name="q")
    p.grad = np.ones(2)
    with pytest.raises(ConfigError, match="q"):
        adam_step([p, q], AdamState(learning_rate=0.1))


def test_invalid_hyperparameters_rejected():
    with pytest.raises(ConfigError):
        AdamState(learning_rate=0.1, beta1=1.0)
    with pytest.raises(ConfigError):
        AdamState(learning_rate=0.1, epsilon=0.0)


def test_state_tracks_parameter_count():
    p = Parameter(np.ones(2), name="p")
    p.grad = np.ones(2)
    state = AdamState(learning_rate=0.1)
    adam_step([p], state)
    q = Parameter(np.ones(2), name="q")
    q.grad = np.ones(2)
    with pytest.raises(ConfigError):
        adam_step([p, q], state)
