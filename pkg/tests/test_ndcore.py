import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from occgan.ndcore import (
    Adam,
    AdamState,
    GradientTape,
    NumericFailure,
    ShapeError,
    TapeError,
    Tensor,
    adam_step,
    backward,
    clamp,
    concat,
    forward_op,
    leaky_relu,
    log,
    matmul,
    mean,
    parameter,
    sigmoid,
    sqdiff,
    sum_,
    tanh,
)


# --- forward primitives -----------------------------------------------------

def test_matmul_identity():
    a = Tensor([[1.0, 2.0], [3.0, 4.0]])
    out = matmul(a, np.eye(2))
    np.testing.assert_array_equal(out.data, [[1.0, 2.0], [3.0, 4.0]])


def test_mean_and_logistic():
    assert mean(Tensor([2.0, 4.0, 6.0])).item() == 4.0
    assert sigmoid(Tensor(0.0)).item() == 0.5


def test_shape_mismatch_raises():
    with pytest.raises(ShapeError):
        matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
    with pytest.raises(ShapeError):
        forward_op("add", Tensor(np.ones(3)), Tensor(np.ones(4)))


def test_non_finite_detection():
    with pytest.raises(NumericFailure):
        Tensor([1.0, np.nan])
    with pytest.raises(NumericFailure):
        log(Tensor([0.0, 1.0]))


def test_concat_and_reshape_forward():
    out = concat([Tensor(np.ones((1, 2))), Tensor(np.zeros((2, 2)))], axis=0)
    assert out.shape == (3, 2)
    assert Tensor(np.arange(6.0)).reshape(2, 3).shape == (2, 3)
    with pytest.raises(ShapeError):
        Tensor(np.arange(6.0)).reshape(4, 2)


# --- backward ------------------------------------------------------------------

def test_square_gradient():
    w = parameter([3.0])
    with GradientTape() as tape:
        loss = (w * w).sum()
    tape.backward(loss)
    np.testing.assert_array_equal(w.grad, [6.0])


def test_quadratic_minimum_has_zero_grad():
    t = np.array([1.0, -2.0, 0.5])
    w = parameter(t.copy())
    with GradientTape() as tape:
        loss = sqdiff(w, t).mean()
    tape.backward(loss)
    np.testing.assert_array_equal(w.grad, np.zeros(3))


def test_backward_requires_scalar():
    w = parameter(np.ones(3))
    with GradientTape() as tape:
        y = w * 2.0
    with pytest.raises(TapeError):
        tape.backward(y)


def test_tape_cannot_be_reused():
    w = parameter([1.0])
    with GradientTape() as tape:
        loss = (w * w).sum()
    tape.backward(loss)
    with pytest.raises(TapeError):
        tape.backward(loss)
    with pytest.raises(TapeError):
        backward(loss)


def test_module_level_backward_and_accumulation():
    w = parameter([2.0])
    with GradientTape() as _tape:
        # w is used twice: gradients add up
        loss = (w * w + w * 3.0).sum()
    backward(loss)
    np.testing.assert_allclose(w.grad, [2 * 2.0 + 3.0])


def test_unreached_parameters_get_zero_grad():
    a, b = parameter([1.0]), parameter([5.0])
    with GradientTape() as tape:
        _unused = b * 2.0
        loss = (a * a).sum()
    tape.backward(loss)
    np.testing.assert_array_equal(a.grad, [2.0])
    np.testing.assert_array_equal(b.grad, [0.0])


def test_constants_are_not_recorded():
    with GradientTape() as tape:
        out = Tensor([1.0]) * 2.0
    assert tape.records == [] and not out.requires_grad


# --- finite-difference oracle ---------------------------------------------------

ACTIVATIONS = {
    "leaky_relu": lambda x: leaky_relu(x, 0.2),
    "tanh": tanh,
    "sigmoid": sigmoid,
}


def _random_net(rng: np.random.Generator, n_layers: int, act: str):
    widths = [int(w) for w in rng.integers(2, 9, size=n_layers + 1)]
    params = []
    for a, b in zip(widths[:-1], widths[1:]):
        params.append(parameter(rng.normal(0, 0.7, size=(a, b))))
        params.append(parameter(rng.normal(0, 0.3, size=(b,))))
    x = rng.normal(size=(5, widths[0]))
    target = rng.uniform(0.1, 0.9, size=(5, widths[-1]))
    return params, x, target


def _net_loss(params, x, target, act: str):
    h = Tensor(x)
    n = len(params) // 2
    for i in range(n):
        h = matmul(h, params[2 * i]) + params[2 * i + 1]
        if i < n - 1:
            h = ACTIVATIONS[act](h)
    p = clamp(sigmoid(h), 1e-6, 1 - 1e-6)
    bce = -(log(p) * Tensor(target) + log(1.0 - p) * Tensor(1 - target)).mean()
    return bce + sqdiff(p, target).sum(axis=1).mean() * 0.5


def _max_rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))


def finite_difference_check(seed: int, act: str, h: float = 1e-5) -> float:
    rng = np.random.default_rng(seed)
    params, x, target = _random_net(rng, int(rng.integers(1, 5)), act)
    with GradientTape() as tape:
        loss = _net_loss(params, x, target, act)
    tape.backward(loss)
    worst = 0.0
    for p in params:
        numeric = np.zeros_like(p.data)
        for idx in np.ndindex(p.data.shape):
            orig = p.data[idx]
            p.data[idx] = orig + h
            up = _net_loss(params, x, target, act).item()
            p.data[idx] = orig - h
            down = _net_loss(params, x, target, act).item()
            p.data[idx] = orig
            numeric[idx] = (up - down) / (2 * h)
        worst = max(worst, _max_rel_error(p.grad, numeric))
    return worst


@pytest.mark.parametrize("seed", range(20))
def test_gradients_match_finite_differences(seed):
    act = ("tanh", "sigmoid", "leaky_relu")[seed % 3]
    assert finite_difference_check(seed, act) < 1e-4


def test_gradient_independent_of_forward_order():
    rng = np.random.default_rng(7)
    w1 = parameter(rng.normal(size=(3, 2)))
    w2 = parameter(rng.normal(size=(3, 2)))
    xa, xb = rng.normal(size=(4, 3)), rng.normal(size=(4, 3))

    def grads(order):
        for w in (w1, w2):
            w.grad = None
        with GradientTape() as tape:
            parts = {}
            for name in order:
                if name == "a":
                    parts[name] = tanh(matmul(Tensor(xa), w1)).sum()
                else:
                    parts[name] = sigmoid(matmul(Tensor(xb), w2)).mean()
            loss = parts["a"] + parts["b"]
        tape.backward(loss)
        return w1.grad.copy(), w2.grad.copy()

    g_ab, g_ba = grads("ab"), grads("ba")
    for u, v in zip(g_ab, g_ba):
        np.testing.assert_allclose(u, v, atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=8), st.sampled_from(["sum", "mean"]))
def test_reduction_gradient_is_constant(values, kind):
    w = parameter(values)
    with GradientTape() as tape:
        loss = sum_(w) if kind == "sum" else mean(w)
    tape.backward(loss)
    expected = 1.0 if kind == "sum" else 1.0 / len(values)
    np.testing.assert_allclose(w.grad, np.full(len(values), expected))


def test_broadcast_gradient_is_summed():
    b = parameter(np.zeros(3))
    with GradientTape() as tape:
        loss = (Tensor(np.ones((4, 3))) + b).sum()
    tape.backward(loss)
    np.testing.assert_array_equal(b.grad, [4.0, 4.0, 4.0])


# --- Adam ------------------------------------------------------------------------

def test_adam_zero_gradient_is_fixed_point():
    w = parameter([1.0, -1.0])
    w.grad = np.zeros(2)
    state = AdamState(lr=1e-3)
    adam_step([w], state)
    np.testing.assert_array_equal(w.data, [1.0, -1.0])
    assert state.step_count == 1


def test_adam_first_step_magnitude():
    # hand-executed recurrence: m = 0.1, v = 0.001, both bias corrections give 1
    w = parameter([0.0])
    w.grad = np.array([1.0])
    adam_step([w], AdamState(lr=1e-3))
    np.testing.assert_allclose(w.data, [-1e-3 / (1.0 + 1e-8)], rtol=1e-12)


def test_adam_zeroes_grads_and_counts_steps():
    w = parameter([1.0])
    state = AdamState()
    for k in range(3):
        w.grad = np.array([0.5])
        adam_step([w], state)
        assert state.step_count == k + 1
        np.testing.assert_array_equal(w.grad, [0.0])
        assert state.m[0].shape == w.data.shape


def test_adam_converges_on_quadratic():
    w = parameter([0.0])
    opt = Adam([w], lr=1e-2)
    for _ in range(2000):
        with GradientTape() as tape:
            loss = sqdiff(w, 5.0).sum()
        tape.backward(loss)
        opt.step()
    assert abs(w.data[0] - 5.0) < 1e-2


def test_adam_errors():
    w = parameter([1.0])
    with pytest.raises(ValueError):
        adam_step([w], AdamState())
    with pytest.raises(ValueError):
        AdamState(lr=0.0)
    w.grad = np.array([np.inf])
    with pytest.raises(NumericFailure):
        adam_step([w], AdamState())
    np.testing.assert_array_equal(w.data, [1.0])


def test_adam_trajectory_is_deterministic():
    def run():
        rng = np.random.default_rng(3)
        w = parameter(rng.normal(size=(4, 2)))
        x = rng.normal(size=(6, 4))
        opt = Adam([w], lr=1e-2)
        for _ in range(25):
            with GradientTape() as tape:
                loss = tanh(matmul(Tensor(x), w)).mean()
            tape.backward(loss)
            opt.step()
        return w.data.tobytes()

    assert run() == run()
