import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import layer_norm_np, numeric_grad, rel_err, softmax_loop
from synthlab import engine as E
from synthlab.engine import LrSchedule, Tensor, lr_at
from synthlab.errors import DegenerateRowError, NumericError, ShapeError


def test_matmul_identity_and_hand_case():
    out = E.matmul(np.eye(2), np.array([[3.0, 4], [5, 6]]))
    assert np.array_equal(out.data, [[3, 4], [5, 6]])
    assert E.matmul(np.array([[1.0, 2]]), np.array([[3.0], [4]])).data.tolist() == [[11.0]]


def test_matmul_gradients_match_finite_differences():
    rng = np.random.default_rng(0)
    a0, b0 = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
    w = rng.normal(size=(3, 2))
    a, b = E.parameter(a0), E.parameter(b0)
    E.tsum(E.matmul(a, b) * w).backward()
    assert rel_err(a.grad, numeric_grad(lambda x: float(((x @ b0) * w).sum()), a0)) < 1e-6
    assert rel_err(b.grad, numeric_grad(lambda x: float(((a0 @ x) * w).sum()), b0)) < 1e-6


def test_matmul_mismatch():
    with pytest.raises(ShapeError):
        E.matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_layer_norm_examples():
    ones, zeros = np.ones(3), np.zeros(3)
    assert np.allclose(E.layer_norm(np.ones(3), ones, zeros).data, 0.0)
    out = E.layer_norm(np.array([0.0, 2.0]), np.ones(2), np.zeros(2), eps=1e-12).data
    assert np.allclose(out, [-1.0, 1.0], atol=1e-9)
    with pytest.raises(ShapeError):
        E.layer_norm(np.ones((2, 0)), np.ones(0), np.ones(0))


def test_layer_norm_gradient_matches_finite_differences():
    rng = np.random.default_rng(1)
    x0, g0, b0 = rng.normal(size=(4, 5)), rng.normal(size=5), rng.normal(size=5)
    w = rng.normal(size=(4, 5))
    x, g, b = E.parameter(x0), E.parameter(g0), E.parameter(b0)
    E.tsum(E.layer_norm(x, g, b) * w).backward()
    f = lambda v: float((layer_norm_np(v, g0, b0, 1e-5) * w).sum())
    assert rel_err(x.grad, numeric_grad(f, x0)) < 1e-5
    assert rel_err(g.grad, numeric_grad(lambda v: float((layer_norm_np(x0, v, b0, 1e-5) * w).sum()), g0)) < 1e-5


def test_masked_softmax_examples():
    assert np.allclose(E.masked_softmax(np.zeros(2), [True, True]).data, [0.5, 0.5])
    out = E.masked_softmax(np.array([5.0, -100.0]), [True, False]).data
    assert out.tolist() == [1.0, 0.0]
    scores = [1.0, 2.0, 3.0]
    assert np.allclose(E.masked_softmax(np.array(scores), [True] * 3).data, softmax_loop(scores, [1, 1, 1]), atol=1e-15)
    with pytest.raises(DegenerateRowError):
        E.masked_softmax(np.zeros((2, 3)), np.array([[True, False, False], [False, False, False]]))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**31 - 1))
def test_masked_softmax_properties(n, seed):
    rng = np.random.default_rng(seed)
    scores = rng.normal(scale=10, size=(3, n))
    mask = rng.random((3, n)) < 0.6
    mask[:, rng.integers(n)] = True
    p = E.masked_softmax(scores, mask).data
    assert (p >= 0).all()
    assert np.all(p[~mask] == 0.0)
    assert np.allclose(p.sum(axis=-1), 1.0, atol=1e-12, rtol=0)
    for row in range(3):
        assert np.allclose(p[row], softmax_loop(scores[row], mask[row]), atol=1e-12)


def test_leaky_relu_examples():
    assert E.leaky_relu(np.array(2.0), 0.01).item() == 2.0
    assert E.leaky_relu(np.array(-1.0), 0.01).item() == pytest.approx(-0.01)
    assert E.leaky_relu(np.array(0.0), 0.01).item() == 0.0
    with pytest.raises(ValueError):
        E.leaky_relu(np.array(1.0), 0.0)


def test_backward_examples():
    x = E.parameter(np.array([1.0, -2.0, 3.0]))
    E.tsum(x).backward()
    assert x.grad.tolist() == [1.0, 1.0, 1.0]
    E.tsum(x).backward()
    assert x.grad.tolist() == [2.0, 2.0, 2.0]  # accumulates

    rng = np.random.default_rng(2)
    x0, w0, y = rng.normal(size=3), rng.normal(size=3), 0.7
    xp, wp = E.parameter(x0), E.parameter(w0)
    loose = E.parameter(np.ones(2))
    E.square(E.tsum(xp * wp) - y).backward()
    assert rel_err(wp.grad, numeric_grad(lambda w: float((x0 @ w - y) ** 2), w0)) < 1e-6
    assert loose.grad is None or not loose.grad.any()

    with pytest.raises(ShapeError):
        (xp * 2.0).backward()


def test_forward_rejects_non_finite():
    with pytest.raises(NumericError):
        E.exp(np.array([1000.0]))


def test_grad_check_examples():
    w = E.parameter(np.array(3.0))
    assert E.grad_check(lambda: E.square(w), [w]) < 1e-8

    def corrupted():
        return Tensor.from_op(w.data**2, (w,), lambda g: (g * 2 * w.data * 1.5,))

    assert E.grad_check(corrupted, [w]) > 1e-2
    with pytest.raises(ValueError):
        E.grad_check(lambda: E.square(w), [w], eps=0.1)


def _attention_block(d, rng):
    x = rng.normal(size=(2, 4, d))
    mask = np.array([[True] * 4, [False, True, True, True]])
    params = {
        "wq": E.parameter(rng.normal(scale=0.5, size=(d, d))),
        "wk": E.parameter(rng.normal(scale=0.5, size=(d, d))),
        "wv": E.parameter(rng.normal(scale=0.5, size=(d, d))),
        "g": E.parameter(1 + 0.1 * rng.normal(size=d)),
        "b": E.parameter(0.1 * rng.normal(size=d)),
    }
    w_out = rng.normal(size=(2, 4, d))

    def f():
        q = E.linear(x, params["wq"])
        k = E.linear(x, params["wk"])
        v = E.linear(x, params["wv"])
        scores = E.matmul(q, E.transpose(k, (0, 2, 1))) * (1 / math.sqrt(d))
        att = E.masked_softmax(scores, mask[:, None, :])
        h = E.layer_norm(E.matmul(att, v) + x, params["g"], params["b"])
        return E.tsum(E.tanh(h) * w_out)

    return f, list(params.values())


def test_grad_check_full_attention_block():
    f, params = _attention_block(8, np.random.default_rng(3))
    assert E.grad_check(f, params) < 1e-4


@pytest.mark.parametrize(
    "op",
    [
        lambda a, b: E.add(a, b), lambda a, b: E.sub(a, b), lambda a, b: E.mul(a, b),
        lambda a, b: E.div(a, E.exp(b)), lambda a, b: E.tanh(a) * b,
        lambda a, b: E.leaky_relu(a, 0.1) * b, lambda a, b: E.relu(a) * b,
        lambda a, b: E.mean(a * b, axis=0), lambda a, b: E.reshape(a, (6,)) * E.reshape(b, (6,)),
        lambda a, b: E.getitem(a, (slice(None), [0, 0, 2])) * b,
        lambda a, b: E.concat([a, b], axis=0) * 2.0,
        lambda a, b: E.linear(a, E.transpose(b), b[0, :2]),
    ],
)
def test_grad_check_elementwise_ops(op):
    rng = np.random.default_rng(4)
    a = E.parameter(rng.normal(size=(2, 3)) + 0.05)  # keep relu kinks away
    b = E.parameter(rng.normal(size=(2, 3)))
    assert E.grad_check(lambda: E.tsum(E.square(op(a, b))), [a, b]) < 1e-4


def test_adam_examples():
    p = E.parameter(np.array([1.0, 2.0]))
    p.grad = np.array([0.5, -1.0])
    state = E.AdamState.for_params([p])
    E.adam_step([p], state, 0.0)
    assert p.data.tolist() == [1.0, 2.0] and state.step == 1

    q = E.parameter(np.array(1.0))
    q.grad = np.array(1.0)
    E.adam_step([q], E.AdamState.for_params([q]), 0.01)
    # first step: m_hat = g, v_hat = g^2 -> update = lr * g / (|g| + eps)
    assert q.item() == pytest.approx(1.0 - 0.01 / (1 + 1e-8), abs=1e-15)

    w = E.parameter(np.array(0.0))
    state = E.AdamState.for_params([w])
    for _ in range(100):
        w.zero_grad()
        E.square(w - 5.0).backward()
        E.adam_step([w], state, 0.3)
    assert abs(w.item() - 5.0) < 0.5

    w.grad = np.array(np.nan)
    with pytest.raises(NumericError):
        E.adam_step([w], state, 0.1)


def test_lr_schedule_examples_and_shape():
    s = LrSchedule(0.003, 10, 100)
    assert lr_at(s, 0) == 0.0
    assert lr_at(s, 10) == pytest.approx(0.003)
    assert lr_at(s, 100) == pytest.approx(0.0, abs=1e-18)
    assert lr_at(s, 9) < lr_at(s, 10)
    cosine = [lr_at(s, k) for k in range(10, 101)]
    assert all(a >= b for a, b in zip(cosine, cosine[1:]))
    assert abs(lr_at(s, 10) - s.base_lr * 9.999 / 10) < 1e-6  # continuity at the ramp end
    with pytest.raises(ValueError):
        lr_at(s, 101)
    with pytest.raises(ValueError):
        LrSchedule(0.1, 5, 4)
    assert LrSchedule.half_epoch_warmup(0.003, 157, 5).warmup_steps == 79
