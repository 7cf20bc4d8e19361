"""Autodiff core: primitive ops, tape semantics, finite-difference checks."""

import numpy as np
import pytest

from numgpt import core
from numgpt.core import (
    NumericError,
    ShapeError,
    Tape,
    Tensor,
    add,
    causal_self_attention,
    gelu,
    layer_norm,
    log_softmax,
    matmul,
    mul,
    softmax,
    square,
    tmean,
    tsum,
)

# Central finite differences: the independent oracle for every backward rule.
FD_H = 1e-5
REL_TOL = 1e-4
ABS_FLOOR = 1e-7


def numeric_grad(f, x: np.ndarray, h: float = FD_H) -> np.ndarray:
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * h)
    return g


def assert_close_grad(got: np.ndarray, want: np.ndarray):
    denom = np.maximum(np.abs(want), ABS_FLOOR / REL_TOL)
    err = np.abs(got - want) / denom
    assert err.max() < REL_TOL, f"max rel err {err.max():.3e}"


def check_op(build, *arrays):
    """Compare tape gradients of scalar build(*tensors) against central differences."""
    with core.float64():
        tensors = [Tensor(a.copy(), requires_grad=True, dtype=np.float64) for a in arrays]
        with Tape() as tape:
            loss = build(*tensors)
        tape.backward(loss)
        for t in tensors:
            want = numeric_grad(lambda t=t: build(*[Tensor(u.data) for u in tensors]).item(), t.data)
            assert_close_grad(t.grad, want)


def test_matmul_identity():
    a = Tensor(np.eye(2))
    b = Tensor(np.array([[3.0, 4.0], [5.0, 6.0]]))
    np.testing.assert_allclose(matmul(a, b).data, [[3, 4], [5, 6]])


def test_matmul_hand():
    a = Tensor(np.array([[1.0, 2.0]]))
    b = Tensor(np.array([[3.0], [4.0]]))
    np.testing.assert_allclose(matmul(a, b).data, [[11.0]])


def test_matmul_shape_error_names_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))


def test_matmul_grad_matches_finite_differences():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(5, 7))
    b = rng.normal(size=(7, 3))
    check_op(lambda x, y: tsum(square(matmul(x, y))), a, b)


def test_matmul_batched_grad():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(2, 3, 4))
    w = rng.normal(size=(4, 5))
    check_op(lambda x, y: tsum(square(matmul(x, y))), a, w)


def test_softmax_symmetry():
    y = softmax(Tensor(np.array([0.0, 0.0])), axis=-1)
    np.testing.assert_allclose(y.data, [0.5, 0.5])


def test_softmax_stability():
    y = softmax(Tensor(np.array([1000.0, 0.0])), axis=-1)
    assert np.isfinite(y.data).all()
    np.testing.assert_allclose(y.data, [1.0, 0.0], atol=1e-12)


def test_softmax_direct_evaluation():
    x = np.array([1.0, 2.0, 3.0])
    e = np.exp(x)
    np.testing.assert_allclose(softmax(Tensor(x), axis=-1).data, e / e.sum(), rtol=1e-6)


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(2)
    y = softmax(Tensor(rng.normal(size=(4, 9)) * 5), axis=-1)
    assert (y.data >= 0).all()
    np.testing.assert_allclose(y.data.sum(axis=-1), 1.0, atol=1e-6)


def test_softmax_rejects_nan():
    with pytest.raises(NumericError):
        softmax(Tensor(np.array([np.nan, 0.0])), axis=-1)


def test_softmax_grad():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(3, 5))
    c = rng.normal(size=(3, 5))
    check_op(lambda t: tsum(mul(softmax(t, axis=-1), Tensor(c, dtype=np.float64))), x)


def test_log_softmax_grad():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(3, 5))
    c = rng.normal(size=(3, 5))
    check_op(lambda t: tsum(mul(log_softmax(t, axis=-1), Tensor(c, dtype=np.float64))), x)


def test_layer_norm_constant_row_is_zero():
    y = layer_norm(Tensor(np.full((2, 4), 3.0)), Tensor(np.ones(4)), Tensor(np.zeros(4)))
    np.testing.assert_allclose(y.data, 0.0, atol=1e-5)


def test_layer_norm_already_normalized():
    y = layer_norm(
        Tensor(np.array([[1.0, -1.0]])), Tensor(np.ones(2)), Tensor(np.zeros(2)), eps=1e-12
    )
    np.testing.assert_allclose(y.data, [[1.0, -1.0]], atol=1e-5)


def test_layer_norm_grad():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(3, 6))
    g = rng.normal(size=6)
    b = rng.normal(size=6)
    c = rng.normal(size=(3, 6))
    check_op(
        lambda t, gg, bb: tsum(mul(layer_norm(t, gg, bb), Tensor(c, dtype=np.float64))),
        x,
        g,
        b,
    )


def test_gelu_grad():
    rng = np.random.default_rng(6)
    x = rng.normal(size=(4, 3)) * 2
    check_op(lambda t: tsum(square(gelu(t))), x)


def test_backward_sum_gives_ones():
    x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    with Tape() as tape:
        loss = tsum(x)
    tape.backward(loss)
    np.testing.assert_allclose(x.grad, np.ones((2, 3)))


def test_backward_square_gives_2x():
    x = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
    with Tape() as tape:
        loss = tsum(square(x))
    tape.backward(loss)
    np.testing.assert_allclose(x.grad, 2 * x.data)


def test_backward_accumulates_across_calls():
    x = Tensor(np.array([2.0]), requires_grad=True)
    with Tape() as tape:
        loss = tsum(square(x))
    tape.backward(loss)
    tape.backward(loss)
    np.testing.assert_allclose(x.grad, 2 * 2 * x.data)


def test_backward_rejects_non_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with Tape() as tape:
        y = square(x)
    with pytest.raises(ShapeError):
        tape.backward(y)


def test_no_tape_means_no_recording():
    x = Tensor(np.ones(3), requires_grad=True)
    y = square(x)
    assert not y.requires_grad


def test_mean_grad():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(3, 4))
    check_op(lambda t: tmean(square(t)), x)


def test_embedding_grad_hits_only_used_rows():
    table = Tensor(np.random.default_rng(8).normal(size=(5, 3)), requires_grad=True)
    ids = np.array([1, 3, 1])
    with Tape() as tape:
        loss = tsum(core.embedding(table, ids))
    tape.backward(loss)
    np.testing.assert_allclose(table.grad[0], 0.0)
    np.testing.assert_allclose(table.grad[1], 2.0)
    np.testing.assert_allclose(table.grad[3], 1.0)
    np.testing.assert_allclose(table.grad[4], 0.0)


def _attn_params(rng, d, dtype=np.float64):
    def w():
        return Tensor(rng.normal(size=(d, d)) * 0.3, requires_grad=True, dtype=dtype)

    def b():
        return Tensor(np.zeros(d), requires_grad=True, dtype=dtype)

    return [w(), b(), w(), b(), w(), b(), w(), b()]


def test_attention_single_token():
    rng = np.random.default_rng(9)
    params = _attn_params(rng, 8)
    x = Tensor(rng.normal(size=(1, 8)))
    out = causal_self_attention(x, 2, *params)
    assert out.shape == (1, 8)


def test_attention_causality():
    rng = np.random.default_rng(10)
    params = _attn_params(rng, 8)
    x = rng.normal(size=(5, 8))
    base = causal_self_attention(Tensor(x), 2, *params).data
    x2 = x.copy()
    x2[4] += 10.0  # perturb a later position
    pert = causal_self_attention(Tensor(x2), 2, *params).data
    np.testing.assert_allclose(pert[:4], base[:4], atol=1e-6)
    assert not np.allclose(pert[4], base[4])


def test_attention_weights_rows_sum_to_one():
    rng = np.random.default_rng(11)
    params = _attn_params(rng, 8)
    x = Tensor(rng.normal(size=(6, 8)))
    _, w = causal_self_attention(x, 4, *params, return_weights=True)
    np.testing.assert_allclose(w.sum(axis=-1), 1.0, atol=1e-6)
    # strictly causal: no weight above the diagonal
    assert np.triu(w, k=1).max() == 0.0


def test_attention_rejects_bad_head_count():
    rng = np.random.default_rng(12)
    params = _attn_params(rng, 8)
    with pytest.raises(ShapeError):
        causal_self_attention(Tensor(rng.normal(size=(3, 8))), 3, *params)


def test_attention_grad():
    rng = np.random.default_rng(13)
    d = 6
    params = [p.data for p in _attn_params(rng, d)]
    x = rng.normal(size=(4, d))

    def build(xt, *ps):
        return tsum(square(causal_self_attention(xt, 2, *ps)))

    check_op(build, x, *params)


def test_determinism_same_inputs_bitwise():
    rng = np.random.default_rng(14)
    params = _attn_params(rng, 8)
    x = Tensor(rng.normal(size=(7, 8)))
    a = causal_self_attention(x, 2, *params).data
    b = causal_self_attention(x, 2, *params).data
    assert np.array_equal(a, b)
