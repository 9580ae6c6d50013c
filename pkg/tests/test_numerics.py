"""Autodiff kernel: primitive values, gradient checks, Adam, tape lifecycle."""
import math

import numpy as np
import pytest

import mild.numerics as nm
from mild.numerics import ParamStore, Tape, Tensor2, numeric_gradient


def rel_err(a, n):
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-7)
    return np.max(np.abs(a - n) / denom)


def check_grads(build_loss, params, tol=1e-4):
    """Analytic vs central-difference gradients for every parameter."""
    with Tape() as tape:
        loss = build_loss()
    for p in params:
        p.grad = None
    tape.backward(loss)
    for p in params:
        analytic = p.grad if p.grad is not None else np.zeros(p.shape)
        numeric = numeric_gradient(lambda: build_loss().item(), p)
        assert rel_err(analytic, numeric) < tol


# ---------------------------------------------------------------------------
# frozen forward values

def test_softmax_frozen_values():
    s = nm.softmax(Tensor2([[1.0, 0.0, -1.0]]))
    np.testing.assert_allclose(s.value[0], [0.6652, 0.2447, 0.0900], atol=5e-5)
    assert s.value.sum() == pytest.approx(1.0)


def test_softmax_shift_invariance_and_stability():
    z = np.array([[1000.0, 1001.0, 999.0]])
    s = nm.softmax(Tensor2(z))
    s2 = nm.softmax(Tensor2(z - 1000.0))
    np.testing.assert_allclose(s.value, s2.value, atol=1e-12)
    assert np.all(np.isfinite(s.value))


def test_sigmoid_extremes_finite():
    s = nm.sigmoid(Tensor2([[-800.0, 0.0, 800.0]]))
    assert np.all(np.isfinite(s.value))
    assert s.value[0, 1] == pytest.approx(0.5)


def test_log_clamped_no_inf():
    out = nm.log(Tensor2([[0.0, 1e-20, 1.0]]))
    assert np.all(np.isfinite(out.value))
    assert out.value[0, 2] == 0.0
    assert out.value[0, 0] == pytest.approx(math.log(1e-12))


def test_affine_value():
    x = Tensor2([[1.0, 2.0]])
    W = Tensor2([[1.0, 0.0, 2.0], [0.0, 1.0, -1.0]])
    b = Tensor2([[10.0, 20.0, 30.0]])
    np.testing.assert_allclose(nm.affine(x, W, b).value, [[11.0, 22.0, 30.0]])


# ---------------------------------------------------------------------------
# gradient checks per primitive and for composite graphs

def test_grad_each_primitive():
    rng = np.random.default_rng(0)
    a = Tensor2(rng.normal(0, 1, (4, 3)) + 0.05)  # nudge away from relu kink
    b = Tensor2(rng.normal(0, 1, (4, 3)))
    w = Tensor2(rng.normal(0, 0.5, (3, 2)))
    row = Tensor2(rng.normal(0, 1, (1, 3)))
    colv = Tensor2(rng.normal(0, 1, (4, 1)))
    pos = Tensor2(rng.uniform(0.1, 0.9, (4, 3)))

    cases = [
        (lambda: nm.mean_all(nm.relu(a)), [a]),
        (lambda: nm.mean_all(nm.sigmoid(a)), [a]),
        (lambda: nm.mean_all(nm.mul(nm.softmax(a), b)), [a, b]),
        (lambda: nm.mean_all(nm.matmul(a, w)), [a, w]),
        (lambda: nm.mean_all(nm.add(a, row)), [a, row]),
        (lambda: nm.mean_all(nm.mul(colv, a)), [colv, a]),
        (lambda: nm.mean_all(nm.log(pos)), [pos]),
        (lambda: nm.mean_all(nm.pow_const(pos, 2.0)), [pos]),
        (lambda: nm.mean_all(nm.pow_const(pos, 0.5)), [pos]),
        (lambda: nm.sum_all(nm.concat_cols(a, b)), [a, b]),
        (lambda: nm.mean_all(nm.col(a, 1)), [a]),
        (lambda: nm.mean_all(nm.rowsum(nm.mul(a, b))), [a, b]),
        (lambda: nm.sum_all(nm.pow_const(nm.center_cols(a), 2.0)), [a]),
        (lambda: nm.mean_all(nm.matmul(nm.transpose(a), b)), [a, b]),
        (lambda: nm.mean_all(nm.clip(a, -0.5, 0.5)), [a]),
        (lambda: nm.mean_all(nm.smul(nm.sadd(a, 1.5), -2.0)), [a]),
    ]
    for build, params in cases:
        check_grads(build, params)


def test_grad_composite_network_many_seeds():
    # two-layer net with softmax head and log-loss-like objective
    for seed in range(10):
        rng = np.random.default_rng(seed)
        X = Tensor2(rng.normal(0, 1, (6, 5)))
        W1 = Tensor2(rng.normal(0, 0.6, (5, 4)))
        b1 = Tensor2(rng.normal(0, 0.1, (1, 4)))
        W2 = Tensor2(rng.normal(0, 0.6, (4, 3)))
        b2 = Tensor2(rng.normal(0, 0.1, (1, 3)))
        Y = rng.dirichlet(np.ones(3), size=6)

        def loss():
            h = nm.relu(nm.affine(X, W1, b1))
            p = nm.softmax(nm.affine(h, W2, b2))
            return nm.neg(nm.mean_all(nm.mul(nm.const(Y), nm.log(p))))

        check_grads(loss, [W1, b1, W2, b2, X])


def test_grad_zero_exponent_is_zero():
    a = Tensor2([[0.3, 0.7]])
    with Tape() as tape:
        out = nm.sum_all(nm.pow_const(a, 0.0))
    tape.backward(out)
    assert out.value[0, 0] == pytest.approx(2.0)
    np.testing.assert_array_equal(a.grad, np.zeros((1, 2)))


# ---------------------------------------------------------------------------
# tape lifecycle and shape errors

def test_backward_before_forward_rejected():
    t = Tape()
    with pytest.raises(RuntimeError):
        t.backward(Tensor2([[1.0]]))


def test_tape_single_use():
    a = Tensor2([[2.0]])
    with Tape() as tape:
        out = nm.smul(a, 3.0)
    tape.backward(out)
    with pytest.raises(RuntimeError):
        tape.backward(out)


def test_nested_tapes_rejected():
    with Tape():
        with pytest.raises(RuntimeError):
            with Tape():
                pass


def test_ops_without_tape_compute_values_only():
    a = Tensor2([[1.0, 2.0]])
    out = nm.smul(a, 2.0)
    np.testing.assert_allclose(out.value, [[2.0, 4.0]])
    assert out._backward is None


def test_shape_mismatch_raises():
    with pytest.raises(ValueError):
        nm.matmul(Tensor2(np.zeros((2, 3))), Tensor2(np.zeros((2, 3))))
    with pytest.raises(ValueError):
        nm.add(Tensor2(np.zeros((2, 3))), Tensor2(np.zeros((2, 4))))
    with pytest.raises(ValueError):
        Tensor2(np.zeros((2, 2, 2)))
    with pytest.raises(ValueError):
        Tensor2([[np.inf]])


def test_loss_must_be_scalar():
    a = Tensor2([[1.0, 2.0]])
    with Tape() as tape:
        out = nm.smul(a, 1.0)
    with pytest.raises(ValueError):
        tape.backward(out)


# ---------------------------------------------------------------------------
# parameter store and Adam

def test_glorot_bounds_and_determinism():
    s1 = ParamStore(seed=1)
    s2 = ParamStore(seed=1)
    w1 = s1.add("w", (30, 20))
    w2 = s2.add("w", (30, 20))
    np.testing.assert_array_equal(w1.value, w2.value)
    limit = math.sqrt(6.0 / 50.0)
    assert np.all(np.abs(w1.value) <= limit)
    assert np.abs(w1.value).max() > 0.5 * limit  # actually spreads over the range


def test_adam_first_step_magnitude():
    store = ParamStore(seed=0)
    p = store.add("p", (1, 2), init="zeros")
    p.value = np.array([[1.0, -2.0]])
    p.grad = np.array([[0.5, -3.0]])
    store.adam_step(lr=1e-3)
    # bias-corrected first step is lr * sign(gradient) (up to eps)
    np.testing.assert_allclose(p.value, [[1.0 - 1e-3, -2.0 + 1e-3]], atol=1e-8)


def test_adam_zero_gradient_is_noop_on_fresh_store():
    store = ParamStore(seed=0)
    p = store.add("p", (2, 2))
    before = p.value.copy()
    p.grad = np.zeros((2, 2))
    store.adam_step()
    np.testing.assert_array_equal(p.value, before)


def test_clip_global_norm():
    store = ParamStore(seed=0)
    a = store.add("a", (1, 3), init="zeros")
    b = store.add("b", (1, 4), init="zeros")
    a.grad = np.full((1, 3), 3.0)
    b.grad = np.full((1, 4), 4.0)
    norm = store.clip_global_norm(5.0)
    assert norm == pytest.approx(math.sqrt(9 * 3 + 16 * 4))
    clipped = math.sqrt(np.sum(a.grad ** 2) + np.sum(b.grad ** 2))
    assert clipped == pytest.approx(5.0)
    # already-small gradients pass through untouched
    a.grad = np.full((1, 3), 0.1)
    b.grad = np.full((1, 4), 0.1)
    store.clip_global_norm(5.0)
    assert np.all(a.grad == 0.1)


def test_param_store_roundtrip_and_guards():
    store = ParamStore(seed=3)
    store.add("w", (2, 2))
    with pytest.raises(ValueError):
        store.add("w", (2, 2))
    vals = store.values_dict()
    store.params["w"].value += 1.0
    store.load_values(vals)
    np.testing.assert_array_equal(store.params["w"].value, vals["w"])
    with pytest.raises(ValueError):
        store.load_values({"other": np.zeros((2, 2))})
