import numpy as np
import pytest

import sac.kernels as K
from sac.kernels import ShapeError, Tape, Tensor, grad_check, value


def t64(a):
    return Tensor(np.asarray(a, dtype=np.float64))


def rand_t(rng, shape):
    return t64(rng.normal(size=shape))


# ---------------------------------------------------------------------------
# forward-value oracles
# ---------------------------------------------------------------------------

def test_linear_identity_passthrough():
    x = rand_t(np.random.default_rng(0), (3, 4))
    w = t64(np.eye(4))
    b = t64(np.zeros(4))
    y = K.linear(x, w, b)
    assert np.array_equal(y.data, x.data)


def test_linear_bias_shift():
    x = t64(np.zeros((2, 3)))
    w = t64(np.eye(3))
    b = t64([1.0, 2.0, 3.0])
    y = K.linear(x, w, b)
    assert np.allclose(y.data, np.tile([1.0, 2.0, 3.0], (2, 1)))


def test_softmax_uniform_pair():
    y = K.softmax_lastdim(t64([0.0, 0.0]))
    assert np.allclose(y.data, [0.5, 0.5])


def test_softmax_extreme_logits_no_overflow():
    y = K.softmax_lastdim(t64([1000.0, 0.0]))
    assert np.all(np.isfinite(y.data))
    assert y.data[0] == pytest.approx(1.0)
    assert y.data[1] == pytest.approx(0.0, abs=1e-300)


def test_layer_norm_constant_row_zeros():
    x = t64(np.full((2, 5), 7.3))
    y = K.layer_norm(x, t64(np.ones(5)), t64(np.zeros(5)))
    assert np.allclose(y.data, 0.0)


def test_layer_norm_standardizes():
    rng = np.random.default_rng(3)
    x = rand_t(rng, (4, 16))
    y = K.layer_norm(x, t64(np.ones(16)), t64(np.zeros(16)))
    assert np.allclose(y.data.mean(axis=-1), 0.0, atol=1e-12)
    # biased variance, eps softens it slightly
    assert np.allclose(y.data.var(axis=-1), 1.0, atol=1e-3)


def test_attention_single_position_returns_value():
    rng = np.random.default_rng(1)
    q, k, v = (rand_t(rng, (1, 4)) for _ in range(3))
    y = K.scaled_dot_attention(q, k, v)
    assert np.allclose(y.data, v.data)


def test_attention_identical_keys_average_values():
    rng = np.random.default_rng(2)
    q = rand_t(rng, (3, 4))
    k = t64(np.tile(rng.normal(size=4), (3, 1)))
    v = rand_t(rng, (3, 4))
    y = K.scaled_dot_attention(q, k, v)
    assert np.allclose(y.data, np.tile(v.data.mean(axis=0), (3, 1)))


def test_logsumexp_matches_naive_small_values():
    rng = np.random.default_rng(4)
    x = rng.normal(size=11)
    got = value(K.logsumexp(t64(x)))
    assert got == pytest.approx(np.log(np.exp(x).sum()), abs=1e-6)


def test_logsumexp_large_values_finite():
    got = value(K.logsumexp(t64([1e4, 1e4 - 1.0])))
    assert np.isfinite(got)
    assert got == pytest.approx(1e4 + np.log(1 + np.exp(-1.0)))


def test_softplus_limits():
    y = K.softplus(t64([-5e4, 0.0, 5e4]))
    assert y.data[0] == 0.0
    assert y.data[1] == pytest.approx(np.log(2.0))
    assert y.data[2] == pytest.approx(5e4)


def test_lookup_gathers_rows():
    table = t64(np.arange(12.0).reshape(4, 3))
    y = K.lookup(table, np.array([2, 0, 2]))
    assert np.array_equal(y.data, table.data[[2, 0, 2]])


def test_relu_clamps():
    y = K.relu(t64([-2.0, 0.0, 3.0]))
    assert np.array_equal(y.data, [0.0, 0.0, 3.0])


# ---------------------------------------------------------------------------
# backward correctness
# ---------------------------------------------------------------------------

def test_square_gradient_exact():
    # d/dx (x·x) at 3 is 6; both matmul operands alias the same tensor
    x = t64([[3.0]])
    with Tape() as tape:
        y = K.matmul(x, x)
    tape.backward(y)
    assert x.grad[0, 0] == pytest.approx(6.0, abs=1e-8)


def test_lookup_repeated_ids_accumulate():
    table = t64(np.zeros((3, 2)))
    with Tape() as tape:
        y = K.tsum(K.lookup(table, np.array([0, 0, 1])))
    tape.backward(y)
    assert np.array_equal(table.grad, [[2.0, 2.0], [1.0, 1.0], [0.0, 0.0]])


def test_grads_accumulate_across_tapes():
    x = t64([[1.0, 2.0]])
    w = t64([[1.0], [1.0]])
    for _ in range(2):
        with Tape() as tape:
            y = K.matmul(x, w)
        tape.backward(y)
    assert np.array_equal(x.grad, [[2.0, 2.0]])
    x.zero_grad()
    assert x.grad is None


def test_ops_without_tape_record_nothing():
    x = t64([1.0, 2.0])
    y = K.add(x, x)
    assert K.current_tape() is None
    assert y.grad is None and x.grad is None


def test_backward_rejects_non_scalar():
    x = t64([1.0, 2.0])
    with Tape() as tape:
        y = K.add(x, x)
    with pytest.raises(ShapeError):
        tape.backward(y)


def _check(f, params, tol=1e-6):
    rep = grad_check(f, params, tol=tol)
    assert rep.ok(tol), f"{rep.worst_param}: {rep.max_rel_error}"


def test_grad_add_broadcast():
    rng = np.random.default_rng(10)
    a, b = rand_t(rng, (3, 4)), rand_t(rng, (4,))
    w = rand_t(rng, (4, 1))
    _check(lambda: K.tsum(K.matmul(K.add(a, b), w)), [("a", a), ("b", b), ("w", w)])


def test_grad_sub_broadcast():
    rng = np.random.default_rng(11)
    a, b = rand_t(rng, (2, 3)), rand_t(rng, (1, 3))
    _check(lambda: K.tsum(K.sub(a, b)), [("a", a), ("b", b)])


def test_grad_scale():
    rng = np.random.default_rng(12)
    a = rand_t(rng, (5,))
    _check(lambda: K.tsum(K.scale(a, -2.5)), [("a", a)])


def test_grad_matmul():
    rng = np.random.default_rng(13)
    a, b = rand_t(rng, (3, 4)), rand_t(rng, (4, 2))
    _check(lambda: K.tsum(K.matmul(a, b)), [("a", a), ("b", b)])


def test_grad_linear():
    rng = np.random.default_rng(14)
    x, w, b = rand_t(rng, (3, 4)), rand_t(rng, (4, 2)), rand_t(rng, (2,))
    _check(lambda: K.tsum(K.linear(x, w, b)), [("x", x), ("w", w), ("b", b)])


def test_grad_relu_away_from_kink():
    rng = np.random.default_rng(15)
    x = t64(rng.normal(size=(4, 3)))
    x.data[np.abs(x.data) < 0.1] += 0.2
    w = rand_t(rng, (3, 1))
    _check(lambda: K.tsum(K.matmul(K.relu(x), w)), [("x", x)])


def test_grad_softmax():
    rng = np.random.default_rng(16)
    x = rand_t(rng, (2, 5))
    w = rand_t(rng, (5, 1))
    _check(lambda: K.tsum(K.matmul(K.softmax_lastdim(x), w)), [("x", x), ("w", w)])


def test_grad_layer_norm():
    rng = np.random.default_rng(17)
    x = rand_t(rng, (3, 6))
    gain = t64(rng.normal(size=6) + 2.0)
    shift = rand_t(rng, (6,))
    w = rand_t(rng, (6, 1))
    _check(
        lambda: K.tsum(K.matmul(K.layer_norm(x, gain, shift), w)),
        [("x", x), ("gain", gain), ("shift", shift)],
        tol=1e-5,
    )


def test_grad_attention():
    rng = np.random.default_rng(18)
    q, k, v = (rand_t(rng, (2, 3, 4)) for _ in range(3))
    w = rand_t(rng, (4, 1))
    _check(
        lambda: K.tsum(K.matmul(K.scaled_dot_attention(q, k, v), w)),
        [("q", q), ("k", k), ("v", v)],
        tol=1e-5,
    )


def test_grad_reshape_transpose_row_concat():
    rng = np.random.default_rng(19)
    a = rand_t(rng, (2, 6))
    b = rand_t(rng, (3, 4))
    w = rand_t(rng, (4, 1))

    def f():
        left = K.reshape(a, (3, 4))
        right = K.transpose(K.reshape(b, (4, 3)), (1, 0))
        both = K.concat([left, right])
        return K.tsum(K.matmul(K.add(both, K.row(both, 0)), w))

    _check(f, [("a", a), ("b", b), ("w", w)])


def test_grad_logsumexp_softplus_lookup():
    rng = np.random.default_rng(20)
    table = rand_t(rng, (5, 3))
    ids = np.array([1, 4, 1])

    def f():
        rows = K.lookup(table, ids)
        return K.add(K.logsumexp(K.reshape(rows, (9,))), K.tsum(K.softplus(rows)))

    _check(f, [("table", table)])


def test_grad_check_catches_corrupted_backward():
    # negative control: a backward missing its factor of two must be flagged
    x = t64([1.5, -0.7, 2.0])

    def bad_square(t):
        out = Tensor(t.data * t.data)

        def bwd(g):
            K._accum(t, g * t.data)

        K._record(out, bwd)
        return out

    rep = grad_check(lambda: K.tsum(bad_square(x)), [("x", x)])
    assert not rep.ok(1e-4)
    assert rep.max_rel_error > 0.2


# ---------------------------------------------------------------------------
# shape validation
# ---------------------------------------------------------------------------

def test_matmul_shape_mismatch():
    with pytest.raises(ShapeError):
        K.matmul(t64(np.zeros((2, 3))), t64(np.zeros((4, 2))))


def test_attention_shape_mismatch():
    with pytest.raises(ShapeError):
        K.scaled_dot_attention(
            t64(np.zeros((2, 4))), t64(np.zeros((2, 4))), t64(np.zeros((3, 4)))
        )


def test_value_requires_single_element():
    assert value(t64([3.0])) == 3.0
    with pytest.raises(TypeError):
        value(t64([1.0, 2.0]))
