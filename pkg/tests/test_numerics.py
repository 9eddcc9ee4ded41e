import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hotvae import numerics as nx
from hotvae.numerics import Tensor

from conftest import autodiff_grad, central_difference

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


def test_matmul_identity_and_small_product():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(nx.matmul(np.eye(2), a).data, a)
    assert nx.matmul([[1.0, 2.0]], [[3.0], [4.0]]).data.tolist() == [[11.0]]


def test_matmul_matches_triple_loop(rng):
    a, b = rng.standard_normal((3, 4)), rng.standard_normal((4, 2))
    expected = np.zeros((3, 2))
    for i in range(3):
        for j in range(2):
            acc = 0.0
            for k in range(4):
                acc += a[i, k] * b[k, j]
            expected[i, j] = acc
    np.testing.assert_allclose(nx.matmul(a, b).data, expected, rtol=0, atol=1e-15)


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(nx.ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        nx.matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_softmax_examples():
    np.testing.assert_array_equal(nx.softmax_rows(np.zeros((1, 4))).data, [[0.25] * 4])
    big = nx.softmax_rows(np.array([[1000.0, 0.0]])).data
    assert big[0, 0] == 1.0 and big[0, 1] < 1e-300
    mpmath.mp.dps = 40
    exps = [mpmath.e**k for k in (1, 2, 3)]
    oracle = [float(e / sum(exps)) for e in exps]
    np.testing.assert_allclose(nx.softmax_rows(np.array([[1.0, 2.0, 3.0]])).data[0], oracle, rtol=0, atol=1e-14)


def test_softmax_fully_masked_row_is_an_error():
    with pytest.raises(nx.DegenerateRowError):
        nx.softmax_rows(np.zeros((2, 3)), np.array([[True, False, False], [False, False, False]]))


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (4, 5), elements=finite), arrays(bool, (4, 5)))
def test_softmax_rows_sum_to_one_and_masked_are_zero(x, mask):
    mask[:, 0] = True
    s = nx.softmax_rows(x, mask).data
    assert np.all(s[~mask] == 0.0)
    np.testing.assert_allclose(s.sum(axis=-1), 1.0, atol=1e-12)


def test_sigmoid_values():
    assert nx.sigmoid(0.0).data == 0.5
    assert abs(nx.sigmoid(40.0).data - 1.0) <= 1e-15
    mpmath.mp.dps = 40
    assert abs(nx.sigmoid(1.0).data - float(1 / (1 + mpmath.e**-1))) < 1e-16
    assert nx.sigmoid(-800.0).data == 0.0


def test_layer_norm_examples(rng):
    one, zero = np.ones(3), np.zeros(3)
    np.testing.assert_array_equal(nx.layer_norm([5.0, 5.0, 5.0], one, zero).data, [0.0, 0.0, 0.0])
    out = nx.layer_norm([1.0, 3.0], np.ones(2), np.zeros(2)).data
    # mean 2, variance 1, so each entry is +-1/sqrt(1 + 1e-5)
    np.testing.assert_allclose(out, [-1 / np.sqrt(1 + 1e-5), 1 / np.sqrt(1 + 1e-5)], rtol=1e-15)
    np.testing.assert_allclose(out, [-1.0, 1.0], atol=1e-4)
    v = nx.layer_norm(rng.standard_normal(64) * 3 + 1, np.ones(64), np.zeros(64)).data
    assert abs(v.mean()) < 1e-10 and abs(v.std() - 1) < 1e-3
    with pytest.raises(nx.ShapeError):
        nx.layer_norm(np.zeros((2, 0)), np.zeros(0), np.zeros(0))


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (3, 6), elements=finite))
def test_layer_norm_zero_mean_property(x):
    out = nx.layer_norm(x, np.full(6, 2.5), np.zeros(6)).data
    assert np.all(np.abs(out.mean(axis=-1)) < 1e-10)


def test_dropout_modes(rng):
    x = rng.standard_normal(10)
    np.testing.assert_array_equal(nx.dropout(x, 0.0, True, rng).data, x)
    np.testing.assert_array_equal(nx.dropout(x, 0.5, False, rng).data, x)
    out = nx.dropout(np.ones(10**6), 0.5, True, np.random.default_rng(0)).data
    assert 0.99 <= out.mean() <= 1.01
    assert set(np.unique(out)) <= {0.0, 2.0}
    for bad in (-0.1, 1.0, 1.5):
        with pytest.raises(nx.ParameterError):
            nx.dropout(x, bad, True, rng)


def test_backward_simple_cases():
    x = Tensor([1.0, -2.0, 3.0], requires_grad=True)
    with nx.Tape() as tape:
        loss = nx.sum_(x)
    nx.backward(loss, tape)
    np.testing.assert_array_equal(x.grad, [1.0, 1.0, 1.0])

    w = Tensor([0.5, -0.25], requires_grad=True)
    xs = np.array([1.0, 2.0])  # w.x == 0
    with nx.Tape() as tape:
        loss = nx.sigmoid(nx.sum_(nx.mul(w, xs)))
    nx.backward(loss, tape)
    np.testing.assert_allclose(w.grad, 0.25 * xs, rtol=0, atol=1e-16)


def test_backward_needs_scalar_and_accumulates():
    x = Tensor(np.ones(3), requires_grad=True)
    with nx.Tape() as tape:
        y = x * 2.0
    with pytest.raises(nx.ShapeError):
        nx.backward(y, tape)
    for _ in range(2):
        with nx.Tape() as tape:
            loss = nx.sum_(x * 3.0)
        nx.backward(loss, tape)
    np.testing.assert_array_equal(x.grad, [6.0, 6.0, 6.0])


def test_ops_outside_a_tape_do_not_record():
    x = Tensor(np.ones(2), requires_grad=True)
    y = nx.exp(x)
    assert not y.requires_grad


def test_non_finite_results_raise():
    with pytest.raises(nx.NonFiniteError):
        nx.log(np.array([0.0]))
    with pytest.raises(nx.NonFiniteError):
        nx.exp(np.array([1e4]))


def _gradcheck(build, shapes, rng, tol=1e-6):
    params = [Tensor(rng.standard_normal(s), requires_grad=True) for s in shapes]

    def f():
        return build(*params)

    grads = autodiff_grad(f, params)
    for p, g in zip(params, grads):
        for idx in np.ndindex(p.shape):
            fd = central_difference(lambda: float(f().data), p.data, idx)
            assert abs(g[idx] - fd) / max(1.0, abs(fd)) < tol, (idx, g[idx], fd)


MASK = np.array([[True, False, True, True], [False, True, True, False], [True, True, True, True]])

OP_CASES = {
    "matmul_batched": (lambda a, b: nx.sum_(nx.mul(nx.matmul(a, b), nx.matmul(a, b))), [(2, 3, 4), (4, 2)]),
    "softmax_masked": (lambda x, w: nx.sum_(nx.mul(nx.softmax_rows(x, MASK), w)), [(3, 4), (3, 4)]),
    "layer_norm": (lambda x, g, b, w: nx.sum_(nx.mul(nx.layer_norm(x, g, b), w)), [(2, 3, 5), (5,), (5,), (2, 3, 5)]),
    "sigmoid_log": (lambda x: nx.sum_(nx.log(nx.sigmoid(x))), [(6,)]),
    "div_broadcast": (lambda a, b: nx.sum_(nx.div(a, nx.add(nx.exp(b), 1.0))), [(3, 4), (4,)]),
    "transpose_reshape": (lambda a, w: nx.sum_(nx.mul(nx.reshape(nx.transpose(a, (1, 0, 2)), (3, 8)), w)),
                          [(2, 3, 4), (3, 8)]),
    "mean_axis": (lambda a: nx.sum_(nx.power(nx.mean(a, axis=(0, 2), keepdims=True), 3)), [(2, 3, 4)]),
    "sqrt_exp": (lambda a: nx.sum_(nx.sqrt(nx.exp(a))), [(5,)]),
}


@pytest.mark.parametrize("name", sorted(OP_CASES))
def test_op_gradients_match_finite_differences(name, rng):
    build, shapes = OP_CASES[name]
    _gradcheck(build, shapes, rng)


def test_relu_and_clamp_gradients_away_from_kinks():
    x = Tensor(np.array([-1.0, 0.5, 2.0]), requires_grad=True)
    with nx.Tape() as tape:
        loss = nx.sum_(nx.add(nx.relu(x), nx.clamp(x, -0.5, 1.0)))
    nx.backward(loss, tape)
    np.testing.assert_array_equal(x.grad, [0.0, 2.0, 1.0])


def test_adam_zero_gradient_leaves_parameters():
    p = np.array([1.0, -2.0])
    state = nx.AdamState(lr=0.1)
    nx.adam_step([p], [np.zeros(2)], state)
    np.testing.assert_array_equal(p, [1.0, -2.0])
    assert state.t == 1


def test_adam_first_step():
    p = np.array([0.0])
    nx.adam_step([p], [np.array([1.0])], nx.AdamState(lr=0.1))
    # m_hat = 1, v_hat = 1 after bias correction
    assert p[0] == pytest.approx(-0.1 / (1 + 1e-8), rel=0, abs=1e-16)


def test_adam_two_steps_match_recurrence():
    g, lr, b1, b2, eps = 0.3, 0.05, 0.9, 0.999, 1e-8
    theta, m, v = 1.0, 0.0, 0.0
    for t in (1, 2):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        theta -= lr * (m / (1 - b1**t)) / ((v / (1 - b2**t)) ** 0.5 + eps)
    p = np.array([1.0])
    state = nx.AdamState(lr=lr)
    for _ in range(2):
        nx.adam_step([p], [np.array([g])], state)
    assert abs(p[0] - theta) < 1e-12
    with pytest.raises(nx.ParameterError):
        nx.adam_step([p], [np.zeros(3)], state)


def test_same_seed_gives_bit_identical_results():
    def run():
        rng = np.random.default_rng(7)
        x = Tensor(rng.standard_normal((4, 8)))
        w = Tensor(rng.standard_normal((8, 8)))
        h = nx.dropout(nx.layer_norm(nx.matmul(x, w), np.ones(8), np.zeros(8)), 0.3, True, rng)
        return nx.softmax_rows(h).data

    assert run().tobytes() == run().tobytes()
