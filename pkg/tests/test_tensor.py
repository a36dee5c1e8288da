import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mmci import tensor as T
from mmci.gradcheck import numeric_grad, relative_error
from mmci.tensor import NumericError, Tensor


def grad_of(f, *xs):
    ts = [Tensor(x.copy(), requires_grad=True) for x in xs]
    T.backward(f(*ts))
    return [t.grad for t in ts]


def fd_of(f, x, *others):
    return numeric_grad(lambda: f(Tensor(x), *[Tensor(o) for o in others]).item(), x)


def test_matmul_examples():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(T.matmul(Tensor(np.eye(2)), Tensor(a)).data, a)
    out = T.matmul(Tensor([[1.0, 0.0], [0.0, 0.0]]), Tensor([[5.0], [7.0]]))
    np.testing.assert_array_equal(out.data, [[5.0], [0.0]])


def test_matmul_gradients_match_finite_differences():
    rng = np.random.default_rng(0)
    a, b = rng.standard_normal((3, 4)), rng.standard_normal((4, 2))
    w = rng.standard_normal((3, 2))

    def f(x, y):
        return T.sum_all(T.mul(T.matmul(x, y), w))

    ga, gb = grad_of(f, a, b)
    na = numeric_grad(lambda: f(Tensor(a), Tensor(b)).item(), a)
    nb = numeric_grad(lambda: f(Tensor(a), Tensor(b)).item(), b)
    assert relative_error(ga, na).max() < 1e-6
    assert relative_error(gb, nb).max() < 1e-6


def test_matmul_shape_mismatch():
    with pytest.raises(ValueError):
        T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_softmax_examples():
    np.testing.assert_array_equal(T.softmax(Tensor([0.0, 0.0])).data, [0.5, 0.5])
    np.testing.assert_array_equal(T.softmax(Tensor([1000.0, 1000.0])).data, [0.5, 0.5])
    out = T.softmax(Tensor([1.0, 2.0, 3.0])).data
    denom = math.fsum(math.exp(v) for v in (1, 2, 3))
    expected = [math.exp(v) / denom for v in (1, 2, 3)]
    np.testing.assert_allclose(out, expected, rtol=1e-14)
    assert abs(out.sum() - 1.0) < 1e-12


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 6)),
              elements=st.floats(-700, 700)))
def test_softmax_rows_sum_to_one(x):
    p = T.softmax(Tensor(x)).data
    assert np.all(p >= 0)
    np.testing.assert_allclose(p.sum(axis=-1), 1.0, atol=1e-9)


def test_kl_uniform_examples():
    assert T.kl_uniform(Tensor(np.full(7, 1 / 7)), 7).item() == pytest.approx(0.0, abs=1e-15)
    expected = 0.5 * math.log(0.5 / 0.7) + 0.5 * math.log(0.5 / 0.3)
    assert T.kl_uniform(Tensor([0.7, 0.3]), 2).item() == pytest.approx(expected, rel=1e-14)


def test_kl_uniform_clamps_zero_probabilities():
    v = T.kl_uniform(Tensor([1.0, 0.0]), 2).item()
    assert np.isfinite(v)
    assert v == pytest.approx(0.5 * math.log(0.5) + 0.5 * math.log(0.5 / 1e-12))


def test_kl_uniform_rejects_negative_probability():
    with pytest.raises(NumericError):
        T.kl_uniform(Tensor([1.2, -0.2]), 2)


def test_mse_and_mean():
    assert T.mse(Tensor([1.0, 2.0]), np.array([1.0, 2.0])).item() == 0.0
    assert T.mean(Tensor([[1.0, 2.0], [3.0, 5.0]])).item() == 2.75
    np.testing.assert_array_equal(T.mean(Tensor([[1.0, 2.0], [3.0, 6.0]]), axis=0).data, [2.0, 4.0])


UNARY = {
    "elu": T.elu,
    "relu": T.relu,
    "tanh": T.tanh,
    "softmax": T.softmax,
    "log": lambda x: T.log(T.softmax(x)),
    "scale": lambda x: T.scale(x, -2.5),
    "mean_axis": lambda x: T.mean(x, axis=0),
    "columns": lambda x: T.columns(x, 1, 3),
    "gather": lambda x: T.gather_rows(x, np.array([2, 0, 0, 1])),
    "scatter": lambda x: T.scatter_add_rows(x, np.array([1, 1, 0]), 4),
    "concat": lambda x: T.concat([x, T.scale(x, 2.0)]),
    "kl": lambda x: T.kl_uniform(T.softmax(x), 4),
}


@pytest.mark.parametrize("name", sorted(UNARY))
def test_unary_ops_gradcheck(name):
    rng = np.random.default_rng(1)
    x = rng.standard_normal((3, 4)) + 0.05  # keep relu away from the kink
    w = rng.standard_normal(UNARY[name](Tensor(x)).shape)

    def f(t):
        return T.sum_all(T.mul(UNARY[name](t), w))

    (g,) = grad_of(f, x)
    assert relative_error(g, fd_of(f, x)).max() < 1e-6


@pytest.mark.parametrize("op", [T.add, T.sub, T.mul])
def test_binary_ops_with_broadcast_gradcheck(op):
    rng = np.random.default_rng(2)
    a, b = rng.standard_normal((3, 4)), rng.standard_normal(4)

    def f(x, y):
        return T.sum_all(T.mul(op(x, y), op(x, y)))

    ga, gb = grad_of(f, a, b)
    assert gb.shape == (4,)
    assert relative_error(ga, numeric_grad(lambda: f(Tensor(a), Tensor(b)).item(), a)).max() < 1e-6
    assert relative_error(gb, numeric_grad(lambda: f(Tensor(a), Tensor(b)).item(), b)).max() < 1e-6


def test_mse_gradcheck():
    rng = np.random.default_rng(3)
    x, y = rng.standard_normal(5), rng.standard_normal(5)
    (g,) = grad_of(lambda t: T.mse(t, y), x)
    np.testing.assert_allclose(g, 2 * (x - y) / 5, rtol=1e-14)


def test_backward_constant_loss_gives_zero_grads():
    x = Tensor(np.ones(3), requires_grad=True)
    loss = T.add(T.scale(T.sum_all(x), 0.0), 4.0)
    T.backward(loss)
    np.testing.assert_array_equal(x.grad, np.zeros(3))


def test_backward_sum_gives_ones():
    x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    T.backward(T.sum_all(x))
    np.testing.assert_array_equal(x.grad, np.ones((2, 3)))


def test_backward_reused_node_accumulates():
    x = Tensor([3.0], requires_grad=True)
    y = T.mul(x, x)
    T.backward(T.sum_all(T.add(y, y)))
    np.testing.assert_array_equal(x.grad, [12.0])


def test_backward_rejects_non_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ValueError):
        T.backward(T.scale(x, 2.0))


def test_backward_only_touches_requires_grad_and_clears_interior():
    x = Tensor(np.ones(2), requires_grad=True)
    c = Tensor(np.ones(2))
    mid = T.mul(x, c)
    T.backward(T.sum_all(mid))
    assert c.grad is None
    assert mid.grad is None
    assert x.grad is not None


def test_tape_is_topological():
    x = Tensor(np.ones(2), requires_grad=True)
    y = T.elu(T.mul(x, x))
    loss = T.sum_all(T.add(y, x))
    tape = T.Tape.from_root(loss)
    pos = {id(n): i for i, n in enumerate(tape.nodes)}
    for n in tape.nodes:
        for parent in n._parents:
            assert pos[id(parent)] < pos[id(n)]


def test_non_finite_forward_is_an_error():
    with pytest.raises(NumericError):
        T.log(Tensor([-1.0]))


def test_determinism_bit_identical():
    rng = np.random.default_rng(4)
    a, b = rng.standard_normal((5, 5)), rng.standard_normal((5, 5))
    r1 = T.softmax(T.elu(T.matmul(Tensor(a), Tensor(b)))).data
    r2 = T.softmax(T.elu(T.matmul(Tensor(a), Tensor(b)))).data
    assert r1.tobytes() == r2.tobytes()
