"""Unit tests for the reverse-mode tensor core."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphrde import tensor as T
from graphrde.errors import ContractError, DimensionError, NonFiniteError
from oracles import finite_difference_grad, max_grad_mismatch

RNG = np.random.default_rng(20240811)


def check_grads(build, arrays, tol=1e-6):
    """Compare taped gradients of ``build()`` against central differences."""
    params = [T.Tensor(a, requires_grad=True) for a in arrays]
    loss = build(*params)
    T.backward(loss)
    analytic = [p.grad for p in params]
    assert all(g is not None for g in analytic)

    def value():
        with T.no_grad():
            return build(*[T.Tensor(a) for a in arrays]).item()

    numeric = finite_difference_grad(value, arrays)
    assert max_grad_mismatch(analytic, numeric) < tol


def test_matmul_value():
    a = T.constant([[1.0, 2.0], [3.0, 4.0]])
    b = T.constant([[1.0], [1.0]])
    assert np.array_equal((a @ b).data, [[3.0], [7.0]])


def test_relu_value_and_zero_grad_in_dead_region():
    x = T.Tensor([-2.0], requires_grad=True)
    y = T.sum_all(T.relu(x))
    assert y.item() == 0.0
    T.backward(y)
    assert np.array_equal(x.grad, [0.0])


def test_simple_polynomial_gradient():
    # d/dx of sum(x*x + 3x) at x=2 is 2*2+3 = 7
    x = T.Tensor([2.0], requires_grad=True)
    y = T.sum_all(x * x + 3.0 * x)
    T.backward(y)
    assert np.allclose(x.grad, [7.0])


@pytest.mark.parametrize(
    "name,build,shapes",
    [
        ("add", lambda a, b: T.sum_all(T.tanh(a + b)), [(3, 4), (3, 4)]),
        ("add_bias", lambda a, b: T.sum_all(T.tanh(a + b)), [(3, 4), (4,)]),
        ("sub", lambda a, b: T.sum_all(T.tanh(a - b)), [(2, 5), (2, 5)]),
        ("mul", lambda a, b: T.sum_all(T.tanh(a * b)), [(4, 2), (4, 2)]),
        ("mul_broadcast", lambda a, b: T.sum_all(T.tanh(a * b)), [(1, 4), (3, 4)]),
        ("matmul", lambda a, b: T.sum_all(T.tanh(a @ b)), [(3, 4), (4, 2)]),
        ("matmul_stacked_left", lambda a, b: T.sum_all(T.tanh(a @ b)), [(2, 3, 4), (4, 2)]),
        ("matmul_stacked_right", lambda a, b: T.sum_all(T.tanh(a @ b)), [(3, 4), (2, 4, 2)]),
        ("matvec", lambda a, b: T.sum_all(T.tanh(T.matvec(a, b))), [(2, 3, 4), (2, 4)]),
        ("softmax", lambda a, b: T.sum_all(T.softmax_rows(a) * b), [(3, 5), (3, 5)]),
        ("relu", lambda a, b: T.sum_all(T.relu(a) * b), [(4, 4), (4, 4)]),
        ("tanh", lambda a, b: T.sum_all(T.tanh(a) * b), [(4, 3), (4, 3)]),
        ("abs", lambda a, b: T.sum_all(T.absolute(a) * b), [(5,), (5,)]),
        ("scale", lambda a, b: T.sum_all(T.scale(a, 2.5) * b), [(3,), (3,)]),
        ("mean", lambda a, b: T.mean_all(a * b), [(6,), (6,)]),
        ("reshape", lambda a, b: T.sum_all(T.reshape(a, (2, 6)) @ b), [(3, 4), (6, 2)]),
        ("transpose", lambda a, b: T.sum_all(T.transpose_last2(a) @ b), [(4, 3), (4, 2)]),
        ("neg", lambda a, b: T.sum_all(T.tanh(-a) * b), [(3, 3), (3, 3)]),
    ],
)
def test_op_gradients_match_finite_differences(name, build, shapes):
    arrays = [RNG.normal(size=s) * 0.8 + 0.1 for s in shapes]
    check_grads(build, arrays)


def test_two_layer_composition_gradient():
    def build(w1, b1, w2, x):
        h = T.relu(x @ w1 + b1)
        return T.mean_all(T.absolute(T.tanh(h @ w2)))

    arrays = [RNG.normal(size=s) for s in [(3, 4), (4,), (4, 2), (5, 3)]]
    check_grads(build, arrays)


def test_fan_in_gradient_accumulates_over_both_paths():
    x = T.Tensor([1.5], requires_grad=True)
    y = T.sum_all(x * x + x * x)  # two uses of the same node
    T.backward(y)
    assert np.allclose(x.grad, [6.0])


@given(
    st.integers(min_value=1, max_value=5),
    st.integers(min_value=1, max_value=5),
    st.integers(min_value=0, max_value=2**32 - 1),
)
@settings(max_examples=50, deadline=None)
def test_softmax_rows_sum_to_one(rows, cols, seed):
    rng = np.random.default_rng(seed)
    s = T.softmax_rows(T.constant(rng.normal(size=(rows, cols)) * 10.0))
    assert np.allclose(s.data.sum(axis=-1), 1.0, atol=1e-12)
    assert np.all(s.data >= 0.0)


def test_broadcast_limited_to_leading_axes():
    a = T.constant(np.ones((3, 1)))
    b = T.constant(np.ones((3, 4)))
    with pytest.raises(DimensionError):
        T.add(a, b)
    # leading-1 broadcast is accepted
    T.add(T.constant(np.ones((1, 4))), b)
    T.add(T.constant(np.ones(())), b)
    # axes where both operands are 1 don't block the leading rule
    x = T.Tensor(np.ones((1, 4, 8)), requires_grad=True)
    bias = T.Tensor(np.ones(8), requires_grad=True)
    out = T.add(x, bias)
    T.backward(T.sum_all(out))
    assert np.array_equal(bias.grad, np.full(8, 4.0))
    assert np.array_equal(x.grad, np.ones((1, 4, 8)))


def test_shape_mismatch_raises():
    with pytest.raises(DimensionError):
        T.add(T.constant(np.ones((2, 3))), T.constant(np.ones((2, 4))))
    with pytest.raises(DimensionError):
        T.matmul(T.constant(np.ones((2, 3))), T.constant(np.ones((2, 3))))
    with pytest.raises(DimensionError):
        T.matvec(T.constant(np.ones((2, 3, 4))), T.constant(np.ones((3, 4))))


def test_non_finite_construction_rejected():
    with pytest.raises(NonFiniteError):
        T.Tensor([1.0, np.nan])
    with pytest.raises(NonFiniteError):
        T.Tensor([np.inf])


def test_non_finite_op_output_rejected():
    big = T.constant(np.full((2,), 1e308))
    with np.errstate(over="ignore"), pytest.raises(NonFiniteError):
        T.mul(big, big)


def test_backward_requires_scalar_tracked_loss():
    p = T.Tensor(np.ones((2, 2)), requires_grad=True)
    vec = p + T.constant(np.zeros((2, 2)))
    with pytest.raises(ContractError):
        T.backward(vec)
    T.clear_tape()
    const = T.sum_all(T.constant(np.ones(3)))
    with pytest.raises(ContractError):
        T.backward(const)
    T.clear_tape()


def test_untracked_inputs_get_no_gradient():
    p = T.Tensor([2.0], requires_grad=True)
    c = T.constant([3.0])
    y = T.sum_all(p * c)
    T.backward(y)
    assert np.allclose(p.grad, [3.0])
    assert c.grad is None


def test_tape_cleared_and_single_backward_per_forward():
    p = T.Tensor([1.0], requires_grad=True)
    y = T.sum_all(p * p)
    assert T.tape_size() > 0
    T.backward(y)
    assert T.tape_size() == 0
    with pytest.raises(ContractError):
        T.backward(y)


def test_no_grad_suppresses_taping():
    p = T.Tensor([1.0], requires_grad=True)
    with T.no_grad():
        y = T.sum_all(p * p)
    assert not y.requires_grad
    assert T.tape_size() == 0


def test_backward_is_bit_deterministic():
    arrays = [RNG.normal(size=(4, 4)), RNG.normal(size=(4, 2))]

    def run():
        w = T.Tensor(arrays[0].copy(), requires_grad=True)
        x = T.Tensor(arrays[1].copy(), requires_grad=True)
        loss = T.mean_all(T.absolute(T.tanh(w @ x)))
        T.backward(loss)
        return w.grad.copy(), x.grad.copy()

    g1, g2 = run(), run()
    assert np.array_equal(g1[0], g2[0])
    assert np.array_equal(g1[1], g2[1])
