import math

import numpy as np
import pytest

from slimformer import tensor as T
from slimformer.tensor import (
    NumericError,
    Rng,
    ShapeError,
    Tensor,
    finite_diff_check,
    matmul,
    relu,
    softmax_rows,
)


def test_matmul_identity_bitwise():
    rng = np.random.default_rng(0)
    m = rng.standard_normal((2, 2))
    eye = Tensor(np.eye(2))
    out = matmul(eye, Tensor(m))
    assert np.array_equal(out.data, m)


def test_matmul_hand_arithmetic():
    out = matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([[5.0], [6.0]]))
    assert np.array_equal(out.data, [[17.0], [39.0]])


def test_matmul_zero_annihilates():
    m = np.random.default_rng(1).standard_normal((3, 3))
    out = matmul(Tensor(np.zeros((3, 3))), Tensor(m))
    assert np.array_equal(out.data, np.zeros((3, 3)))


def test_matmul_shape_mismatch():
    with pytest.raises(ShapeError):
        matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))
    with pytest.raises(ShapeError):
        matmul(Tensor(np.zeros((2, 2, 3))), Tensor(np.zeros((3, 3, 4))))


def test_matmul_backward_rule():
    rng = np.random.default_rng(2)
    a = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
    b = Tensor(rng.standard_normal((4, 2)), requires_grad=True)
    loss = T.sum_all(matmul(a, b))
    loss.backward()
    # dA = dC·Bᵀ with dC = ones; dB = Aᵀ·dC
    assert np.allclose(a.grad, np.ones((3, 2)) @ b.data.T)
    assert np.allclose(b.grad, a.data.T @ np.ones((3, 2)))


def test_softmax_rows_symmetry_and_closed_form():
    out = softmax_rows(Tensor([[0.0, 0.0]]))
    assert np.allclose(out.data, [[0.5, 0.5]], atol=1e-15)
    out = softmax_rows(Tensor([[3.7]]))
    assert out.data[0, 0] == 1.0
    out = softmax_rows(Tensor([[math.log(1.0), math.log(3.0)]]))
    assert np.allclose(out.data, [[0.25, 0.75]], atol=1e-15)


def test_softmax_rows_sum_and_shift_invariance():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((5, 7))
    out = softmax_rows(Tensor(x))
    assert np.all(np.abs(out.data.sum(axis=1) - 1.0) < 1e-12)
    shifted = softmax_rows(Tensor(x + rng.standard_normal((5, 1))))
    assert np.all(np.abs(out.data - shifted.data) < 1e-12)


def test_softmax_rows_requires_2d():
    with pytest.raises(ShapeError):
        softmax_rows(Tensor(np.zeros((2, 2, 2))))


def test_relu_values_and_subgradient():
    out = relu(Tensor([-1.0, 0.0, 2.0]))
    assert np.array_equal(out.data, [0.0, 0.0, 2.0])
    out = relu(Tensor(-np.ones(4)))
    assert np.array_equal(out.data, np.zeros(4))
    x = Tensor([-1.0, 2.0], requires_grad=True)
    T.sum_all(relu(x)).backward()
    assert np.array_equal(x.grad, [0.0, 1.0])
    # subgradient at exactly 0 is 0
    z = Tensor([0.0], requires_grad=True)
    T.sum_all(relu(z)).backward()
    assert z.grad[0] == 0.0


def test_finite_diff_check_closed_form():
    x = Tensor([1.0, 2.0], requires_grad=True)
    err = finite_diff_check(lambda t: T.sum_all(T.mul(t, t)), x, h=1e-4)
    assert err < 1e-8
    # the analytic gradient itself
    x.zero_grad()
    T.sum_all(T.mul(x, x)).backward()
    assert np.allclose(x.grad, [2.0, 4.0])


def test_finite_diff_check_constant_function():
    x = Tensor([0.3, -0.7], requires_grad=True)
    err = finite_diff_check(lambda t: T.sum_all(T.mul(t, 0.0)), x)
    assert err == 0.0


def test_non_finite_raises():
    with pytest.raises(NumericError):
        Tensor([np.inf])
    with pytest.raises(NumericError):
        T.exp(Tensor([1000.0]))


def test_determinism_bitwise():
    rng = np.random.default_rng(4)
    a, b = rng.standard_normal((16, 32)), rng.standard_normal((32, 8))
    one = matmul(Tensor(a), Tensor(b)).data
    two = matmul(Tensor(a.copy()), Tensor(b.copy())).data
    assert np.array_equal(one, two)
    # strided source vs contiguous copy
    big = rng.standard_normal((64, 64))
    v = matmul(Tensor(big[:16, :32]), Tensor(b[:32, :8])).data
    c = matmul(Tensor(np.ascontiguousarray(big[:16, :32])), Tensor(np.ascontiguousarray(b[:32, :8]))).data
    assert np.array_equal(v, c)


@pytest.mark.parametrize(
    "name,f,shape",
    [
        ("add", lambda x: T.sum_all(T.add(x, T.Tensor(np.linspace(0, 1, 12).reshape(3, 4)))), (3, 4)),
        ("add_broadcast", lambda x: T.sum_all(T.mul(T.add(x, T.Tensor(np.arange(4.0))), T.Tensor(np.random.default_rng(0).standard_normal((3, 4))))), (3, 4)),
        ("mul", lambda x: T.sum_all(T.mul(x, x)), (3, 4)),
        ("relu", lambda x: T.sum_all(T.mul(relu(x), T.Tensor(np.random.default_rng(1).standard_normal((3, 4))))), (3, 4)),
        ("sigmoid", lambda x: T.sum_all(T.sigmoid(x)), (6,)),
        ("exp", lambda x: T.sum_all(T.exp(x)), (5,)),
        ("log", lambda x: T.sum_all(T.log(T.add(T.mul(x, x), 1.0))), (5,)),
        ("clamp_min", lambda x: T.sum_all(T.clamp_min(x, 0.25)), (7,)),
        ("matmul_left", lambda x: T.sum_all(matmul(x, T.Tensor(np.random.default_rng(2).standard_normal((4, 3))))), (2, 4)),
        ("matmul_right", lambda x: T.sum_all(matmul(T.Tensor(np.random.default_rng(3).standard_normal((3, 2))), x)), (2, 4)),
        ("matmul_batched", lambda x: T.sum_all(matmul(x, T.permute(x, (0, 2, 1)))), (2, 3, 4)),
        ("matmul_nd_by_2d", lambda x: T.sum_all(matmul(x, T.Tensor(np.random.default_rng(4).standard_normal((4, 5))))), (2, 3, 4)),
        ("reshape", lambda x: T.sum_all(T.mul(T.reshape(x, (4, 3)), T.Tensor(np.random.default_rng(5).standard_normal((4, 3))))), (3, 4)),
        ("permute", lambda x: T.sum_all(T.mul(T.permute(x, (1, 0)), T.Tensor(np.random.default_rng(6).standard_normal((4, 3))))), (3, 4)),
        ("broadcast", lambda x: T.sum_all(T.mul(T.broadcast_to(x, (5, 3)), T.Tensor(np.random.default_rng(7).standard_normal((5, 3))))), (1, 3)),
        ("concat", lambda x: T.sum_all(T.mul(T.concat([x, x], axis=1), T.Tensor(np.random.default_rng(8).standard_normal((3, 8))))), (3, 4)),
        ("shrink", lambda x: T.sum_all(T.mul(T.shrink(x, (2, 3)), T.Tensor(np.random.default_rng(9).standard_normal((2, 3))))), (3, 4)),
        ("softmax", lambda x: T.sum_all(T.mul(T.softmax_last(x), T.Tensor(np.random.default_rng(10).standard_normal((3, 4))))), (3, 4)),
        ("log_softmax", lambda x: T.sum_all(T.mul(T.log_softmax_last(x), T.Tensor(np.random.default_rng(11).standard_normal((3, 4))))), (3, 4)),
        ("mean", lambda x: T.mean_all(T.mul(x, x)), (3, 4)),
        (
            "layer_norm",
            lambda x: T.sum_all(
                T.mul(
                    T.layer_norm_last(
                        x,
                        T.Tensor(np.random.default_rng(12).standard_normal(4) + 1.0, requires_grad=False),
                        T.Tensor(np.zeros(4)),
                        1e-6,
                    ),
                    T.Tensor(np.random.default_rng(13).standard_normal((3, 4))),
                )
            ),
            (3, 4),
        ),
    ],
)
def test_backward_rules_finite_diff(name, f, shape):
    x = Tensor(np.random.default_rng(17).standard_normal(shape) * 0.7, requires_grad=True)
    assert finite_diff_check(f, x, h=1e-4) < 1e-4, name


def test_layer_norm_param_gradients():
    rng = np.random.default_rng(21)
    x = Tensor(rng.standard_normal((3, 5)))
    coeff = Tensor(rng.standard_normal((3, 5)))
    w = Tensor(rng.standard_normal(5), requires_grad=True)
    err = finite_diff_check(
        lambda g: T.sum_all(T.mul(T.layer_norm_last(x, g, T.Tensor(np.zeros(5)), 1e-6), coeff)), w
    )
    assert err < 1e-4
    b = Tensor(rng.standard_normal(5), requires_grad=True)
    err = finite_diff_check(
        lambda g: T.sum_all(T.mul(T.layer_norm_last(x, w, g, 1e-6), coeff)), b
    )
    assert err < 1e-4


def test_gather_rows_forward_and_backward():
    table = Tensor(np.arange(12.0).reshape(4, 3), requires_grad=True)
    ids = np.array([[0, 2], [2, 2]])
    out = T.gather_rows(table, ids)
    assert out.shape == (2, 2, 3)
    assert np.array_equal(out.data[0, 1], [6.0, 7.0, 8.0])
    T.sum_all(out).backward()
    # row 2 gathered three times, row 0 once, rows 1 and 3 never
    assert np.array_equal(table.grad[:, 0], [1.0, 0.0, 3.0, 0.0])
    with pytest.raises(ShapeError):
        T.gather_rows(table, np.array([4]))


def test_shrink_scatters_into_master_region():
    master = Tensor(np.random.default_rng(5).standard_normal((4, 6)), requires_grad=True)
    view = T.shrink(master, (2, 3))
    assert np.array_equal(view.data, master.data[:2, :3])
    T.sum_all(T.mul(view, view)).backward()
    assert np.array_equal(master.grad[:2, :3], 2 * master.data[:2, :3])
    assert np.all(master.grad[2:, :] == 0.0)
    assert np.all(master.grad[:, 3:] == 0.0)


def test_grad_accumulates_across_backward_calls():
    x = Tensor([2.0], requires_grad=True)
    T.sum_all(T.mul(x, x)).backward()
    T.sum_all(T.mul(x, 3.0)).backward()
    assert np.allclose(x.grad, [7.0])  # 2x + 3


def test_no_grad_builds_no_graph():
    x = Tensor([1.0], requires_grad=True)
    with T.no_grad():
        y = T.mul(x, x)
    assert not y.requires_grad and y._backward is None


def test_rng_determinism_and_streams():
    a = Rng(42).normal((4,))
    b = Rng(42).normal((4,))
    assert np.array_equal(a, b)
    assert not np.array_equal(a, Rng(43).normal((4,)))
    # child streams are independent of sibling draw order
    r1 = Rng(7)
    c_first = r1.child(3).normal((2,))
    r2 = Rng(7)
    r2.normal((10,))
    c_second = r2.child(3).normal((2,))
    assert np.array_equal(c_first, c_second)
    assert Rng(0).algorithm == "pcg64"
