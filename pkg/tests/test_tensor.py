import zlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp
from numpy.testing import assert_allclose, assert_array_equal

from dtmamba import tensor as T
from dtmamba.errors import ConfigError, ContractError, NumericError, ShapeError
from dtmamba.gradcheck import numerical_grad, relative_error
from dtmamba.ssm import selective_scan
from dtmamba.tensor import Tensor


def test_matmul_identity():
    m = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert_array_equal(T.matmul(np.eye(2), m).data, m)


def test_matmul_hand_value():
    out = T.matmul([[1.0, 2.0], [3.0, 4.0]], [[1.0], [1.0]])
    assert_array_equal(out.data, [[3.0], [7.0]])


def test_matmul_shape_mismatch():
    with pytest.raises(ShapeError):
        T.matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_matmul_sum_gradient_matches_fd(rng):
    a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    b = Tensor(rng.normal(size=(4, 2)))
    T.matmul(a, b).sum().backward()
    num = numerical_grad(lambda: T.matmul(Tensor(a.data), b).sum().item(), a.data)
    assert np.all(relative_error(a.grad, num) < 1e-6)


def test_causal_conv_identity_kernel(rng):
    x = rng.normal(size=(5, 3))
    y = T.causal_conv1d(x, np.ones((1, 3)), np.zeros(3))
    assert_array_equal(y.data, x)


def test_causal_conv_hand_value():
    y = T.causal_conv1d([[1.0], [2.0], [3.0]], [[1.0], [1.0]], [0.0])
    assert_array_equal(y.data[:, 0], [1.0, 3.0, 5.0])


@pytest.mark.parametrize("w", [1, 2, 3, 7])
def test_causal_conv_first_output_reads_only_first_input(rng, w):
    x = rng.normal(size=(4, 2))
    k = rng.normal(size=(w, 2))
    y0 = T.causal_conv1d(x, k).data[0]
    x2 = x.copy()
    x2[1:] = rng.normal(size=(3, 2))
    assert_array_equal(T.causal_conv1d(x2, k).data[0], y0)
    assert_allclose(y0, k[0] * x[0])


def test_causal_conv_rejects_empty_kernel():
    with pytest.raises(ConfigError):
        T.causal_conv1d(np.ones((3, 2)), np.ones((0, 2)))


def test_backward_sum_gives_ones(rng):
    x = Tensor(rng.normal(size=(2, 3, 4)), requires_grad=True)
    x.sum().backward()
    assert_array_equal(x.grad, np.ones((2, 3, 4)))


def test_backward_square():
    x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    (x * x).sum().backward()
    assert_array_equal(x.grad, [2.0, 4.0, 6.0])


def test_backward_rejects_non_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ContractError):
        (x * 2).backward()


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_forward_is_an_error():
    with pytest.raises(NumericError):
        T.log(Tensor([-1.0]))


def test_no_grad_records_nothing():
    x = Tensor([1.0], requires_grad=True)
    with T.no_grad():
        y = x * 3
    assert not y.requires_grad and y.is_leaf


def test_gradient_accumulates_across_fan_out(rng):
    data = rng.uniform(-2, 2, size=(3, 4))

    def f(x):
        return T.tanh(x) * T.sigmoid(x)

    x1 = Tensor(data, requires_grad=True)
    f(x1).sum().backward()
    x2 = Tensor(data, requires_grad=True)
    (f(x2) + f(x2)).sum().backward()
    assert_allclose(x2.grad, 2 * x1.grad, rtol=1e-12, atol=0)


def test_deep_graph_does_not_recurse(rng):
    x = Tensor(np.array([0.5]), requires_grad=True)
    y = x
    for _ in range(5000):
        y = y * 1.0
    y.sum().backward()
    assert x.grad[0] == 1.0


# ---------------------------------------------------------------------------
# finite-difference sweep over every differentiable op

def _pos(rng, shape):
    # domain-restricted operands (log, sqrt, division, fractional powers)
    return rng.uniform(0.5, 2.0, size=shape)


def _sym(rng, shape):
    return rng.uniform(-2.0, 2.0, size=shape)


OPS = {
    "add_broadcast": (lambda a, b: a + b, [(3, 4), (4,)], _sym),
    "sub": (lambda a, b: a - b, [(3, 4), (3, 4)], _sym),
    "mul_broadcast": (lambda a, b: a * b, [(2, 3, 4), (3, 1)], _sym),
    "div": (lambda a, b: a / b, [(3, 4), (3, 4)], _pos),
    "neg": (lambda a: -a, [(5,)], _sym),
    "pow2": (lambda a: a ** 2, [(5,)], _sym),
    "pow_half": (lambda a: a ** 0.5, [(5,)], _pos),
    "exp": (T.exp, [(3, 4)], _sym),
    "log": (T.log, [(3, 4)], _pos),
    "sqrt": (T.sqrt, [(3, 4)], _pos),
    "abs": (T.absolute, [(3, 4)], _sym),
    "tanh": (T.tanh, [(3, 4)], _sym),
    "sigmoid": (T.sigmoid, [(3, 4)], _sym),
    "silu": (T.silu, [(3, 4)], _sym),
    "softplus": (T.softplus, [(3, 4)], _sym),
    "relu": (T.relu, [(3, 4)], _sym),
    "matmul": (T.matmul, [(3, 4), (4, 2)], _sym),
    "matmul_batched": (T.matmul, [(2, 3, 4), (2, 4, 2)], _sym),
    "matmul_weight": (T.matmul, [(2, 1, 4), (4, 3)], _sym),
    "causal_conv1d": (T.causal_conv1d, [(2, 6, 3), (2, 3), (3,)], _sym),
    "causal_conv1d_wide": (T.causal_conv1d, [(4, 2), (6, 2), (2,)], _sym),
    "sum_axis": (lambda a: T.tsum(a, axis=1), [(3, 4, 2)], _sym),
    "sum_keepdims": (lambda a: T.tsum(a, axis=(0, 2), keepdims=True), [(3, 4, 2)], _sym),
    "mean": (lambda a: T.mean(a, axis=0), [(3, 4)], _sym),
    "reshape": (lambda a: T.reshape(a, (4, 3)), [(3, 4)], _sym),
    "transpose": (lambda a: T.transpose(a, (2, 0, 1)), [(2, 3, 4)], _sym),
    "getitem": (lambda a: a[1:, ::2], [(3, 4)], _sym),
    "getitem_fancy": (lambda a: a[[0, 0, 2]], [(3, 4)], _sym),
    "concat": (lambda a, b: T.concat([a, b], axis=1), [(2, 3), (2, 2)], _sym),
    "stack": (lambda a, b: T.stack([a, b], axis=0), [(2, 3), (2, 3)], _sym),
}


def _scan_inputs(rng):
    L, D, N = 4, 3, 2
    return [
        _sym(rng, (2, L, D)),
        rng.uniform(0.05, 1.0, size=(2, L, D)),   # delta > 0
        -rng.uniform(0.2, 2.0, size=(D, N)),       # A < 0
        _sym(rng, (2, L, N)),
        _sym(rng, (2, L, N)),
    ]


def _check_op(fn, inputs, rng):
    leaves = [Tensor(x.copy(), requires_grad=True) for x in inputs]
    out = fn(*leaves)
    weights = rng.uniform(0.5, 1.5, size=out.shape)
    T.tsum(out * weights).backward()
    for leaf, x in zip(leaves, inputs):
        def f():
            return float(np.sum(fn(*[Tensor(v) for v in inputs]).data * weights))
        num = numerical_grad(f, x, h=1e-5)
        err = relative_error(leaf.grad, num)
        assert np.all(err < 1e-4), f"max rel err {err.max():.3g}"


@pytest.mark.parametrize("name", sorted(OPS))
def test_op_gradients_match_finite_differences(name):
    fn, shapes, sampler = OPS[name]
    rng = np.random.default_rng(zlib.crc32(name.encode()))
    for _ in range(20):
        _check_op(fn, [sampler(rng, s) for s in shapes], rng)


def test_selective_scan_gradients_match_finite_differences():
    rng = np.random.default_rng(7)
    for _ in range(20):
        _check_op(selective_scan, _scan_inputs(rng), rng)


# ---------------------------------------------------------------------------
# shape-op identities

shapes = hnp.array_shapes(min_dims=1, max_dims=4, max_side=5)
finite = st.floats(-1e6, 1e6, allow_nan=False)


@given(hnp.arrays(np.float64, shapes, elements=finite))
def test_reshape_round_trip_is_bit_exact(a):
    t = Tensor(a)
    back = T.reshape(T.reshape(t, (-1,)), a.shape)
    assert_array_equal(back.data, a)


@settings(max_examples=50)
@given(hnp.arrays(np.float64, shapes, elements=finite), st.randoms())
def test_transpose_twice_is_identity(a, r):
    axes = list(range(a.ndim))
    r.shuffle(axes)
    inv = tuple(np.argsort(axes))
    t = T.transpose(T.transpose(Tensor(a), tuple(axes)), inv)
    assert_array_equal(t.data, a)
    assert_array_equal(T.transpose(T.transpose(Tensor(a))).data, a)


def test_richardson_difference_is_fourth_order():
    x = np.array([0.7])
    plain = numerical_grad(lambda: float(np.sin(x[0]) * 1e3), x, h=1e-2)
    extrap = numerical_grad(lambda: float(np.sin(x[0]) * 1e3), x, h=1e-2, richardson=True)
    exact = 1e3 * np.cos(0.7)
    assert abs(extrap[0] - exact) < 1e-3 * abs(plain[0] - exact)
