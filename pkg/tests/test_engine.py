"""Engine tests: conv kernels against a naive loop oracle, every op
against central finite differences, tape semantics, and Adam."""

import numpy as np
import pytest

from stgad.engine import (
    Adam,
    DiffArray,
    adam_step,
    add,
    backward,
    bias_add,
    channel_mix,
    concat_channels,
    constant,
    conv1d_dilated,
    div,
    elementwise,
    init_adam_state,
    matmul,
    max_relative_error,
    mean_all,
    mul,
    node_mix,
    normalize_adjacency,
    parameter,
    relu,
    sigmoid,
    slice_time_tail,
    sub,
    sum_all,
    tanh,
    transpose,
    zero_grad,
)
from stgad.engine import kernels, kernels_numpy
from stgad.errors import ContractError, DimensionError, NumericError

try:
    from stgad.engine import _convcore
except ImportError:
    _convcore = None


def naive_conv(x, k, dilation):
    """Independent scalar-loop oracle for the dilated valid convolution."""
    b, ci, n, t = x.shape
    co, _, w = k.shape
    t_out = t - dilation * (w - 1)
    out = np.zeros((b, co, n, t_out))
    for ib in range(b):
        for io in range(co):
            for jn in range(n):
                for it in range(t_out):
                    acc = 0.0
                    for ic in range(ci):
                        for iw in range(w):
                            acc += x[ib, ic, jn, it + dilation * iw] * k[io, ic, iw]
                    out[ib, io, jn, it] = acc
    return out


class TestConvKernels:
    @pytest.mark.parametrize("dilation", [1, 2, 4])
    def test_forward_matches_naive_oracle(self, dilation):
        rng = np.random.default_rng(7 + dilation)
        x = rng.normal(size=(2, 3, 4, 17))
        k = rng.normal(size=(5, 3, 3))
        got = kernels.conv1d_forward(x, k, dilation)
        assert np.allclose(got, naive_conv(x, k, dilation), atol=1e-12)

    def test_width_one_is_channel_mix(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(2, 3, 4, 9))
        k = rng.normal(size=(5, 3, 1))
        got = kernels.conv1d_forward(x, k, 1)
        want = np.einsum("bcnt,oc->bont", x, k[:, :, 0])
        assert np.allclose(got, want, atol=1e-12)

    def test_too_short_input_raises(self):
        x = np.zeros((1, 1, 1, 4))
        k = np.zeros((1, 1, 3))
        with pytest.raises(DimensionError):
            kernels.conv1d_forward(x, k, 2)

    def test_forward_is_deterministic(self):
        rng = np.random.default_rng(11)
        x = rng.normal(size=(4, 8, 6, 30))
        k = rng.normal(size=(8, 8, 7))
        a = kernels.conv1d_forward(x, k, 2)
        b = kernels.conv1d_forward(x, k, 2)
        assert a.tobytes() == b.tobytes()

    @pytest.mark.skipif(_convcore is None, reason="compiled kernels not built")
    @pytest.mark.parametrize("dtype,tol", [(np.float64, 1e-10), (np.float32, 1e-4)])
    def test_backends_agree(self, dtype, tol):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(3, 4, 5, 25)).astype(dtype)
        k = rng.normal(size=(6, 4, 5)).astype(dtype)
        for d in (1, 2, 3):
            fa = _convcore.conv1d_forward(x, k, d)
            fb = kernels_numpy.conv1d_forward(x, k, d)
            assert np.allclose(fa, fb, rtol=tol, atol=tol)
            g = rng.normal(size=fa.shape).astype(dtype)
            ia = _convcore.conv1d_backward_input(g, k, d, x.shape[3])
            ib = kernels_numpy.conv1d_backward_input(g, k, d, x.shape[3])
            assert np.allclose(ia, ib, rtol=tol, atol=tol)
            ka = _convcore.conv1d_backward_kernel(g, x, k.shape[2], d)
            kb = kernels_numpy.conv1d_backward_kernel(g, x, k.shape[2], d)
            assert np.allclose(ka, kb, rtol=tol, atol=tol)


def projected(out, rng):
    """Random fixed projection making a scalar loss that touches every element."""
    c = constant(rng.normal(size=out.values.shape))
    return sum_all(mul(out, c))


class TestOpGradients:
    """Central finite differences are the oracle for every recorded gradient."""

    TOL = 1e-6  # float64, O(1) values: well under the 1e-4 gate

    def check(self, loss_fn, params):
        assert max_relative_error(loss_fn, params) < self.TOL

    def test_binary_elementwise(self):
        rng = np.random.default_rng(0)
        a = parameter(rng.normal(size=(3, 4)))
        b = parameter(rng.normal(size=(3, 4)) + 2.0)  # keep divisors off zero
        for op in (add, sub, mul, div):
            self.check(lambda op=op: projected(op(a, b), np.random.default_rng(1)), [a, b])

    def test_unary_elementwise(self):
        rng = np.random.default_rng(2)
        vals = rng.normal(size=(4, 5))
        vals[np.abs(vals) < 0.05] = 0.1  # keep relu inputs off the kink
        a = parameter(vals)
        for op in (tanh, sigmoid, relu):
            self.check(lambda op=op: projected(op(a), np.random.default_rng(3)), [a])

    def test_scalar_broadcast_ops(self):
        rng = np.random.default_rng(4)
        a = parameter(rng.normal(size=(3, 3)))
        self.check(lambda: projected(2.5 * a + 1.0 - a * 0.5, np.random.default_rng(5)), [a])
        self.check(lambda: projected(-(a / 4.0), np.random.default_rng(5)), [a])

    def test_matmul_and_transpose(self):
        rng = np.random.default_rng(6)
        a = parameter(rng.normal(size=(3, 4)))
        b = parameter(rng.normal(size=(4, 2)))
        self.check(lambda: projected(matmul(a, b), np.random.default_rng(7)), [a, b])
        self.check(lambda: projected(transpose(a), np.random.default_rng(7)), [a])

    def test_bias_add(self):
        rng = np.random.default_rng(8)
        x = parameter(rng.normal(size=(2, 3, 4, 5)))
        b = parameter(rng.normal(size=3))
        self.check(lambda: projected(bias_add(x, b), np.random.default_rng(9)), [x, b])

    def test_channel_mix(self):
        rng = np.random.default_rng(10)
        x = parameter(rng.normal(size=(2, 3, 4, 5)))
        w = parameter(rng.normal(size=(3, 6)))
        self.check(lambda: projected(channel_mix(x, w), np.random.default_rng(11)), [x, w])

    def test_node_mix(self):
        rng = np.random.default_rng(12)
        adj = parameter(rng.uniform(size=(4, 4)))
        x = parameter(rng.normal(size=(2, 3, 4, 5)))
        self.check(lambda: projected(node_mix(adj, x), np.random.default_rng(13)), [adj, x])

    def test_normalize_adjacency(self):
        rng = np.random.default_rng(14)
        a = parameter(rng.uniform(size=(5, 5)))
        self.check(lambda: projected(normalize_adjacency(a), np.random.default_rng(15)), [a])

    @pytest.mark.parametrize("dilation", [1, 2])
    def test_conv1d_dilated(self, dilation):
        rng = np.random.default_rng(16 + dilation)
        x = parameter(rng.normal(size=(2, 3, 2, 12)))
        k = parameter(rng.normal(size=(4, 3, 1, 3)))
        self.check(
            lambda: projected(conv1d_dilated(x, k, dilation), np.random.default_rng(17)),
            [x, k],
        )

    def test_slice_and_concat(self):
        rng = np.random.default_rng(18)
        x = parameter(rng.normal(size=(2, 3, 4, 7)))
        y = parameter(rng.normal(size=(2, 2, 4, 7)))
        self.check(
            lambda: projected(slice_time_tail(x, 3), np.random.default_rng(19)), [x]
        )
        self.check(
            lambda: projected(concat_channels([x, y]), np.random.default_rng(19)),
            [x, y],
        )

    def test_reductions(self):
        rng = np.random.default_rng(20)
        a = parameter(rng.normal(size=(3, 4)))
        self.check(lambda: sum_all(tanh(a)), [a])
        self.check(lambda: mean_all(mul(a, a)), [a])

    def test_shared_node_fan_out(self):
        # x appears on two paths: d/dx (x + x*x) = 1 + 2x
        x = parameter(np.array([0.3, -1.2, 2.0]))
        self.check(lambda: sum_all(add(x, mul(x, x))), [x])
        zero_grad([x])
        backward(sum_all(add(x, mul(x, x))))
        assert np.allclose(x.grad, 1.0 + 2.0 * x.values, atol=1e-12)


class TestTapeSemantics:
    def test_backward_requires_scalar(self):
        x = parameter(np.ones((2, 2)))
        with pytest.raises(ContractError):
            backward(mul(x, x))

    def test_backward_requires_grad_path(self):
        c = constant(np.ones(3))
        with pytest.raises(ContractError):
            backward(sum_all(c))

    def test_repeated_backward_accumulates(self):
        x = parameter(np.array([2.0]))
        loss = sum_all(mul(x, x))
        backward(loss)
        first = x.grad.copy()
        backward(loss)
        assert np.allclose(x.grad, 2.0 * first)
        zero_grad([x])
        assert x.grad is None

    def test_constants_collect_no_gradient(self):
        x = parameter(np.ones(3))
        c = constant(np.full(3, 2.0))
        backward(sum_all(mul(x, c)))
        assert c.grad is None
        assert np.allclose(x.grad, 2.0)

    def test_relu_gradient_is_zero_at_zero(self):
        x = parameter(np.array([-1.0, 0.0, 1.0]))
        backward(sum_all(relu(x)))
        assert np.allclose(x.grad, [0.0, 0.0, 1.0])

    def test_shape_mismatch_raises(self):
        a = parameter(np.ones((2, 3)))
        b = parameter(np.ones((3, 2)))
        for op in (add, sub, mul, div):
            with pytest.raises(DimensionError):
                op(a, b)

    def test_elementwise_dispatcher(self):
        a = parameter(np.array([0.5, -0.5]))
        b = parameter(np.array([1.0, 2.0]))
        assert np.allclose(elementwise("tanh", a).values, np.tanh(a.values))
        assert np.allclose(elementwise("add", a, b).values, a.values + b.values)
        with pytest.raises(ContractError):
            elementwise("pow", a, b)
        with pytest.raises(ContractError):
            elementwise("tanh", a, b)

    def test_float32_is_preserved(self):
        x = DiffArray(np.ones((2, 2), dtype=np.float32), requires_grad=True)
        y = tanh(mul(x, x))
        assert y.values.dtype == np.float32
        backward(sum_all(y))
        assert x.grad.dtype == np.float32


class TestAdam:
    def test_first_step_moves_by_sign_of_gradient(self):
        # With eps outside the sqrt, step one reduces to -lr * g / (|g| + eps).
        x = [np.array([1.0, 2.0, -3.0])]
        g = [np.array([0.5, -4.0, 1e-12])]
        state = init_adam_state(x)
        lr, eps = 3e-4, 1e-8
        out = adam_step(x, g, state, lr=lr, eps=eps)
        want = x[0] - lr * g[0] / (np.abs(g[0]) + eps)
        assert np.allclose(out[0], want, atol=1e-15)

    def test_rejects_non_finite_gradient(self):
        x = [np.array([1.0])]
        state = init_adam_state(x)
        with pytest.raises(NumericError):
            adam_step(x, [np.array([np.nan])], state)
        # the failed call must not have advanced the step counter moments
        assert state.step == 0
        assert np.all(state.m[0] == 0.0)

    def test_missing_gradient_is_a_contract_error(self):
        x = [np.array([1.0])]
        state = init_adam_state(x)
        with pytest.raises(ContractError):
            adam_step(x, [None], state)

    def test_wrapper_updates_leaves_in_place(self):
        p = parameter(np.array([1.0, -1.0]))
        opt = Adam([p], lr=0.1)
        backward(sum_all(mul(p, p)))
        before = p.values.copy()
        opt.step()
        assert not np.allclose(p.values, before)
        opt.zero_grad()
        assert p.grad is None

    def test_same_inputs_same_trajectory(self):
        def run():
            p = parameter(np.array([0.5, -0.25]))
            opt = Adam([p], lr=0.01)
            for _ in range(5):
                opt.zero_grad()
                backward(sum_all(mul(p, p)))
                opt.step()
            return p.values

        assert run().tobytes() == run().tobytes()


class TestGradcheckHelper:
    def test_numerical_gradient_on_quadratic(self):
        x = parameter(np.array([1.0, -2.0, 0.5]))
        from stgad.engine import numerical_gradient

        num = numerical_gradient(lambda: sum_all(mul(x, x)), x)
        assert np.allclose(num, 2.0 * x.values, atol=1e-8)
