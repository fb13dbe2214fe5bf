"""Tensor-core semantics and gradient checks against finite differences."""
import numpy as np
import pytest

import foldcast.tensor as T
from foldcast.tensor import AdamState, ShapeError, Tensor, adam_step

from fdcheck import central_diff, max_rel_err


def proj_loss(out, w):
    """Random fixed projection turns any op output into a scalar."""
    return T.tsum(T.mul(out, w))


def grad_of(build, x0, *extra):
    """Analytic gradient of build(x)(projected) w.r.t. the first input."""
    xt = Tensor(x0, requires_grad=True)
    loss = build(xt, *extra)
    loss.backward()
    return xt.grad


class TestMatmul:
    def test_identity(self):
        out = T.matmul(Tensor(np.eye(2)), Tensor([[3.0], [4.0]]))
        assert np.array_equal(out.data, [[3.0], [4.0]])

    def test_one_by_one(self):
        out = T.matmul(Tensor([[2.0]]), Tensor([[3.0]]))
        assert out.data[0, 0] == 6.0

    def test_shape_error_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(4, 5\).*\(3, 2\)"):
            T.matmul(Tensor(np.zeros((4, 5))), Tensor(np.zeros((3, 2))))

    def test_grad_matches_fd(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((4, 5))
        b = rng.standard_normal((5, 3))
        w = rng.standard_normal((4, 3))

        at, bt = Tensor(a, requires_grad=True), Tensor(b, requires_grad=True)
        proj_loss(T.matmul(at, bt), w).backward()

        fd_a = central_diff(lambda x: float((x @ b * w).sum()), a)
        fd_b = central_diff(lambda x: float((a @ x * w).sum()), b)
        assert max_rel_err(at.grad, fd_a) < 1e-6
        assert max_rel_err(bt.grad, fd_b) < 1e-6

    def test_batched_broadcast_grad(self):
        rng = np.random.default_rng(1)
        a = rng.standard_normal((3, 2, 4))
        b = rng.standard_normal((4, 5))
        w = rng.standard_normal((3, 2, 5))
        at, bt = Tensor(a, requires_grad=True), Tensor(b, requires_grad=True)
        proj_loss(T.matmul(at, bt), w).backward()
        fd_b = central_diff(lambda x: float(((a @ x) * w).sum()), b)
        assert max_rel_err(bt.grad, fd_b) < 1e-6


class TestSoftmax:
    def test_uniform_on_equal_scores(self):
        out = T.softmax_lastdim(Tensor([0.0, 0.0, 0.0]))
        assert np.allclose(out.data, 1.0 / 3.0, atol=1e-15)

    def test_no_overflow_on_large_scores(self):
        out = T.softmax_lastdim(Tensor([1000.0, 0.0]))
        assert abs(out.data[0] - 1.0) < 1e-12
        assert abs(out.data[1]) < 1e-12

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            x = rng.standard_normal((3, 7)) * rng.uniform(0.1, 50)
            out = T.softmax_lastdim(Tensor(x))
            assert np.all(np.abs(out.data.sum(axis=-1) - 1.0) <= 1e-12)

    def test_grad_matches_fd(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((3, 7))
        w = rng.standard_normal((3, 7))
        g = grad_of(lambda xt: proj_loss(T.softmax_lastdim(xt), w), x)

        def f(arr):
            e = np.exp(arr - arr.max(axis=-1, keepdims=True))
            return float((e / e.sum(axis=-1, keepdims=True) * w).sum())

        assert max_rel_err(g, central_diff(f, x)) < 1e-5


class TestLayerNorm:
    def test_constant_slice_is_zeroed(self):
        out = T.layer_norm(Tensor([5.0, 5.0, 5.0]), Tensor(np.ones(3)), Tensor(np.zeros(3)))
        assert np.array_equal(out.data, np.zeros(3))

    def test_golden_two_point_slice(self):
        # population variance (divide by n) with eps=1e-5; golden value
        # computed from that convention directly
        golden = (np.array([1.0, -1.0]) - 0.0) / np.sqrt(1.0 + 1e-5)
        out = T.layer_norm(Tensor([1.0, -1.0]), Tensor(np.ones(2)), Tensor(np.zeros(2)))
        assert np.max(np.abs(out.data - golden)) < 1e-12
        assert np.max(np.abs(out.data - np.array([1.0, -1.0]))) < 1e-5

    def test_output_mean_near_zero(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((5, 16)) * 30 + 7
        out = T.layer_norm(Tensor(x), Tensor(np.ones(16)), Tensor(np.zeros(16)))
        assert np.all(np.abs(out.data.mean(axis=-1)) < 1e-9)

    def test_affine_shape_error(self):
        with pytest.raises(ShapeError):
            T.layer_norm(Tensor(np.zeros((2, 8))), Tensor(np.ones(4)), Tensor(np.zeros(4)))

    def test_grad_matches_fd(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((2, 8))
        gamma = rng.standard_normal(8)
        beta = rng.standard_normal(8)
        w = rng.standard_normal((2, 8))

        def oracle(xv, gv, bv):
            mu = xv.mean(axis=-1, keepdims=True)
            var = ((xv - mu) ** 2).mean(axis=-1, keepdims=True)
            xhat = (xv - mu) / np.sqrt(var + 1e-5)
            return float(((xhat * gv + bv) * w).sum())

        xt = Tensor(x, requires_grad=True)
        gt = Tensor(gamma, requires_grad=True)
        bt = Tensor(beta, requires_grad=True)
        proj_loss(T.layer_norm(xt, gt, bt), w).backward()
        assert max_rel_err(xt.grad, central_diff(lambda v: oracle(v, gamma, beta), x)) < 1e-4
        assert max_rel_err(gt.grad, central_diff(lambda v: oracle(x, v, beta), gamma)) < 1e-4
        assert max_rel_err(bt.grad, central_diff(lambda v: oracle(x, gamma, v), beta)) < 1e-4


class TestGelu:
    def test_zero(self):
        assert T.gelu(Tensor(0.0)).data == 0.0

    def test_asymptote(self):
        assert abs(T.gelu(Tensor(10.0)).data - 10.0) < 1e-6

    def test_monotone_on_nonnegative(self):
        xs = np.linspace(0.0, 6.0, 200)
        out = T.gelu(Tensor(xs)).data
        assert np.all(np.diff(out) > 0)

    def test_grad_matches_fd(self):
        from scipy.special import erf

        rng = np.random.default_rng(6)
        x = rng.standard_normal(32) * 2
        w = rng.standard_normal(32)
        g = grad_of(lambda xt: proj_loss(T.gelu(xt), w), x)
        oracle = lambda v: float((v * 0.5 * (1 + erf(v / np.sqrt(2))) * w).sum())
        assert max_rel_err(g, central_diff(oracle, x)) < 1e-5


class TestConcat:
    def test_four_parts_of_64(self):
        parts = [Tensor(np.zeros((5, 64))) for _ in range(4)]
        assert T.concat_lastdim(parts).shape == (5, 256)

    def test_single_part_identity(self):
        x = np.arange(6.0).reshape(2, 3)
        assert np.array_equal(T.concat_lastdim([Tensor(x)]).data, x)

    def test_leading_shape_error(self):
        with pytest.raises(ShapeError):
            T.concat_lastdim([Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 3)))])

    def test_grad_splits_back(self):
        rng = np.random.default_rng(7)
        a = rng.standard_normal((3, 4))
        b = rng.standard_normal((3, 2))
        w = rng.standard_normal((3, 6))
        at, bt = Tensor(a, requires_grad=True), Tensor(b, requires_grad=True)
        proj_loss(T.concat_lastdim([at, bt]), w).backward()
        fd_a = central_diff(lambda v: float((np.concatenate([v, b], -1) * w).sum()), a)
        fd_b = central_diff(lambda v: float((np.concatenate([a, v], -1) * w).sum()), b)
        assert max_rel_err(at.grad, fd_a) < 1e-6
        assert max_rel_err(bt.grad, fd_b) < 1e-6


class TestMovementOps:
    def test_gather_accumulates_repeats(self):
        t = Tensor(np.ones((3, 2)), requires_grad=True)
        idx = np.array([0, 0, 2])
        T.tsum(T.gather_rows(t, idx)).backward()
        assert np.array_equal(t.grad, [[2.0, 2.0], [0.0, 0.0], [1.0, 1.0]])

    def test_gather_out_of_range(self):
        with pytest.raises(IndexError):
            T.gather_rows(Tensor(np.zeros((3, 2))), np.array([3]))

    def test_reshape_transpose_slice_grads(self):
        rng = np.random.default_rng(8)
        x = rng.standard_normal((2, 3, 4))
        w = rng.standard_normal((4, 3))

        def build(xt):
            y = T.transpose(T.reshape(xt, (6, 4)), (1, 0))  # (4, 6)
            return proj_loss(T.slice_lastdim(y, 1, 4), w)

        g = grad_of(build, x)

        def oracle(v):
            y = v.reshape(6, 4).T
            return float((y[:, 1:4] * w).sum())

        assert max_rel_err(g, central_diff(oracle, x)) < 1e-6

    def test_broadcast_add_mul_grads(self):
        rng = np.random.default_rng(9)
        a = rng.standard_normal((3, 4))
        b = rng.standard_normal(4)
        w = rng.standard_normal((3, 4))
        at, bt = Tensor(a, requires_grad=True), Tensor(b, requires_grad=True)
        proj_loss(T.mul(T.add(at, bt), at), w).backward()
        fd_a = central_diff(lambda v: float(((v + b) * v * w).sum()), a)
        fd_b = central_diff(lambda v: float(((a + v) * a * w).sum()), b)
        assert max_rel_err(at.grad, fd_a) < 1e-5
        assert max_rel_err(bt.grad, fd_b) < 1e-5

    def test_shared_node_accumulates(self):
        x = Tensor(3.0, requires_grad=True)
        T.mul(x, x).backward()
        assert abs(x.grad - 6.0) < 1e-12


class TestHuber:
    def test_quadratic_branch(self):
        loss = T.huber_loss(Tensor([0.5]), np.array([0.0]), 1.0)
        assert abs(loss.item() - 0.125) < 1e-15

    def test_linear_branch(self):
        loss = T.huber_loss(Tensor([3.0]), np.array([0.0]), 1.0)
        assert abs(loss.item() - 2.5) < 1e-15

    def test_knee_continuity(self):
        loss = T.huber_loss(Tensor([1.0]), np.array([0.0]), 1.0)
        assert abs(loss.item() - 0.5) < 1e-15

    def test_mask_excludes_entries(self):
        pred = Tensor([1.0, 100.0])
        loss = T.huber_loss(pred, np.zeros(2), 1.0, include=np.array([True, False]))
        assert abs(loss.item() - 0.5) < 1e-15

    def test_all_excluded_errors(self):
        with pytest.raises(ValueError, match="excluded"):
            T.huber_loss(Tensor([1.0]), np.zeros(1), 1.0, include=np.array([False]))

    def test_grad_matches_fd_including_near_knee(self):
        target = np.zeros(7)
        x = np.array([-3.0, -1.001, -0.999, 0.2, 0.999, 1.001, 2.5])
        xt = Tensor(x, requires_grad=True)
        T.huber_loss(xt, target, 1.0).backward()

        def oracle(v):
            a = np.abs(v)
            per = np.where(a <= 1.0, 0.5 * v * v, a - 0.5)
            return float(per.mean())

        assert max_rel_err(xt.grad, central_diff(oracle, x)) < 1e-4


class TestAdam:
    def test_zero_grad_leaves_params(self):
        p = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        state = AdamState()
        adam_step({"p": p}, {}, state, lr=0.1)
        assert np.array_equal(p.data, [1.0, 2.0])
        assert state.step == 1

    def test_first_step_oracle(self):
        # hand-computed: m_hat = g, v_hat = g^2, update = lr*g/(|g|+eps)
        p = Tensor(np.array([0.0]), requires_grad=True)
        adam_step({"p": p}, {"p": np.array([1.0])}, AdamState(), lr=0.1)
        expected = -0.1 * 1.0 / (1.0 + 1e-8)
        assert abs(p.data[0] - expected) < 1e-15
        assert abs(p.data[0] - (-0.1)) < 1e-9

    def test_quadratic_descent_is_monotone(self):
        p = Tensor(np.array([1.0]), requires_grad=True)
        state = AdamState()
        values = [float(p.data[0] ** 2)]
        for _ in range(10):
            adam_step({"p": p}, {"p": 2.0 * p.data}, state, lr=0.05)
            values.append(float(p.data[0] ** 2))
        assert all(b < a for a, b in zip(values, values[1:]))

    def test_shape_mismatch(self):
        p = Tensor(np.zeros(3), requires_grad=True)
        with pytest.raises(ShapeError):
            adam_step({"p": p}, {"p": np.zeros(2)}, AdamState(), lr=0.1)


class TestHarness:
    def test_forward_bit_identical(self):
        rng = np.random.default_rng(10)
        x = rng.standard_normal((6, 6))

        def run():
            t = Tensor(x)
            return T.softmax_lastdim(T.matmul(T.gelu(t), t)).data

        assert np.array_equal(run(), run())

    def test_debug_checks_flag(self):
        big = Tensor(np.full((2, 2), 1e200))
        with np.errstate(over="ignore"):
            T.matmul(big, big)  # silently produces inf when checks are off
            T.set_debug_checks(True)
            try:
                with pytest.raises(FloatingPointError):
                    T.matmul(big, big)
            finally:
                T.set_debug_checks(False)

    def test_op_gradients_over_seeded_trials(self):
        # spot check; the acceptance suite runs the full >=100-trial sweep
        rng = np.random.default_rng(11)
        for _ in range(10):
            x = rng.standard_normal((2, 5))
            w = rng.standard_normal((2, 5))
            g = grad_of(lambda xt: proj_loss(T.softmax_lastdim(T.gelu(xt)), w), x)

            def oracle(v):
                from scipy.special import erf

                gv = v * 0.5 * (1 + erf(v / np.sqrt(2)))
                e = np.exp(gv - gv.max(axis=-1, keepdims=True))
                return float((e / e.sum(axis=-1, keepdims=True) * w).sum())

            assert max_rel_err(g, central_diff(oracle, x)) < 1e-4
