"""Tensor engine: forward semantics, backward rules, gradient checker."""

import numpy as np
import pytest

from moonshift import tensor as T
from moonshift.errors import ContractError, DomainError, ShapeError
from moonshift.rng import make_rng
from moonshift.tensor import Tape, Tensor, backward, check_gradients


def grad_of(build, *leaves):
    """Run build() under a fresh tape, backprop its output, return leaf grads."""
    with Tape() as tape:
        loss = build()
    tape.backward(loss)
    return [leaf.grad for leaf in leaves]


class TestMatmul:
    def test_identity(self):
        out = T.matmul(Tensor(np.eye(2)), Tensor([[5.0], [7.0]]))
        assert np.array_equal(out.values, [[5.0], [7.0]])

    def test_hand_product(self):
        out = T.matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([[1.0], [1.0]]))
        assert np.array_equal(out.values, [[3.0], [7.0]])

    def test_zero_annihilates(self):
        out = T.matmul(Tensor(np.zeros((2, 2))), Tensor([[1.0], [1.0]]))
        assert np.array_equal(out.values, [[0.0], [0.0]])

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 2\).*\(3, 1\)"):
            T.matmul(Tensor(np.zeros((2, 2))), Tensor(np.zeros((3, 1))))

    def test_backward_rules(self):
        a = Tensor([[1.0, 2.0], [3.0, 4.0]])
        b = Tensor([[1.0], [1.0]])
        ga, gb = grad_of(lambda: T.reduce_sum(T.matmul(a, b)), a, b)
        # d(sum(ab))/da = 1 @ b^T, /db = a^T @ 1
        assert np.array_equal(ga, np.ones((2, 1)) @ b.values.T)
        assert np.array_equal(gb, a.values.T @ np.ones((2, 1)))


class TestRelu:
    def test_definition(self):
        out = T.relu(Tensor([-1.0, 0.0, 2.0]))
        assert np.array_equal(out.values, [[0.0, 0.0, 2.0]])

    def test_all_negative_zero_output_and_grad(self):
        x = Tensor([[-3.0, -0.5, -1e-9]])
        (g,) = grad_of(lambda: T.reduce_sum(T.relu(x)), x)
        assert np.array_equal(g, np.zeros((1, 3)))

    def test_all_positive_passes_through(self):
        x = Tensor([[3.0, 0.5, 1e-9]])
        out = T.relu(x)
        assert np.array_equal(out.values, x.values)
        (g,) = grad_of(lambda: T.reduce_sum(T.relu(x)), x)
        assert np.array_equal(g, np.ones((1, 3)))

    def test_subgradient_zero_at_zero(self):
        x = Tensor([[0.0]])
        (g,) = grad_of(lambda: T.reduce_sum(T.relu(x)), x)
        assert g[0, 0] == 0.0


class TestSigmoid:
    def test_symmetry_point(self):
        assert T.sigmoid(Tensor([[0.0]])).values[0, 0] == 0.5

    def test_closed_form_ln3(self):
        out = T.sigmoid(Tensor([[np.log(3.0)]]))
        assert abs(out.values[0, 0] - 0.75) < 1e-15

    def test_large_negative_is_tiny_but_finite(self):
        v = T.sigmoid(Tensor([[-50.0]])).values[0, 0]
        assert 0.0 < v < 1e-20

    def test_overflow_safe_to_1e3(self):
        out = T.sigmoid(Tensor([[-1000.0, -1.0, 1.0, 1000.0]]))
        assert np.isfinite(out.values).all()
        assert out.values[0, 0] == 0.0 and out.values[0, 3] == 1.0

    def test_backward_s_times_one_minus_s(self):
        x = Tensor([[0.3, -1.2]])
        (g,) = grad_of(lambda: T.reduce_sum(T.sigmoid(x)), x)
        s = 1.0 / (1.0 + np.exp(-x.values))
        assert np.allclose(g, s * (1 - s), atol=1e-15)


class TestReduceMean:
    def test_hand_mean(self):
        assert T.reduce_mean(Tensor([[2.0, 4.0]])).values[0, 0] == 3.0

    def test_constant_fixed_point(self):
        assert T.reduce_mean(Tensor(np.full((3, 5), 1.25))).values[0, 0] == 1.25

    def test_backward_distributes_uniformly(self):
        x = Tensor([[1.0, 2.0, 3.0, 4.0]])
        (g,) = grad_of(lambda: T.reduce_mean(x), x)
        assert np.array_equal(g, np.full((1, 4), 0.25))

    def test_empty_rejected(self):
        with pytest.raises(DomainError):
            T.reduce_mean(Tensor(np.zeros((0, 2))))


class TestBackward:
    def test_mean_case(self):
        x = Tensor(np.arange(4.0).reshape(1, 4))
        with Tape() as tape:
            loss = T.reduce_mean(x)
        backward(loss, tape)
        assert np.array_equal(x.grad, np.full((1, 4), 0.25))

    def test_chained_matches_finite_differences(self):
        w = Tensor([[0.5], [-0.25]])
        x = Tensor([[1.0, 2.0], [0.5, -1.0], [2.0, 0.0]])

        def f(w_):
            return T.reduce_mean(T.sigmoid(T.matmul(x, w_)))

        assert check_gradients(f, w, eps=1e-5) < 1e-8

    def test_fanout_accumulates(self):
        x = Tensor([[2.0]])
        with Tape() as tape:
            y = x + x
        tape.backward(y)
        assert x.grad[0, 0] == 2.0

    def test_unreachable_leaf_gets_zero(self):
        x = Tensor([[1.0, 2.0]])
        z = Tensor([[5.0]])
        with Tape() as tape:
            loss = T.reduce_mean(x)
            _side = T.square(z)  # on tape, but not feeding the loss
        tape.backward(loss)
        assert np.array_equal(z.grad, [[0.0]])

    def test_non_scalar_loss_rejected(self):
        x = Tensor([[1.0, 2.0]])
        with Tape() as tape:
            y = T.square(x)
        with pytest.raises(ContractError):
            tape.backward(y)

    def test_loss_off_tape_rejected(self):
        x = Tensor([[1.0]])
        with Tape() as tape:
            _ = T.square(x)
        with Tape():
            other = T.reduce_mean(Tensor([[1.0]]))
        with pytest.raises(ContractError):
            tape.backward(other)


class TestCheckGradients:
    def test_linear_case_is_essentially_exact(self):
        x = Tensor(make_rng(0).normal(size=(2, 3)))
        assert check_gradients(T.reduce_mean, x) < 1e-9

    def test_sigmoid_mean(self):
        x = Tensor(make_rng(1).normal(size=(2, 3)))
        err = check_gradients(lambda t: T.reduce_mean(T.sigmoid(t)), x, eps=1e-5)
        assert err < 1e-6

    def test_relu_mean_away_from_kink(self):
        rng = make_rng(2)
        vals = rng.normal(size=(2, 4))
        vals = np.sign(vals) * (np.abs(vals) + 0.1)  # keep |x| > 0.1
        err = check_gradients(lambda t: T.reduce_mean(T.relu(t)), Tensor(vals))
        assert err < 1e-6

    def test_eps_domain_enforced(self):
        x = Tensor([[1.0]])
        with pytest.raises(DomainError):
            check_gradients(T.reduce_mean, x, eps=1e-2)


class TestElementwiseOps:
    def test_bias_add_broadcasts_rows(self):
        a = Tensor([[1.0, 2.0], [3.0, 4.0]])
        b = Tensor([[10.0, 20.0]])
        out = T.add(a, b)
        assert np.array_equal(out.values, [[11.0, 22.0], [13.0, 24.0]])
        ga, gb = grad_of(lambda: T.reduce_sum(T.add(a, b)), a, b)
        assert np.array_equal(ga, np.ones((2, 2)))
        assert np.array_equal(gb, [[2.0, 2.0]])

    def test_add_shape_mismatch(self):
        with pytest.raises(ShapeError):
            T.add(Tensor(np.zeros((2, 2))), Tensor(np.zeros((2, 1))))

    def test_sub_mul_square_exp(self):
        a = Tensor([[2.0, -1.0]])
        b = Tensor([[0.5, 3.0]])
        assert np.array_equal(T.sub(a, b).values, [[1.5, -4.0]])
        assert np.array_equal(T.mul(a, b).values, [[1.0, -3.0]])
        assert np.array_equal(T.square(a).values, [[4.0, 1.0]])
        assert np.allclose(T.exp(b).values, np.exp(b.values), atol=0)

    def test_scalar_operators(self):
        a = Tensor([[1.0, 2.0]])
        assert np.array_equal((a * 3.0).values, [[3.0, 6.0]])
        assert np.array_equal((a + 1.0).values, [[2.0, 3.0]])
        assert np.array_equal((1.0 - a).values, [[0.0, -1.0]])
        assert np.array_equal((-a).values, [[-1.0, -2.0]])

    def test_log_domain(self):
        with pytest.raises(DomainError):
            T.log(Tensor([[0.0]]))
        assert T.log(Tensor([[np.e]])).values[0, 0] == 1.0

    def test_clip_gradient_mask(self):
        x = Tensor([[-1.0, 0.5, 2.0]])
        out = T.clip(x, 0.0, 1.0)
        assert np.array_equal(out.values, [[0.0, 0.5, 1.0]])
        (g,) = grad_of(lambda: T.reduce_sum(T.clip(x, 0.0, 1.0)), x)
        assert np.array_equal(g, [[0.0, 1.0, 0.0]])

    def test_softmax_rows_sum_to_one(self):
        x = Tensor(make_rng(3).normal(size=(4, 5)) * 10)
        out = T.softmax(x)
        assert np.allclose(out.values.sum(axis=1), 1.0, atol=1e-12)
        err = check_gradients(
            lambda t: T.reduce_mean(T.square(T.softmax(t))), x, eps=1e-5
        )
        assert err < 1e-6


class TestMeanExpScale:
    def test_matches_composed_ops(self):
        x = Tensor(make_rng(20).normal(size=(4, 5)))
        fused = T.mean_exp_scale(x, -0.7).values
        composed = T.reduce_mean(T.exp(T.scale(x, -0.7))).values
        assert fused.tobytes() == composed.tobytes()

    def test_gradient_against_finite_differences(self):
        x = Tensor(make_rng(21).normal(size=(3, 4)))
        err = check_gradients(lambda t: T.mean_exp_scale(t, -1.3), x, eps=1e-5)
        assert err < 1e-6

    def test_empty_rejected(self):
        with pytest.raises(DomainError):
            T.mean_exp_scale(Tensor(np.zeros((0, 3))), 1.0)


class TestPairwiseSqDists:
    def test_matches_brute_force(self):
        rng = make_rng(4)
        a = rng.normal(size=(5, 3))
        b = rng.normal(size=(7, 3))
        out = T.pairwise_sq_dists(Tensor(a), Tensor(b)).values
        brute = np.array([[((ai - bj) ** 2).sum() for bj in b] for ai in a])
        assert np.allclose(out, brute, atol=1e-12)

    def test_gradient_against_finite_differences(self):
        rng = make_rng(5)
        b = Tensor(rng.normal(size=(4, 2)))

        def f(a):
            return T.reduce_mean(T.exp(T.scale(T.pairwise_sq_dists(a, b), -0.5)))

        err = check_gradients(f, Tensor(rng.normal(size=(3, 2))), eps=1e-5)
        assert err < 1e-6

    def test_same_tensor_both_sides(self):
        a = Tensor(make_rng(6).normal(size=(3, 2)))

        def f(t):
            return T.reduce_mean(T.pairwise_sq_dists(t, t))

        assert check_gradients(f, a, eps=1e-5) < 1e-6

    def test_feature_dim_mismatch(self):
        with pytest.raises(ShapeError):
            T.pairwise_sq_dists(Tensor(np.zeros((2, 2))), Tensor(np.zeros((2, 3))))


class TestEngineProperties:
    def test_backward_is_linear(self):
        rng = make_rng(7)
        vals = rng.normal(size=(3, 3))
        a, b = 2.5, -1.25

        def f(x):
            return T.reduce_mean(T.sigmoid(x))

        def g(x):
            return T.reduce_mean(T.square(x))

        x = Tensor(vals)
        (gf,) = grad_of(lambda: f(x), x)
        (gg,) = grad_of(lambda: g(x), x)
        (gcombo,) = grad_of(lambda: T.scale(f(x), a) + T.scale(g(x), b), x)
        assert np.abs(gcombo - (a * gf + b * gg)).max() < 1e-12

    def test_forward_is_deterministic_bitwise(self):
        rng = make_rng(8)
        x = rng.normal(size=(4, 3))
        w = rng.normal(size=(3, 2))
        first = T.sigmoid(T.matmul(Tensor(x), Tensor(w))).values
        second = T.sigmoid(T.matmul(Tensor(x), Tensor(w))).values
        assert first.tobytes() == second.tobytes()

    def test_tensor_shape_contract(self):
        assert Tensor(3.0).shape == (1, 1)
        assert Tensor([1.0, 2.0]).shape == (1, 2)
        with pytest.raises(ShapeError):
            Tensor(np.zeros((2, 2, 2)))

    def test_grad_invariant_same_shape(self):
        x = Tensor(np.ones((2, 3)))
        (g,) = grad_of(lambda: T.reduce_mean(T.square(x)), x)
        assert g.shape == x.values.shape

    def test_independent_tapes_in_parallel_threads(self):
        import threading

        rng = make_rng(9)
        inputs = [rng.normal(size=(4, 3)) for _ in range(4)]

        def compute(vals):
            x = Tensor(vals)
            with Tape() as tape:
                loss = T.reduce_mean(T.sigmoid(T.square(x)))
            tape.backward(loss)
            return x.grad

        serial = [compute(v) for v in inputs]
        threaded = [None] * len(inputs)

        def worker(i):
            threaded[i] = compute(inputs[i])

        threads = [threading.Thread(target=worker, args=(i,)) for i in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        for s, th in zip(serial, threaded):
            assert s.tobytes() == th.tobytes()
