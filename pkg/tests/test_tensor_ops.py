"""Primitive forward values, backward rules, and tape behavior.

Expected values tagged as derived were computed with an independent
40-digit mpmath evaluation and frozen here.
"""

import numpy as np
import pytest

from semdistill.errors import (ContractError, DegenerateInputError,
                               NonFiniteError, ShapeError)
from semdistill.numerics import (Tensor, backward, concat, cosine, fresh_tape,
                                 gather, grad_check, layer_norm, linear,
                                 logsumexp, no_grad, pearson, sigmoid,
                                 slice_cols, stack)


class TestMatmul:
    def test_identity(self):
        a = Tensor([[1.0, 0.0], [0.0, 1.0]])
        b = Tensor([[3.0], [4.0]])
        np.testing.assert_array_equal((a @ b).data, [[3.0], [4.0]])

    def test_dot_product(self):
        a = Tensor([[1.0, 2.0]])
        b = Tensor([[3.0], [4.0]])
        np.testing.assert_array_equal((a @ b).data, [[11.0]])

    def test_scalar_scaling(self):
        a = Tensor([[2.0, 0.0], [0.0, 2.0]])
        b = Tensor([[1.0, 1.0], [1.0, 1.0]])
        np.testing.assert_array_equal((a @ b).data, [[2.0, 2.0], [2.0, 2.0]])

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            Tensor([[1.0, 2.0]]) @ Tensor([[1.0, 2.0]])


class TestSoftmax:
    def test_symmetry(self):
        np.testing.assert_allclose(Tensor([0.0, 0.0]).softmax().data,
                                   [0.5, 0.5], rtol=0, atol=0)

    def test_max_subtraction_stability(self):
        np.testing.assert_allclose(Tensor([1000.0, 1000.0]).softmax().data,
                                   [0.5, 0.5], rtol=0, atol=0)

    def test_derived_values(self):
        # mpmath: exp/normalize at 40 digits
        expected = [0.090030573170380458, 0.24472847105479765,
                    0.66524095577482189]
        np.testing.assert_allclose(Tensor([1.0, 2.0, 3.0]).softmax().data,
                                   expected, rtol=1e-15)

    def test_empty_input(self):
        with pytest.raises(ShapeError):
            Tensor(np.zeros(0)).softmax()

    def test_sums_to_one_long_inputs(self):
        rng = np.random.default_rng(7)
        for n in (1, 3, 100, 10_000):
            v = Tensor(rng.uniform(-50, 50, size=n))
            assert abs(v.softmax().data.sum() - 1.0) <= 1e-12


class TestLayerNorm:
    def test_constant_input(self):
        y = layer_norm(Tensor([5.0, 5.0, 5.0]), Tensor(np.ones(3)),
                       Tensor(np.zeros(3)), eps=1e-5)
        np.testing.assert_allclose(y.data, [0.0, 0.0, 0.0], atol=1e-12)

    def test_already_normalized(self):
        y = layer_norm(Tensor([-1.0, 1.0]), Tensor(np.ones(2)),
                       Tensor(np.zeros(2)), eps=1e-12)
        np.testing.assert_allclose(y.data, [-1.0, 1.0], atol=1e-6)

    def test_derived_values(self):
        # mpmath: (x - 2) / sqrt(2/3 + 1e-5)
        y = layer_norm(Tensor([1.0, 2.0, 3.0]), Tensor(np.ones(3)),
                       Tensor(np.zeros(3)), eps=1e-5)
        np.testing.assert_allclose(
            y.data, [-1.224735685908390169, 0.0, 1.224735685908390169],
            rtol=1e-12)

    def test_rowwise_matches_per_row(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(4, 6))
        g = rng.normal(size=6)
        b = rng.normal(size=6)
        full = layer_norm(Tensor(x), Tensor(g), Tensor(b)).data
        for i in range(4):
            row = layer_norm(Tensor(x[i]), Tensor(g), Tensor(b)).data
            np.testing.assert_allclose(full[i], row, rtol=1e-14)


class TestPearson:
    def test_identical(self):
        assert pearson(Tensor([1.0, 2.0, 3.0]), Tensor([1.0, 2.0, 3.0])).item() == pytest.approx(1.0)

    def test_anticorrelated(self):
        assert pearson(Tensor([1.0, 2.0, 3.0]), Tensor([3.0, 2.0, 1.0])).item() == pytest.approx(-1.0)

    def test_derived_value(self):
        r = pearson(Tensor([1.0, 2.0, 3.0, 4.0]), Tensor([1.0, 3.0, 2.0, 4.0]))
        assert r.item() == pytest.approx(0.8, abs=1e-14)

    def test_constant_vector_rejected(self):
        with pytest.raises(DegenerateInputError):
            pearson(Tensor([1.0, 1.0, 1.0]), Tensor([1.0, 2.0, 3.0]))

    def test_affine_invariance(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            u = rng.normal(size=8)
            v = rng.normal(size=8)
            a = rng.uniform(0.1, 5.0)
            b = rng.uniform(-3.0, 3.0)
            r0 = pearson(Tensor(u), Tensor(v)).item()
            r1 = pearson(Tensor(a * u + b), Tensor(v)).item()
            assert abs(r0 - r1) <= 1e-10


class TestCosine:
    def test_self_similarity(self):
        assert cosine(Tensor([3.0, 4.0]), Tensor([3.0, 4.0])).item() == pytest.approx(1.0)

    def test_orthogonal(self):
        assert cosine(Tensor([1.0, 0.0]), Tensor([0.0, 1.0])).item() == 0.0

    def test_45_degrees(self):
        c = cosine(Tensor([1.0, 1.0]), Tensor([1.0, 0.0]))
        assert c.item() == pytest.approx(np.sqrt(0.5), abs=1e-15)

    def test_zero_vector_rejected(self):
        with pytest.raises(DegenerateInputError):
            cosine(Tensor([0.0, 0.0]), Tensor([1.0, 0.0]))


class TestLogSigmoid:
    def test_zero(self):
        assert Tensor(0.0).log_sigmoid().item() == pytest.approx(-np.log(2.0), rel=1e-15)

    def test_saturation(self):
        assert Tensor(50.0).log_sigmoid().item() == pytest.approx(-1.9287498479639178e-22, rel=1e-12)

    def test_derived_value(self):
        # mpmath: log(1/(1+e^3))
        assert Tensor(-3.0).log_sigmoid().item() == pytest.approx(-3.0485873515737421, rel=1e-15)

    def test_finite_at_extremes(self):
        assert np.isfinite(Tensor(-700.0).log_sigmoid().item())
        assert np.isfinite(Tensor(700.0).log_sigmoid().item())


class TestBackward:
    def test_sum_gradient(self):
        x = Tensor([1.0, 5.0, -2.0], requires_grad=True)
        with fresh_tape():
            backward(x.sum(), [x])
        np.testing.assert_array_equal(x.grad, [1.0, 1.0, 1.0])

    def test_dot_self_gradient(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with fresh_tape():
            backward(x.sumsq(), [x])
        np.testing.assert_array_equal(x.grad, [2.0, 4.0])

    def test_fanout_sums_branches(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with fresh_tape():
            loss = (x.sum() + x.sumsq())
            backward(loss, [x])
        np.testing.assert_array_equal(x.grad, [3.0, 5.0])

    def test_off_path_gets_zero(self):
        x = Tensor([1.0], requires_grad=True)
        y = Tensor([2.0], requires_grad=True)
        with fresh_tape():
            backward(x.sum(), [x, y])
        np.testing.assert_array_equal(y.grad, [0.0])

    def test_non_scalar_root_rejected(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with fresh_tape():
            with pytest.raises(ContractError):
                backward(x.relu(), [x])

    def test_pearson_gradient_matches_fd(self):
        u = Tensor([1.0, 2.0, 3.0], requires_grad=True)
        v = Tensor([1.0, 3.0, 2.0], requires_grad=True)
        report = grad_check(lambda: pearson(u, v), {"u": u, "v": v}, eps=1e-5)
        assert report.max_rel_err <= 1e-6


class TestNonFinite:
    def test_overflowing_exp_aborts(self):
        with pytest.raises(NonFiniteError):
            Tensor(1000.0).exp()

    def test_log_of_negative_aborts(self):
        with pytest.raises(NonFiniteError):
            Tensor(-1.0).log()

    def test_non_finite_creation_rejected(self):
        with pytest.raises(NonFiniteError):
            Tensor(np.inf)


def _fd_check_unary(build, x0, tol=1e-5, eps=1e-5):
    x = Tensor(x0, requires_grad=True)
    report = grad_check(lambda: build(x), {"x": x}, eps=eps)
    assert report.max_rel_err <= tol, report.per_param


class TestPrimitiveGradients:
    """Every primitive's backward rule against central differences at
    random points in [-2, 2]."""

    rng = np.random.default_rng(2024)

    def test_add_sub_mul_scale(self):
        a = Tensor(self.rng.uniform(-2, 2, size=(3, 4)), requires_grad=True)
        b = Tensor(self.rng.uniform(-2, 2, size=(3, 4)), requires_grad=True)
        report = grad_check(
            lambda: ((a + b) * (a - b) + a.scale(0.7)).sum(),
            {"a": a, "b": b})
        assert report.max_rel_err <= 1e-5

    def test_matmul_transpose(self):
        a = Tensor(self.rng.uniform(-2, 2, size=(3, 4)), requires_grad=True)
        b = Tensor(self.rng.uniform(-2, 2, size=(4, 2)), requires_grad=True)
        report = grad_check(lambda: (a @ b).T.sumsq(), {"a": a, "b": b})
        assert report.max_rel_err <= 1e-5

    def test_concat_slice(self):
        a = Tensor(self.rng.uniform(-2, 2, size=(2, 3)), requires_grad=True)
        b = Tensor(self.rng.uniform(-2, 2, size=(2, 2)), requires_grad=True)

        def f():
            joined = concat([a, b])
            return slice_cols(joined, 1, 4).sumsq()

        report = grad_check(f, {"a": a, "b": b})
        assert report.max_rel_err <= 1e-5

    def test_stack(self):
        xs = [Tensor(v, requires_grad=True)
              for v in self.rng.uniform(-2, 2, size=4)]

        def f():
            return stack([x * x for x in xs]).sum()

        report = grad_check(f, {f"x{i}": x for i, x in enumerate(xs)})
        assert report.max_rel_err <= 1e-5

    def test_gather(self):
        table = Tensor(self.rng.uniform(-2, 2, size=(5, 3)), requires_grad=True)

        def f():
            return gather(table, [0, 2, 2, 4]).sumsq()

        report = grad_check(f, {"table": table})
        assert report.max_rel_err <= 1e-5

    def test_relu(self):
        _fd_check_unary(lambda x: x.relu().sum(),
                        self.rng.uniform(-2, 2, size=7) + 0.01)

    def test_exp_log(self):
        _fd_check_unary(lambda x: (x.exp().log() * x).sum(),
                        self.rng.uniform(0.5, 2, size=5))

    def test_softmax_vector(self):
        _fd_check_unary(lambda x: (x.softmax() * x).sum(),
                        self.rng.uniform(-2, 2, size=6), tol=1e-5)

    def test_softmax_rows(self):
        _fd_check_unary(lambda x: (x.softmax() * x).sum(),
                        self.rng.uniform(-2, 2, size=(3, 4)), tol=1e-5)

    def test_mean_sum_sumsq(self):
        _fd_check_unary(lambda x: x.mean() + x.sum() * 0.1 + x.sumsq() * 0.01,
                        self.rng.uniform(-2, 2, size=(2, 5)))

    def test_layer_norm(self):
        x = Tensor(self.rng.uniform(-2, 2, size=(3, 5)), requires_grad=True)
        g = Tensor(self.rng.uniform(0.5, 1.5, size=5), requires_grad=True)
        b = Tensor(self.rng.uniform(-0.5, 0.5, size=5), requires_grad=True)
        report = grad_check(
            lambda: (layer_norm(x, g, b, 1e-5) * x).sum(),
            {"x": x, "g": g, "b": b})
        assert report.max_rel_err <= 1e-5

    def test_log_sigmoid(self):
        _fd_check_unary(lambda x: x.log_sigmoid().sum(),
                        self.rng.uniform(-2, 2, size=6))

    def test_cosine(self):
        u = Tensor(self.rng.uniform(-2, 2, size=5), requires_grad=True)
        v = Tensor(self.rng.uniform(-2, 2, size=5), requires_grad=True)
        report = grad_check(lambda: cosine(u, v), {"u": u, "v": v})
        assert report.max_rel_err <= 1e-5

    def test_pearson(self):
        u = Tensor(self.rng.uniform(-2, 2, size=6), requires_grad=True)
        v = Tensor(self.rng.uniform(-2, 2, size=6), requires_grad=True)
        report = grad_check(lambda: pearson(u, v), {"u": u, "v": v})
        assert report.max_rel_err <= 1e-5

    def test_logsumexp_composite(self):
        _fd_check_unary(lambda x: logsumexp(x),
                        self.rng.uniform(-2, 2, size=6))

    def test_linear_composite(self):
        x = Tensor(self.rng.uniform(-2, 2, size=(3, 4)), requires_grad=True)
        w = Tensor(self.rng.uniform(-2, 2, size=(4, 2)), requires_grad=True)
        b = Tensor(self.rng.uniform(-2, 2, size=(1, 2)), requires_grad=True)
        report = grad_check(lambda: linear(x, w, b).sumsq(),
                            {"x": x, "w": w, "b": b})
        assert report.max_rel_err <= 1e-5


class TestGradCheckContract:
    def test_quadratic_is_exact(self):
        x = Tensor([0.3, -1.2, 2.0], requires_grad=True)
        report = grad_check(lambda: x.sumsq(), {"x": x}, eps=1e-5)
        assert report.max_rel_err <= 1e-8

    def test_softmax_log_within_tolerance(self):
        x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
        report = grad_check(lambda: x.softmax().log().sum(), {"x": x})
        assert report.max_rel_err <= 1e-6

    def test_eps_bounds_enforced(self):
        x = Tensor([1.0], requires_grad=True)
        with pytest.raises(ContractError):
            grad_check(lambda: x.sum(), {"x": x}, eps=1e-2)

    def test_nondeterminism_detected(self):
        x = Tensor([1.0], requires_grad=True)
        state = {"n": 0.0}

        def f():
            state["n"] += 1.0
            return (x * state["n"]).sum()

        with pytest.raises(ContractError):
            grad_check(f, {"x": x})


class TestTapeSemantics:
    def test_no_grad_suppresses_recording(self):
        x = Tensor([1.0], requires_grad=True)
        with fresh_tape() as tape:
            with no_grad():
                y = x * 2.0
            assert len(tape) == 0
            assert not y.requires_grad

    def test_entries_in_execution_order(self):
        x = Tensor([1.0], requires_grad=True)
        with fresh_tape() as tape:
            y = x * 2.0
            z = y + x
            outs = [entry[0] for entry in tape.entries]
        assert outs == [y, z]

    def test_sigmoid_composite(self):
        s = sigmoid(Tensor(np.log(3.0)))
        assert s.item() == pytest.approx(0.75, rel=1e-14)
