import numpy as np
import pytest

from readgen import autodiff as ad
from readgen.autodiff import DomainError, ShapeError, Tensor

from gradcheck import check_grads


class TestMatmul:
    def test_identity(self):
        out = ad.matmul(Tensor(np.eye(2)), Tensor([[3.0, 4.0], [5.0, 6.0]]))
        assert np.array_equal(out.data, [[3.0, 4.0], [5.0, 6.0]])

    def test_zero(self):
        out = ad.matmul(Tensor([[1.0, 2.0]]), Tensor([[0.0], [0.0]]))
        assert np.array_equal(out.data, [[0.0]])

    def test_shape_error_names_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 2\)"):
            ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 2))))

    def test_gradcheck_3x4_by_4x2(self):
        rng = np.random.default_rng(0)
        a = Tensor(rng.normal(size=(3, 4)))
        b = Tensor(rng.normal(size=(4, 2)))

        def fn(leaves):
            return ad.tsum(ad.matmul(leaves[0], leaves[1]))

        check_grads(fn, [a, b], rtol=1e-6)


class TestSoftmax:
    def test_symmetric(self):
        out = ad.softmax(Tensor([0.0, 0.0]), tau=1.0)
        assert np.allclose(out.data, [0.5, 0.5])

    def test_log_identity(self):
        out = ad.softmax(Tensor(np.log([1.0, 2.0, 7.0])), tau=1.0)
        assert np.allclose(out.data, [0.1, 0.2, 0.7])

    def test_high_temperature_limit(self):
        out = ad.softmax(Tensor([5.0, -3.0]), tau=1e6)
        assert np.all(np.abs(out.data - 0.5) < 1e-5)

    def test_invalid_temperature(self):
        with pytest.raises(DomainError):
            ad.softmax(Tensor([1.0]), tau=0.0)

    def test_empty_input(self):
        with pytest.raises(DomainError):
            ad.softmax(Tensor(np.zeros(0)))

    def test_probability_vector(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            x = Tensor(rng.normal(scale=5.0, size=rng.integers(1, 12)))
            out = ad.softmax(x, tau=float(rng.uniform(0.1, 3.0)))
            assert np.all(out.data >= 0)
            assert abs(out.data.sum() - 1.0) < 1e-9

    def test_temperature_preserves_argmax(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            x = Tensor(rng.normal(size=8))
            for tau in (0.25, 1.0, 4.0):
                assert ad.softmax(x, tau=tau).data.argmax() == x.data.argmax()


class TestConcat:
    def test_basic(self):
        out = ad.concat(Tensor([1.0, 2.0]), Tensor([3.0]))
        assert np.array_equal(out.data, [1.0, 2.0, 3.0])

    def test_empty_identity(self):
        out = ad.concat(Tensor([1.0, 2.0]), Tensor(np.zeros(0)))
        assert np.array_equal(out.data, [1.0, 2.0])

    def test_leading_dim_mismatch(self):
        with pytest.raises(ShapeError):
            ad.concat(Tensor(np.ones((2, 2))), Tensor(np.ones((3, 2))), axis=1)

    def test_grad_splits(self):
        a = Tensor([1.0, 2.0])
        b = Tensor([3.0, 4.0, 5.0])
        ad.backward(ad.tsum(ad.concat(a, b)))
        assert np.array_equal(a.grad, [1.0, 1.0])
        assert np.array_equal(b.grad, [1.0, 1.0, 1.0])


class TestBackward:
    def test_softmax_sum_has_zero_grad(self):
        x = Tensor([0.3, -1.2, 2.0])
        ad.backward(ad.tsum(ad.softmax(x)))
        assert np.allclose(x.grad, 0.0, atol=1e-12)

    def test_quadratic_form(self):
        x = Tensor([1.0, 2.0])
        ad.backward(ad.matmul(x, x))
        assert np.allclose(x.grad, [2.0, 4.0])

    def test_non_scalar_root_rejected(self):
        with pytest.raises(DomainError):
            ad.backward(Tensor([1.0, 2.0]))

    def test_double_backward_accumulates_exactly_twice(self):
        x = Tensor([0.5, -0.4, 1.1])
        w = Tensor(np.arange(9, dtype=float).reshape(3, 3) / 10.0)
        out = ad.tsum(ad.tanh(ad.matmul(x, w)))
        ad.backward(out)
        once = x.grad.copy(), w.grad.copy()
        ad.backward(out)
        assert np.array_equal(x.grad, 2.0 * once[0])
        assert np.array_equal(w.grad, 2.0 * once[1])

    def test_composite_chain_gradcheck(self):
        # FFN -> attention -> scalar loss, all leaves checked at once.
        rng = np.random.default_rng(3)
        leaves = [Tensor(rng.normal(size=(5, 4))),   # sequence
                  Tensor(rng.normal(size=(4, 6))),   # ffn w1
                  Tensor(rng.normal(size=6)),        # ffn b1
                  Tensor(rng.normal(size=(6, 4))),   # ffn w2
                  Tensor(rng.normal(size=4)),        # ffn b2
                  Tensor(rng.normal(size=4))]        # attention query

        def fn(ls):
            seq, w1, b1, w2, b2, q = ls
            hid = ad.tanh(ad.add(ad.matmul(seq, w1), b1))
            out = ad.add(ad.matmul(hid, w2), b2)
            weights = ad.softmax(ad.matmul(out, q))
            ctx = ad.matmul(weights, out)
            return ad.tsum(ad.mul(ctx, ctx))

        check_grads(fn, leaves, rtol=1e-4)


class TestElementwiseOps:
    def test_dropout_all_ones_identity(self):
        x = Tensor(np.random.default_rng(4).normal(size=(3, 5)))
        out = ad.dropout(x, np.ones((3, 5)))
        assert np.array_equal(out.data, x.data)

    def test_dropout_mask_applies(self):
        x = Tensor(np.ones((2, 2)))
        mask = np.array([[0.0, 2.0], [2.0, 0.0]])
        out = ad.dropout(x, mask)
        assert np.array_equal(out.data, mask)

    def test_embedding_lookup_and_scatter_grad(self):
        table = Tensor(np.arange(12, dtype=float).reshape(4, 3))
        out = ad.embedding_lookup(table, [1, 1, 3])
        assert np.array_equal(out.data, table.data[[1, 1, 3]])
        ad.backward(ad.tsum(out))
        expected = np.zeros((4, 3))
        expected[1] = 2.0
        expected[3] = 1.0
        assert np.array_equal(table.grad, expected)

    def test_mean_rows(self):
        x = Tensor([[1.0, 3.0], [3.0, 5.0]])
        out = ad.mean_rows(x)
        assert np.array_equal(out.data, [2.0, 4.0])

    def test_weighted_sum_rows(self):
        mat = Tensor([[1.0, 0.0], [0.0, 1.0]])
        out = ad.weighted_sum_rows(Tensor([0.25, 0.75]), mat)
        assert np.allclose(out.data, [0.25, 0.75])


class TestRandomizedGradientSuite:
    """Every differentiable op against central finite differences, many
    random shapes/values per op."""

    CASES = 100

    def test_all_ops(self):
        rng = np.random.default_rng(42)
        for i in range(self.CASES):
            n = int(rng.integers(1, 5))
            d = int(rng.integers(1, 5))
            mat = lambda: Tensor(rng.normal(size=(n, d)))
            vec = lambda k=d: Tensor(rng.normal(size=k))
            op = i % 10
            if op == 0:
                check_grads(lambda ls: ad.tsum(ad.add(ls[0], ls[1])), [mat(), mat()])
            elif op == 1:
                check_grads(lambda ls: ad.tsum(ad.mul(ls[0], ls[1])), [mat(), mat()])
            elif op == 2:
                k = int(rng.integers(1, 5))
                check_grads(
                    lambda ls: ad.tsum(ad.matmul(ls[0], ls[1])),
                    [Tensor(rng.normal(size=(n, k))), Tensor(rng.normal(size=(k, d)))])
            elif op == 3:
                check_grads(lambda ls: ad.tsum(ad.tanh(ls[0])), [mat()])
            elif op == 4:
                check_grads(lambda ls: ad.tsum(ad.sigmoid(ls[0])), [mat()])
            elif op == 5:
                w = vec()
                check_grads(
                    lambda ls: ad.tsum(ad.mul(ad.softmax(ls[0]), ls[1])), [vec(), w])
            elif op == 6:
                check_grads(lambda ls: ad.tsum(ad.concat(ls[0], ls[1])),
                            [vec(), vec(int(rng.integers(1, 5)))])
            elif op == 7:
                mask = (rng.random((n, d)) < 0.7) / 0.7
                check_grads(lambda ls, m=mask: ad.tsum(ad.dropout(ls[0], m)), [mat()])
            elif op == 8:
                check_grads(lambda ls: ad.tsum(ad.mean_rows(ls[0])), [mat()])
            else:
                w = Tensor(rng.normal(size=n))
                check_grads(
                    lambda ls: ad.tsum(ad.weighted_sum_rows(ls[0], ls[1])), [w, mat()])
