import numpy as np
import pytest

from r3l import autodiff as ad
from r3l.autodiff import Tensor, backward, no_grad
from r3l.oracles import run_gradcheck


def test_identity_gradient():
    x = Tensor(np.array(3.0), requires_grad=True)
    y = ad.mul(x, 1.0)
    backward(y)
    assert x.grad == pytest.approx(1.0)


def test_square_gradient():
    x = Tensor(np.array(3.0), requires_grad=True)
    y = ad.mul(x, x)
    backward(y)
    assert x.grad == pytest.approx(6.0)


def test_non_scalar_root_rejected():
    x = Tensor(np.zeros(3), requires_grad=True)
    with pytest.raises(ValueError, match="scalar"):
        backward(ad.mul(x, 2.0))


def test_matmul_gradients_hand():
    a = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]), requires_grad=True)
    b = Tensor(np.array([[5.0], [6.0]]), requires_grad=True)
    out = ad.reduce_sum(ad.matmul(a, b))
    backward(out)
    np.testing.assert_allclose(a.grad, [[5.0, 6.0], [5.0, 6.0]])
    np.testing.assert_allclose(b.grad, [[4.0], [6.0]])


def test_softmax_gradient_hand():
    # d/dx_k sum(w * softmax(x)) = y_k (w_k - sum(w*y))
    x = Tensor(np.array([0.2, -0.4, 1.0]), requires_grad=True)
    w = np.array([1.0, 2.0, 3.0])
    out = ad.reduce_sum(ad.mul(ad.softmax(x), Tensor(w)))
    backward(out)
    y = np.exp(x.data - x.data.max())
    y /= y.sum()
    np.testing.assert_allclose(x.grad, y * (w - (w * y).sum()), atol=1e-12)


def test_accumulation_across_consumers():
    x = Tensor(np.array(2.0), requires_grad=True)
    y = ad.add(ad.mul(x, 3.0), ad.mul(x, x))
    backward(y)
    assert x.grad == pytest.approx(3.0 + 4.0)


def test_no_grad_blocks_recording():
    x = Tensor(np.array(2.0), requires_grad=True)
    with no_grad():
        y = ad.mul(x, x)
    assert not y.requires_grad
    assert y._bw is None


def test_graph_consumed_after_backward():
    x = Tensor(np.array(2.0), requires_grad=True)
    y = ad.mul(x, x)
    backward(y)
    first = float(x.grad)
    backward(y)  # consumed: second walk must not double-accumulate
    assert float(x.grad) == first


def test_broadcast_bias_gradient():
    x = Tensor(np.ones((4, 3)), requires_grad=True)
    b = Tensor(np.zeros(3), requires_grad=True)
    backward(ad.reduce_sum(ad.add(x, b)))
    np.testing.assert_allclose(b.grad, [4.0, 4.0, 4.0])


def test_full_gradcheck_suite():
    names = [name for name, _ in run_gradcheck(seed=0)]
    assert "gru_cell" in names and "actor_utility_chain" in names
    assert len(names) >= 18
