import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from talnet import autograd as ag
from talnet.gradcheck import grad_check
from talnet.nn import Module, Parameter


def test_sigmoid_at_zero():
    assert ag.sigmoid(ag.tensor(0.0)).item() == pytest.approx(0.5)


def test_softmax_equal_logits():
    out = ag.softmax(ag.tensor([2.0, 2.0, 2.0, 2.0]), axis=0)
    np.testing.assert_allclose(out.data, 0.25)


def test_mean_over_axis():
    out = ag.tmean(ag.tensor([[1.0, 3.0], [5.0, 7.0]]), axis=0)
    np.testing.assert_allclose(out.data, [3.0, 5.0])


def test_square_gradient_analytic():
    w = ag.tensor(3.0, dtype=np.float64, requires_grad=True)
    ag.square(w).backward()
    eps = 1e-6
    fd = ((3 + eps) ** 2 - (3 - eps) ** 2) / (2 * eps)
    assert abs(w.grad - 6.0) < 1e-12
    assert abs(w.grad - fd) < 1e-8


def test_shape_mismatch_names_op():
    with pytest.raises(ag.ShapeError) as exc:
        ag.matmul(ag.tensor(np.ones((2, 3))), ag.tensor(np.ones((4, 2))))
    assert exc.value.op == "matmul"
    assert (2, 3) in exc.value.shapes


def test_conv2d_identity_kernel():
    x = ag.tensor(np.random.default_rng(0).normal(size=(2, 1, 5, 4)))
    w = ag.tensor(np.ones((1, 1, 1, 1)))
    np.testing.assert_allclose(ag.conv2d(x, w).data, x.data)


def test_grid_sample_exact_points():
    src = np.arange(12.0).reshape(1, 1, 3, 4)
    rows = ag.tensor([[0.0, 1.0, 2.0]], dtype=np.float64)
    cols = ag.tensor([[0.0, 3.0, 2.0]], dtype=np.float64)
    out = ag.grid_sample(ag.tensor(src, dtype=np.float64), rows, cols)
    np.testing.assert_array_equal(out.data.ravel(), [0.0, 7.0, 10.0])


def test_grid_sample_interpolates():
    src = np.arange(12.0).reshape(1, 1, 3, 4)
    out = ag.grid_sample(ag.tensor(src, dtype=np.float64),
                         ag.tensor([[0.5]], dtype=np.float64),
                         ag.tensor([[0.5]], dtype=np.float64))
    assert out.item() == pytest.approx((0 + 1 + 4 + 5) / 4)


def test_backward_accumulates_additively():
    w = ag.tensor(2.0, dtype=np.float64, requires_grad=True)
    loss = ag.square(w) + ag.square(w)  # 2w^2 -> grad 4w
    loss.backward()
    assert w.grad == pytest.approx(8.0)


def test_grad_zeroing_between_steps():
    w = ag.tensor(2.0, dtype=np.float64, requires_grad=True)
    ag.square(w).backward()
    first = float(w.grad)
    ag.square(w).backward()
    assert w.grad == pytest.approx(2 * first)  # without zeroing it doubles
    w.zero_grad()
    ag.square(w).backward()
    assert w.grad == pytest.approx(first)


@given(st.integers(0, 2 ** 31 - 1))
@settings(max_examples=30, deadline=None)
def test_softmax_normalized_and_nonnegative(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(scale=5.0, size=(3, 7))
    out = ag.softmax(ag.tensor(x), axis=1).data
    assert np.all(out >= 0)
    np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-6)


class _Probe(Module):
    def __init__(self):
        self.w1 = Parameter((6, 8))
        self.w2 = Parameter((8, 3))
        self.b = Parameter((3,), init="zeros")


@given(st.integers(0, 2 ** 31 - 1))
@settings(max_examples=10, deadline=None)
def test_composed_graph_matches_finite_differences(seed):
    probe = _Probe().initialize(seed % 1000, dtype=np.float64)
    rng = np.random.default_rng(seed)
    x = ag.tensor(rng.normal(size=(4, 6)), dtype=np.float64)

    def f():
        h = ag.tanh(ag.matmul(x, probe.w1.tensor))
        logits = ag.matmul(h, probe.w2.tensor) + probe.b.tensor
        p = ag.softmax(logits, axis=1)
        return ag.tmean(ag.square(p - ag.tensor(0.3, dtype=np.float64)))

    report = grad_check(f, probe.parameters(), eps=1e-5, tol=1e-4)
    assert report.passed, report.summary()


def test_gradcheck_report_worst_offenders():
    probe = _Probe().initialize(5, dtype=np.float64)
    x = ag.tensor(np.random.default_rng(5).normal(size=(2, 6)), dtype=np.float64)

    def f():
        return ag.tmean(ag.square(ag.matmul(x, probe.w1.tensor)))

    report = grad_check(f, probe.parameters(), eps=1e-5, tol=1e-4)
    assert report.passed
    assert report.worst[0].rel_err >= report.worst[-1].rel_err
    assert "PASS" in report.summary()


def test_gradcheck_flags_nonfinite():
    class Bad(Module):
        def __init__(self):
            self.w = Parameter((2,))

    bad = Bad().initialize(0, dtype=np.float64)

    def f():
        return ag.tsum(ag.log(bad.w.tensor * ag.tensor(0.0, dtype=np.float64)))

    with pytest.raises(ag.NonFiniteError) as exc:
        grad_check(f, bad.parameters())
    assert exc.value.op == "log"


def test_max_tie_break_first_index():
    x = ag.tensor([[1.0, 3.0, 3.0]], dtype=np.float64, requires_grad=True)
    ag.tsum(ag.tmax(x, axis=1)).backward()
    np.testing.assert_array_equal(x.grad, [[0.0, 1.0, 0.0]])


def test_concat_and_slice_roundtrip():
    a = ag.tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    b = ag.tensor(np.arange(4.0).reshape(2, 2), requires_grad=True)
    cat = ag.concat([a, b], axis=1)
    np.testing.assert_array_equal(cat.data[:, :3], a.data)
    ag.tsum(cat[:, 3:]).backward()
    np.testing.assert_array_equal(a.grad, np.zeros((2, 3)))
    np.testing.assert_array_equal(b.grad, np.ones((2, 2)))
