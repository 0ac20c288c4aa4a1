import numpy as np
import pytest

from mvhand import tensor as T
from mvhand.errors import ContractError, DimensionError, NumericError


@pytest.fixture(autouse=True)
def float64_mode():
    T.set_default_dtype("float64")
    yield
    T.set_default_dtype("float32")


def test_shape_data_invariant():
    x = T.Tensor(np.arange(12.0).reshape(3, 4))
    assert x.shape == (3, 4)
    assert int(np.prod(x.shape)) == x.data.size


def test_sigmoid_of_zero_is_half():
    assert T.sigmoid(T.Tensor(0.0)).item() == pytest.approx(0.5, abs=0)


def test_matmul_identity_is_exact():
    rng = np.random.default_rng(0)
    x = T.Tensor(rng.normal(size=(4, 5)))
    eye = T.Tensor(np.eye(5))
    out = T.matmul(x, eye)
    np.testing.assert_array_equal(out.data, x.data)


def test_concat_feature_axis():
    a = T.Tensor(np.zeros(128).reshape(1, 128))
    b = T.Tensor(np.ones(128).reshape(1, 128))
    out = T.concat([a, b], axis=1)
    assert out.shape == (1, 256)


def test_backward_square():
    x = T.Tensor(3.0, requires_grad=True)
    loss = T.mul(x, x)
    loss.backward()
    assert x.grad == pytest.approx(6.0)


def test_backward_unreachable_param_gets_zero_grad():
    x = T.Tensor(2.0, requires_grad=True)
    p = T.Tensor(5.0, requires_grad=True)
    loss = T.mul(x, x)
    loss.backward(params=[x, p])
    assert p.grad == pytest.approx(0.0)
    assert p.grad is not None and p.grad.shape == p.shape


def test_backward_rejects_nonscalar_loss():
    x = T.Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ContractError):
        T.backward(T.mul(x, x))


def test_tape_consumed_after_backward():
    x = T.Tensor(2.0, requires_grad=True)
    y = T.mul(x, x)
    loss = T.add(y, 1.0)
    loss.backward()
    with pytest.raises(ContractError):
        loss.backward()
    # a graph sharing consumed interior nodes is rejected too
    x2 = T.Tensor(1.0, requires_grad=True)
    y2 = T.mul(x2, x2)
    z = T.add(y2, 0.0)
    z.backward()
    with pytest.raises(ContractError):
        T.add(y2, 1.0).backward()


def test_backward_linearity_elementwise():
    rng = np.random.default_rng(7)
    base = rng.normal(size=(3, 3))

    def grads(which):
        x = T.Tensor(base, requires_grad=True)
        l1 = T.tsum(T.mul(x, x))
        l2 = T.tsum(T.sigmoid(x))
        if which == "sum":
            T.add(l1, l2).backward()
        elif which == "l1":
            l1.backward()
        else:
            l2.backward()
        return x.grad.copy()

    combined = grads("sum")
    separate = grads("l1") + grads("l2")
    np.testing.assert_allclose(combined, separate, atol=1e-12, rtol=0)


def test_broadcast_add_unbroadcasts_gradient():
    x = T.Tensor(np.ones((4, 3)), requires_grad=True)
    b = T.Tensor(np.zeros(3), requires_grad=True)
    out = T.tsum(T.add(x, b))
    out.backward()
    np.testing.assert_allclose(b.grad, np.full(3, 4.0))
    np.testing.assert_allclose(x.grad, np.ones((4, 3)))


def test_shape_mismatch_names_op_and_shapes():
    a = T.Tensor(np.ones((2, 3)))
    b = T.Tensor(np.ones((4, 5)))
    with pytest.raises(DimensionError, match=r"matmul.*2, 3.*4, 5"):
        T.matmul(a, b)
    with pytest.raises(DimensionError, match="add"):
        T.add(a, T.Tensor(np.ones((3, 2))))


def test_nonfinite_output_raises_numeric_error():
    a = T.Tensor(1.0)
    b = T.Tensor(0.0)
    with pytest.raises(NumericError, match="div"):
        T.div(a, b)


def test_mixed_dtype_rejected():
    a = T.Tensor(1.0, dtype="float32")
    b = T.Tensor(1.0, dtype="float64")
    with pytest.raises(ContractError):
        T.add(a, b)


def test_dropout_deterministic_and_inverted():
    x = T.Tensor(np.ones((100, 100)), requires_grad=True)
    out1 = T.dropout(x, keep_prob=0.75, seed=42)
    out2 = T.dropout(x, keep_prob=0.75, seed=42)
    np.testing.assert_array_equal(out1.data, out2.data)
    kept = out1.data != 0
    assert abs(kept.mean() - 0.75) < 0.02
    np.testing.assert_allclose(out1.data[kept], 1.0 / 0.75)
    # inference mode is the identity
    out3 = T.dropout(x, keep_prob=0.75, seed=42, training=False)
    np.testing.assert_array_equal(out3.data, x.data)


def test_determinism_same_seed_same_values_and_grads():
    def run():
        rng = np.random.default_rng(123)
        x = T.Tensor(rng.normal(size=(5, 5)), requires_grad=True)
        h = T.relu(T.matmul(x, T.Tensor(rng.normal(size=(5, 4)))))
        loss = T.mean(T.mul(h, h))
        loss.backward()
        return loss.item(), x.grad.copy()

    l1, g1 = run()
    l2, g2 = run()
    assert l1 == l2
    np.testing.assert_array_equal(g1, g2)


def test_apply_primitive_dispatch():
    x = T.Tensor(np.full((2, 2), 4.0))
    out = T.apply_primitive("sqrt", [x])
    np.testing.assert_allclose(out.data, 2.0)
    out = T.apply_primitive("concat", [x, x], {"axis": 0})
    assert out.shape == (4, 2)
    with pytest.raises(ContractError):
        T.apply_primitive("nope", [x])


def test_slice_and_concat_roundtrip_gradient():
    x = T.Tensor(np.arange(24.0).reshape(2, 3, 4), requires_grad=True)
    left = T.narrow(x, 1, 0, 1)
    right = T.narrow(x, 1, 1, 2)
    out = T.concat([left, right], axis=1)
    np.testing.assert_array_equal(out.data, x.data)
    T.tsum(out).backward()
    np.testing.assert_array_equal(x.grad, np.ones_like(x.data))


def test_avgpool_global():
    x = T.Tensor(np.arange(16.0).reshape(1, 4, 4, 1), requires_grad=True)
    out = T.avgpool2d(x, (4, 4))
    assert out.shape == (1, 1, 1, 1)
    assert out.item() == pytest.approx(np.arange(16.0).mean())
    T.tsum(out).backward()
    np.testing.assert_allclose(x.grad, 1.0 / 16.0)


def test_conv2d_matches_dense_oracle():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(2, 5, 5, 3))
    k = rng.normal(size=(3, 3, 3, 4))
    out = T.conv2d(T.Tensor(x), T.Tensor(k), stride=2, padding=1).data
    # brute-force oracle: explicit loops over every output position
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    expect = np.zeros_like(out)
    for n in range(2):
        for i in range(out.shape[1]):
            for j in range(out.shape[2]):
                patch = xp[n, i * 2:i * 2 + 3, j * 2:j * 2 + 3, :]
                for c in range(4):
                    expect[n, i, j, c] = (patch * k[:, :, :, c]).sum()
    np.testing.assert_allclose(out, expect, atol=1e-12)
