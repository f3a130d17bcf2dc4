import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mimo_ae import nn
from mimo_ae.rng import RngStream


def random_model(dims, output="softmax", seed=0):
    m = nn.MlpModel.build(dims, output=output)
    nn.he_init(m, RngStream(seed))
    rng = np.random.default_rng(seed)
    for layer in m.layers:
        layer.bias[...] = 0.1 * rng.normal(size=layer.bias.shape)
    return m


def numeric_grad(f, arrays, step=1e-6):
    out = []
    for a in arrays:
        g = np.zeros_like(a)
        it = np.nditer(a, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = a[i]
            a[i] = old + step
            fp = f()
            a[i] = old - step
            fm = f()
            a[i] = old
            g[i] = (fp - fm) / (2 * step)
        out.append(g)
    return out


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)


def test_softmax_is_stable():
    p = nn.softmax(np.array([[1000.0, 1000.0, -1000.0]]))
    assert np.allclose(p, [[0.5, 0.5, 0.0]])


def test_forward_shapes_and_probabilities():
    m = random_model([5, 7, 3])
    acts = nn.forward(m, np.ones((4, 5)))
    assert [a.shape for a in acts] == [(4, 5), (4, 7), (4, 3)]
    assert np.allclose(acts[-1].sum(axis=1), 1.0)
    assert np.all(acts[1] >= 0)


def test_forward_rejects_wrong_input():
    with pytest.raises(nn.InvalidInputError if hasattr(nn, "InvalidInputError") else ValueError):
        nn.forward(random_model([5, 3]), np.ones((2, 4)))


def test_backward_softmax_ce_matches_finite_differences():
    m = random_model([4, 6, 5, 3], seed=1)
    x = np.random.default_rng(2).normal(size=(8, 4))
    labels = np.array([0, 1, 2, 0, 1, 2, 2, 1])

    def loss():
        return nn.cross_entropy(nn.forward(m, x)[-1], labels)

    acts = nn.forward(m, x)
    grads, gx = nn.backward(m, acts, nn.cross_entropy_grad(acts[-1], labels))
    num = numeric_grad(loss, m.parameters() + [x])
    for a, b in zip(grads + [gx], num):
        assert rel_err(a, b) < 1e-6


def test_backward_linear_output():
    m = random_model([3, 4, 2], output="linear", seed=3)
    x = np.random.default_rng(4).normal(size=(5, 3))
    w = np.random.default_rng(5).normal(size=(5, 2))

    def loss():
        return float(np.sum(w * m(x)))

    grads, gx = nn.backward(m, nn.forward(m, x), w)
    num = numeric_grad(loss, m.parameters() + [x])
    for a, b in zip(grads + [gx], num):
        assert rel_err(a, b) < 1e-6


def test_cross_entropy_of_uniform_is_log_m():
    p = np.full((10, 16), 1 / 16)
    assert nn.cross_entropy(p, np.arange(10)) == pytest.approx(np.log(16))


def test_power_normalize_hits_target_energy():
    x = np.random.default_rng(6).normal(size=(32, 4))
    y, s = nn.power_normalize(x, p_t=2.0, slots=2)
    assert np.sum(y * y) == pytest.approx(32 * 2 * 2.0)
    assert np.allclose(y, s * x)


def test_power_normalize_zero_batch():
    with pytest.raises(nn.DegenerateBatchError):
        nn.power_normalize(np.zeros((3, 2)))


def test_power_normalize_backward_matches_finite_differences():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(6, 4))
    w = rng.normal(size=(6, 4))

    def loss():
        return float(np.sum(w * nn.power_normalize(x, 1.0, 2)[0]))

    _, s = nn.power_normalize(x, 1.0, 2)
    g = nn.power_normalize_backward(x, s, w)
    (num,) = numeric_grad(loss, [x])
    assert rel_err(g, num) < 1e-6


def test_adam_first_step_is_sign_step():
    # after one step m/c1 = g and sqrt(v/c2) = |g|, so each entry moves by lr*g/(|g|+eps)
    p = np.array([1.0, -2.0, 3.0])
    g = np.array([0.5, -4.0, 1e-3])
    st_ = nn.AdamState.for_params([p], lr=0.01)
    nn.adam_step([p], [g], st_)
    expected = np.array([1.0, -2.0, 3.0]) - 0.01 * g / (np.abs(g) + 1e-8)
    assert np.allclose(p, expected, rtol=0, atol=1e-15)


def test_adam_matches_reference_loop():
    rng = np.random.default_rng(8)
    p = rng.normal(size=4)
    ref = p.copy()
    m = np.zeros(4)
    v = np.zeros(4)
    state = nn.AdamState.for_params([p], lr=0.003)
    for t in range(1, 6):
        g = rng.normal(size=4)
        nn.adam_step([p], [g], state)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref -= 0.003 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
    assert np.allclose(p, ref, rtol=1e-12)


def test_he_init_variance():
    m = nn.MlpModel.build([400, 300, 10], output="linear")
    nn.he_init(m, RngStream(9))
    assert np.var(m.layers[0].weight) == pytest.approx(2 / 400, rel=0.02)
    assert np.var(m.layers[1].weight) == pytest.approx(1 / 300, rel=0.1)
    assert not np.any(m.layers[0].bias)


def test_serialization_bytes_layout():
    m = nn.MlpModel.build([2, 1], output="linear")
    m.layers[0].weight[...] = [[1.5], [-2.0]]
    m.layers[0].bias[...] = [0.25]
    expected = b"MIMOAE01" + struct.pack("<I", 1) + struct.pack("<IIB", 2, 1, 1) + struct.pack("<3d", 1.5, -2.0, 0.25)
    assert nn.model_to_bytes(m) == expected
    assert nn.model_file_size(m) == len(expected)


dims_st = st.lists(st.integers(1, 6), min_size=2, max_size=5)


@given(dims_st, st.sampled_from(nn.ACTIVATIONS))
def test_serialization_roundtrip(dims, out_act):
    m = random_model(dims, output=out_act)
    data = nn.model_to_bytes(m)
    assert len(data) == nn.model_file_size(dims)
    back = nn.model_from_bytes(data)
    assert back.dims == m.dims
    for a, b in zip(m.layers, back.layers):
        assert a.activation == b.activation
        assert np.array_equal(a.weight, b.weight) and np.array_equal(a.bias, b.bias)


def test_model_format_errors():
    data = nn.model_to_bytes(random_model([3, 2]))
    with pytest.raises(nn.ModelFormatError, match="magic"):
        nn.model_from_bytes(b"X" + data[1:])
    with pytest.raises(nn.ModelFormatError, match="truncated"):
        nn.model_from_bytes(data[:-3])
    with pytest.raises(nn.ModelFormatError, match="trailing"):
        nn.model_from_bytes(data + b"\0")
    bad = bytearray(data)
    bad[20] = 7  # activation code of layer 0
    with pytest.raises(nn.ModelFormatError, match="activation"):
        nn.model_from_bytes(bytes(bad))


def test_non_chaining_dims():
    blob = b"MIMOAE01" + struct.pack("<I", 2)
    blob += struct.pack("<IIB", 1, 2, 0) + struct.pack("<IIB", 3, 1, 1)
    blob += struct.pack("<8d", *range(8))
    with pytest.raises(nn.ModelFormatError, match="chain"):
        nn.model_from_bytes(blob)


def test_container_roundtrip(tmp_path):
    models = [random_model([3, 4, 2], output="linear"), random_model([2, 5], seed=1), random_model([2, 5], seed=2)]
    p = tmp_path / "c.bin"
    nn.write_container(models, p)
    assert p.stat().st_size == 4 + sum(nn.model_file_size(m) for m in models)
    back = nn.read_container(p)
    assert [b.dims for b in back] == [m.dims for m in models]
    assert np.array_equal(back[2].layers[0].weight, models[2].layers[0].weight)


def test_container_truncated(tmp_path):
    p = tmp_path / "c.bin"
    nn.write_container([random_model([3, 2])], p)
    p.write_bytes(p.read_bytes()[:-1])
    with pytest.raises(nn.ModelFormatError):
        nn.read_container(p)
