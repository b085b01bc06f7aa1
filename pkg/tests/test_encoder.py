import numpy as np
import pytest

from msqale.core import CorruptDataError, SeededRng
from msqale.encoder import Encoder, load_weights, save_weights
from oracles import conv3x3_s2_zero


def tiny_encoder(seed=0, widths=(4, 6)):
    return Encoder(widths=widths, rng=SeededRng(seed), input_side=8)


def test_init_deterministic():
    a = tiny_encoder(3)
    b = tiny_encoder(3)
    for wa, wb in zip(a.params(), b.params()):
        assert np.array_equal(wa, wb)


def test_biases_start_at_zero():
    enc = tiny_encoder()
    for b in enc.biases:
        assert np.all(b == 0.0)


def test_init_bounds_match_fan_in():
    enc = Encoder(widths=(512,), rng=SeededRng(1))
    w = enc.weights[0].astype(np.float64)
    bound = np.sqrt(6.0 / 27.0)
    assert w.size > 10_000
    assert np.abs(w).max() <= bound
    assert np.abs(w).max() > 0.98 * bound  # draws reach the edges
    assert abs(w.mean()) < 0.01
    assert np.abs(w).min() < 0.01 * bound


def test_zero_weights_zero_embedding(rng):
    enc = tiny_encoder()
    enc.set_params([np.zeros_like(p) for p in enc.params()])
    z = enc.forward(rng.random((8, 8, 3)))
    assert np.all(z == 0.0)


def test_layer1_preactivation_linearity(rng):
    enc = tiny_encoder()
    x = rng.random((8, 8, 3))
    _, c1 = enc.forward(x, want_cache=True)
    _, c2 = enc.forward(2.0 * x, want_cache=True)
    assert np.allclose(c2["pre"][0], 2.0 * c1["pre"][0], atol=1e-12)


def test_forward_matches_loop_oracle(rng):
    enc = tiny_encoder(5)
    x = rng.random((3, 8, 8))
    cur = x
    for w, b in zip(enc.weights, enc.biases):
        pre = conv3x3_s2_zero(cur, w.astype(np.float64), b.astype(np.float64))
        cur = np.maximum(pre, 0.0)
    assert np.allclose(enc.forward(x), cur.mean(axis=(1, 2)), atol=1e-12)


def test_forward_accepts_hwc_and_chw(rng):
    enc = tiny_encoder()
    x = rng.random((8, 8, 3))
    z1 = enc.forward(x)
    z2 = enc.forward(np.transpose(x, (2, 0, 1)))
    assert np.allclose(z1, z2, atol=1e-15)
    assert z1.shape == (6,)


def test_forward_shape_errors(rng):
    enc = tiny_encoder()
    with pytest.raises(ValueError):
        enc.forward(rng.random((8, 8)))
    with pytest.raises(ValueError):
        enc.forward(rng.random((5, 8, 8)))


def test_backward_zero_upstream_gives_zero_grads(rng):
    enc = tiny_encoder()
    _, cache = enc.forward(rng.random((8, 8, 3)), want_cache=True)
    grads = enc.backward(cache, np.zeros(enc.embed_dim))
    for g in grads:
        assert np.all(g == 0.0)


def test_dead_relu_blocks_gradient(rng):
    enc = tiny_encoder()
    # large negative biases at block 2 kill every pre-activation there
    params = enc.params()
    params[3] = np.full_like(params[3], -100.0)
    enc.set_params(params)
    _, cache = enc.forward(rng.random((8, 8, 3)), want_cache=True)
    assert np.all(cache["pre"][1] < 0.0)
    grads = enc.backward(cache, np.ones(enc.embed_dim))
    assert np.all(grads[2] == 0.0)  # block-2 kernel
    assert np.all(grads[0] == 0.0)  # nothing flows below either


def test_gradient_finite_difference(rng):
    enc = tiny_encoder(9, widths=(3, 4))
    x = rng.random((8, 8, 3))
    direction = rng.standard_normal(enc.embed_dim)

    def loss():
        return float(enc.forward(x) @ direction)

    _, cache = enc.forward(x, want_cache=True)
    grads = enc.backward(cache, direction)
    params = enc.params()
    checked = 0
    for pi, p in enumerate(params):
        flat = p.reshape(-1)
        for j in range(0, flat.size, max(1, flat.size // 10)):
            orig = flat[j]
            flat[j] = np.float32(orig + 1e-4)
            plus_val = np.float64(flat[j])
            lp = loss()
            flat[j] = np.float32(orig - 1e-4)
            minus_val = np.float64(flat[j])
            lm = loss()
            flat[j] = orig
            fd = (lp - lm) / (plus_val - minus_val)
            an = grads[pi].reshape(-1)[j]
            assert abs(an - fd) / (abs(an) + 1e-8) < 1e-3
            checked += 1
    assert checked >= 20


def test_save_load_bit_identical(tmp_path):
    enc = tiny_encoder(2, widths=(4, 8))
    path = tmp_path / "w.msqw"
    save_weights(path, enc, subband=-1, epoch=7)
    back, subband, epoch = load_weights(path)
    assert (subband, epoch) == (-1, 7)
    assert back.widths == enc.widths
    assert back.input_side == enc.input_side
    for a, b in zip(enc.params(), back.params()):
        assert np.array_equal(a, b)
        assert b.dtype == np.float32


def test_load_rejects_corrupt_files(tmp_path):
    enc = tiny_encoder()
    path = tmp_path / "w.msqw"
    save_weights(path, enc)
    raw = path.read_bytes()

    bad_magic = tmp_path / "m.msqw"
    bad_magic.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(CorruptDataError):
        load_weights(bad_magic)

    truncated = tmp_path / "t.msqw"
    truncated.write_bytes(raw[: len(raw) - 9])
    with pytest.raises(CorruptDataError):
        load_weights(truncated)

    trailing = tmp_path / "x.msqw"
    trailing.write_bytes(raw + b"\x00\x00")
    with pytest.raises(CorruptDataError):
        load_weights(trailing)

    bad_version = tmp_path / "v.msqw"
    bad_version.write_bytes(raw[:4] + b"\x63\x00\x00\x00" + raw[8:])
    with pytest.raises(CorruptDataError):
        load_weights(bad_version)


def test_set_params_validates():
    enc = tiny_encoder()
    with pytest.raises(ValueError):
        enc.set_params(enc.params()[:-1])
    bad = [p.copy() for p in enc.params()]
    bad[0] = bad[0][:, :, :2, :2]
    with pytest.raises(ValueError):
        enc.set_params(bad)


def test_needs_at_least_one_block():
    with pytest.raises(ValueError):
        Encoder(widths=())
