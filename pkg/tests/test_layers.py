import numpy as np
import pytest

from gatt.layers import GRU_FIELDS, GruParams, ReadoutParams, encode, gru_cell, readout
from gatt.numcore import DimensionError, Tensor, sum_all
from helpers import as_gru, closed_gate, fd_check, gru_arrays

GRU_SCALAR_H_NEW = 0.4923186837133675


def test_gru_scalar_oracle():
    ones = {f: np.array([[1.0]]) if f[0] in "WU" else np.array([0.0]) for f in GRU_FIELDS}
    h, acts = gru_cell(Tensor([[0.5]]), Tensor([[0.2]]), as_gru(ones))
    assert h.data[0, 0] == pytest.approx(GRU_SCALAR_H_NEW, abs=1e-15)
    assert acts.z.data[0, 0] == pytest.approx(0.6681877721681662, abs=1e-15)
    assert acts.h_bar.data[0, 0] == pytest.approx(0.4885042549316522, abs=1e-15)


@pytest.mark.parametrize("bias", [-30.0, 30.0])
def test_gru_update_gate_limits(bias):
    rng = np.random.default_rng(0)
    p = as_gru(closed_gate(gru_arrays(3, 4, rng), bias))
    h_prev = Tensor(rng.uniform(-1, 1, size=(2, 4)))
    h, acts = gru_cell(h_prev, Tensor(rng.normal(size=(2, 3))), p)
    target = h_prev.data if bias < 0 else acts.h_bar.data
    assert np.max(np.abs(h.data - target)) < 1e-8


def test_gru_convex_bound():
    rng = np.random.default_rng(1)
    p = as_gru(gru_arrays(3, 5, rng, scale=2.0))
    for _ in range(20):
        h_prev = rng.uniform(-3, 3, size=(4, 5))
        h, _ = gru_cell(Tensor(h_prev), Tensor(rng.normal(size=(4, 3)) * 3), p)
        assert np.all(np.abs(h.data) <= np.maximum(np.abs(h_prev), 1.0) + 1e-12)


def test_gru_shape_mismatch():
    p = as_gru(gru_arrays(3, 4, np.random.default_rng(0)))
    with pytest.raises(DimensionError):
        gru_cell(Tensor(np.zeros((1, 4))), Tensor(np.zeros((1, 2))), p)
    with pytest.raises(DimensionError):
        gru_cell(Tensor(np.zeros((1, 3))), Tensor(np.zeros((1, 3))), p)


def test_gru_gradients():
    rng = np.random.default_rng(2)
    arrays = gru_arrays(3, 4, rng)
    arrays["h"] = rng.normal(size=(2, 4)) * 0.5
    arrays["x"] = rng.normal(size=(2, 3))
    w = rng.normal(size=(2, 4))

    def build(t):
        p = GruParams(**{f: t[f] for f in GRU_FIELDS})
        h, _ = gru_cell(t["h"], t["x"], p)
        return sum_all(h * w)

    fd_check(build, arrays)


# -- readout -------------------------------------------------------------------


def readout_arrays(d_w, d_h, d_ctx, v, rng):
    return {
        "W_e": rng.normal(size=(d_h, d_w)),
        "W_s": rng.normal(size=(d_h, d_h)),
        "W_c": rng.normal(size=(d_h, d_ctx)),
        "b_t": rng.normal(size=d_h),
        "W_o": rng.normal(size=(v, d_h)),
        "b_o": rng.normal(size=v),
    }


def test_readout_zero_weights():
    rng = np.random.default_rng(0)
    arrays = {k: np.zeros_like(v) for k, v in readout_arrays(2, 3, 4, 5, rng).items()}
    arrays["b_o"] = np.array([0.5, -1.0, 2.0, 0.0, 3.0])
    p = ReadoutParams(**{k: Tensor(v) for k, v in arrays.items()})
    logits = readout(Tensor(rng.normal(size=(1, 2))), Tensor(rng.normal(size=(1, 3))), Tensor(rng.normal(size=(1, 4))), p)
    np.testing.assert_array_equal(logits.data[0], arrays["b_o"])


def test_readout_scalar_oracle():
    arrays = {
        "W_e": [[0.5]],
        "W_s": [[-1.0]],
        "W_c": [[2.0]],
        "b_t": [0.1],
        "W_o": [[1.0], [-2.0]],
        "b_o": [0.0, 0.3],
    }
    p = ReadoutParams(**{k: Tensor(v) for k, v in arrays.items()})
    logits = readout(Tensor([[0.4]]), Tensor([[0.2]]), Tensor([[0.3]]), p).data[0]
    np.testing.assert_allclose(logits, [0.6043677771171635, -0.9087355542343270], atol=1e-15)


def test_readout_shift_invariant_argmax():
    rng = np.random.default_rng(4)
    p = ReadoutParams(**{k: Tensor(v) for k, v in readout_arrays(2, 3, 4, 6, rng).items()})
    logits = readout(Tensor(rng.normal(size=(5, 2))), Tensor(rng.normal(size=(5, 3))), Tensor(rng.normal(size=(5, 4))), p).data
    for kappa in (-50.0, 0.3, 700.0):
        shifted = logits + kappa
        probs = np.exp(shifted - shifted.max(axis=1, keepdims=True))
        assert np.array_equal(np.argmax(probs, axis=1), np.argmax(logits, axis=1))


def test_readout_gradients():
    rng = np.random.default_rng(5)
    arrays = readout_arrays(2, 3, 4, 5, rng)
    arrays.update(e=rng.normal(size=(2, 2)), s=rng.normal(size=(2, 3)), c=rng.normal(size=(2, 4)))
    w = rng.normal(size=(2, 5))

    def build(t):
        p = ReadoutParams(**{f: t[f] for f in ("W_e", "W_s", "W_c", "b_t", "W_o", "b_o")})
        return sum_all(readout(t["e"], t["s"], t["c"], p) * w)

    fd_check(build, arrays)


# -- encoder -------------------------------------------------------------------


@pytest.fixture
def enc_params():
    rng = np.random.default_rng(7)
    emb = rng.normal(size=(12, 3))
    return emb, gru_arrays(3, 4, rng, 1.0), gru_arrays(3, 4, rng, 1.0)


def test_encode_bounds_and_padding(enc_params):
    emb, f, b = enc_params
    ids = np.array([[4, 5, 6, 0, 0], [7, 8, 9, 10, 11]])
    mask = np.array([[1, 1, 1, 0, 0], [1, 1, 1, 1, 1]], dtype=float)
    ann = encode(ids, mask, Tensor(emb), as_gru(f), as_gru(b))
    H = ann.H.data.reshape(2, 5, 8)
    assert np.all(np.abs(H[mask == 1]) < 1)
    assert np.all(H[mask == 0] == 0.0)
    other = ids.copy()
    other[0, 3:] = [9, 2]
    ann2 = encode(other, mask, Tensor(emb), as_gru(f), as_gru(b))
    np.testing.assert_array_equal(ann.H.data, ann2.H.data)
    alone = encode(ids[0, :3], None, Tensor(emb), as_gru(f), as_gru(b))
    np.testing.assert_allclose(alone.H.data, H[0, :3], atol=1e-15)


def test_encode_single_token(enc_params):
    emb, f, b = enc_params
    ann = encode([5], None, Tensor(emb), as_gru(f), as_gru(b))
    zero = Tensor(np.zeros((1, 4)))
    hf, _ = gru_cell(zero, Tensor(emb[[5]]), as_gru(f))
    hb, _ = gru_cell(zero, Tensor(emb[[5]]), as_gru(b))
    np.testing.assert_array_equal(ann.H.data[0], np.concatenate([hf.data[0], hb.data[0]]))


def test_encode_reversal_symmetry(enc_params):
    emb, f, b = enc_params
    ids = [3, 9, 4, 11, 6]
    H = encode(ids, None, Tensor(emb), as_gru(f), as_gru(b)).H.data
    R = encode(ids[::-1], None, Tensor(emb), as_gru(b), as_gru(f)).H.data
    swapped = np.concatenate([R[::-1, 4:], R[::-1, :4]], axis=1)
    np.testing.assert_allclose(H, swapped, atol=1e-14)


def test_encode_rejects_bad_ids(enc_params):
    emb, f, b = enc_params
    with pytest.raises(IndexError):
        encode([1, 12], None, Tensor(emb), as_gru(f), as_gru(b))
