"""Shared fixtures-by-hand for the unit tests."""

import numpy as np

from gatt.attention import AttentionParams
from gatt.layers import GRU_FIELDS, GruParams
from gatt.numcore import Tape, Tensor
from gatt.seq2seq import ModelConfig, Seq2Seq, forward_loss


def gru_arrays(d_in, d_state, rng, scale=0.5):
    out = {}
    for f in GRU_FIELDS:
        if f.startswith("W"):
            out[f] = rng.normal(scale=scale, size=(d_state, d_in))
        elif f.startswith("U"):
            out[f] = rng.normal(scale=scale, size=(d_state, d_state))
        else:
            out[f] = rng.normal(scale=scale, size=d_state)
    return out


def as_gru(arrays, tape=None):
    wrap = (lambda k, v: tape.leaf(v, k)) if tape else (lambda k, v: Tensor(v))
    return GruParams(**{k: wrap(k, v) for k, v in arrays.items()})


def closed_gate(arrays, bias):
    out = dict(arrays)
    out["W_z"] = np.zeros_like(out["W_z"])
    out["U_z"] = np.zeros_like(out["U_z"])
    out["b_z"] = np.full_like(out["b_z"], bias)
    return out


def att_arrays(d_a, d_h, d_ann, rng, scale=0.5):
    return {
        "v_a": rng.normal(scale=scale, size=d_a),
        "W_a": rng.normal(scale=scale, size=(d_a, d_h)),
        "U_a": rng.normal(scale=scale, size=(d_a, d_ann)),
        "b_a": rng.normal(scale=scale, size=d_a),
    }


def as_att(arrays):
    return AttentionParams(**{k: Tensor(v) for k, v in arrays.items()})


def random_setup(rng, batch=2, n=4, d_h=3, d_a=5):
    H = rng.uniform(-1, 1, size=(batch * n, 2 * d_h))
    lengths = rng.integers(1, n + 1, size=batch)
    mask = (np.arange(n)[None, :] < lengths[:, None]).astype(float)
    H *= mask.reshape(-1, 1)
    s = rng.uniform(-1, 1, size=(batch, d_h))
    return H, mask, s


def fd_check(build, arrays, h=1e-5, tol=1e-4):
    tape = Tape()
    leaves = {k: tape.leaf(v, k) for k, v in arrays.items()}
    tape.backward(build(leaves))
    for k, v in arrays.items():
        analytic = leaves[k].grad if leaves[k].grad is not None else np.zeros_like(v)
        numeric = np.zeros_like(v)
        for idx in np.ndindex(v.shape):
            old = v[idx]
            v[idx] = old + h
            fp = float(build({kk: Tensor(vv) for kk, vv in arrays.items()}).data)
            v[idx] = old - h
            fm = float(build({kk: Tensor(vv) for kk, vv in arrays.items()}).data)
            v[idx] = old
            numeric[idx] = (fp - fm) / (2 * h)
        err = np.max(np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-6))
        assert err < tol, k


def bigram_model(logits, src_vocab=8, scale=20.0):
    """A model whose next-word logits depend only on the previous word:
    row ``y`` of ``logits`` is the distribution after ``y``.

    Embeddings are one-hot, the readout's hidden layer is tanh(scale * onehot)
    and the state/context paths into the readout are zeroed.
    """

    logits = np.asarray(logits, dtype=float)
    v = logits.shape[0]
    cfg = ModelConfig(src_vocab, v, d_w=v, d_h=v, d_a=4, attention_mode="vanilla", decoder_mode="simple")
    model = Seq2Seq.create(cfg, seed=0)
    vals = model.params.values
    vals["tgt_emb"][...] = np.eye(v)
    vals["out.W_e"][...] = scale * np.eye(v)
    vals["out.W_s"][...] = 0.0
    vals["out.W_c"][...] = 0.0
    vals["out.b_t"][...] = 0.0
    vals["out.W_o"][...] = logits.T / np.tanh(scale)
    vals["out.b_o"][...] = 0.0
    return model


def random_model(seed, mode="gatt", decoder="conditional", src_vocab=9, tgt_vocab=8, d=4, std=0.5):
    cfg = ModelConfig(src_vocab, tgt_vocab, d_w=d, d_h=d, d_a=d, attention_mode=mode, decoder_mode=decoder, init_std=std)
    return Seq2Seq.create(cfg, seed=seed)


def directional_fd_check(model, batch, rng, h=1e-5, entries=4):
    """Worst relative error between the tape gradient and central differences,
    over one random direction per parameter tensor plus a few single entries."""
    tape = Tape()
    res = forward_loss(batch, model, tape)
    tape.backward(res.total)
    model.params.zero_grad()
    model.params.collect(tape)
    grads = {k: g.copy() for k, g in model.params.grads.items()}
    model.params.zero_grad()

    def loss():
        return float(forward_loss(batch, model).total.data)

    worst = 0.0
    for name, value in model.params.values.items():
        probes = [rng.normal(size=value.shape)]
        for _ in range(min(entries, value.size)):
            e = np.zeros(value.shape)
            e[np.unravel_index(int(rng.integers(value.size)), value.shape)] = 1.0
            probes.append(e)
        for d in probes:
            value += h * d
            fp = loss()
            value -= 2 * h * d
            fm = loss()
            value += h * d
            numeric = (fp - fm) / (2 * h)
            analytic = float(np.sum(grads[name] * d))
            scale = max(abs(numeric), abs(analytic))
            if scale > 1e-7:
                worst = max(worst, abs(numeric - analytic) / scale)
            else:
                worst = max(worst, abs(numeric - analytic))
    return worst


def tiny_model(mode, decoder, seed=1):
    cfg = ModelConfig(10, 10, d_w=8, d_h=12, d_a=12, attention_mode=mode, decoder_mode=decoder, init_std=0.6)
    return Seq2Seq.create(cfg, seed)


TINY_BATCH = ([[4, 5, 6, 7, 8], [9, 5, 6]], [[4, 5, 6], [7, 8]])  # n=5, m=4 with EOS
