import math

import numpy as np
import pytest

from gatt.data import EOS, pad_batch
from gatt.layers import EncoderAnnotations
from gatt.numcore import Tape, Tensor
from gatt.seq2seq import (
    ModelConfig,
    Seq2Seq,
    ensemble_next_distribution,
    forward_loss,
    init_decoder_state,
    softmax_rows,
)
from helpers import TINY_BATCH, bigram_model, directional_fd_check, random_model, tiny_model

COMBOS = [(a, d) for a in ("vanilla", "gatt", "gatt_inv") for d in ("conditional", "simple")]


# -- straight-line reference implementation ------------------------------------


def _sig(x):
    return 1.0 / (1.0 + np.exp(-x))


def _gru(P, pre, h, x):
    z = _sig(P[f"{pre}.W_z"] @ x + P[f"{pre}.U_z"] @ h + P[f"{pre}.b_z"])
    r = _sig(P[f"{pre}.W_r"] @ x + P[f"{pre}.U_r"] @ h + P[f"{pre}.b_r"])
    hb = np.tanh(P[f"{pre}.W"] @ x + P[f"{pre}.U"] @ (r * h) + P[f"{pre}.b"])
    return (1 - z) * h + z * hb


def _attend(P, mode, H, q):
    if mode == "gatt":
        rows = [_gru(P, "gate", h, q) for h in H]
    elif mode == "gatt_inv":
        rows = [_gru(P, "gate", q, h) for h in H]
    else:
        rows = list(H)
    e = np.array([P["att.v_a"] @ np.tanh(P["att.W_a"] @ q + P["att.U_a"] @ row + P["att.b_a"]) for row in rows])
    a = np.exp(e - e.max())
    a /= a.sum()
    return sum(ai * row for ai, row in zip(a, rows)), a


def reference_loss(model, src, tgt):
    """Summed NLL of one sentence pair, written out step by step."""
    P, cfg = model.params.values, model.cfg
    d_h = cfg.d_h
    x = [P["src_emb"][t] for t in src]
    hf, hb = np.zeros(d_h), np.zeros(d_h)
    fwd, bwd = [], [None] * len(src)
    for t in range(len(src)):
        hf = _gru(P, "enc_fwd", hf, x[t])
        fwd.append(hf)
    for t in reversed(range(len(src))):
        hb = _gru(P, "enc_bwd", hb, x[t])
        bwd[t] = hb
    H = [np.concatenate([f, b]) for f, b in zip(fwd, bwd)]
    s = np.tanh(P["init.W"] @ np.mean(H, axis=0) + P["init.b"])
    total, y_prev, weights = 0.0, 2, []
    for y in list(tgt) + [EOS]:
        e = P["tgt_emb"][y_prev]
        if cfg.decoder_mode == "conditional":
            st = _gru(P, "dec1", s, e)
            c, a = _attend(P, cfg.attention_mode, H, st)
            s = _gru(P, "dec2", st, c)
        else:
            c, a = _attend(P, cfg.attention_mode, H, s)
            s = _gru(P, "dec", s, np.concatenate([e, c]))
        hidden = np.tanh(P["out.W_e"] @ e + P["out.W_s"] @ s + P["out.W_c"] @ c + P["out.b_t"])
        logits = P["out.W_o"] @ hidden + P["out.b_o"]
        logz = logits.max() + math.log(np.sum(np.exp(logits - logits.max())))
        total += logz - logits[y]
        weights.append(a)
        y_prev = y
    return total, np.array(weights)


@pytest.mark.parametrize("mode,decoder", COMBOS)
def test_matches_straight_line_reference(mode, decoder):
    cfg = ModelConfig(7, 4, d_w=2, d_h=3, d_a=3, attention_mode=mode, decoder_mode=decoder, init_std=0.5)
    model = Seq2Seq.create(cfg, seed=3)
    model.params.values["att.b_a"][...] = [0.1, -0.2, 0.3]
    for src, tgt in (([4, 5], []), ([4, 5], [1]), ([6, 5, 4], [1, 0, 3])):
        expect, w = reference_loss(model, src, tgt)
        got = forward_loss(pad_batch([src], [tgt]), model, trace=True)
        assert float(got.total.data) == pytest.approx(expect, rel=1e-12, abs=1e-13)
        np.testing.assert_allclose(got.traces[0].weights, w, atol=1e-13)


# -- init state ----------------------------------------------------------------


def test_init_state_zero_annotations():
    b = np.array([0.3, -2.0, 0.0])
    ann = EncoderAnnotations(Tensor(np.zeros((4, 6))), np.array([[1.0, 1.0, 1.0, 0.0]]), 4)
    s0 = init_decoder_state(ann, Tensor(np.ones((3, 6))), Tensor(b))
    np.testing.assert_array_equal(s0.data[0], np.tanh(b))


def test_init_state_scalar_oracle():
    H = np.array([[0.5, 0.4], [0.1, -0.2], [9.0, 9.0]])
    ann = EncoderAnnotations(Tensor(H), np.array([[1.0, 1.0, 0.0]]), 3)
    s0 = init_decoder_state(ann, Tensor([[0.3, -0.2]]), Tensor([0.1]))
    assert s0.data[0, 0] == pytest.approx(0.1683810458708147, abs=1e-15)


def test_init_state_bounded():
    rng = np.random.default_rng(0)
    ann = EncoderAnnotations(Tensor(rng.uniform(-1, 1, size=(6, 4))), np.ones((2, 3)), 3)
    s0 = init_decoder_state(ann, Tensor(rng.normal(size=(5, 4)) * 10), Tensor(rng.normal(size=5)))
    assert np.all(np.abs(s0.data) < 1)


# -- loss ----------------------------------------------------------------------


@pytest.mark.parametrize("decoder", ["conditional", "simple"])
def test_uniform_model_loss_is_log_vocab(decoder):
    model = random_model(0, "gatt", decoder, tgt_vocab=11)
    model.params.values["out.W_o"][...] = 0.0
    model.params.values["out.b_o"][...] = 0.0
    res = forward_loss(pad_batch([[4, 5, 6], [7]], [[4, 5], [6, 7, 8, 9]]), model)
    assert res.n_tokens == 3 + 5
    assert res.mean == pytest.approx(math.log(11), abs=1e-12)


def test_forced_target_loss_vanishes():
    model = random_model(1, "vanilla", "conditional")
    model.params.values["out.W_o"][...] = 0.0
    model.params.values["out.b_o"][EOS] = 60.0
    assert forward_loss(pad_batch([[4, 5]], [[]]), model).mean < 1e-20


@pytest.mark.parametrize("mode,decoder", COMBOS)
def test_padding_invariance(mode, decoder):
    model = random_model(2, mode, decoder)
    a, b = ([4, 5, 6], [4, 5]), ([7, 8, 4, 6, 5], [6, 7, 4, 5])
    alone = forward_loss(pad_batch([a[0]], [a[1]]), model, trace=True)
    batch = pad_batch([a[0], b[0]], [a[1], b[1]])
    together = forward_loss(batch, model, trace=True)
    other = forward_loss(pad_batch([b[0]], [b[1]]), model)
    assert float(together.total.data) == pytest.approx(float(alone.total.data) + float(other.total.data), rel=1e-12)
    np.testing.assert_allclose(together.traces[0].weights, alone.traces[0].weights, atol=1e-13)
    np.testing.assert_allclose(together.traces[0].contexts, alone.traces[0].contexts, atol=1e-13)
    # extra all-pad columns on both sides change nothing
    wide = pad_batch([a[0], b[0]], [a[1], b[1]])
    for name in ("src", "src_mask", "tgt", "tgt_mask"):
        arr = getattr(wide, name)
        setattr(wide, name, np.concatenate([arr, np.zeros((arr.shape[0], 2), dtype=arr.dtype)], axis=1))
    padded = forward_loss(wide, model, trace=True)
    assert float(padded.total.data) == pytest.approx(float(together.total.data), rel=1e-12)
    assert [t.tokens for t in padded.traces] == [t.tokens for t in together.traces]


def test_loss_deterministic():
    batch = pad_batch([[4, 5, 6]], [[4, 5]])
    a = forward_loss(batch, random_model(5, "gatt", "conditional"))
    b = forward_loss(batch, random_model(5, "gatt", "conditional"))
    assert float(a.total.data) == float(b.total.data)


def test_empty_target_batch_rejected():
    batch = pad_batch([[4]], [[]])
    batch.tgt_mask[:] = 0
    with pytest.raises(ValueError):
        forward_loss(batch, random_model(0))


def test_trace_contents():
    model = random_model(6, "gatt", "conditional")
    res = forward_loss(pad_batch([[4, 5, 6], [7, 8]], [[4, 5], [6]]), model, trace=True)
    t0, t1 = res.traces
    assert t0.tokens == [4, 5, EOS] and t1.tokens == [6, EOS]
    assert t0.weights.shape == (3, 3) and t1.weights.shape == (2, 2)
    assert t0.contexts.shape == (3, model.cfg.d_ctx)
    np.testing.assert_allclose(t1.weights.sum(axis=1), 1.0, atol=1e-14)
    g = t1.gates[0]
    assert g["z"].shape == (2, 2 * model.cfg.d_h)
    assert np.all((g["z"] > 0) & (g["z"] < 1)) and np.all(np.abs(g["h_bar"]) < 1)


# -- decoder step --------------------------------------------------------------


@pytest.mark.parametrize("decoder", ["conditional", "simple"])
def test_closed_gate_gatt_step_equals_vanilla(decoder):
    g = random_model(7, "gatt", decoder)
    v = Seq2Seq(ModelConfig(**{**g.cfg.to_dict(), "attention_mode": "vanilla"}), g.params.copy())
    g.params.values["gate.W_z"][...] = 0.0
    g.params.values["gate.U_z"][...] = 0.0
    g.params.values["gate.b_z"][...] = -40.0
    batch = pad_batch([[4, 5, 6, 7], [8, 4]], [[3, 4, 5], [6]])
    a = forward_loss(batch, g, trace=True)
    b = forward_loss(batch, v, trace=True)
    assert float(a.total.data) == pytest.approx(float(b.total.data), abs=1e-8)
    for ta, tb in zip(a.traces, b.traces):
        assert np.max(np.abs(ta.contexts - tb.contexts)) < 1e-8
        assert np.max(np.abs(ta.states - tb.states)) < 1e-8


@pytest.mark.parametrize("mode,decoder", COMBOS)
def test_step_distribution(mode, decoder):
    model = random_model(8, mode, decoder, std=1.0)
    P = model.bind()
    _, state = model.start(P, np.array([[4, 5, 6]]))
    _, logits, out = model.step(P, state, np.array([2]))
    p = softmax_rows(logits.data)
    assert np.all(p >= 0) and p.sum() == pytest.approx(1.0, abs=1e-12)
    assert out.context.shape == (1, model.cfg.d_ctx)


def test_unknown_modes_rejected():
    with pytest.raises(ValueError):
        ModelConfig(5, 5, attention_mode="local")
    with pytest.raises(ValueError):
        ModelConfig(5, 5, decoder_mode="deep")
    with pytest.raises(ValueError):
        ModelConfig(5, 5, d_h=0)


# -- ensemble ------------------------------------------------------------------


def _next(models, src, y_prev=(2,)):
    bounds = [m.bind() for m in models]
    states = [m.start(P, np.array([src]))[1] for m, P in zip(models, bounds)]
    probs, _, _ = ensemble_next_distribution(models, bounds, states, np.array(y_prev))
    return probs[0]


def test_ensemble_of_copies():
    m = random_model(9, "gatt", "conditional", std=1.0)
    np.testing.assert_array_equal(_next([m, m, m], [4, 5]), _next([m], [4, 5]))


def test_ensemble_split_decision():
    V = 6
    L1, L2 = np.full((V, V), -60.0), np.full((V, V), -60.0)
    L1[:, 4] = 0.0
    L2[:, 5] = 0.0
    p = _next([bigram_model(L1), bigram_model(L2)], [4])
    np.testing.assert_allclose(p[[4, 5]], [0.5, 0.5], atol=1e-15)


def test_ensemble_average_of_random_models():
    models = [random_model(s, mode, "conditional", std=1.0) for s, mode in ((10, "vanilla"), (11, "gatt"), (12, "gatt_inv"))]
    rng = np.random.default_rng(0)
    for _ in range(5):
        src = rng.integers(4, 9, size=4).tolist()
        singles = [_next([m], src) for m in models]
        expected = (singles[0] + singles[1] + singles[2]) / 3
        got = _next(models, src)
        assert np.max(np.abs(got - expected)) < 1e-12
        assert got.sum() == pytest.approx(1.0, abs=1e-12)


def test_ensemble_vocab_mismatch():
    with pytest.raises(ValueError):
        _next([random_model(0, tgt_vocab=8), random_model(1, tgt_vocab=9)], [4])


# -- gradients -----------------------------------------------------------------


@pytest.mark.parametrize("mode,decoder", COMBOS)
def test_model_gradients(mode, decoder):
    err = directional_fd_check(tiny_model(mode, decoder), pad_batch(*TINY_BATCH), np.random.default_rng(0))
    assert err < 1e-4
