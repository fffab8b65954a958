"""Encoder-decoder assembly, teacher-forced loss and ensemble prediction."""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from gatt.attention import (
    MODES,
    AttentionCache,
    AttentionOutput,
    AttentionParams,
    add_attention_params,
    context_width,
    gate_dims,
)
from gatt.data import BOS, Batch
from gatt.layers import (
    EncoderAnnotations,
    GruParams,
    ReadoutParams,
    add_gru_params,
    add_readout_params,
    embed,
    encode,
    gru_cell,
    readout,
)
from gatt.numcore import (
    ParamStore,
    Tape,
    Tensor,
    add,
    concat,
    group_sum,
    linear,
    log_softmax,
    make_rng,
    nll,
    tanh,
)

DECODER_MODES = ("simple", "conditional")


@dataclass
class ModelConfig:
    src_vocab: int
    tgt_vocab: int
    d_w: int = 32
    d_h: int = 64
    d_a: int = 64
    attention_mode: str = "gatt"
    decoder_mode: str = "conditional"
    att_bias: bool = True
    max_src_len: int = 50
    init_std: float = 0.01

    def __post_init__(self):
        for name in ("src_vocab", "tgt_vocab", "d_w", "d_h", "d_a", "max_src_len"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not self.init_std > 0:
            raise ValueError("init_std must be positive")
        if self.attention_mode not in MODES:
            raise ValueError(f"unknown attention mode {self.attention_mode!r}")
        if self.decoder_mode not in DECODER_MODES:
            raise ValueError(f"unknown decoder mode {self.decoder_mode!r}")

    @property
    def d_ctx(self) -> int:
        return context_width(self.attention_mode, self.d_h)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def init_params(cfg: ModelConfig, rng: np.random.Generator) -> ParamStore:
    """Fresh parameters: square matrices orthogonal, everything else N(0, init_std^2)."""
    p = ParamStore(cfg.init_std)
    d_w, d_h, d_a = cfg.d_w, cfg.d_h, cfg.d_a
    p.create("src_emb", (cfg.src_vocab, d_w), rng, kind="gaussian")
    p.create("tgt_emb", (cfg.tgt_vocab, d_w), rng, kind="gaussian")
    add_gru_params(p, "enc_fwd", d_w, d_h, rng)
    add_gru_params(p, "enc_bwd", d_w, d_h, rng)
    p.create("init.W", (d_h, 2 * d_h), rng)
    p.create("init.b", (d_h,), rng)
    d_ann = cfg.d_ctx
    add_attention_params(p, "att", d_a, d_h, d_ann, rng, bias=cfg.att_bias)
    if cfg.attention_mode != "vanilla":
        add_gru_params(p, "gate", *gate_dims(cfg.attention_mode, d_h), rng)
    if cfg.decoder_mode == "conditional":
        add_gru_params(p, "dec1", d_w, d_h, rng)
        add_gru_params(p, "dec2", cfg.d_ctx, d_h, rng)
    else:
        add_gru_params(p, "dec", d_w + cfg.d_ctx, d_h, rng)
    add_readout_params(p, "out", d_w, d_h, cfg.d_ctx, cfg.tgt_vocab, rng)
    return p


@dataclass
class Bound:
    """Parameter tensors of one forward pass, grouped by role."""

    src_emb: Tensor
    tgt_emb: Tensor
    enc_fwd: GruParams
    enc_bwd: GruParams
    init_W: Tensor
    init_b: Tensor
    att: AttentionParams
    gate: GruParams | None
    dec: tuple[GruParams, ...]
    out: ReadoutParams


@dataclass
class StepTrace:
    """Per-step diagnostics for a batch; arrays are indexed by batch row."""

    weights: np.ndarray
    context: np.ndarray
    state: np.ndarray
    gate: dict[str, np.ndarray] | None = None


@dataclass
class DecoderTrace:
    """Diagnostics of one sentence: row ``j`` belongs to target position ``j``."""

    tokens: list[int]
    weights: np.ndarray  # m x n
    contexts: np.ndarray  # m x d_ctx
    states: np.ndarray  # m x d_h
    gates: list[dict[str, np.ndarray]] | None = None

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass
class DecoderState:
    """What the decoder carries for the rows of one batch (or beam)."""

    s: Tensor
    cache: AttentionCache


@dataclass
class LossResult:
    total: Tensor  # summed NLL, the quantity that is differentiated
    n_tokens: int
    traces: list[DecoderTrace] = field(default_factory=list)

    @property
    def mean(self) -> float:
        return float(self.total.data) / self.n_tokens


class Seq2Seq:
    """A configured model: :class:`ModelConfig` plus its :class:`ParamStore`."""

    def __init__(self, cfg: ModelConfig, params: ParamStore):
        self.cfg = cfg
        self.params = params

    @classmethod
    def create(cls, cfg: ModelConfig, seed: int = 0) -> "Seq2Seq":
        return cls(cfg, init_params(cfg, make_rng(seed)))

    def bind(self, tape: Tape | None = None) -> Bound:
        t = self.params.bind(tape)
        gate = GruParams.bind(t, "gate") if self.cfg.attention_mode != "vanilla" else None
        if self.cfg.decoder_mode == "conditional":
            dec = (GruParams.bind(t, "dec1"), GruParams.bind(t, "dec2"))
        else:
            dec = (GruParams.bind(t, "dec"),)
        return Bound(
            src_emb=t["src_emb"],
            tgt_emb=t["tgt_emb"],
            enc_fwd=GruParams.bind(t, "enc_fwd"),
            enc_bwd=GruParams.bind(t, "enc_bwd"),
            init_W=t["init.W"],
            init_b=t["init.b"],
            att=AttentionParams.bind(t, "att"),
            gate=gate,
            dec=dec,
            out=ReadoutParams.bind(t, "out"),
        )

    def start(self, P: Bound, src, src_mask=None) -> tuple[EncoderAnnotations, DecoderState]:
        ann = encode(src, src_mask, P.src_emb, P.enc_fwd, P.enc_bwd)
        s0 = init_decoder_state(ann, P.init_W, P.init_b)
        cache = AttentionCache(self.cfg.attention_mode, ann.H, ann.mask, P.att, P.gate)
        return ann, DecoderState(s0, cache)

    def step(self, P: Bound, state: DecoderState, y_prev) -> tuple[DecoderState, Tensor, AttentionOutput]:
        return decoder_step(state, y_prev, self.cfg, P)

    def forward_loss(self, batch: Batch, tape: Tape | None = None, trace: bool = False) -> LossResult:
        return forward_loss(batch, self, tape=tape, trace=trace)


def init_decoder_state(ann: EncoderAnnotations, W: Tensor, b: Tensor) -> Tensor:
    """s_0 = tanh(W mean(active rows of H) + b)."""
    lengths = ann.mask.sum(axis=1, keepdims=True)
    if np.any(lengths < 1):
        raise ValueError("sentence without active source positions")
    active = ann.H * ann.mask.reshape(-1, 1)
    mean = group_sum(active, ann.n) * (1.0 / lengths)
    return tanh(linear(mean, W, b))


def decoder_step(state: DecoderState, y_prev, cfg: ModelConfig, P: Bound):
    """Advance the decoder one target position for every batch row.

    conditional: s~ = GRU1(s_prev, E[y_prev]); attend with s~;
                 s = GRU2(s~, c).
    simple:      attend with s_prev; s = GRU(s_prev, [E[y_prev]; c]).
    Both emit logits = readout(E[y_prev], s, c).
    """
    e = embed(P.tgt_emb, np.asarray(y_prev, dtype=np.int64))
    if cfg.decoder_mode == "conditional":
        gru1, gru2 = P.dec
        s_tilde, _ = gru_cell(state.s, e, gru1)
        out = state.cache(s_tilde)
        s_new, _ = gru_cell(s_tilde, out.context, gru2)
    elif cfg.decoder_mode == "simple":
        out = state.cache(state.s)
        s_new, _ = gru_cell(state.s, concat([e, out.context], axis=1), P.dec[0])
    else:
        raise ValueError(f"unknown decoder mode {cfg.decoder_mode!r}")
    logits = readout(e, s_new, out.context, P.out)
    return DecoderState(s_new, state.cache), logits, out


def _step_trace(out: AttentionOutput, s: Tensor, n: int) -> StepTrace:
    gate = None
    if out.gate is not None:
        gate = {
            "z": out.gate.z.data,
            "r": out.gate.r.data,
            "h_bar": out.gate.h_bar.data,
            "h_g": out.attended.data,
        }
    return StepTrace(out.weights.data, out.context.data, s.data, gate)


def collect_traces(steps: list[StepTrace], tokens: np.ndarray, tgt_mask: np.ndarray, src_mask: np.ndarray) -> list[DecoderTrace]:
    """Split batch step traces into per-sentence traces, dropping padding."""
    traces = []
    n = src_mask.shape[1]
    for b in range(tokens.shape[0]):
        m = int(tgt_mask[b].sum())
        length = int(src_mask[b].sum())
        gates = None
        if steps and steps[0].gate is not None:
            rows = slice(b * n, b * n + length)
            gates = [{k: v[rows] for k, v in st.gate.items()} for st in steps[:m]]
        traces.append(
            DecoderTrace(
                tokens=[int(t) for t in tokens[b, :m]],
                weights=np.stack([st.weights[b, :length] for st in steps[:m]]),
                contexts=np.stack([st.context[b] for st in steps[:m]]),
                states=np.stack([st.state[b] for st in steps[:m]]),
                gates=gates,
            )
        )
    return traces


def forward_loss(batch: Batch, model: Seq2Seq, tape: Tape | None = None, trace: bool = False) -> LossResult:
    """Teacher-forced negative log-likelihood summed over unmasked targets."""
    if batch.n_tokens == 0:
        raise ValueError("batch has no target tokens")
    P = model.bind(tape)
    ann, state = model.start(P, batch.src, batch.src_mask)
    m = batch.tgt.shape[1]
    y_prev = np.full(batch.size, BOS, dtype=np.int64)
    total = None
    steps: list[StepTrace] = []
    for j in range(m):
        state, logits, out = decoder_step(state, y_prev, model.cfg, P)
        step_loss = nll(logits, batch.tgt[:, j], batch.tgt_mask[:, j])
        total = step_loss if total is None else add(total, step_loss)
        if trace:
            steps.append(_step_trace(out, state.s, ann.n))
        y_prev = batch.tgt[:, j]
    traces = collect_traces(steps, batch.tgt, batch.tgt_mask, batch.src_mask) if trace else []
    return LossResult(total, batch.n_tokens, traces)


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def ensemble_next_distribution(models: list[Seq2Seq], bounds: list[Bound], states: list[DecoderState], y_prev):
    """Average of the per-model next-word distributions.

    Returns (probs, new_states, attention outputs).
    """
    vocab = {m.cfg.tgt_vocab for m in models}
    if len(vocab) != 1:
        raise ValueError(f"ensemble members disagree on target vocabulary size: {sorted(vocab)}")
    probs = None
    new_states, outs = [], []
    for model, P, st in zip(models, bounds, states):
        st2, logits, out = decoder_step(st, y_prev, model.cfg, P)
        p = softmax_rows(logits.data)
        probs = p if probs is None else probs + p
        new_states.append(st2)
        outs.append(out)
    return probs / len(models), new_states, outs
