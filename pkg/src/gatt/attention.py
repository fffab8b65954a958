"""Vanilla additive attention, the GRU gating layer, GAtt and GAtt-Inv.

All functions work on batches: annotation matrices hold ``B*n`` rows (row
``b*n + i`` is position ``i`` of sentence ``b``), queries hold ``B`` rows and
the mask is ``B x n``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from gatt.layers import GateActivations, GruParams, gru_cell
from gatt.numcore import (
    DimensionError,
    ParamStore,
    Tensor,
    group_sum,
    linear,
    masked_softmax,
    matmul,
    repeat_rows,
    reshape,
    tanh,
)

MODES = ("vanilla", "gatt", "gatt_inv")


def add_attention_params(store: ParamStore, prefix: str, d_a: int, d_h: int, d_ann: int, rng, bias: bool = True) -> None:
    store.create(f"{prefix}.v_a", (d_a,), rng)
    store.create(f"{prefix}.W_a", (d_a, d_h), rng)
    store.create(f"{prefix}.U_a", (d_a, d_ann), rng)
    if bias:
        store.create(f"{prefix}.b_a", (d_a,), rng, kind="zeros")


def gate_dims(mode: str, d_h: int) -> tuple[int, int]:
    """(d_in, d_state) of the gating GRU for an attention mode."""
    if mode == "gatt":
        return d_h, 2 * d_h
    if mode == "gatt_inv":
        return 2 * d_h, d_h
    raise ValueError(f"mode {mode!r} has no gating layer")


def context_width(mode: str, d_h: int) -> int:
    if mode not in MODES:
        raise ValueError(f"unknown attention mode {mode!r}")
    return d_h if mode == "gatt_inv" else 2 * d_h


@dataclass
class AttentionParams:
    v_a: Tensor
    W_a: Tensor
    U_a: Tensor
    b_a: Tensor | None = None

    @classmethod
    def bind(cls, bound: dict[str, Tensor], prefix: str) -> "AttentionParams":
        return cls(bound[f"{prefix}.v_a"], bound[f"{prefix}.W_a"], bound[f"{prefix}.U_a"], bound.get(f"{prefix}.b_a"))


@dataclass
class AttentionOutput:
    context: Tensor  # B x d_ctx
    weights: Tensor  # B x n
    scores: Tensor  # B x n
    gate: GateActivations | None = None
    attended: Tensor | None = None  # the (possibly refined) annotation rows


def _check_rows(H: Tensor, mask: np.ndarray) -> tuple[int, int]:
    batch, n = mask.shape
    if H.shape[0] != batch * n:
        raise DimensionError(f"{H.shape[0]} annotation rows for a {batch}x{n} mask")
    return batch, n


def att(H_eff: Tensor, query: Tensor, mask, p: AttentionParams, keys: Tensor | None = None) -> AttentionOutput:
    """Score e_i = v_a . tanh(W_a q + U_a h_i [+ b_a]), weights by masked
    softmax, context as the weighted sum of the attended rows.

    ``keys`` may carry a pre-computed ``U_a H_eff``.
    """
    mask = np.atleast_2d(np.asarray(mask, dtype=np.float64))
    batch, n = _check_rows(H_eff, mask)
    if H_eff.shape[1] != p.U_a.shape[1]:
        raise DimensionError(f"annotation width {H_eff.shape[1]} vs U_a {p.U_a.shape}")
    if keys is None:
        keys = linear(H_eff, p.U_a)
    pre = keys + repeat_rows(linear(query, p.W_a, p.b_a), n)
    scores = reshape(matmul(tanh(pre), p.v_a), (batch, n))
    weights = masked_softmax(scores, mask)
    context = group_sum(H_eff * reshape(weights, (batch * n, 1)), n)
    return AttentionOutput(context, weights, scores, attended=H_eff)


def gate(H: Tensor, s_prev: Tensor, mask, p: GruParams, h_proj=None):
    """Refine every annotation with one GRU step: history h_i, input s_prev.

    Returns the refined rows (padding rows zeroed) and the gate activations.
    ``h_proj`` may carry the pre-computed ``(U_z H, U_r H)``.
    """
    mask = np.atleast_2d(np.asarray(mask, dtype=np.float64))
    batch, n = _check_rows(H, mask)
    if p.d_state != H.shape[1] or p.d_in != s_prev.shape[-1]:
        raise DimensionError(f"gate params ({p.d_in}->{p.d_state}) vs H {H.shape}, s {s_prev.shape}")
    x_proj = tuple(repeat_rows(t, n) for t in p.project_input(s_prev))
    h_new, acts = gru_cell(H, None, p, x_proj=x_proj, h_proj=h_proj)
    refined = h_new * mask.reshape(batch * n, 1)
    return refined, acts


def gate_inv(H: Tensor, s_prev: Tensor, mask, p: GruParams, x_proj=None):
    """The swapped gating: history s_prev, input h_i, one row per position.

    ``x_proj`` may carry the pre-computed input projections of ``H``.
    """
    mask = np.atleast_2d(np.asarray(mask, dtype=np.float64))
    batch, n = _check_rows(H, mask)
    if p.d_state != s_prev.shape[-1] or p.d_in != H.shape[1]:
        raise DimensionError(f"gate params ({p.d_in}->{p.d_state}) vs H {H.shape}, s {s_prev.shape}")
    if x_proj is None:
        x_proj = p.project_input(H)
    history = repeat_rows(s_prev, n)
    h_proj = tuple(repeat_rows(t, n) for t in p.project_state(s_prev))
    h_new, acts = gru_cell(history, None, p, x_proj=x_proj, h_proj=h_proj)
    refined = h_new * mask.reshape(batch * n, 1)
    return refined, acts


def gatt(H: Tensor, s_prev: Tensor, mask, gate_p: GruParams, att_p: AttentionParams, h_proj=None) -> AttentionOutput:
    refined, acts = gate(H, s_prev, mask, gate_p, h_proj=h_proj)
    out = att(refined, s_prev, mask, att_p)
    out.gate = acts
    return out


def gatt_inv(H: Tensor, s_prev: Tensor, mask, gate_p: GruParams, att_p: AttentionParams, x_proj=None) -> AttentionOutput:
    refined, acts = gate_inv(H, s_prev, mask, gate_p, x_proj=x_proj)
    out = att(refined, s_prev, mask, att_p)
    out.gate = acts
    return out


class AttentionCache:
    """Per-sentence work that does not depend on the decoder state.

    vanilla keeps ``U_a H``; gatt keeps ``(U_z H, U_r H)``; gatt_inv keeps the
    three input projections of ``H``.
    """

    def __init__(self, mode: str, H: Tensor, mask, att_p: AttentionParams, gate_p: GruParams | None = None):
        if mode not in MODES:
            raise ValueError(f"unknown attention mode {mode!r}")
        self.mode = mode
        self.H = H
        self.mask = np.atleast_2d(np.asarray(mask, dtype=np.float64))
        self.att_p = att_p
        self.gate_p = gate_p
        self.batch, self.n = _check_rows(H, self.mask)
        if mode == "vanilla":
            self.pre = (linear(H, att_p.U_a),)
        elif mode == "gatt":
            self.pre = gate_p.project_state(H)
        else:
            self.pre = gate_p.project_input(H)

    def __call__(self, query: Tensor) -> AttentionOutput:
        if self.mode == "vanilla":
            return att(self.H, query, self.mask, self.att_p, keys=self.pre[0])
        if self.mode == "gatt":
            return gatt(self.H, query, self.mask, self.gate_p, self.att_p, h_proj=self.pre)
        return gatt_inv(self.H, query, self.mask, self.gate_p, self.att_p, x_proj=self.pre)

    def select(self, sentences) -> "AttentionCache":
        """A constant (non-differentiable) cache whose batch row ``k`` is
        sentence ``sentences[k]`` of this one; used to follow beam hypotheses."""
        idx = np.asarray(sentences, dtype=np.int64)
        rows = (idx[:, None] * self.n + np.arange(self.n)[None, :]).reshape(-1)
        out = object.__new__(AttentionCache)
        out.mode = self.mode
        out.H = Tensor(self.H.data[rows])
        out.mask = self.mask[idx]
        out.att_p = self.att_p
        out.gate_p = self.gate_p
        out.batch, out.n = len(idx), self.n
        out.pre = tuple(Tensor(t.data[rows]) for t in self.pre)
        return out
