"""GRU cell, bidirectional encoder and the output readout.

The same :func:`gru_cell` serves the encoder directions, the decoder cells and
the attention gating layer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from gatt.numcore import (
    DimensionError,
    ParamStore,
    Tensor,
    concat,
    interleave,
    linear,
    sigmoid,
    tanh,
    take_rows,
)

GRU_FIELDS = ("W_z", "U_z", "b_z", "W_r", "U_r", "b_r", "W", "U", "b")
READOUT_FIELDS = ("W_e", "W_s", "W_c", "b_t", "W_o", "b_o")


def add_gru_params(store: ParamStore, prefix: str, d_in: int, d_state: int, rng) -> None:
    for gate in ("z", "r", ""):
        suffix = f"_{gate}" if gate else ""
        store.create(f"{prefix}.W{suffix}", (d_state, d_in), rng)
        store.create(f"{prefix}.U{suffix}", (d_state, d_state), rng)
        store.create(f"{prefix}.b{suffix}", (d_state,), rng)


def add_readout_params(store: ParamStore, prefix: str, d_w: int, d_h: int, d_ctx: int, v_tgt: int, rng) -> None:
    store.create(f"{prefix}.W_e", (d_h, d_w), rng)
    store.create(f"{prefix}.W_s", (d_h, d_h), rng)
    store.create(f"{prefix}.W_c", (d_h, d_ctx), rng)
    store.create(f"{prefix}.b_t", (d_h,), rng)
    store.create(f"{prefix}.W_o", (v_tgt, d_h), rng)
    store.create(f"{prefix}.b_o", (v_tgt,), rng)


@dataclass
class GruParams:
    W_z: Tensor
    U_z: Tensor
    b_z: Tensor
    W_r: Tensor
    U_r: Tensor
    b_r: Tensor
    W: Tensor
    U: Tensor
    b: Tensor

    @classmethod
    def bind(cls, bound: dict[str, Tensor], prefix: str) -> "GruParams":
        return cls(**{f: bound[f"{prefix}.{f}"] for f in GRU_FIELDS})

    @property
    def d_in(self) -> int:
        return self.W.shape[1]

    @property
    def d_state(self) -> int:
        return self.U.shape[0]

    def project_input(self, x: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        """Input-side pre-activations (W_z x + b_z, W_r x + b_r, W x + b)."""
        return (
            linear(x, self.W_z, self.b_z),
            linear(x, self.W_r, self.b_r),
            linear(x, self.W, self.b),
        )

    def project_state(self, h: Tensor) -> tuple[Tensor, Tensor]:
        """History-side gate pre-activations (U_z h, U_r h)."""
        return linear(h, self.U_z), linear(h, self.U_r)


@dataclass
class ReadoutParams:
    W_e: Tensor
    W_s: Tensor
    W_c: Tensor
    b_t: Tensor
    W_o: Tensor
    b_o: Tensor

    @classmethod
    def bind(cls, bound: dict[str, Tensor], prefix: str) -> "ReadoutParams":
        return cls(**{f: bound[f"{prefix}.{f}"] for f in READOUT_FIELDS})


@dataclass
class GateActivations:
    """Update gate, reset gate, candidate and new state of one GRU application."""

    z: Tensor
    r: Tensor
    h_bar: Tensor
    h_new: Tensor


def gru_cell(h_prev: Tensor, x: Tensor | None, p: GruParams, x_proj=None, h_proj=None):
    """One GRU step.

    z = sigmoid(W_z x + U_z h + b_z), r = sigmoid(W_r x + U_r h + b_r),
    h_bar = tanh(W x + U (r * h) + b), h_new = (1 - z) * h + z * h_bar.

    ``x_proj`` / ``h_proj`` accept pre-computed outputs of
    :meth:`GruParams.project_input` / :meth:`GruParams.project_state` so that
    callers can hoist projections of operands that stay fixed across steps.
    """
    if h_prev.shape[-1] != p.d_state:
        raise DimensionError(f"state width {h_prev.shape[-1]} != {p.d_state}")
    if x_proj is None:
        if x is None or x.shape[-1] != p.d_in:
            raise DimensionError(f"input width {None if x is None else x.shape[-1]} != {p.d_in}")
        x_proj = p.project_input(x)
    if h_proj is None:
        h_proj = p.project_state(h_prev)
    xz, xr, xh = x_proj
    hz, hr = h_proj
    z = sigmoid(xz + hz)
    r = sigmoid(xr + hr)
    h_bar = tanh(xh + linear(r * h_prev, p.U))
    h_new = h_prev + z * (h_bar - h_prev)
    return h_new, GateActivations(z, r, h_bar, h_new)


@dataclass
class EncoderAnnotations:
    """Source annotations for a batch: ``H`` holds row ``b*n + i``."""

    H: Tensor
    mask: np.ndarray
    n: int

    @property
    def batch_size(self) -> int:
        return self.mask.shape[0]

    def rows(self, b: int) -> np.ndarray:
        """Active annotation rows of sentence ``b`` as an array."""
        length = int(self.mask[b].sum())
        return self.H.data[b * self.n : b * self.n + length]


def _as_batch(ids, mask):
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim == 1:
        ids = ids[None, :]
    if mask is None:
        mask = np.ones(ids.shape)
    mask = np.asarray(mask, dtype=np.float64)
    if mask.ndim == 1:
        mask = mask[None, :]
    if mask.shape != ids.shape:
        raise DimensionError(f"mask {mask.shape} vs ids {ids.shape}")
    return ids, mask


def embed(table: Tensor, ids) -> Tensor:
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(f"token id out of vocabulary range [0, {table.shape[0]})")
    return take_rows(table, ids)


def encode(src_ids, mask, emb: Tensor, fwd: GruParams, bwd: GruParams) -> EncoderAnnotations:
    """Bidirectional GRU over a batch of (padded) source sentences.

    Both directions start from a zero state.  A padded position leaves the
    running state untouched and its annotation row is zero, so padding never
    reaches the active rows.
    """
    ids, mask = _as_batch(src_ids, mask)
    batch, n = ids.shape
    if n < 1:
        raise ValueError("empty source")
    d_h = fwd.d_state
    xs = [embed(emb, ids[:, t]) for t in range(n)]
    cols = [mask[:, t : t + 1] for t in range(n)]

    def run(p: GruParams, order):
        h = Tensor(np.zeros((batch, d_h)))
        states = [None] * n
        for t in order:
            h_new, _ = gru_cell(h, xs[t], p)
            h = h + cols[t] * (h_new - h)
            states[t] = h
        return states

    fwd_states = run(fwd, range(n))
    bwd_states = run(bwd, range(n - 1, -1, -1))
    H = concat([interleave(fwd_states), interleave(bwd_states)], axis=1)
    H = H * mask.reshape(batch * n, 1)
    return EncoderAnnotations(H, mask, n)


def readout(e_prev: Tensor, s: Tensor, c: Tensor, p: ReadoutParams) -> Tensor:
    """Output logits W_o tanh(W_e e + W_s s + W_c c + b_t) + b_o."""
    hidden = tanh(linear(e_prev, p.W_e) + linear(s, p.W_s) + linear(c, p.W_c, p.b_t))
    return linear(hidden, p.W_o, p.b_o)
