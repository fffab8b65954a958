"""Binary checkpoint format.

Layout (all integers little-endian uint32 unless noted)::

    b"GATTCKPT"  version:uint8 = 1
    config_len  config: UTF-8 key=value lines
    param_count
    per parameter: name_len name:UTF-8  rank  dims[rank]  float64 LE values (row-major)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from gatt.data import Vocabulary
from gatt.numcore import ParamStore, make_rng
from gatt.seq2seq import ModelConfig, Seq2Seq, init_params

MAGIC = b"GATTCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    model: Seq2Seq
    src_vocab: Vocabulary
    tgt_vocab: Vocabulary
    meta: dict[str, str]


def config_to_text(cfg: ModelConfig, src_vocab: Vocabulary, tgt_vocab: Vocabulary, meta: dict | None = None) -> str:
    lines = [f"model.{k}={v}" for k, v in cfg.to_dict().items()]
    lines += [f"vocab.src={src_vocab.to_text()}", f"vocab.tgt={tgt_vocab.to_text()}"]
    lines += [f"{k}={v}" for k, v in (meta or {}).items()]
    return "\n".join(lines) + "\n"


def _parse_config(text: str) -> tuple[ModelConfig, Vocabulary, Vocabulary, dict[str, str]]:
    kv = {}
    for line in text.splitlines():
        if line:
            k, v = line.split("=", 1)
            kv[k] = v
    model = {}
    for k in list(kv):
        if k.startswith("model."):
            model[k[6:]] = kv.pop(k)
    ints = {"src_vocab", "tgt_vocab", "d_w", "d_h", "d_a", "max_src_len"}
    args = {}
    for k, v in model.items():
        if k in ints:
            args[k] = int(v)
        elif k == "init_std":
            args[k] = float(v)
        elif k == "att_bias":
            args[k] = v == "True"
        else:
            args[k] = v
    src = Vocabulary.from_text(kv.pop("vocab.src", ""))
    tgt = Vocabulary.from_text(kv.pop("vocab.tgt", ""))
    return ModelConfig(**args), src, tgt, kv


def _u32(n: int) -> bytes:
    return struct.pack("<I", n)


def dumps(model: Seq2Seq, src_vocab: Vocabulary, tgt_vocab: Vocabulary, meta: dict | None = None) -> bytes:
    config = config_to_text(model.cfg, src_vocab, tgt_vocab, meta).encode("utf-8")
    out = [MAGIC, bytes([VERSION]), _u32(len(config)), config, _u32(len(model.params))]
    for name, value in model.params.values.items():
        raw = name.encode("utf-8")
        out += [_u32(len(raw)), raw, _u32(value.ndim)]
        out += [_u32(d) for d in value.shape]
        out.append(np.ascontiguousarray(value, dtype="<f8").tobytes())
    return b"".join(out)


def loads(blob: bytes) -> Checkpoint:
    if blob[:8] != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic)")
    if len(blob) < 9 or blob[8] != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {blob[8] if len(blob) > 8 else None}")
    pos = 9

    def u32() -> int:
        nonlocal pos
        (v,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        return v

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(blob):
            raise CheckpointError("truncated checkpoint")
        chunk = blob[pos : pos + n]
        pos += n
        return chunk

    try:
        cfg, src, tgt, meta = _parse_config(take(u32()).decode("utf-8"))
        params = ParamStore()
        for _ in range(u32()):
            name = take(u32()).decode("utf-8")
            shape = tuple(u32() for _ in range(u32()))
            count = int(np.prod(shape)) if shape else 1
            params.add(name, np.frombuffer(take(8 * count), dtype="<f8").reshape(shape))
    except struct.error as exc:
        raise CheckpointError(f"truncated checkpoint: {exc}") from None
    if pos != len(blob):
        raise CheckpointError(f"{len(blob) - pos} trailing bytes after the last parameter")
    expected = {k: v.shape for k, v in init_params(cfg, make_rng(0)).values.items()}
    found = {k: v.shape for k, v in params.values.items()}
    if expected != found:
        raise CheckpointError("parameter names or shapes do not match the stored model config")
    return Checkpoint(Seq2Seq(cfg, params), src, tgt, meta)


def save(path, model: Seq2Seq, src_vocab: Vocabulary, tgt_vocab: Vocabulary, meta: dict | None = None) -> None:
    with open(path, "wb") as f:
        f.write(dumps(model, src_vocab, tgt_vocab, meta))


def load(path) -> Checkpoint:
    with open(path, "rb") as f:
        return loads(f.read())
