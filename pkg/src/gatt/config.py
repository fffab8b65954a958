"""Flat ``key=value`` run configuration."""

from __future__ import annotations

import os
from dataclasses import dataclass, fields

from gatt.data import SynthSpec
from gatt.seq2seq import ModelConfig
from gatt.training import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # model
    d_w: int = 32
    d_h: int = 64
    d_a: int = 64
    attention_mode: str = "gatt"
    decoder_mode: str = "conditional"
    att_bias: bool = True
    src_vocab_size: int = 30000
    tgt_vocab_size: int = 30000
    max_src_len: int = 50
    init_std: float = 0.01
    # synthetic data
    task: str = "perm-lex"
    synth_vocab: int = 40
    min_len: int = 3
    max_len: int = 12
    n_train: int = 2000
    n_dev: int = 200
    n_test: int = 200
    swap_block: int = 2
    occurrence_cap: int = 3
    # training
    epochs: int = 30
    batch_size: int = 32
    clip_norm: float = 5.0
    rho: float = 0.95
    eps: float = 1e-6
    seed: int = 1
    dev_beam: int = 10
    dev_limit: int = 0
    stop_bleu: float = 0.0  # 0 trains all epochs
    # decoding
    beam: int = 10
    decode_max_len: int = 0  # 0: 3 * source length + 5

    def to_text(self) -> str:
        return "".join(f"{f.name}={getattr(self, f.name)}\n" for f in fields(self))

    def model_config(self, src_vocab: int, tgt_vocab: int) -> ModelConfig:
        return ModelConfig(
            src_vocab=src_vocab,
            tgt_vocab=tgt_vocab,
            d_w=self.d_w,
            d_h=self.d_h,
            d_a=self.d_a,
            attention_mode=self.attention_mode,
            decoder_mode=self.decoder_mode,
            att_bias=self.att_bias,
            max_src_len=self.max_src_len,
            init_std=self.init_std,
        )

    def synth_spec(self, n_pairs: int) -> SynthSpec:
        return SynthSpec(
            task=self.task,
            vocab_size=self.synth_vocab,
            min_len=self.min_len,
            max_len=self.max_len,
            n_pairs=n_pairs,
            swap_block=self.swap_block,
            occurrence_cap=self.occurrence_cap,
            seed=self.seed,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            clip_norm=self.clip_norm,
            rho=self.rho,
            eps=self.eps,
            seed=self.seed,
            dev_beam=self.dev_beam,
            max_src_len=self.max_src_len,
            dev_limit=self.dev_limit or None,
            stop_bleu=self.stop_bleu or None,
        )


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _convert(key: str, raw: str):
    kind = _TYPES[key]
    try:
        if kind == "bool":
            low = raw.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw.strip()
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def parse_pairs(lines, base: RunConfig | None = None) -> RunConfig:
    cfg = base or RunConfig()
    for lineno, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        setattr(cfg, key, _convert(key, value))
    return cfg


def load_config(path=None, overrides=(), env=None) -> RunConfig:
    """File, then ``key=value`` overrides, then ``GATT_SEED`` from the environment."""
    cfg = RunConfig()
    if path:
        with open(path, encoding="utf-8") as f:
            cfg = parse_pairs(f.read().splitlines(), cfg)
    cfg = parse_pairs(overrides, cfg)
    env = os.environ if env is None else env
    if env.get("GATT_SEED"):
        cfg.seed = _convert("seed", env["GATT_SEED"])
    return cfg
