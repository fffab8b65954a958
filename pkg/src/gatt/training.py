"""Training loop: Adadelta on clipped gradients, best-dev-BLEU model selection."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from gatt.data import SentencePair, Vocabulary, make_batches
from gatt.decode import translate
from gatt.metrics import bleu4
from gatt.numcore import ADADELTA_EPS, ADADELTA_RHO, NumericError, ParamStore, Tape, adadelta_step, clip_global_norm
from gatt.seq2seq import Seq2Seq, forward_loss

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    clip_norm: float = 5.0
    rho: float = ADADELTA_RHO
    eps: float = ADADELTA_EPS
    seed: int = 1
    dev_beam: int = 10
    max_src_len: int = 50
    dev_limit: int | None = None  # decode only the first N dev pairs per epoch
    stop_bleu: float | None = None  # stop once dev BLEU reaches this


@dataclass
class EpochLog:
    epoch: int
    nll: float
    dev_bleu: float | None
    seconds: float

    def line(self) -> str:
        bleu = "nan" if self.dev_bleu is None else f"{self.dev_bleu:.2f}"
        return f"epoch={self.epoch} nll={self.nll:.6f} dev_bleu={bleu} seconds={self.seconds:.1f}"


@dataclass
class TrainResult:
    model: Seq2Seq  # holds the best-dev parameters
    history: list[EpochLog] = field(default_factory=list)
    best_epoch: int = 0
    best_bleu: float | None = None


def corpus_nll(model: Seq2Seq, pairs: Sequence[SentencePair], src_vocab, tgt_vocab, batch_size: int = 64) -> float:
    """Mean per-token NLL without gradient tracking."""
    total, count = 0.0, 0
    for batch in make_batches(pairs, src_vocab, tgt_vocab, batch_size):
        r = forward_loss(batch, model)
        total += float(r.total.data)
        count += r.n_tokens
    return total / count


def translate_corpus(models, pairs: Sequence[SentencePair], src_vocab, tgt_vocab, beam: int, max_len: int | None = None):
    out = []
    for p in pairs:
        hyp = translate(models, src_vocab.encode(p.src), beam=beam, max_len=max_len)
        out.append(tgt_vocab.decode(hyp.output()))
    return out


def dev_bleu(model, pairs, src_vocab, tgt_vocab, beam: int) -> float:
    hyps = translate_corpus(model, pairs, src_vocab, tgt_vocab, beam)
    return bleu4(hyps, [[p.tgt] for p in pairs])


def train_step(model: Seq2Seq, batch, cfg: TrainConfig) -> float:
    """One update; returns the batch's summed NLL."""
    tape = Tape()
    result = forward_loss(batch, model, tape)
    loss = float(result.total.data)
    if not np.isfinite(loss):
        raise NumericError(f"non-finite training loss {loss}")
    tape.backward(result.total)
    model.params.collect(tape)
    clip_global_norm(model.params.grads, cfg.clip_norm)
    adadelta_step(model.params, cfg.rho, cfg.eps)
    if not model.params.check_finite():
        raise NumericError("parameters became non-finite")
    return loss


def _snapshot(params: ParamStore) -> dict[str, np.ndarray]:
    return {k: v.copy() for k, v in params.values.items()}


def train(
    model: Seq2Seq,
    train_pairs: Sequence[SentencePair],
    dev_pairs: Sequence[SentencePair],
    src_vocab: Vocabulary,
    tgt_vocab: Vocabulary,
    cfg: TrainConfig,
    on_epoch=None,
) -> TrainResult:
    """Train in place and finish with the best-dev-BLEU parameters loaded.

    Epoch 0 reports the untrained model.  Without dev data the last epoch
    wins.
    """
    dev = list(dev_pairs)[: cfg.dev_limit] if cfg.dev_limit else list(dev_pairs)
    start = time.perf_counter()
    history = [EpochLog(0, corpus_nll(model, train_pairs, src_vocab, tgt_vocab), None, 0.0)]
    if on_epoch:
        on_epoch(history[0])
    best = _snapshot(model.params)
    best_bleu, best_epoch = None, 0
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        batches = make_batches(train_pairs, src_vocab, tgt_vocab, cfg.batch_size, cfg.max_src_len, seed=cfg.seed * 1000 + epoch)
        total, count = 0.0, 0
        for batch in batches:
            total += train_step(model, batch, cfg)
            count += batch.n_tokens
        bleu = dev_bleu(model, dev, src_vocab, tgt_vocab, cfg.dev_beam) if dev else None
        entry = EpochLog(epoch, total / max(count, 1), bleu, time.perf_counter() - t0)
        history.append(entry)
        log.info(entry.line())
        if on_epoch:
            on_epoch(entry)
        if bleu is None or best_bleu is None or bleu > best_bleu:
            best_bleu, best_epoch = bleu, epoch
            best = _snapshot(model.params)
        if cfg.stop_bleu is not None and bleu is not None and bleu >= cfg.stop_bleu:
            break
    for k, v in best.items():
        model.params.values[k][...] = v
    log.info("trained %d epochs in %.1fs; best epoch %d", history[-1].epoch, time.perf_counter() - start, best_epoch)
    return TrainResult(model, history, best_epoch, best_bleu)
