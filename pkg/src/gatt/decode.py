"""Greedy and beam-search decoding for one model or an ensemble."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from gatt.data import BOS, EOS, PAD
from gatt.numcore import NumericError, Tensor
from gatt.seq2seq import DecoderState, DecoderTrace, Seq2Seq, ensemble_next_distribution

_BANNED = (PAD, BOS)


@dataclass
class Hypothesis:
    tokens: list[int]
    log_prob: float
    step_log_probs: list[float] = field(default_factory=list)
    weights: list[np.ndarray] = field(default_factory=list)
    contexts: list[np.ndarray] = field(default_factory=list)
    states: list[np.ndarray] = field(default_factory=list)

    @property
    def finished(self) -> bool:
        return bool(self.tokens) and self.tokens[-1] == EOS

    def output(self) -> list[int]:
        """Tokens without the terminal EOS."""
        return self.tokens[:-1] if self.finished else list(self.tokens)

    def trace(self) -> DecoderTrace:
        return DecoderTrace(
            tokens=list(self.tokens),
            weights=np.stack(self.weights) if self.weights else np.zeros((0, 0)),
            contexts=np.stack(self.contexts) if self.contexts else np.zeros((0, 0)),
            states=np.stack(self.states) if self.states else np.zeros((0, 0)),
        )

    def extend(self, token: int, step_lp: float, total: float, weights, context, state) -> "Hypothesis":
        return Hypothesis(
            self.tokens + [token],
            total,
            self.step_log_probs + [step_lp],
            self.weights + [weights],
            self.contexts + [context],
            self.states + [state],
        )


def default_max_len(src_len: int) -> int:
    return 3 * src_len + 5


class _Session:
    """Encoded source and per-model decoder states for a set of rows."""

    def __init__(self, models: list[Seq2Seq], src_ids):
        if not models:
            raise ValueError("need at least one model")
        src = np.asarray(src_ids, dtype=np.int64).reshape(1, -1)
        if src.shape[1] == 0:
            raise ValueError("empty source sentence")
        self.models = models
        self.n = src.shape[1]
        self.bounds = [m.bind() for m in models]
        self.states = []
        for m, P in zip(models, self.bounds):
            _, st = m.start(P, src)
            self.states.append(st)

    def step(self, y_prev: np.ndarray):
        probs, self.states, outs = ensemble_next_distribution(self.models, self.bounds, self.states, y_prev)
        with np.errstate(divide="ignore"):
            logp = np.log(probs)
        if np.isnan(logp).any():
            raise NumericError("decoder produced NaN probabilities")
        logp[:, list(_BANNED)] = -np.inf
        return logp, outs[0], self.states[0].s.data

    def reorder(self, rows) -> None:
        rows = np.asarray(rows, dtype=np.int64)
        self.states = [
            DecoderState(Tensor(st.s.data[rows]), st.cache.select(np.zeros(len(rows), dtype=np.int64)))
            for st in self.states
        ]


def greedy_decode(models: Seq2Seq | list[Seq2Seq], src_ids, max_len: int | None = None) -> Hypothesis:
    """Pick the most probable next word until EOS or ``max_len`` words."""
    models = [models] if isinstance(models, Seq2Seq) else list(models)
    session = _Session(models, src_ids)
    max_len = default_max_len(session.n) if max_len is None else max_len
    hyp = Hypothesis([], 0.0)
    y_prev = np.array([BOS])
    for _ in range(max_len):
        logp, out, s = session.step(y_prev)
        tok = int(np.argmax(logp[0]))
        hyp = hyp.extend(tok, float(logp[0, tok]), float(hyp.log_prob + logp[0, tok]), out.weights.data[0], out.context.data[0], s[0])
        if tok == EOS:
            break
        y_prev = np.array([tok])
    return hyp


@dataclass
class BeamResult:
    hypotheses: list[Hypothesis]

    @property
    def best(self) -> Hypothesis:
        return self.hypotheses[0]

    @property
    def trace(self) -> DecoderTrace:
        return self.best.trace()


def beam_search(models: Seq2Seq | list[Seq2Seq], src_ids, beam: int = 10, max_len: int | None = None) -> BeamResult:
    """Beam search over the (ensemble-averaged) next-word distribution.

    A hypothesis that emits EOS leaves the beam for the finished pool and the
    beam shrinks by one.  Candidates are ranked by total log-probability
    without length normalisation; ties go to the lower token id, then the
    earlier beam row.  Hypotheses still live after ``max_len`` steps join the
    finished pool, and the pool is returned best first.
    """
    if beam < 1:
        raise ValueError("beam must be >= 1")
    models = [models] if isinstance(models, Seq2Seq) else list(models)
    session = _Session(models, src_ids)
    max_len = default_max_len(session.n) if max_len is None else max_len
    if max_len < 1:
        raise ValueError("max_len must be >= 1")

    live = [Hypothesis([], 0.0)]
    finished: list[Hypothesis] = []
    y_prev = np.array([BOS])
    for _ in range(max_len):
        logp, out, s = session.step(y_prev)
        scores = np.array([h.log_prob for h in live])[:, None] + logp
        vocab = scores.shape[1]
        flat = scores.reshape(-1)
        rows = np.repeat(np.arange(len(live)), vocab)
        toks = np.tile(np.arange(vocab), len(live))
        order = np.lexsort((rows, toks, -flat))
        slots = beam - len(finished)
        new_live, parents = [], []
        for k in order[:slots]:
            r, tok = int(rows[k]), int(toks[k])
            if not np.isfinite(flat[k]):
                break
            hyp = live[r].extend(tok, float(logp[r, tok]), float(flat[k]), out.weights.data[r], out.context.data[r], s[r])
            if tok == EOS:
                finished.append(hyp)
            else:
                new_live.append(hyp)
                parents.append(r)
        live = new_live
        if not live:
            break
        session.reorder(parents)
        y_prev = np.array([h.tokens[-1] for h in live])
    # stable sort keeps finishing order among equal scores
    ranked = sorted(finished + live, key=lambda h: -h.log_prob)
    return BeamResult(ranked)


def translate(models, src_ids, beam: int = 10, max_len: int | None = None) -> Hypothesis:
    if beam == 1:
        return greedy_decode(models, src_ids, max_len)
    return beam_search(models, src_ids, beam, max_len).best
