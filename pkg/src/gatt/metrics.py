"""Translation and attention diagnostics: BLEU, N-GRR, AER, context variance,
and heatmap export."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

Links = set[tuple[int, int]]


def ngrams(tokens: Sequence[str], n: int) -> list[tuple[str, ...]]:
    return [tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)]


def bleu_stats(hyp: Sequence[str], refs: Sequence[Sequence[str]], max_n: int = 4) -> list[int]:
    """[hyp_len, closest_ref_len, match_1, total_1, ..., match_N, total_N]."""
    hyp = [t.lower() for t in hyp]
    refs = [[t.lower() for t in r] for r in refs]
    ref_len = min((abs(len(r) - len(hyp)), len(r)) for r in refs)[1]
    stats = [len(hyp), ref_len]
    for n in range(1, max_n + 1):
        counts = Counter(ngrams(hyp, n))
        max_ref: Counter = Counter()
        for r in refs:
            for g, c in Counter(ngrams(r, n)).items():
                max_ref[g] = max(max_ref[g], c)
        stats.append(sum(min(c, max_ref[g]) for g, c in counts.items()))
        stats.append(max(len(hyp) - n + 1, 0))
    return stats


def bleu_from_stats(stats: Sequence[int], max_n: int = 4) -> float:
    hyp_len, ref_len = stats[0], stats[1]
    log_p = 0.0
    for n in range(max_n):
        match, total = stats[2 + 2 * n], stats[3 + 2 * n]
        if match == 0 or total == 0:
            return 0.0
        log_p += math.log(match / total) / max_n
    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * bp * math.exp(log_p)


def bleu4(hyps: Sequence[Sequence[str]], refs: Sequence[Sequence[Sequence[str]]], max_n: int = 4) -> float:
    """Case-insensitive corpus BLEU in [0, 100].

    ``refs[k]`` is the list of references for ``hyps[k]``.  Clipped n-gram
    matches and lengths are summed over the corpus before the geometric mean;
    the brevity penalty uses the closest reference length per sentence.
    """
    if len(hyps) != len(refs):
        raise ValueError(f"{len(hyps)} hypotheses but {len(refs)} reference sets")
    total = [0] * (2 + 2 * max_n)
    for hyp, rs in zip(hyps, refs):
        if not rs:
            raise ValueError("empty reference set")
        for k, v in enumerate(bleu_stats(hyp, rs, max_n)):
            total[k] += v
    return bleu_from_stats(total, max_n)


def n_grr(translations: Sequence[Sequence[Sequence[str]]], n: int) -> float:
    """N-gram repetition rate.

    ``translations[c]`` holds the R translations of sentence c.  Each
    translation contributes (#n-grams - #distinct n-grams) / #n-grams and the
    contributions are averaged.  Translations shorter than ``n`` are skipped
    and left out of the average.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rates = []
    for group in translations:
        for sent in group:
            grams = ngrams(list(sent), n)
            if not grams:
                continue
            rates.append((len(grams) - len(set(grams))) / len(grams))
    if not rates:
        raise ValueError(f"no translation has a {n}-gram")
    return sum(rates) / len(rates)


def extract_alignments(weights: np.ndarray, tokens: Sequence[int] | None = None, eos: int | None = None) -> Links:
    """Link each target step j to its most attended source position.

    ``weights`` is the m x n attention matrix of one sentence.  np.argmax
    returns the first maximum, so ties go to the lowest source index.  When
    ``tokens`` ends with ``eos`` that last step is not linked.
    """
    weights = np.asarray(weights)
    m = weights.shape[0]
    if tokens is not None and eos is not None and len(tokens) and tokens[-1] == eos:
        m = len(tokens) - 1
    return {(int(np.argmax(weights[j])), j) for j in range(m)}


def aer(pred: Iterable[tuple[int, int]], sure: Iterable[tuple[int, int]]) -> float:
    """Alignment error rate with sure links only: 1 - 2|A&S| / (|A| + |S|)."""
    pred, sure = set(pred), set(sure)
    if not pred and not sure:
        return 0.0
    return 1.0 - 2.0 * len(pred & sure) / (len(pred) + len(sure))


def corpus_aer(preds: Sequence[Links], golds: Sequence[Links]) -> float:
    """AER with link counts pooled over the corpus."""
    if len(preds) != len(golds):
        raise ValueError("prediction and gold counts differ")
    hit = sum(len(set(p) & set(g)) for p, g in zip(preds, golds))
    size = sum(len(p) + len(g) for p, g in zip(preds, golds))
    return 0.0 if size == 0 else 1.0 - 2.0 * hit / size


def context_variance(C: np.ndarray) -> tuple[float, float]:
    """(variance across steps, variance across dimensions) of an m x d matrix.

    The first is the population variance of every column (one context
    dimension followed over the decoding steps) averaged over columns; the
    second is the population variance of every row averaged over rows.
    """
    C = np.asarray(C, dtype=np.float64)
    if C.ndim != 2 or C.shape[0] < 2 or C.shape[1] < 2:
        raise ValueError(f"need at least a 2x2 matrix, got shape {C.shape}")
    # shifting by a member of each group is exact for constant data
    over_steps = (C - C[:1]).var(axis=0).mean()
    over_dims = (C - C[:, :1]).var(axis=1).mean()
    return float(over_steps), float(over_dims)


@dataclass
class DiagnosticsReport:
    bleu: float
    ngrr_1: float
    ngrr_2: float
    ngrr_3: float
    ngrr_4: float
    aer: float
    ctx_var_steps: float
    ctx_var_dims: float
    n_sentences: int
    n_traces: int

    def to_text(self) -> str:
        return "".join(f"{k}={v!r}\n" for k, v in asdict(self).items())

    @classmethod
    def from_text(cls, text: str) -> "DiagnosticsReport":
        kv = dict(line.split("=", 1) for line in text.splitlines() if line.strip())
        ints = {"n_sentences", "n_traces"}
        return cls(**{k: int(v) if k in ints else float(v) for k, v in kv.items()})


# -- heatmaps ------------------------------------------------------------------


def write_tsv(M: np.ndarray, path, row_labels=None, col_labels=None) -> None:
    M = np.atleast_2d(np.asarray(M, dtype=np.float64))
    rows = row_labels or [str(i) for i in range(M.shape[0])]
    cols = col_labels or [str(j) for j in range(M.shape[1])]
    with open(path, "w", encoding="utf-8") as f:
        f.write("\t" + "\t".join(cols) + "\n")
        for label, row in zip(rows, M):
            f.write(label + "\t" + "\t".join(repr(float(x)) for x in row) + "\n")


def read_tsv(path) -> tuple[np.ndarray, list[str], list[str]]:
    with open(path, encoding="utf-8") as f:
        lines = f.read().splitlines()
    cols = lines[0].split("\t")[1:]
    rows, data = [], []
    for line in lines[1:]:
        parts = line.split("\t")
        rows.append(parts[0])
        data.append([float(x) for x in parts[1:]])
    return np.array(data, dtype=np.float64).reshape(len(rows), len(cols)), rows, cols


def pgm_pixels(M: np.ndarray) -> np.ndarray:
    """Min-max scale to 0..255, rounding halves up; constant input is all 0."""
    M = np.atleast_2d(np.asarray(M, dtype=np.float64))
    if not np.all(np.isfinite(M)):
        raise ValueError("heatmap entries must be finite")
    lo, hi = M.min(), M.max()
    if hi == lo:
        return np.zeros(M.shape, dtype=np.int64)
    return np.floor((M - lo) / (hi - lo) * 255.0 + 0.5).astype(np.int64)


def write_pgm(M: np.ndarray, path) -> None:
    px = pgm_pixels(M)
    with open(path, "w", encoding="ascii") as f:
        f.write(f"P2\n{px.shape[1]} {px.shape[0]}\n255\n")
        for row in px:
            f.write(" ".join(str(int(v)) for v in row) + "\n")


def read_pgm(path) -> np.ndarray:
    with open(path, encoding="ascii") as f:
        tokens = f.read().split()
    if tokens[0] != "P2":
        raise ValueError(f"{path} is not a plain PGM")
    w, h = int(tokens[1]), int(tokens[2])
    return np.array([int(t) for t in tokens[4 : 4 + w * h]], dtype=np.int64).reshape(h, w)


def export_heatmap(M: np.ndarray, path, row_labels=None, col_labels=None) -> tuple[Path, Path]:
    """Write ``path.tsv`` and ``path.pgm`` for matrix ``M``."""
    base = Path(path)
    tsv, pgm = base.with_name(base.name + ".tsv"), base.with_name(base.name + ".pgm")
    write_tsv(M, tsv, row_labels, col_labels)
    write_pgm(M, pgm)
    return tsv, pgm
