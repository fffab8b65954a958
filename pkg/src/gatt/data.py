"""Synthetic parallel corpora with gold alignments, vocabularies and batching.

Two generators are provided:

``perm-lex``
    every source token ``s<k>`` is translated to ``t<k>``; the translated
    sequence is then reversed inside consecutive blocks of ``swap_block``
    tokens, so ``a b c d`` becomes ``B A D C`` for blocks of 2.
``occurrence``
    the k-th occurrence of ``s<k>`` in a sentence becomes ``t<k>#min(k, cap)``;
    the output order is monotone.  Repeated source words need different
    translations depending on what has already been produced.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

PAD, UNK, BOS, EOS = 0, 1, 2, 3
RESERVED = ("<pad>", "<unk>", "<s>", "</s>")
TASKS = ("perm-lex", "occurrence")


@dataclass
class SentencePair:
    src: list[str]
    tgt: list[str]
    links: set[tuple[int, int]] = field(default_factory=set)

    def __post_init__(self):
        if not self.src or not self.tgt:
            raise ValueError("sentence pair with an empty side")
        for i, j in self.links:
            if not (0 <= i < len(self.src) and 0 <= j < len(self.tgt)):
                raise ValueError(f"alignment link {i}-{j} out of range")


@dataclass
class SynthSpec:
    task: str = "perm-lex"
    vocab_size: int = 40
    min_len: int = 3
    max_len: int = 12
    n_pairs: int = 2000
    swap_block: int = 2
    occurrence_cap: int = 3
    seed: int = 1

    def validate(self) -> None:
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if self.vocab_size < 1:
            raise ValueError("vocab_size must be >= 1")
        if not 1 <= self.min_len <= self.max_len:
            raise ValueError("need 1 <= min_len <= max_len")
        if self.n_pairs < 0:
            raise ValueError("n_pairs must be >= 0")
        if self.swap_block < 1 or self.occurrence_cap < 1:
            raise ValueError("swap_block and occurrence_cap must be >= 1")


def default_lexicon(token: str) -> str:
    """``s17`` -> ``t17``."""
    return "t" + token[1:]


def perm_lex(src: Sequence[str], block: int = 2, lexicon: Callable[[str], str] = default_lexicon) -> SentencePair:
    """Apply the perm-lex rule to one sentence."""
    order: list[int] = []
    for start in range(0, len(src), block):
        order.extend(reversed(range(start, min(start + block, len(src)))))
    tgt = [lexicon(src[i]) for i in order]
    return SentencePair(list(src), tgt, {(i, j) for j, i in enumerate(order)})


def occurrence(src: Sequence[str], cap: int = 3, lexicon: Callable[[str], str] = default_lexicon) -> SentencePair:
    """Apply the occurrence rule to one sentence."""
    seen: Counter = Counter()
    tgt = []
    for tok in src:
        seen[tok] += 1
        tgt.append(f"{lexicon(tok)}#{min(seen[tok], cap)}")
    return SentencePair(list(src), tgt, {(i, i) for i in range(len(src))})


def gen_synthetic(spec: SynthSpec, stream: int = 0) -> list[SentencePair]:
    """Generate ``spec.n_pairs`` pairs.

    Pair ``k`` is drawn from its own PCG64 stream seeded with
    ``(spec.seed, stream, k)``, so corpora are reproducible and any pair can
    be regenerated on its own.  ``stream`` separates train/dev/test splits.
    """
    spec.validate()
    pairs = []
    for k in range(spec.n_pairs):
        rng = np.random.Generator(np.random.PCG64([spec.seed, stream, k]))
        length = int(rng.integers(spec.min_len, spec.max_len + 1))
        src = [f"s{int(t)}" for t in rng.integers(0, spec.vocab_size, size=length)]
        if spec.task == "perm-lex":
            pairs.append(perm_lex(src, spec.swap_block))
        else:
            pairs.append(occurrence(src, spec.occurrence_cap))
    return pairs


class Vocabulary:
    """Token <-> id map with the four reserved ids first."""

    def __init__(self, tokens: Iterable[str]):
        self.itos: list[str] = list(RESERVED)
        for tok in tokens:
            if tok in RESERVED:
                continue
            self.itos.append(tok)
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self) -> int:
        return len(self.itos)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.itos == other.itos

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self.stoi.get(t, UNK) for t in tokens]

    def decode(self, ids: Iterable[int], strip: bool = True) -> list[str]:
        out = []
        for i in ids:
            i = int(i)
            if strip and i == EOS:
                break
            if strip and i in (PAD, BOS):
                continue
            out.append(self.itos[i])
        return out

    def to_text(self) -> str:
        return " ".join(self.itos[len(RESERVED) :])

    @classmethod
    def from_text(cls, text: str) -> "Vocabulary":
        return cls(text.split())


def build_vocab(corpus: Iterable[Sequence[str]], max_size: int) -> Vocabulary:
    """Keep the ``max_size - 4`` most frequent tokens (ties: lexicographic)."""
    counts: Counter = Counter()
    n_sent = 0
    for sent in corpus:
        counts.update(sent)
        n_sent += 1
    if n_sent == 0:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    keep = max(0, max_size - len(RESERVED))
    return Vocabulary(tok for tok, _ in ranked[:keep])


@dataclass
class Batch:
    """Padded id matrices; targets end with EOS and never contain BOS."""

    src: np.ndarray
    src_mask: np.ndarray
    tgt: np.ndarray
    tgt_mask: np.ndarray
    index: np.ndarray  # positions of the pairs in the input list

    @property
    def size(self) -> int:
        return self.src.shape[0]

    @property
    def n_tokens(self) -> int:
        return int(self.tgt_mask.sum())


def pad_batch(src_seqs: Sequence[Sequence[int]], tgt_seqs: Sequence[Sequence[int]], index=None) -> Batch:
    n = max(len(s) for s in src_seqs)
    m = max(len(t) for t in tgt_seqs) + 1
    b = len(src_seqs)
    src = np.full((b, n), PAD, dtype=np.int64)
    tgt = np.full((b, m), PAD, dtype=np.int64)
    src_mask = np.zeros((b, n))
    tgt_mask = np.zeros((b, m))
    for k, (s, t) in enumerate(zip(src_seqs, tgt_seqs)):
        src[k, : len(s)] = s
        src_mask[k, : len(s)] = 1.0
        tgt[k, : len(t)] = t
        tgt[k, len(t)] = EOS
        tgt_mask[k, : len(t) + 1] = 1.0
    index = np.arange(b) if index is None else np.asarray(index)
    return Batch(src, src_mask, tgt, tgt_mask, index)


def make_batches(
    pairs: Sequence[SentencePair],
    src_vocab: Vocabulary,
    tgt_vocab: Vocabulary,
    batch_size: int,
    max_len: int | None = None,
    seed: int | None = None,
) -> list[Batch]:
    """Filter over-long pairs, shuffle (if ``seed`` is given) and pad."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    keep = [k for k, p in enumerate(pairs) if max_len is None or (len(p.src) <= max_len and len(p.tgt) <= max_len)]
    if seed is not None:
        order = np.random.Generator(np.random.PCG64(seed)).permutation(len(keep))
        keep = [keep[k] for k in order]
    batches = []
    for start in range(0, len(keep), batch_size):
        idx = keep[start : start + batch_size]
        batches.append(
            pad_batch(
                [src_vocab.encode(pairs[k].src) for k in idx],
                [tgt_vocab.encode(pairs[k].tgt) for k in idx],
                idx,
            )
        )
    return batches


# -- files ---------------------------------------------------------------------


def write_lines(path, sentences: Iterable[Sequence[str]]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for sent in sentences:
            f.write(" ".join(sent) + "\n")


def read_lines(path) -> list[list[str]]:
    with open(path, encoding="utf-8") as f:
        return [line.split() for line in f.read().splitlines()]


def format_links(links: Iterable[tuple[int, int]]) -> str:
    return " ".join(f"{i}-{j}" for i, j in sorted(links))


def parse_links(line: str) -> set[tuple[int, int]]:
    out = set()
    for item in line.split():
        i, j = item.split("-")
        out.add((int(i), int(j)))
    return out


def write_alignments(path, links: Iterable[Iterable[tuple[int, int]]]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for sent_links in links:
            f.write(format_links(sent_links) + "\n")


def read_alignments(path) -> list[set[tuple[int, int]]]:
    with open(path, encoding="utf-8") as f:
        return [parse_links(line) for line in f.read().splitlines()]


def write_corpus(prefix, pairs: Sequence[SentencePair]) -> dict[str, Path]:
    """Write ``prefix.src``, ``prefix.tgt`` and ``prefix.align``."""
    prefix = str(prefix)
    paths = {ext: Path(f"{prefix}.{ext}") for ext in ("src", "tgt", "align")}
    write_lines(paths["src"], (p.src for p in pairs))
    write_lines(paths["tgt"], (p.tgt for p in pairs))
    write_alignments(paths["align"], (p.links for p in pairs))
    return paths


def read_corpus(src_path, tgt_path, align_path=None) -> list[SentencePair]:
    src = read_lines(src_path)
    tgt = read_lines(tgt_path)
    if len(src) != len(tgt):
        raise ValueError(f"{src_path} and {tgt_path} have different line counts")
    links = read_alignments(align_path) if align_path else [set()] * len(src)
    if len(links) != len(src):
        raise ValueError(f"{align_path} line count does not match the corpus")
    return [SentencePair(s, t, set(l)) for s, t, l in zip(src, tgt, links)]
