"""Attention-based encoder-decoder translation with gated, translation-sensitive annotations."""

from gatt.attention import MODES
from gatt.data import SentencePair, SynthSpec, Vocabulary, gen_synthetic
from gatt.decode import beam_search, greedy_decode, translate
from gatt.seq2seq import ModelConfig, Seq2Seq, forward_loss

__all__ = [
    "MODES",
    "ModelConfig",
    "Seq2Seq",
    "SentencePair",
    "SynthSpec",
    "Vocabulary",
    "beam_search",
    "forward_loss",
    "gen_synthetic",
    "greedy_decode",
    "translate",
]

__version__ = "0.1.0"
