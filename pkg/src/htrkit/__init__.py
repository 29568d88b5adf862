"""Handwritten text recognition toolkit: segmentation, alignment, scale handling,
bigram language modelling, CTC decoding and hypothesis combination."""

from .corpus import GrayImage, LineRecord, LineStatus, PageRecord, read_pgm, write_pgm
from .ctc import DecodeParams, Hypothesis, Lexicon, Posteriorgram, ctc_forward_logprob, token_passing_decode
from .lm import BigramLM, train_bigram_kn

__all__ = [
    "BigramLM", "DecodeParams", "GrayImage", "Hypothesis", "Lexicon", "LineRecord", "LineStatus",
    "PageRecord", "Posteriorgram", "ctc_forward_logprob", "read_pgm", "token_passing_decode",
    "train_bigram_kn", "write_pgm",
]

__version__ = "0.1.0"
