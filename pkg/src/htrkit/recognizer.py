"""Recognition interface and a deterministic synthetic recognizer.

The synthetic recognizer turns the ground-truth text of a line into a
posteriorgram whose noise grows with the mismatch between the line's writing
scale and the scale the model prefers. It stands in for a trained optical
model so decoding, alignment and combination can be checked end to end.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Protocol, Sequence, Tuple

import numpy as np

from .corpus import GrayImage
from .ctc import DecodeParams, Hypothesis, Lexicon, Posteriorgram, best_path_decode, token_passing_decode
from .lm import BigramLM
from .scale import scale_score

MAX_NOISE = 0.95
CONFUSION_SIZE = 3
# probability floor mixed into every frame so no path is strictly impossible
FLOOR = 1e-3

DEFAULT_ALPHABET = list("abcdefghijklmnopqrstuvwxyz ")


@dataclass
class RecognizerConfig:
    alphabet: List[str] = field(default_factory=lambda: list(DEFAULT_ALPHABET))
    frames_per_char: int = 3
    noise: float = 0.1
    scale_sensitivity: float = 0.0
    preferred_scale: float = 24.0
    seed: int = 0

    def __post_init__(self):
        if self.frames_per_char < 1:
            raise ValueError("frames_per_char must be at least 1")
        if not 0.0 <= self.noise < 1.0:
            raise ValueError("noise must lie in [0, 1)")
        if self.scale_sensitivity < 0:
            raise ValueError("scale_sensitivity must be nonnegative")
        if self.preferred_scale <= 0:
            raise ValueError("preferred_scale must be positive")
        if len(set(self.alphabet)) != len(self.alphabet) or not self.alphabet:
            raise ValueError("alphabet must be nonempty with unique symbols")

    def effective_noise(self, observed_scale: float) -> float:
        if observed_scale <= 0:
            raise ValueError("observed scale must be positive")
        mismatch = abs(math.log(observed_scale / self.preferred_scale))
        return min(MAX_NOISE, self.noise + self.scale_sensitivity * mismatch)

    def to_dict(self) -> dict:
        return asdict(self)


def _confusion_sets(cfg: RecognizerConfig) -> List[np.ndarray]:
    n = len(cfg.alphabet) + 1
    rng = np.random.default_rng([cfg.seed & 0xFFFFFFFFFFFFFFFF, 0xC0F])
    k = min(CONFUSION_SIZE, n - 1)
    sets = []
    for sym in range(n):
        others = np.array([j for j in range(n) if j != sym])
        sets.append(rng.choice(others, size=k, replace=False) if k else others)
    return sets


def frame_targets(text: str, cfg: RecognizerConfig) -> List[Tuple[int, int]]:
    """Intended (label, block) per frame: ``d`` frames per character, then ``d`` blanks.

    A character repeating its predecessor spends its first frame on a blank so
    the repeat survives the CTC collapse.
    """
    index = {s: i for i, s in enumerate(cfg.alphabet)}
    blank = len(cfg.alphabet)
    d = cfg.frames_per_char
    out = []
    prev = None
    for b, ch in enumerate(text):
        if ch not in index:
            raise ValueError(f"character {ch!r} is not in the alphabet")
        lab = index[ch]
        if lab == prev:
            if d < 2:
                raise ValueError("repeated characters need frames_per_char >= 2")
            out += [(blank, b)] + [(lab, b)] * (d - 1)
        else:
            out += [(lab, b)] * d
        prev = lab
    out += [(blank, len(text))] * d
    return out


def synth_posteriorgram(text: str, observed_scale: float, cfg: RecognizerConfig) -> Posteriorgram:
    """Posteriorgram for ``text`` with scale-dependent confusion noise.

    Each character block moves a random share of its mass (exponential with
    mean equal to the effective noise) onto that symbol's confusion set.
    Draws are seeded by (seed, text, observed scale) and scale linearly with
    the noise level, so more noise never means fewer confusions.
    """
    targets = frame_targets(text, cfg)
    eps = cfg.effective_noise(observed_scale)
    n = len(cfg.alphabet) + 1
    seed = [cfg.seed & 0xFFFFFFFFFFFFFFFF, zlib.crc32(text.encode("utf-8")), int(round(observed_scale * 1000))]
    rng = np.random.default_rng(seed)
    confusions = _confusion_sets(cfg)
    blocks = len(text) + 1
    moved = np.minimum(0.99, eps * rng.exponential(size=blocks))
    k = len(confusions[0])
    shares = rng.dirichlet(np.full(k, 0.5), size=blocks) if k else None
    frames = np.zeros((len(targets), n))
    for t, (lab, b) in enumerate(targets):
        frames[t, lab] = 1.0 - moved[b]
        if shares is not None:
            frames[t, confusions[lab]] += moved[b] * shares[b]
    frames = (1.0 - FLOOR) * frames + FLOOR / n
    return Posteriorgram(frames, cfg.alphabet)


class Recognizer(Protocol):
    def recognize(self, image: GrayImage, truth: Optional[str] = None) -> Hypothesis:
        ...


class SyntheticRecognizer:
    """Recognizer whose optical output is synthesised from side-channel truth."""

    def __init__(self, cfg: RecognizerConfig, lexicon: Lexicon, lm: BigramLM,
                 decode: Optional[DecodeParams] = None, binarize_threshold: int = 128):
        self.cfg = cfg
        self.lexicon = lexicon
        self.lm = lm
        self.decode = decode or DecodeParams()
        self.binarize_threshold = binarize_threshold

    def posteriorgram(self, image: GrayImage, truth: Optional[str]) -> Posteriorgram:
        if truth is None:
            raise ValueError("the synthetic recognizer needs the ground-truth text of the line")
        observed = scale_score(image, self.binarize_threshold)
        return synth_posteriorgram(truth, observed, self.cfg)

    def raw(self, image: GrayImage, truth: Optional[str] = None) -> str:
        """Greedy output without lexicon or language model."""
        return best_path_decode(self.posteriorgram(image, truth))

    def recognize(self, image: GrayImage, truth: Optional[str] = None) -> Hypothesis:
        return token_passing_decode(self.posteriorgram(image, truth), self.lexicon, self.lm, self.decode)


def recognize_line(image: GrayImage, truth: str, cfg: RecognizerConfig, lexicon: Lexicon, lm: BigramLM,
                   decode: Optional[DecodeParams] = None) -> Hypothesis:
    return SyntheticRecognizer(cfg, lexicon, lm, decode).recognize(image, truth)
