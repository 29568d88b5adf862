"""Seeded synthetic text, line images and pages for desk-scale experiments."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .corpus import GrayImage

LETTERS = "abcdefghijklmnopqrstuvwxyz"
ASCENDERS = set("bdfhklt")
DOTTED = set("ij")


def make_vocabulary(rng: np.random.Generator, size: int, min_len: int = 2, max_len: int = 7) -> List[str]:
    words = set()
    while len(words) < size:
        n = int(rng.integers(min_len, max_len + 1))
        words.add("".join(rng.choice(list(LETTERS), size=n)))
    return sorted(words)


class SentenceSource:
    """First-order Markov word source; each word favours a few successors."""

    def __init__(self, vocab: Sequence[str], rng: np.random.Generator, stickiness: float = 0.7,
                 successors: int = 3):
        self.vocab = list(vocab)
        self.stickiness = stickiness
        self.follow = [rng.choice(len(self.vocab), size=min(successors, len(self.vocab)), replace=False)
                       for _ in self.vocab]

    def sentence(self, rng: np.random.Generator, n_words: int) -> List[str]:
        cur = int(rng.integers(len(self.vocab)))
        out = [self.vocab[cur]]
        for _ in range(n_words - 1):
            if rng.random() < self.stickiness:
                cur = int(rng.choice(self.follow[cur]))
            else:
                cur = int(rng.integers(len(self.vocab)))
            out.append(self.vocab[cur])
        return out


def _glyph_metrics(core: int):
    width = max(2, round(core * 0.5))
    return width, max(1, round(core * 0.2)), max(1, width // 3), max(2, core // 2)


def _draw_text(canvas: np.ndarray, text: str, baseline: int, core: int, x0: int) -> int:
    """Draw blocky glyphs with their core bottom on ``baseline``; returns end x."""
    width, gap, stem, asc = _glyph_metrics(core)
    top = baseline - core + 1
    x = x0
    for ch in text:
        if ch == " ":
            x += width + gap
            continue
        canvas[top:baseline + 1, x:x + width] = 0
        if ch in ASCENDERS:
            canvas[max(0, top - asc):top, x:x + stem] = 0
        if ch in DOTTED:
            dy = top - gap - stem
            canvas[max(0, dy):max(0, dy + stem), x:x + stem] = 0
        x += width + gap
    return x


def text_width(text: str, core: int) -> int:
    width, gap, _, _ = _glyph_metrics(core)
    return len(text) * (width + gap)


def render_line(text: str, core: int, height: int = 64, margin: int = 4) -> GrayImage:
    """Line image of fixed ``height`` whose core band is ``core`` pixels tall."""
    if core < 1 or core > height:
        raise ValueError("core height must lie in [1, height]")
    w = text_width(text, core) + 2 * margin
    canvas = np.full((height, max(w, 1)), 255, dtype=np.uint8)
    top = (height - core) // 2
    _draw_text(canvas, text, top + core - 1, core, margin)
    return GrayImage(canvas)


@dataclass
class SyntheticPage:
    image: GrayImage
    lines: List[str]
    baselines: List[int]
    cores: List[int]


def render_page(lines: Sequence[str], cores: Sequence[int], spacing_factor: float = 3.0,
                margin: int = 20) -> SyntheticPage:
    if len(lines) != len(cores):
        raise ValueError("one core height per line is required")
    big = max(cores) if cores else 10
    spacing = int(round(spacing_factor * big))
    width = max([text_width(t, c) for t, c in zip(lines, cores)] + [1]) + 2 * margin
    height = 2 * margin + spacing * (len(lines) + 1)
    canvas = np.full((height, width), 255, dtype=np.uint8)
    baselines = []
    for i, (text, core) in enumerate(zip(lines, cores)):
        b = margin + spacing * (i + 1)
        _draw_text(canvas, text, b, core, margin)
        baselines.append(b)
    return SyntheticPage(GrayImage(canvas), list(lines), baselines, list(cores))
