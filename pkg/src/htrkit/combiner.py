"""Recognition over rescaled copies of a line, combined by ROVER voting."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

from .corpus import GrayImage
from .ctc import Hypothesis
from .scale import rescale_ink

DEFAULT_GRID = (0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3)
NULL = None


@dataclass
class ScaleVariant:
    theta: float
    image: GrayImage
    prior_weight: float


def gen_scale_variants(line: GrayImage, grid: Sequence[float] = DEFAULT_GRID) -> List[ScaleVariant]:
    if not grid:
        raise ValueError("empty scale grid")
    if any(not f > 0 for f in grid):
        raise ValueError("scale factors must be positive")
    w = 1.0 / len(grid)
    return [ScaleVariant(float(f), rescale_ink(line, f, "canvas_preserving"), w) for f in grid]


@dataclass(frozen=True)
class SlotEntry:
    word: Optional[str]
    confidence: float
    source: int


@dataclass
class WordTransitionNetwork:
    slots: List[List[SlotEntry]] = field(default_factory=list)
    n_sources: int = 0

    def words(self, slot: int) -> List[Optional[str]]:
        return [e.word for e in self.slots[slot]]


# backtrace preference order on equal cost
_MATCH, _SUB, _DEL, _INS = 0, 1, 2, 3


def _align(slots: List[List[SlotEntry]], words: Sequence[str]):
    """Min-cost alignment of hypothesis words to network slots.

    Returns a list of (slot index or None, word or NULL) pairs in order.
    """
    n, m = len(slots), len(words)
    slot_words = [{e.word for e in s} for s in slots]
    INF = math.inf
    cost = [[INF] * (m + 1) for _ in range(n + 1)]
    cost[0][0] = 0
    for i in range(n + 1):
        for j in range(m + 1):
            if i == 0 and j == 0:
                continue
            best = INF
            if i and j:
                best = cost[i - 1][j - 1] + (0 if words[j - 1] in slot_words[i - 1] else 1)
            if i:
                best = min(best, cost[i - 1][j] + 1)
            if j:
                best = min(best, cost[i][j - 1] + 1)
            cost[i][j] = best
    ops = []
    i, j = n, m
    while i or j:
        here = cost[i][j]
        if i and j and words[j - 1] in slot_words[i - 1] and cost[i - 1][j - 1] == here:
            op = _MATCH
        elif i and j and cost[i - 1][j - 1] + 1 == here:
            op = _SUB
        elif i and cost[i - 1][j] + 1 == here:
            op = _DEL
        else:
            op = _INS
        if op in (_MATCH, _SUB):
            ops.append((i - 1, words[j - 1]))
            i, j = i - 1, j - 1
        elif op == _DEL:
            ops.append((i - 1, NULL))
            i -= 1
        else:
            ops.append((None, words[j - 1]))
            j -= 1
    ops.reverse()
    return ops


def build_wtn(hyps: Sequence[Hypothesis]) -> WordTransitionNetwork:
    """Fold hypotheses one by one into a slot network, first hypothesis as seed."""
    if not hyps:
        raise ValueError("no hypotheses to combine")
    first = hyps[0]
    net = WordTransitionNetwork(
        [[SlotEntry(w, c, 0)] for w, c in zip(first.words, first.word_confidences)], 1)
    for src, hyp in enumerate(hyps[1:], start=1):
        conf = dict(enumerate(hyp.word_confidences))
        new_slots = []
        j = 0
        for slot_idx, word in _align(net.slots, hyp.words):
            if word is NULL:
                entry = SlotEntry(NULL, 0.0, src)
            else:
                entry = SlotEntry(word, conf[j], src)
                j += 1
            if slot_idx is None:
                slot = [SlotEntry(NULL, 0.0, s) for s in range(src)]
            else:
                slot = list(net.slots[slot_idx])
            slot.append(entry)
            new_slots.append(slot)
        net = WordTransitionNetwork(new_slots, src + 1)
    return net


@dataclass
class SlotVote:
    word: Optional[str]
    votes: int
    score: float


def _slot_scores(slot: Sequence[SlotEntry], n: int, alpha: float, null_conf: float) -> List[SlotVote]:
    votes = {}
    conf = {}
    for e in slot:
        votes[e.word] = votes.get(e.word, 0) + 1
        if e.word is not NULL:
            conf[e.word] = max(conf.get(e.word, 0.0), e.confidence)
    out = []
    for w, v in votes.items():
        c = null_conf if w is NULL else conf[w]
        out.append(SlotVote(w, v, alpha * v / n + (1 - alpha) * c))
    # best first: score, then votes, then lexicographically smallest (NULL as "")
    out.sort(key=lambda s: (-s.score, -s.votes, "" if s.word is NULL else s.word))
    return out


def rover_vote(wtn: WordTransitionNetwork, alpha: float = 0.7, null_conf: float = 0.5,
               trace: Optional[list] = None) -> Hypothesis:
    if not 0 <= alpha <= 1 or not 0 <= null_conf <= 1:
        raise ValueError("alpha and null_conf must lie in [0, 1]")
    n = wtn.n_sources
    words, confs = [], []
    log_score = 0.0
    for slot in wtn.slots:
        ranked = _slot_scores(slot, n, alpha, null_conf)
        win = ranked[0]
        if trace is not None:
            trace.append([{"word": s.word, "votes": s.votes, "score": s.score} for s in ranked])
        log_score += math.log(win.score) if win.score > 0 else -math.inf
        if win.word is not NULL:
            words.append(win.word)
            confs.append(min(1.0, win.score))
    return Hypothesis(words, log_score, confs)


@dataclass
class CombinationResult:
    thetas: List[float]
    variant_hyps: List[Hypothesis]
    final: Hypothesis
    trace: list

    def to_dict(self) -> dict:
        return {
            "variants": [{"theta": t, **h.to_dict()} for t, h in zip(self.thetas, self.variant_hyps)],
            "final": self.final.to_dict(),
            "votes": self.trace,
        }


def combine(hyps: Sequence[Hypothesis], alpha: float = 0.7, null_conf: float = 0.5) -> Tuple[Hypothesis, list]:
    """ROVER over hypotheses; a single hypothesis is returned unchanged."""
    if len(hyps) == 1:
        return hyps[0], []
    trace: list = []
    return rover_vote(build_wtn(hyps), alpha, null_conf, trace), trace


def normalize_and_recognize(line: GrayImage, recognizer, truth: Optional[str] = None,
                            grid: Sequence[float] = DEFAULT_GRID, alpha: float = 0.7,
                            null_conf: float = 0.5) -> CombinationResult:
    """Recognize every scaled copy of ``line`` and vote over the results.

    Variants are treated uniformly; their prior weights do not enter the vote.
    """
    variants = gen_scale_variants(line, grid)
    hyps = [recognizer.recognize(v.image, truth) for v in variants]
    final, trace = combine(hyps, alpha, null_conf)
    return CombinationResult([v.theta for v in variants], hyps, final, trace)
