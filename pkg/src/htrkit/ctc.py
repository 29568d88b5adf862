"""CTC scoring and decoding over per-frame label posteriors.

The blank label is the last column of every posteriorgram. Scores are natural
log probabilities; LOG_ZERO stands in for log(0) so arithmetic stays finite.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .lm import BOS, EOS, BigramLM

LOG_ZERO = -1e30
NEG_INF = -math.inf
SPACE_TOKEN = "<sp>"


@dataclass(eq=False)
class Posteriorgram:
    frames: np.ndarray
    alphabet: List[str]

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        self.alphabet = list(self.alphabet)
        if self.frames.ndim != 2 or self.frames.shape[0] < 1:
            raise ValueError("posteriorgram needs at least one frame")
        if self.frames.shape[1] != len(self.alphabet) + 1:
            raise ValueError(
                f"expected {len(self.alphabet) + 1} columns (alphabet + blank), got {self.frames.shape[1]}")
        if len(set(self.alphabet)) != len(self.alphabet):
            raise ValueError("alphabet symbols must be unique")
        if np.any(self.frames < 0) or not np.allclose(self.frames.sum(axis=1), 1.0, atol=1e-6):
            raise ValueError("every frame must be a probability distribution")

    @property
    def T(self) -> int:
        return int(self.frames.shape[0])

    @property
    def blank(self) -> int:
        return len(self.alphabet)

    def log_frames(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.maximum(np.log(self.frames), LOG_ZERO)

    def encode(self, text: str) -> List[int]:
        index = {s: i for i, s in enumerate(self.alphabet)}
        try:
            return [index[ch] for ch in text]
        except KeyError as exc:
            raise ValueError(f"character {exc.args[0]!r} is not in the alphabet") from None

    def __eq__(self, other):
        if not isinstance(other, Posteriorgram):
            return NotImplemented
        return self.alphabet == other.alphabet and np.array_equal(self.frames, other.frames)


@dataclass
class Hypothesis:
    words: List[str]
    total_score: float
    word_confidences: List[float] = field(default_factory=list)

    def __post_init__(self):
        if not self.word_confidences:
            self.word_confidences = [1.0] * len(self.words)
        if len(self.word_confidences) != len(self.words):
            raise ValueError("one confidence per word is required")

    @property
    def text(self) -> str:
        return " ".join(self.words)

    def to_dict(self) -> dict:
        return {"words": list(self.words), "total_score": self.total_score,
                "word_confidences": list(self.word_confidences)}

    @classmethod
    def from_dict(cls, d: dict) -> "Hypothesis":
        return cls(list(d["words"]), float(d["total_score"]), list(d.get("word_confidences") or []))


class Lexicon:
    """Word list with spellings checked against an alphabet."""

    def __init__(self, words, alphabet: Sequence[str]):
        alpha = set(alphabet)
        entries = {}
        for w in words:
            if not w:
                raise ValueError("lexicon entries must be nonempty")
            bad = [ch for ch in w if ch not in alpha]
            if bad:
                raise ValueError(f"lexicon word {w!r} uses symbols outside the alphabet: {bad}")
            entries[w] = w
        self.entries: Dict[str, str] = dict(sorted(entries.items()))

    @property
    def words(self) -> List[str]:
        return list(self.entries)

    def __len__(self):
        return len(self.entries)


def ctc_collapse(labels: Sequence, blank=None) -> str:
    """Merge adjacent repeats, then drop blanks."""
    out = []
    prev = object()
    for lab in labels:
        if lab != prev and lab != blank:
            out.append(lab)
        prev = lab
    return "".join(out)


def _logadd(a: float, b: float) -> float:
    if a < b:
        a, b = b, a
    return a + math.log1p(math.exp(b - a))


def forward_labels(logp: np.ndarray, labels: Sequence[int], blank: int) -> float:
    """Log probability of all paths that collapse to ``labels``."""
    T = logp.shape[0]
    S = 2 * len(labels) + 1
    ext = np.full(S, blank, dtype=np.intp)
    ext[1::2] = labels
    skip = np.zeros(S, dtype=bool)
    for s in range(3, S, 2):
        skip[s] = ext[s] != ext[s - 2]
    alpha = np.full(S, LOG_ZERO)
    alpha[0] = logp[0, blank]
    if S > 1:
        alpha[1] = logp[0, ext[1]]
    for t in range(1, T):
        prev = alpha
        acc = prev.copy()
        acc[1:] = np.logaddexp(acc[1:], prev[:-1])
        acc[2:] = np.where(skip[2:], np.logaddexp(acc[2:], prev[:-2]), acc[2:])
        alpha = np.maximum(acc + logp[t, ext], LOG_ZERO)
    total = np.logaddexp(alpha[-1], alpha[-2]) if S > 1 else alpha[-1]
    return float(total) if total > LOG_ZERO / 2 else NEG_INF


def ctc_forward_logprob(pg: Posteriorgram, target: str) -> float:
    labels = pg.encode(target)
    return forward_labels(pg.log_frames(), labels, pg.blank)


def best_path_decode(pg: Posteriorgram) -> str:
    best = np.argmax(pg.frames, axis=1)
    symbols = [pg.alphabet[i] if i < pg.blank else None for i in best]
    return ctc_collapse(symbols, blank=None)


# -- token passing -----------------------------------------------------------


@dataclass
class DecodeParams:
    lm_scale: float = 1.0
    word_penalty: float = 0.0
    beam: Optional[int] = 64
    separator: Optional[str] = " "


# special decoder states; lexicon-tree states are 2 * node + is_blank (node >= 1)
_INIT, _SEP, _SEP_BLANK = -1, -2, -3


class _LexiconTree:
    """Prefix tree over word spellings; node 0 is the root."""

    def __init__(self, lex: Lexicon, pg: Posteriorgram):
        index = {s: i for i, s in enumerate(pg.alphabet)}
        self.label = [-1]
        self.children: List[List[int]] = [[]]
        self.word_at: List[int] = [-1]
        lookup: Dict[Tuple[int, int], int] = {}
        for w, word in enumerate(lex.words):
            node = 0
            for ch in word:
                lab = index[ch]
                nxt = lookup.get((node, lab))
                if nxt is None:
                    nxt = len(self.label)
                    lookup[(node, lab)] = nxt
                    self.label.append(lab)
                    self.children.append([])
                    self.word_at.append(-1)
                    self.children[node].append(nxt)
                node = nxt
            self.word_at[node] = w


def token_passing_decode(pg: Posteriorgram, lex: Lexicon, lm: BigramLM,
                         params: Optional[DecodeParams] = None) -> Hypothesis:
    """Lexicon- and bigram-constrained decoding by token passing.

    Tokens live on the blank-augmented CTC states of a prefix tree over the
    lexicon and are keyed by (completed words, state). Tokens with the same
    key are merged by log-sum, so with an unbounded beam each word sequence
    is scored with its exact CTC forward probability. Language-model and
    word-penalty terms are added when a word is completed; the combined score
    is ``ctc + lm_scale * lm + word_penalty * n_words`` with the sentence-end
    transition in the LM term. Words after the first are preceded by the
    separator symbol when the alphabet has one. Hypotheses hold at least one
    word; if no word fits the frames the result is empty with score -inf.
    """
    params = params or DecodeParams()
    if len(lex) == 0:
        raise ValueError("empty lexicon")
    logp = pg.log_frames()
    T = pg.T
    blank = pg.blank
    words = lex.words
    tree = _LexiconTree(lex, pg)
    labels, children, word_at = tree.label, tree.children, tree.word_at
    roots = children[0]
    sep = pg.alphabet.index(params.separator) if params.separator in pg.alphabet else None
    gamma, rho, beam = params.lm_scale, params.word_penalty, params.beam
    alive = LOG_ZERO / 2

    lm_cache: Dict[Tuple[int, int], float] = {}

    def word_cost(hist: Tuple[int, ...], w: int) -> float:
        prev = hist[-1] if hist else -1
        v = lm_cache.get((prev, w))
        if v is None:
            if w == -1:
                v = gamma * lm.logprob(words[prev] if prev >= 0 else BOS, EOS)
            else:
                v = gamma * lm.logprob(words[prev] if prev >= 0 else BOS, words[w]) + rho
            lm_cache[(prev, w)] = v
        return v

    frame = logp[0].tolist()
    tokens: Dict[Tuple[Tuple[int, ...], int], float] = {((), _INIT): frame[blank]}
    for c in roots:
        tokens[((), 2 * c)] = frame[labels[c]]

    for t in range(1, T):
        frame = logp[t].tolist()
        nxt: Dict[Tuple[Tuple[int, ...], int], float] = {}

        def add(key, score):
            if score <= alive:
                return
            old = nxt.get(key)
            nxt[key] = score if old is None else _logadd(old, score)

        def enter_roots(hist, score, last):
            for c in roots:
                lab = labels[c]
                if lab != last:
                    add((hist, 2 * c), score + frame[lab])

        for (hist, s), score in tokens.items():
            if s == _INIT:
                add((hist, _INIT), score + frame[blank])
                enter_roots(hist, score, None)
            elif s == _SEP:
                add((hist, _SEP), score + frame[sep])
                add((hist, _SEP_BLANK), score + frame[blank])
                enter_roots(hist, score, sep)
            elif s == _SEP_BLANK:
                add((hist, _SEP_BLANK), score + frame[blank])
                enter_roots(hist, score, None)
            else:
                node, is_blank = divmod(s, 2)
                if is_blank:
                    add((hist, s), score + frame[blank])
                    last = None
                    for c in children[node]:
                        add((hist, 2 * c), score + frame[labels[c]])
                else:
                    last = labels[node]
                    add((hist, s), score + frame[last])
                    add((hist, s + 1), score + frame[blank])
                    for c in children[node]:
                        if labels[c] != last:
                            add((hist, 2 * c), score + frame[labels[c]])
                w = word_at[node]
                if w >= 0:
                    done = hist + (w,)
                    sc = score + word_cost(hist, w)
                    if sep is not None:
                        if sep != last:
                            add((done, _SEP), sc + frame[sep])
                    else:
                        enter_roots(done, sc, last)

        if beam is not None and len(nxt) > beam:
            nxt = dict(heapq.nsmallest(beam, nxt.items(), key=lambda kv: (-kv[1], kv[0])))
        tokens = nxt

    finals: Dict[Tuple[int, ...], float] = {}
    for (hist, s), score in tokens.items():
        if s == _INIT:
            # still before the first word; a hypothesis needs at least one
            continue
        elif s >= 0 and word_at[s // 2] >= 0:
            w = word_at[s // 2]
            score += word_cost(hist, w)
            done = hist + (w,)
        else:
            continue
        total = score + word_cost(done, -1)
        old = finals.get(done)
        finals[done] = total if old is None else _logadd(old, total)

    if not finals:
        return Hypothesis([], NEG_INF, [])
    ranked = sorted(finals.items(), key=lambda kv: (-kv[1], kv[0]))
    best_hist, best_score = ranked[0]
    if best_score <= alive:
        return Hypothesis([], NEG_INF, [])
    confs = []
    for pos, w in enumerate(best_hist):
        rival = next((sc for h, sc in ranked[1:] if len(h) <= pos or h[pos] != w), None)
        if rival is None or rival <= alive:
            confs.append(1.0)
        else:
            confs.append(1.0 / (1.0 + math.exp(min(700.0, rival - best_score))))
    return Hypothesis([words[w] for w in best_hist], float(best_score), confs)


def hypothesis_score(pg: Posteriorgram, words: Sequence[str], lm: BigramLM,
                     params: Optional[DecodeParams] = None) -> float:
    """Combined decoder score of a fixed word sequence."""
    params = params or DecodeParams()
    sep = params.separator if params.separator in pg.alphabet else ""
    text = sep.join(words) if sep else "".join(words)
    score = ctc_forward_logprob(pg, text)
    toks = [BOS] + list(words) + [EOS]
    score += params.lm_scale * sum(lm.logprob(a, b) for a, b in zip(toks, toks[1:]))
    return score + params.word_penalty * len(words)


# -- posteriorgram files -----------------------------------------------------


def _encode_symbol(s: str) -> str:
    if s == " ":
        return SPACE_TOKEN
    if not s or any(ch.isspace() for ch in s):
        raise ValueError(f"symbol {s!r} cannot be stored in a posteriorgram header")
    return s


def write_posteriorgram(pg: Posteriorgram, path) -> None:
    header = f"PGM2 {pg.T} {pg.frames.shape[1]}\n"
    header += " ".join(_encode_symbol(s) for s in pg.alphabet) + "\n"
    body = np.asarray(pg.frames, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(header.encode("utf-8"))
        fh.write(body)


def read_posteriorgram(path) -> Posteriorgram:
    data = Path(path).read_bytes()
    first = data.find(b"\n")
    second = data.find(b"\n", first + 1)
    if first < 0 or second < 0:
        raise ValueError(f"{path}: truncated posteriorgram header")
    parts = data[:first].decode("ascii", errors="replace").split()
    if len(parts) != 3 or parts[0] != "PGM2":
        raise ValueError(f"{path}: not a posteriorgram file")
    T, cols = int(parts[1]), int(parts[2])
    symbols = data[first + 1:second].decode("utf-8").split(" ") if second > first + 1 else []
    alphabet = [" " if s == SPACE_TOKEN else s for s in symbols]
    if len(alphabet) + 1 != cols:
        raise ValueError(f"{path}: alphabet size does not match column count")
    payload = data[second + 1:]
    if len(payload) != 4 * T * cols:
        raise ValueError(f"{path}: expected {4 * T * cols} payload bytes, found {len(payload)}")
    frames = np.frombuffer(payload, dtype="<f4").reshape(T, cols).astype(np.float64)
    return Posteriorgram(frames, alphabet)
