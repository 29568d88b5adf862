"""Slow, independent reference implementations used as test oracles."""

from __future__ import annotations

import itertools
import math
from collections import Counter, deque
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np


def edit_distance_bfs(a: str, b: str) -> int:
    """Shortest edit script by breadth-first search over strings.

    Only characters from ``b`` are ever inserted or substituted, which loses no
    optimal script.
    """
    if a == b:
        return 0
    chars = sorted(set(b))
    limit = max(len(a), len(b))
    seen = {a}
    frontier = deque([(a, 0)])
    while frontier:
        s, d = frontier.popleft()
        nxt = set()
        for i in range(len(s) + 1):
            for ch in chars:
                nxt.add(s[:i] + ch + s[i:])
            if i < len(s):
                nxt.add(s[:i] + s[i + 1:])
                for ch in chars:
                    nxt.add(s[:i] + ch + s[i + 1:])
        for t in nxt:
            if t == b:
                return d + 1
            if t not in seen and len(t) <= limit:
                seen.add(t)
                frontier.append((t, d + 1))
    raise AssertionError("unreachable")


def collapse(path: Sequence[int], blank: int) -> Tuple[int, ...]:
    out = []
    prev = None
    for p in path:
        if p != prev and p != blank:
            out.append(p)
        prev = p
    return tuple(out)


def ctc_string_probs(frames: np.ndarray) -> Dict[Tuple[int, ...], float]:
    """Probability of every collapsed label string, by enumerating all paths."""
    T, C = frames.shape
    blank = C - 1
    probs: Dict[Tuple[int, ...], float] = {}
    for path in itertools.product(range(C), repeat=T):
        p = 1.0
        for t, s in enumerate(path):
            p *= frames[t, s]
        key = collapse(path, blank)
        probs[key] = probs.get(key, 0.0) + p
    return probs


def jenks_exhaustive(values: Sequence[int], k: int) -> Tuple[List[int], Fraction]:
    """Best contiguous k-partition of sorted values with exact arithmetic.

    Returns the earliest break positions among optimal partitions.
    """
    xs = sorted(Fraction(v) for v in values)
    n = len(xs)

    def ssd(part):
        m = sum(part) / len(part)
        return sum((x - m) ** 2 for x in part)

    best = None
    for cuts in itertools.combinations(range(1, n), k - 1):
        bounds = (0,) + cuts + (n,)
        obj = sum(ssd(xs[bounds[i]:bounds[i + 1]]) for i in range(k))
        if best is None or obj < best[1]:
            best = (list(cuts), obj)
    return best


# -- reference modified Kneser-Ney bigram model, exact arithmetic ------------


def _disc(coc: Counter):
    n1, n2, n3, n4 = (Fraction(coc.get(i, 0)) for i in (1, 2, 3, 4))
    half = (Fraction(1, 2),) * 3
    if n1 == 0 or n2 == 0 or n3 == 0:
        return half
    y = n1 / (n1 + 2 * n2)
    d = (1 - 2 * y * n2 / n1, 2 - 3 * y * n3 / n2, 3 - 4 * y * n4 / n3)
    if any(not 0 < di <= i + 1 for i, di in enumerate(d)):
        return half
    return d


def kn_reference(sentences: Sequence[Sequence[str]]):
    """Return P(word | prev) as exact fractions for every context and word."""
    big = Counter()
    for s in sentences:
        toks = ["<s>"] + list(s) + ["</s>"]
        big.update(zip(toks, toks[1:]))
    words = sorted({w for s in sentences for w in s} | {"</s>", "<unk>"})
    d = _disc(Counter(big.values()))
    cont = Counter(w for (_, w) in big)
    ud = _disc(Counter(cont.values()))
    tot = sum(cont.values())

    def D(dd, c):
        return dd[min(c, 3) - 1]

    gu = sum(D(ud, c) for c in cont.values()) / Fraction(tot)
    uni = {}
    for w in words:
        seen = (Fraction(cont[w]) - D(ud, cont[w])) / tot if cont[w] else Fraction(0)
        uni[w] = seen + gu / len(words)
    table = {}
    for u in sorted({u for (u, _) in big}):
        row = {w: c for (uu, w), c in big.items() if uu == u}
        n = sum(row.values())
        g = sum(D(d, c) for c in row.values()) / Fraction(n)
        table[u] = {}
        for w in words:
            seen = (Fraction(row[w]) - D(d, row[w])) / n if w in row else Fraction(0)
            table[u][w] = seen + g * uni[w]
    return table, uni


def brute_force_decode(frames: np.ndarray, alphabet: Sequence[str], lexicon: Sequence[str], lm,
                       lm_scale: float, word_penalty: float, max_words: int = 3,
                       separator: Optional[str] = " "):
    """Argmax over all word sequences of length 1..max_words.

    CTC probabilities come from full path enumeration, not from a forward pass.
    """
    probs = ctc_string_probs(frames)
    index = {s: i for i, s in enumerate(alphabet)}
    sep = separator if separator in index else ""
    best = None
    for n in range(1, max_words + 1):
        for seq in itertools.product(sorted(lexicon), repeat=n):
            text = sep.join(seq)
            p = probs.get(tuple(index[c] for c in text), 0.0)
            if p <= 0:
                continue
            toks = ["<s>"] + list(seq) + ["</s>"]
            score = math.log(p) + lm_scale * sum(lm.logprob(a, b) for a, b in zip(toks, toks[1:]))
            score += word_penalty * n
            if best is None or score > best[1]:
                best = (list(seq), score)
    return best
