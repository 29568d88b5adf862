"""Interpolated modified Kneser-Ney bigram language model.

Probabilities are held as base-10 logs, the representation used by the ARPA
files the model reads and writes, so a file round trip is lossless.
Queries return natural logs.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

BOS, EOS, UNK = "<s>", "</s>", "<unk>"
LN10 = math.log(10.0)
FALLBACK_DISCOUNT = 0.5
# conventional ARPA value for the never-predicted sentence start
BOS_LOG10 = -99.0


def kn_discounts(count_of_counts: Dict[int, int]) -> Tuple[Tuple[float, float, float], bool]:
    """Modified KN discounts (D1, D2, D3+) from counts-of-counts.

    Returns the discounts and a flag telling whether the absolute fallback had
    to be used because the estimate is undefined or out of range.
    """
    n1, n2, n3, n4 = (count_of_counts.get(i, 0) for i in (1, 2, 3, 4))
    fallback = (FALLBACK_DISCOUNT,) * 3, True
    if n1 == 0 or n2 == 0 or n3 == 0:
        return fallback
    y = n1 / (n1 + 2 * n2)
    d = (1 - 2 * y * n2 / n1, 2 - 3 * y * n3 / n2, 3 - 4 * y * n4 / n3)
    if any(not 0 < di <= i + 1 for i, di in enumerate(d)):
        return fallback
    return d, False


def _discount(d: Tuple[float, float, float], count: int) -> float:
    return d[min(count, 3) - 1]


@dataclass
class BigramLM:
    unigram_log10: Dict[str, float]
    backoff_log10: Dict[str, float]
    bigram_log10: Dict[Tuple[str, str], float]
    discounts: Tuple[float, float, float] = (FALLBACK_DISCOUNT,) * 3
    unigram_discounts: Tuple[float, float, float] = (FALLBACK_DISCOUNT,) * 3
    degenerate: bool = False
    meta: Dict[str, str] = field(default_factory=dict)

    @property
    def vocab(self) -> List[str]:
        return sorted(self.unigram_log10)

    @property
    def predictable(self) -> List[str]:
        """Words the model can emit (everything except the sentence start)."""
        return [w for w in self.vocab if w != BOS]

    def _map(self, word: str) -> str:
        return word if word in self.unigram_log10 and word != BOS else UNK

    def logprob(self, prev: str, word: str) -> float:
        word = self._map(word)
        if prev not in self.unigram_log10:
            prev = UNK
        lp = self.bigram_log10.get((prev, word))
        if lp is None:
            lp = self.backoff_log10.get(prev, 0.0) + self.unigram_log10[word]
        return lp * LN10

    @classmethod
    def uniform(cls, words: Iterable[str]) -> "BigramLM":
        words = set(words) | {EOS, UNK}
        lp = -math.log10(len(words))
        uni = {w: lp for w in words}
        uni[BOS] = BOS_LOG10
        return cls(uni, {}, {})


def lm_logprob(lm: BigramLM, prev: str, word: str) -> float:
    return lm.logprob(prev, word)


def train_bigram_kn(sentences: Sequence[Sequence[str]], min_count: int = 1) -> BigramLM:
    sentences = [list(s) for s in sentences]
    if not any(sentences):
        raise ValueError("empty corpus")
    freq = Counter(w for s in sentences for w in s)
    keep = {w for w, c in freq.items() if c >= min_count}

    bigrams: Counter = Counter()
    for s in sentences:
        toks = [BOS] + [w if w in keep else UNK for w in s] + [EOS]
        bigrams.update(zip(toks, toks[1:]))

    vocab = set(keep) | {BOS, EOS, UNK}
    outputs = sorted(vocab - {BOS})

    coc = Counter(bigrams.values())
    disc, degenerate_bi = kn_discounts(coc)

    continuation = Counter(w for (_, w) in bigrams)
    total_cont = sum(continuation.values())
    ucoc = Counter(continuation.values())
    udisc, degenerate_uni = kn_discounts(ucoc)

    gamma_uni = sum(_discount(udisc, c) for c in continuation.values()) / total_cont
    uni_p = {}
    for w in outputs:
        c = continuation.get(w, 0)
        seen = (c - _discount(udisc, c)) / total_cont if c else 0.0
        uni_p[w] = seen + gamma_uni / len(outputs)

    ctx_total: Counter = Counter()
    ctx_mass: Counter = Counter()
    for (u, w), c in bigrams.items():
        ctx_total[u] += c
        ctx_mass[u] += _discount(disc, c)
    gamma = {u: ctx_mass[u] / ctx_total[u] for u in ctx_total}

    bigram_log10 = {}
    for (u, w), c in bigrams.items():
        p = (c - _discount(disc, c)) / ctx_total[u] + gamma[u] * uni_p[w]
        bigram_log10[(u, w)] = math.log10(p)

    unigram_log10 = {w: math.log10(p) for w, p in uni_p.items()}
    unigram_log10[BOS] = BOS_LOG10
    backoff_log10 = {u: math.log10(g) for u, g in gamma.items()}
    return BigramLM(unigram_log10, backoff_log10, bigram_log10, tuple(disc), tuple(udisc),
                    degenerate_bi or degenerate_uni)


def sentence_logprob(lm: BigramLM, sentence: Sequence[str]) -> float:
    toks = [BOS] + list(sentence) + [EOS]
    return sum(lm.logprob(a, b) for a, b in zip(toks, toks[1:]))


def perplexity(lm: BigramLM, sentences: Sequence[Sequence[str]]) -> float:
    if not sentences:
        raise ValueError("empty evaluation set")
    total = 0.0
    n = 0
    for s in sentences:
        total += sentence_logprob(lm, s)
        n += len(s) + 1
    return math.exp(-total / n)


# -- ARPA --------------------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def dumps_arpa(lm: BigramLM) -> str:
    lines = [
        f"# htrkit bigram model",
        f"# discounts {' '.join(_fmt(d) for d in lm.discounts)}",
        f"# unigram_discounts {' '.join(_fmt(d) for d in lm.unigram_discounts)}",
        f"# degenerate {int(lm.degenerate)}",
    ]
    for key in sorted(lm.meta):
        lines.append(f"# meta {key} {lm.meta[key]}")
    lines += ["", "\\data\\", f"ngram 1={len(lm.unigram_log10)}", f"ngram 2={len(lm.bigram_log10)}", ""]
    lines.append("\\1-grams:")
    for w in sorted(lm.unigram_log10):
        row = f"{_fmt(lm.unigram_log10[w])}\t{w}"
        if w in lm.backoff_log10:
            row += f"\t{_fmt(lm.backoff_log10[w])}"
        lines.append(row)
    lines += ["", "\\2-grams:"]
    for (u, w) in sorted(lm.bigram_log10):
        lines.append(f"{_fmt(lm.bigram_log10[(u, w)])}\t{u} {w}")
    lines += ["", "\\end\\", ""]
    return "\n".join(lines)


def write_arpa(lm: BigramLM, path) -> None:
    Path(path).write_text(dumps_arpa(lm), encoding="utf-8")


def loads_arpa(text: str) -> BigramLM:
    uni: Dict[str, float] = {}
    bo: Dict[str, float] = {}
    bi: Dict[Tuple[str, str], float] = {}
    disc = udisc = (FALLBACK_DISCOUNT,) * 3
    degenerate = False
    meta: Dict[str, str] = {}
    section: Optional[str] = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if section is None:
            if line.startswith("# discounts "):
                disc = tuple(float(v) for v in line.split()[2:5])
            elif line.startswith("# unigram_discounts "):
                udisc = tuple(float(v) for v in line.split()[2:5])
            elif line.startswith("# degenerate "):
                degenerate = line.split()[2] == "1"
            elif line.startswith("# meta "):
                _, _, key, *rest = line.split(" ", 3)
                meta[key] = rest[0] if rest else ""
            elif line == "\\data\\":
                section = "data"
            continue
        if not line or line.startswith("ngram "):
            continue
        if line == "\\1-grams:":
            section = "1"
        elif line == "\\2-grams:":
            section = "2"
        elif line == "\\end\\":
            break
        elif section == "1":
            parts = line.split()
            if len(parts) not in (2, 3):
                raise ValueError(f"ARPA line {lineno}: malformed unigram entry")
            uni[parts[1]] = float(parts[0])
            if len(parts) == 3:
                bo[parts[1]] = float(parts[2])
        elif section == "2":
            parts = line.split()
            if len(parts) != 3:
                raise ValueError(f"ARPA line {lineno}: malformed bigram entry")
            bi[(parts[1], parts[2])] = float(parts[0])
        else:
            raise ValueError(f"ARPA line {lineno}: unexpected content")
    if UNK not in uni or EOS not in uni:
        raise ValueError("ARPA model lacks <unk> or </s>")
    return BigramLM(uni, bo, bi, disc, udisc, degenerate, meta)


def read_arpa(path) -> BigramLM:
    return loads_arpa(Path(path).read_text(encoding="utf-8"))
