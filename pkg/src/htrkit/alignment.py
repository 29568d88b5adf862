"""Edit distance, recognized-line to reference-line mapping, and error rates."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from typing import Hashable, List, Sequence, Tuple

from .corpus import LineRecord, LineStatus


def levenshtein(a: Sequence[Hashable], b: Sequence[Hashable]) -> int:
    """Unit-cost edit distance between two sequences (strings compare by code point)."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


@dataclass
class AlignmentStats:
    selected_fraction: float
    mean_normalized_distance: float


@dataclass
class AlignmentMap:
    entries: List[Tuple[int, int]] = field(default_factory=list)
    discarded: List[int] = field(default_factory=list)
    stats: AlignmentStats = field(default_factory=lambda: AlignmentStats(0.0, 0.0))
    comparisons: int = 0

    def to_dict(self) -> dict:
        return {
            "entries": [[i, r] for i, r in self.entries],
            "discarded": list(self.discarded),
            "stats": asdict(self.stats),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AlignmentMap":
        return cls(
            entries=[(int(i), int(r)) for i, r in d["entries"]],
            discarded=[int(i) for i in d["discarded"]],
            stats=AlignmentStats(**d["stats"]),
        )


def map_lines(recognized: Sequence[str], reference: Sequence[str], threshold: float = 0.5) -> AlignmentMap:
    """Sequentially map recognized lines onto reference lines.

    A recognized line is mapped to the current reference line when their edit
    distance is at most ``threshold`` times the reference length; the cursor
    then advances. Otherwise the recognized line is discarded and the same
    reference line is offered to the next recognized line.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    result = AlignmentMap()
    cursor = 0
    dists = []
    for i, rec in enumerate(recognized):
        if cursor >= len(reference):
            result.discarded.append(i)
            continue
        ref = reference[cursor]
        d = levenshtein(rec, ref)
        result.comparisons += 1
        if d <= threshold * len(ref):
            result.entries.append((i, cursor))
            dists.append(d / len(ref) if ref else 0.0)
            cursor += 1
        else:
            result.discarded.append(i)
    n = len(recognized)
    result.stats = AlignmentStats(
        selected_fraction=len(result.entries) / n if n else 0.0,
        mean_normalized_distance=sum(dists) / len(dists) if dists else 0.0,
    )
    return result


def select_training_lines(amap: AlignmentMap, lines: Sequence[LineRecord],
                          reference: Sequence[str]) -> List[LineRecord]:
    """Attach mapped transcripts; every other line becomes discarded.

    Indices in ``amap`` are positions in ``lines``.
    """
    mapped = {}
    for i, r in amap.entries:
        if not 0 <= i < len(lines) or not 0 <= r < len(reference):
            raise ValueError(f"alignment entry ({i} -> {r}) out of range")
        if i in mapped:
            raise ValueError(f"line {i} mapped twice")
        mapped[i] = r
    for i in amap.discarded:
        if not 0 <= i < len(lines):
            raise ValueError(f"discarded index {i} out of range")
        if i in mapped:
            raise ValueError(f"line {i} is both mapped and discarded")
    out = []
    for i, rec in enumerate(lines):
        if i in mapped:
            out.append(replace(rec, status=LineStatus.SELECTED, transcript=reference[mapped[i]]))
        else:
            out.append(replace(rec, status=LineStatus.DISCARDED))
    return out


def tokenize(text: str, unit: str):
    if unit == "char":
        return text
    if unit == "word":
        return text.split()
    raise ValueError(f"unknown tokenizer {unit!r}")


def error_rate(refs: Sequence[str], hyps: Sequence[str], unit: str = "char") -> float:
    """Corpus rate: summed edit distance over summed reference length."""
    if len(refs) != len(hyps):
        raise ValueError(f"length mismatch: {len(refs)} references vs {len(hyps)} hypotheses")
    errors = total = 0
    for ref, hyp in zip(refs, hyps):
        r, h = tokenize(ref, unit), tokenize(hyp, unit)
        errors += levenshtein(r, h)
        total += len(r)
    if total == 0:
        raise ValueError("total reference length is zero")
    return errors / total


@dataclass
class ErrorRates:
    ler: float
    cer: float
    wer: float


def error_rates(refs: Sequence[str], raw: Sequence[str], final: Sequence[str]) -> ErrorRates:
    """LER on raw recognizer output, CER and WER on the decoded output."""
    return ErrorRates(
        ler=error_rate(refs, raw, "char"),
        cer=error_rate(refs, final, "char"),
        wer=error_rate(refs, final, "word"),
    )


def relative_improvement(before: float, after: float) -> float:
    if before == 0:
        return 0.0
    return (before - after) / before
