"""Writing-scale scoring, natural-breaks classes and scale augmentation."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from .corpus import GrayImage
from .segmentation import _half_up, resize_bilinear

CLASS_NAMES = ("small", "medium", "large")


def scale_score(line: GrayImage, binarize_threshold: int = 128) -> int:
    """Height of the core band.

    Rows holding at least half the ink of the densest row form the band; the
    longest contiguous run of such rows is measured (earliest on ties).
    """
    counts = (line.pixels < binarize_threshold).sum(axis=1)
    peak = counts.max()
    if peak == 0:
        raise ValueError("no ink")
    dense = counts >= 0.5 * peak
    best = run = 0
    for flag in dense:
        run = run + 1 if flag else 0
        best = max(best, run)
    return int(best)


@dataclass
class ScaleClassification:
    scores: List[float]
    labels: List[int]
    breaks: List[float]
    class_means: List[float]
    objective: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ScaleClassification":
        return cls(list(d["scores"]), [int(x) for x in d["labels"]], list(d["breaks"]),
                   list(d["class_means"]), float(d.get("objective", 0.0)))


def _ssd_table(values: np.ndarray):
    s1 = np.concatenate(([0.0], np.cumsum(values)))
    s2 = np.concatenate(([0.0], np.cumsum(values * values)))

    def cost(i: int, j: int) -> float:
        n = j - i
        t = s1[j] - s1[i]
        return max(0.0, (s2[j] - s2[i]) - t * t / n)

    return cost


def jenks_breaks(values: Sequence[float], k: int) -> Tuple[List[int], float]:
    """Optimal break indices into sorted ``values`` (class c spans idx[c-1]:idx[c]).

    Solved exactly by dynamic programming over suffixes so breaks can be chosen
    front to back, giving the lexicographically earliest optimal partition.
    Objective values within a relative 1e-12 of each other count as ties.
    """
    x = np.asarray(values, dtype=np.float64)
    n = len(x)
    if k < 1:
        raise ValueError("k must be at least 1")
    if n < k:
        raise ValueError(f"fewer values ({n}) than classes ({k})")
    cost = _ssd_table(x)
    tol = 1e-12 * float(np.dot(x, x))
    # best[c][i]: minimal cost of splitting x[i:] into c classes
    inf = math.inf
    best = [[inf] * (n + 1) for _ in range(k + 1)]
    best[0][n] = 0.0
    for c in range(1, k + 1):
        for i in range(n - c, -1, -1):
            b = inf
            for j in range(i + 1, n - c + 2):
                v = cost(i, j) + best[c - 1][j]
                if v < b:
                    b = v
            best[c][i] = b
    breaks = []
    i = 0
    for c in range(k, 1, -1):
        target = best[c][i]
        for j in range(i + 1, n - c + 2):
            if cost(i, j) + best[c - 1][j] <= target + tol:
                breaks.append(j)
                i = j
                break
    return breaks, best[k][0]


def jenks_classify(scores: Sequence[float], k: int = 3) -> ScaleClassification:
    scores = [float(s) for s in scores]
    order = np.argsort(np.asarray(scores), kind="stable")
    sorted_vals = np.asarray(scores)[order]
    cuts, objective = jenks_breaks(sorted_vals, k)
    bounds = [0] + cuts + [len(scores)]
    labels = [0] * len(scores)
    means = []
    for c in range(k):
        for pos in range(bounds[c], bounds[c + 1]):
            labels[int(order[pos])] = c
        means.append(float(np.mean(sorted_vals[bounds[c]:bounds[c + 1]])))
    breaks = [float(sorted_vals[j]) for j in cuts]
    return ScaleClassification(scores, labels, breaks, means, float(objective))


@dataclass(frozen=True)
class PlanItem:
    line_index: int
    source_class: int
    target_class: int
    factor: float


@dataclass
class AugmentationPlan:
    items: List[PlanItem] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"items": [asdict(it) for it in self.items]}

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentationPlan":
        return cls([PlanItem(**it) for it in d["items"]])


def plan_augmentation(cls: ScaleClassification) -> AugmentationPlan:
    """Scale every line into every other class by the ratio of class means."""
    k = len(cls.class_means)
    counts = np.bincount(cls.labels, minlength=k)
    if np.any(counts == 0):
        raise ValueError(f"empty scale class {int(np.flatnonzero(counts == 0)[0])}")
    means = cls.class_means
    items = []
    for i, src in enumerate(cls.labels):
        for tgt in range(k):
            if tgt != src:
                items.append(PlanItem(i, src, tgt, means[tgt] / means[src]))
    return AugmentationPlan(items)


def rescale_ink(line: GrayImage, factor: float, mode: str = "free") -> GrayImage:
    """Resample a line image by ``factor``.

    ``free`` scales both axes. ``canvas_preserving`` scales vertically only
    and re-centres the result on a canvas of the original height, cropping or
    padding with background.
    """
    if not factor > 0:
        raise ValueError("factor must be positive")
    if mode == "free":
        h, w = _half_up(line.height * factor), _half_up(line.width * factor)
        if h < 1 or w < 1:
            raise ValueError(f"rescaled image would be {w}x{h} pixels")
        return resize_bilinear(line, h, w)
    if mode != "canvas_preserving":
        raise ValueError(f"unknown rescale mode {mode!r}")
    h = _half_up(line.height * factor)
    if h < 1:
        raise ValueError(f"rescaled image would be {line.width}x{h} pixels")
    scaled = resize_bilinear(line, h, line.width).pixels
    H = line.height
    if h >= H:
        off = (h - H) // 2
        return GrayImage(scaled[off:off + H].copy())
    canvas = np.full((H, line.width), 255, dtype=np.uint8)
    off = (H - h) // 2
    canvas[off:off + h] = scaled
    return GrayImage(canvas)


def factor_suffix(factor: float) -> str:
    return f"__x{factor:.4f}"
