"""Text-line extraction from page rasters.

Connected ink components vote for candidate baselines through a smoothed
histogram of their bottom edges; each component is then attached to a
baseline and the line strips are cut out with only their own ink.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np
from scipy import ndimage
from scipy.signal import find_peaks

from .corpus import GrayImage, LineRecord, LineStatus

LINE_PADDING = 2


@dataclass(eq=False)
class Component:
    bbox: Tuple[int, int, int, int]
    center: Tuple[float, float]
    ink_count: int
    # boolean ink mask over the bbox
    mask: np.ndarray = field(repr=False)

    @property
    def bottom(self) -> int:
        return self.bbox[1] + self.bbox[3] - 1


@dataclass
class BaselineSet:
    baselines: List[int]
    mean_gap: float

    def __post_init__(self):
        if any(a >= b for a, b in zip(self.baselines, self.baselines[1:])):
            raise ValueError("baselines must be strictly increasing")


def _half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _axis_weights(n_in: int, n_out: int):
    pos = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    pos = np.clip(pos, 0.0, n_in - 1)
    lo = np.floor(pos).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, pos - lo


def resize_bilinear(img: GrayImage, height: int, width: int) -> GrayImage:
    """Bilinear resampling with pixel-center alignment; same size is an exact copy."""
    if height < 1 or width < 1:
        raise ValueError(f"target size must be at least 1x1, got {width}x{height}")
    if (height, width) == img.pixels.shape:
        return img.copy()
    src = img.pixels.astype(np.float64)
    lo, hi, w = _axis_weights(img.height, height)
    rows = src[lo] * (1 - w)[:, None] + src[hi] * w[:, None]
    lo, hi, w = _axis_weights(img.width, width)
    out = rows[:, lo] * (1 - w)[None, :] + rows[:, hi] * w[None, :]
    return GrayImage(np.clip(np.rint(out), 0, 255).astype(np.uint8))


def extract_components(page: GrayImage, binarize_threshold: int = 128, min_area: int = 1) -> List[Component]:
    if not 0 <= binarize_threshold <= 255:
        raise ValueError("binarize_threshold must lie in [0, 255]")
    ink = page.pixels < binarize_threshold
    labels, count = ndimage.label(ink, structure=np.ones((3, 3), dtype=bool))
    comps = []
    for idx, sl in enumerate(ndimage.find_objects(labels), start=1):
        if sl is None:
            continue
        mask = labels[sl] == idx
        area = int(mask.sum())
        if area < min_area:
            continue
        ys, xs = np.nonzero(mask)
        y0, x0 = sl[0].start, sl[1].start
        comps.append(Component(
            bbox=(x0, y0, sl[1].stop - x0, sl[0].stop - y0),
            center=(x0 + float(xs.mean()), y0 + float(ys.mean())),
            ink_count=area,
            mask=mask,
        ))
    comps.sort(key=lambda c: (c.center[1], c.center[0]))
    return comps


def detect_baselines(components: Sequence[Component], smoothing_sigma: float = 3.0,
                     min_peak_ratio: float = 0.1, vote_area_ratio: float = 0.2) -> BaselineSet:
    """Pick baselines at peaks of the smoothed histogram of component bottoms.

    Components smaller than ``vote_area_ratio`` times the median ink count
    (dots, diacritics, specks) do not vote. Peaks lower than
    ``min_peak_ratio`` of the tallest are ignored, then peaks closer than half
    the median peak gap are merged, the taller one surviving.
    """
    if not components:
        raise ValueError("no components")
    areas = np.array([c.ink_count for c in components], dtype=np.float64)
    voters = [c for c, a in zip(components, areas) if a >= vote_area_ratio * np.median(areas)]
    bottoms = np.array([c.bottom for c in voters])
    margin = int(math.ceil(4 * smoothing_sigma)) + 2
    hist = np.bincount(bottoms, minlength=bottoms.max() + margin + 1).astype(np.float64)
    if smoothing_sigma > 0:
        hist = ndimage.gaussian_filter1d(hist, smoothing_sigma, mode="constant")
    peaks, _ = find_peaks(np.concatenate(([0.0], hist, [0.0])))
    peaks = peaks - 1
    heights = hist[peaks]
    keep = heights >= min_peak_ratio * heights.max()
    peaks = [int(p) for p in peaks[keep]]
    heights = [float(h) for h in heights[keep]]

    if len(peaks) > 2:
        limit = 0.5 * float(np.median(np.diff(peaks)))
        while len(peaks) > 1:
            gaps = np.diff(peaks)
            i = int(np.argmin(gaps))
            if gaps[i] >= limit:
                break
            drop = i if heights[i] < heights[i + 1] else i + 1
            del peaks[drop]
            del heights[drop]
    mean_gap = float(np.mean(np.diff(peaks))) if len(peaks) > 1 else 0.0
    return BaselineSet(peaks, mean_gap)


def assign_components(components: Sequence[Component], baselines: BaselineSet) -> List[int]:
    """Baseline index for each component, in component order.

    Nearest baseline by vertical center distance, ties going to the lower
    baseline. Components further than 0.75 * mean gap from every baseline
    (diacritics, dots) go to the nearest baseline below them instead.
    """
    ys = np.asarray(baselines.baselines, dtype=np.float64)
    if ys.size == 0:
        raise ValueError("at least one baseline is required")
    limit = 0.75 * baselines.mean_gap
    out = []
    for comp in components:
        cy = comp.center[1]
        dist = np.abs(ys - cy)
        best = int(np.flatnonzero(dist == dist.min())[-1])
        if ys.size > 1 and dist[best] > limit:
            below = np.flatnonzero(ys >= cy)
            if below.size:
                best = int(below[0])
        out.append(best)
    return out


def extract_lines(page: GrayImage, components: Sequence[Component], assignment: Sequence[int],
                  baselines: BaselineSet, page_id: str = "page") -> List[LineRecord]:
    if len(assignment) != len(components):
        raise ValueError("assignment length does not match components")
    groups = {}
    for comp, b in zip(components, assignment):
        if not 0 <= b < len(baselines.baselines):
            raise ValueError(f"assignment refers to unknown baseline {b}")
        groups.setdefault(b, []).append(comp)

    found = []
    for b, comps in groups.items():
        x0 = min(c.bbox[0] for c in comps) - LINE_PADDING
        y0 = min(c.bbox[1] for c in comps) - LINE_PADDING
        x1 = max(c.bbox[0] + c.bbox[2] for c in comps) + LINE_PADDING
        y1 = max(c.bbox[1] + c.bbox[3] for c in comps) + LINE_PADDING
        x0, y0 = max(x0, 0), max(y0, 0)
        x1, y1 = min(x1, page.width), min(y1, page.height)
        strip = np.full((y1 - y0, x1 - x0), 255, dtype=np.uint8)
        for c in comps:
            cx, cy, cw, ch = c.bbox
            region = (slice(cy - y0, cy - y0 + ch), slice(cx - x0, cx - x0 + cw))
            strip[region][c.mask] = page.pixels[cy:cy + ch, cx:cx + cw][c.mask]
        bbox = (x0, y0, x1 - x0, y1 - y0)
        found.append((y0 + (y1 - y0) / 2.0, b, bbox, GrayImage(strip)))

    found.sort(key=lambda t: (t[0], t[1]))
    return [
        LineRecord(page_id=page_id, line_index=i, bbox=bbox, status=LineStatus.AUTO, image=img)
        for i, (_, _, bbox, img) in enumerate(found)
    ]


def normalize_height(line: GrayImage, target_height: int = 64) -> GrayImage:
    if target_height < 1:
        raise ValueError("target_height must be positive")
    if line.height == target_height:
        return line.copy()
    width = max(1, _half_up(line.width * target_height / line.height))
    return resize_bilinear(line, target_height, width)


def segment_page(page: GrayImage, page_id: str = "page", binarize_threshold: int = 128,
                 min_area: int = 1, smoothing_sigma: float = 3.0,
                 min_peak_ratio: float = 0.1) -> List[LineRecord]:
    """Run component extraction, baseline detection, assignment and cutting."""
    comps = extract_components(page, binarize_threshold, min_area)
    if not comps:
        return []
    baselines = detect_baselines(comps, smoothing_sigma, min_peak_ratio)
    assignment = assign_components(comps, baselines)
    return extract_lines(page, comps, assignment, baselines, page_id)
