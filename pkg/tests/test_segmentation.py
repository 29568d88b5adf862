from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from htrkit.corpus import GrayImage
from htrkit.segmentation import (BaselineSet, assign_components, detect_baselines, extract_components,
                                 extract_lines, normalize_height, resize_bilinear, segment_page)
from htrkit.synthetic import render_page


def flood_fill_components(ink: np.ndarray):
    """8-connected components as sets of (y, x), by explicit BFS."""
    seen = np.zeros_like(ink, dtype=bool)
    out = []
    H, W = ink.shape
    for y in range(H):
        for x in range(W):
            if not ink[y, x] or seen[y, x]:
                continue
            comp = set()
            q = deque([(y, x)])
            seen[y, x] = True
            while q:
                cy, cx = q.popleft()
                comp.add((cy, cx))
                for dy in (-1, 0, 1):
                    for dx in (-1, 0, 1):
                        ny, nx = cy + dy, cx + dx
                        if 0 <= ny < H and 0 <= nx < W and ink[ny, nx] and not seen[ny, nx]:
                            seen[ny, nx] = True
                            q.append((ny, nx))
            out.append(comp)
    return out


def page_with(*boxes, shape=(120, 80)):
    px = np.full(shape, 255, np.uint8)
    for x, y, w, h in boxes:
        px[y:y + h, x:x + w] = 0
    return GrayImage(px)


def comp_at(cx, cy, w=3, h=3):
    """A single component whose centre is (cx, cy) (odd sizes keep it exact)."""
    page = page_with((cx - w // 2, cy - h // 2, w, h), shape=(cy + h + 5, cx + w + 5))
    return extract_components(page)[0]


class TestComponents:
    def test_blank_page(self):
        assert extract_components(GrayImage.blank(20, 20)) == []

    def test_square_geometry(self):
        (c,) = extract_components(page_with((10, 10, 3, 3)))
        assert c.center == (11.0, 11.0)
        assert c.ink_count == 9
        assert c.bbox == (10, 10, 3, 3)

    def test_two_squares_ordered_by_cy(self):
        comps = extract_components(page_with((40, 60, 4, 4), (5, 10, 4, 4)))
        assert [c.bbox[1] for c in comps] == [10, 60]

    def test_diagonal_pixels_connect(self):
        px = np.full((5, 5), 255, np.uint8)
        px[1, 1] = px[2, 2] = 0
        assert len(extract_components(GrayImage(px))) == 1

    def test_min_area_filters(self):
        comps = extract_components(page_with((10, 10, 1, 1), (30, 30, 3, 3)), min_area=2)
        assert [c.ink_count for c in comps] == [9]

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.integers(1, 4))
    def test_matches_flood_fill_and_loses_no_ink(self, seed, min_area):
        rng = np.random.default_rng(seed)
        ink = rng.random((16, 16)) < 0.3
        page = GrayImage(np.where(ink, 0, 255).astype(np.uint8))
        comps = extract_components(page, min_area=min_area)
        oracle = [c for c in flood_fill_components(ink) if len(c) >= min_area]
        assert sorted(c.ink_count for c in comps) == sorted(len(c) for c in oracle)
        assert sum(c.ink_count for c in comps) == sum(len(c) for c in oracle)
        for c in comps:
            x, y, w, h = c.bbox
            assert x <= c.center[0] <= x + w - 1 and y <= c.center[1] <= y + h - 1


class TestBaselines:
    def test_all_bottoms_equal(self):
        comps = extract_components(page_with((5, 41, 4, 10), (20, 46, 4, 5), (40, 48, 3, 3)))
        assert detect_baselines(comps).baselines == [50]

    def test_single_component(self):
        comps = extract_components(page_with((5, 30, 4, 7)))
        bs = detect_baselines(comps)
        assert bs.baselines == [36] and bs.mean_gap == 0.0

    def test_two_clusters(self):
        boxes = [(5 + 10 * i, 40 - 5 - i % 2, 5, 6) for i in range(5)]
        boxes += [(5 + 10 * i, 100 - 5 - i % 2, 5, 6) for i in range(5)]
        bs = detect_baselines(extract_components(page_with(*boxes)))
        assert len(bs.baselines) == 2
        assert abs(bs.baselines[0] - 40) <= 1 and abs(bs.baselines[1] - 100) <= 1
        assert bs.mean_gap == pytest.approx(60, abs=2)

    def test_dots_do_not_make_a_baseline(self):
        # a row of i-dots as numerous as the letters below them
        boxes = [(5 + 10 * i, 50, 6, 20) for i in range(6)] + [(6 + 10 * i, 42, 2, 2) for i in range(6)]
        bs = detect_baselines(extract_components(page_with(*boxes)))
        assert bs.baselines == [69]

    def test_dotted_page_segments_line_for_line(self):
        texts = ["iij jiji ij", "mini jinx", "jij iii jj"]
        page = render_page(texts, [20, 26, 22])
        assert len(segment_page(page.image)) == 3

    def test_no_components(self):
        with pytest.raises(ValueError, match="no components"):
            detect_baselines([])

    def test_baselines_must_increase(self):
        with pytest.raises(ValueError):
            BaselineSet([10, 10], 0.0)


class TestAssignment:
    def test_centre_on_baseline(self):
        assert assign_components([comp_at(10, 60)], BaselineSet([20, 60], 40.0)) == [1]

    def test_equidistant_goes_to_lower(self):
        assert assign_components([comp_at(10, 40)], BaselineSet([20, 60], 40.0)) == [1]

    def test_far_dot_goes_to_nearest_below(self):
        # distance to baseline 0 is 40 > 0.75 * 50 = 37.5, so the rule sends it below
        dot = comp_at(10, 5, 1, 1)
        assert assign_components([dot], BaselineSet([45, 95], 50.0)) == [0]

    def test_far_component_below_all_baselines_keeps_nearest(self):
        assert assign_components([comp_at(10, 150)], BaselineSet([20, 60], 40.0)) == [1]


class TestExtractLines:
    def test_two_bands(self):
        page = page_with((5, 10, 60, 8), (5, 60, 60, 8))
        lines = segment_page(page, "pg")
        assert len(lines) == 2
        (x0, y0, w0, h0), (x1, y1, w1, h1) = lines[0].bbox, lines[1].bbox
        assert y0 + h0 <= y1
        assert [r.line_index for r in lines] == [0, 1]
        assert all(r.status.value == "auto" for r in lines)

    def test_empty_baseline_is_omitted(self):
        page = page_with((5, 10, 20, 8))
        comps = extract_components(page)
        lines = extract_lines(page, comps, [1], BaselineSet([5, 17, 80], 37.5))
        assert len(lines) == 1

    def test_overlapping_boxes_keep_only_own_ink(self):
        # the lower line's ascender rises into a gap of the upper line
        page = page_with((5, 20, 10, 6), (30, 20, 10, 6), (20, 15, 3, 25), (5, 34, 40, 6), shape=(50, 60))
        comps = extract_components(page)
        assignment = [0 if c.bbox[1] == 20 else 1 for c in comps]
        lines = extract_lines(page, comps, assignment, BaselineSet([25, 39], 14.0))
        upper, lower = lines
        x, y, w, h = upper.bbox
        assert x <= 20 < x + w and y <= 20 < y + h, "boxes overlap by construction"
        assert not (upper.image.pixels[:, 20 - x:23 - x] == 0).any()
        lx, ly, _, _ = lower.bbox
        assert (lower.image.pixels[15 - ly:40 - ly, 20 - lx:23 - lx] == 0).all()

    def test_synthetic_page_recovers_lines(self):
        texts = ["hello world", "quick brown fox", "jumps", "over the dog"]
        page = render_page(texts, [20, 26, 18, 24])
        lines = segment_page(page.image)
        assert len(lines) == len(texts)
        for rec, b in zip(lines, page.baselines):
            x, y, w, h = rec.bbox
            assert y <= b < y + h
            assert x >= 0 and y >= 0 and x + w <= page.image.width and y + h <= page.image.height


class TestNormalizeHeight:
    def test_exact_halving(self):
        out = normalize_height(GrayImage(np.zeros((128, 200), np.uint8)))
        assert (out.height, out.width) == (64, 100)

    def test_already_target_is_identical(self):
        img = GrayImage(np.random.default_rng(0).integers(0, 256, (64, 37)))
        assert normalize_height(img) == img

    def test_rounded_width(self):
        out = normalize_height(GrayImage(np.zeros((30, 100), np.uint8)))
        assert (out.height, out.width) == (64, 213)

    def test_idempotent(self):
        img = GrayImage(np.random.default_rng(1).integers(0, 256, (23, 41)))
        once = normalize_height(img, 40)
        assert normalize_height(once, 40) == once

    def test_constant_image_stays_constant(self):
        out = resize_bilinear(GrayImage(np.full((7, 9), 77, np.uint8)), 20, 3)
        assert (out.pixels == 77).all()
