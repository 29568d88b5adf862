import json

import numpy as np
import pytest
from PIL import Image

from htrkit.corpus import (GrayImage, LineRecord, LineStatus, ManifestError, PageRecord, PGMError,
                           load_corpus_manifest, load_line_manifest, read_image, read_pgm,
                           save_corpus_manifest, save_line_manifest, write_pgm)


class TestPGM:
    def test_direct_byte_mapping(self, tmp_path):
        f = tmp_path / "a.pgm"
        f.write_bytes(b"P5 2 2 255\n" + bytes([0, 255, 128, 64]))
        img = read_pgm(f)
        assert img.width == 2 and img.height == 2
        assert img.pixels.ravel().tolist() == [0, 255, 128, 64]

    def test_smallest_image_layout(self, tmp_path):
        f = tmp_path / "one.pgm"
        write_pgm(GrayImage(np.zeros((1, 1), np.uint8)), f)
        assert f.read_bytes() == b"P5\n1 1\n255\n\x00"

    def test_round_trip_is_byte_exact(self, tmp_path):
        rng = np.random.default_rng(3)
        for i in range(5):
            img = GrayImage(rng.integers(0, 256, size=(int(rng.integers(1, 9)), int(rng.integers(1, 9)))))
            a, b = tmp_path / f"a{i}.pgm", tmp_path / f"b{i}.pgm"
            write_pgm(img, a)
            assert read_pgm(a) == img
            write_pgm(read_pgm(a), b)
            assert a.read_bytes() == b.read_bytes()

    def test_header_comments_are_skipped(self, tmp_path):
        f = tmp_path / "c.pgm"
        f.write_bytes(b"P5\n# made by hand\n1 2\n255\n\x07\x08")
        assert read_pgm(f).pixels.tolist() == [[7], [8]]

    @pytest.mark.parametrize("payload, message", [
        (b"P6\n1 1\n255\n\x00\x00\x00", "unsupported magic"),
        (b"P5\n1 x\n255\n\x00", "malformed header"),
        (b"P5\n1 1\n65535\n\x00\x00", "unsupported maxval"),
        (b"P5\n2 2\n255\n\x00", "truncated payload"),
    ])
    def test_distinct_diagnostics(self, tmp_path, payload, message):
        f = tmp_path / "bad.pgm"
        f.write_bytes(payload)
        with pytest.raises(PGMError, match=message):
            read_pgm(f)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            read_pgm(tmp_path / "nope.pgm")

    def test_unwritable_path(self, tmp_path):
        with pytest.raises(OSError):
            write_pgm(GrayImage.blank(1, 1), tmp_path / "no" / "such" / "dir.pgm")

    def test_png_is_converted_to_gray(self, tmp_path):
        f = tmp_path / "x.png"
        Image.fromarray(np.array([[0, 200]], np.uint8)).save(f)
        assert read_image(f).pixels.tolist() == [[0, 200]]


class TestGrayImage:
    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            GrayImage(np.array([[300]]))

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            GrayImage(np.zeros((0, 3), np.uint8))


def _line(page="p", idx=0, y=0, **kw):
    return LineRecord(page, idx, (0, y, 10, 5), f"l{idx}.pgm", **kw)


class TestCorpusManifest:
    def test_pages_in_file_order(self, tmp_path):
        f = tmp_path / "c.json"
        f.write_text(json.dumps([
            {"page_id": "b", "image": "b.pgm", "transcript": ["x y", "z"]},
            {"page_id": "a", "image": "a.pgm", "transcript": []},
        ]))
        pages = load_corpus_manifest(f)
        assert [p.page_id for p in pages] == ["b", "a"]
        assert pages[0].transcript == ["x y", "z"]

    def test_empty(self, tmp_path):
        f = tmp_path / "c.json"
        f.write_text("[]")
        assert load_corpus_manifest(f) == []

    def test_duplicate_id_is_named(self, tmp_path):
        f = tmp_path / "c.json"
        f.write_text(json.dumps([{"page_id": "p01", "image": "a", "transcript": []}] * 2))
        with pytest.raises(ManifestError, match="p01"):
            load_corpus_manifest(f)

    def test_missing_fields(self, tmp_path):
        f = tmp_path / "c.json"
        f.write_text(json.dumps([{"page_id": "p"}]))
        with pytest.raises(ManifestError, match="missing"):
            load_corpus_manifest(f)

    def test_paragraph_string_is_split_into_lines(self, tmp_path):
        f = tmp_path / "c.json"
        f.write_text(json.dumps([{"page_id": "p", "image": "a", "transcript": "one\ntwo"}]))
        assert load_corpus_manifest(f)[0].transcript == ["one", "two"]

    def test_round_trip(self, tmp_path):
        pages = [PageRecord("p1", "p1.pgm", ["ä b", "c"]), PageRecord("p2", "p2.pgm", [])]
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        save_corpus_manifest(pages, a)
        assert load_corpus_manifest(a) == pages
        save_corpus_manifest(load_corpus_manifest(a), b)
        assert a.read_bytes() == b.read_bytes()


class TestLineManifest:
    def test_round_trip_three_records(self, tmp_path):
        recs = [_line(idx=0, y=0), _line(idx=1, y=10, status="selected", transcript="ab"),
                _line(idx=2, y=20, status=LineStatus.DISCARDED)]
        f = tmp_path / "l.json"
        save_line_manifest(recs, f)
        assert load_line_manifest(f) == recs

    def test_selected_without_transcript_is_rejected_before_writing(self, tmp_path):
        f = tmp_path / "l.json"
        with pytest.raises(ManifestError, match="transcript"):
            save_line_manifest([_line(status="selected")], f)
        assert not f.exists()

    def test_empty_list(self, tmp_path):
        f = tmp_path / "l.json"
        save_line_manifest([], f)
        assert load_line_manifest(f) == []

    def test_order_must_follow_vertical_center(self, tmp_path):
        with pytest.raises(ManifestError):
            save_line_manifest([_line(idx=0, y=20), _line(idx=1, y=10)], tmp_path / "l.json")

    def test_load_names_offending_record(self, tmp_path):
        f = tmp_path / "l.json"
        f.write_text(json.dumps([{"page_id": "pg7", "line_index": 0, "bbox": [0, 0, 1, 1], "image": "",
                                  "status": "verified"}]))
        with pytest.raises(ManifestError, match="pg7"):
            load_line_manifest(f)

    def test_bbox_must_fit_page(self):
        with pytest.raises(ManifestError):
            _line().validate(page_size=(5, 5))
