"""On-disk formats: binary PGM images, corpus manifests and line manifests.

Images use 0 for ink and 255 for background throughout the package.
"""

from __future__ import annotations

import enum
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

PathLike = Union[str, os.PathLike]

SCHEMA_VERSION = 1


class PGMError(ValueError):
    """Raised for unreadable or unsupported PGM payloads."""


class ManifestError(ValueError):
    """Raised when a manifest is malformed or violates record invariants."""


@dataclass(eq=False)
class GrayImage:
    """8-bit grayscale raster stored row-major as a (height, width) uint8 array."""

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.pixels)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"image must be a non-empty 2-D array, got shape {arr.shape}")
        if arr.dtype != np.uint8:
            if np.issubdtype(arr.dtype, np.floating) and not np.all(np.isfinite(arr)):
                raise ValueError("image contains non-finite values")
            if arr.min() < 0 or arr.max() > 255:
                raise ValueError("intensities must lie in [0, 255]")
            arr = arr.astype(np.uint8)
        self.pixels = np.ascontiguousarray(arr)

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @classmethod
    def blank(cls, width: int, height: int) -> "GrayImage":
        return cls(np.full((height, width), 255, dtype=np.uint8))

    def copy(self) -> "GrayImage":
        return GrayImage(self.pixels.copy())

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(np.array_equal(self.pixels, other.pixels))

    def __repr__(self):
        return f"GrayImage(width={self.width}, height={self.height})"


def _read_token(data: bytes, pos: int) -> Tuple[bytes, int]:
    n = len(data)
    while pos < n:
        c = data[pos:pos + 1]
        if c == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
        pos += 1
    return data[start:pos], pos


def read_pgm(path: PathLike) -> GrayImage:
    """Read a binary (P5) PGM file with maxval 255."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"missing image file: {path}")
    data = path.read_bytes()
    magic = data[:2]
    if magic != b"P5":
        raise PGMError(f"{path}: unsupported magic {magic!r} (expected b'P5')")
    pos = 2
    fields = []
    for _ in range(3):
        tok, pos = _read_token(data, pos)
        if not tok.isdigit():
            raise PGMError(f"{path}: malformed header near byte {pos}")
        fields.append(int(tok))
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise PGMError(f"{path}: malformed header, non-positive size {width}x{height}")
    if maxval != 255:
        raise PGMError(f"{path}: unsupported maxval {maxval} (expected 255)")
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise PGMError(f"{path}: malformed header, missing separator before payload")
    pos += 1
    payload = data[pos:]
    if len(payload) < width * height:
        raise PGMError(f"{path}: truncated payload ({len(payload)} of {width * height} bytes)")
    pixels = np.frombuffer(payload, dtype=np.uint8, count=width * height).reshape(height, width)
    return GrayImage(pixels.copy())


def write_pgm(img: GrayImage, path: PathLike) -> None:
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(img.pixels.tobytes())


def read_image(path: PathLike) -> GrayImage:
    """Read a PGM, or convert any Pillow-readable raster to grayscale."""
    path = Path(path)
    if path.suffix.lower() in (".pgm", ".pnm"):
        return read_pgm(path)
    if not path.is_file():
        raise FileNotFoundError(f"missing image file: {path}")
    from PIL import Image

    with Image.open(path) as im:
        return GrayImage(np.asarray(im.convert("L"), dtype=np.uint8).copy())


# -- records -----------------------------------------------------------------


class LineStatus(str, enum.Enum):
    AUTO = "auto"
    VERIFIED = "verified"
    SELECTED = "selected"
    DISCARDED = "discarded"


@dataclass
class PageRecord:
    page_id: str
    image_path: str
    transcript: List[str] = field(default_factory=list)

    def validate(self):
        if not isinstance(self.page_id, str) or not self.page_id:
            raise ManifestError("page_id must be a nonempty string")
        for i, line in enumerate(self.transcript):
            if not isinstance(line, str):
                raise ManifestError(f"page {self.page_id!r}: transcript line {i} is not a string")
            if "\n" in line or "\r" in line:
                raise ManifestError(f"page {self.page_id!r}: transcript line {i} contains a line break")


@dataclass
class LineRecord:
    page_id: str
    line_index: int
    bbox: Tuple[int, int, int, int]
    image_path: str = ""
    status: LineStatus = LineStatus.AUTO
    transcript: Optional[str] = None
    # strip pixels, kept in memory only
    image: Optional[GrayImage] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.bbox = tuple(int(v) for v in self.bbox)
        self.status = LineStatus(self.status)

    @property
    def center_y(self) -> float:
        return self.bbox[1] + self.bbox[3] / 2.0

    def validate(self, page_size: Optional[Tuple[int, int]] = None):
        name = f"line {self.page_id!r}#{self.line_index}"
        if not isinstance(self.page_id, str) or not self.page_id:
            raise ManifestError(f"{name}: page_id must be a nonempty string")
        if self.line_index < 0:
            raise ManifestError(f"{name}: negative line_index")
        if len(self.bbox) != 4:
            raise ManifestError(f"{name}: bbox must have 4 values")
        x, y, w, h = self.bbox
        if x < 0 or y < 0 or w < 1 or h < 1:
            raise ManifestError(f"{name}: invalid bbox {self.bbox}")
        if page_size is not None:
            pw, ph = page_size
            if x + w > pw or y + h > ph:
                raise ManifestError(f"{name}: bbox {self.bbox} exceeds page bounds {pw}x{ph}")
        if self.status in (LineStatus.SELECTED, LineStatus.VERIFIED) and self.transcript is None:
            raise ManifestError(f"{name}: status {self.status.value} requires a transcript")
        if self.transcript is not None and ("\n" in self.transcript or "\r" in self.transcript):
            raise ManifestError(f"{name}: transcript contains a line break")


def validate_lines(lines: Sequence[LineRecord]) -> None:
    """Check every record and the per-page ordering invariant."""
    last = {}
    for rec in lines:
        rec.validate()
        prev = last.get(rec.page_id)
        if prev is not None:
            if rec.line_index <= prev.line_index:
                raise ManifestError(
                    f"line {rec.page_id!r}#{rec.line_index}: line_index not increasing within page")
            if rec.center_y <= prev.center_y:
                raise ManifestError(
                    f"line {rec.page_id!r}#{rec.line_index}: vertical center not below previous line")
        last[rec.page_id] = rec


# -- manifests ---------------------------------------------------------------


def _dump_json(obj: Any, path: PathLike) -> None:
    text = json.dumps(obj, indent=2, ensure_ascii=False) + "\n"
    Path(path).write_text(text, encoding="utf-8")


def _entries(obj: Any, key: str, path: PathLike) -> list:
    if isinstance(obj, list):
        return obj
    if isinstance(obj, dict) and key in obj:
        version = obj.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ManifestError(f"{path}: unsupported schema_version {version}")
        if not isinstance(obj[key], list):
            raise ManifestError(f"{path}: {key!r} must be a list")
        return obj[key]
    raise ManifestError(f"{path}: expected a list or an object with {key!r}")


def _load_json(path: PathLike) -> Any:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: invalid JSON: {exc}") from exc


def load_corpus_manifest(path: PathLike) -> List[PageRecord]:
    pages = []
    seen = set()
    for i, entry in enumerate(_entries(_load_json(path), "pages", path)):
        if not isinstance(entry, dict):
            raise ManifestError(f"{path}: page entry {i} is not an object")
        missing = [k for k in ("page_id", "image", "transcript") if k not in entry]
        if missing:
            raise ManifestError(f"{path}: page entry {i} missing fields {missing}")
        transcript = entry["transcript"]
        if isinstance(transcript, str):
            transcript = transcript.split("\n") if transcript else []
        rec = PageRecord(entry["page_id"], entry["image"], list(transcript))
        rec.validate()
        if rec.page_id in seen:
            raise ManifestError(f"{path}: duplicate page_id {rec.page_id!r}")
        seen.add(rec.page_id)
        pages.append(rec)
    return pages


def save_corpus_manifest(pages: Iterable[PageRecord], path: PathLike) -> None:
    out = []
    seen = set()
    for rec in pages:
        rec.validate()
        if rec.page_id in seen:
            raise ManifestError(f"duplicate page_id {rec.page_id!r}")
        seen.add(rec.page_id)
        out.append({"page_id": rec.page_id, "image": rec.image_path, "transcript": list(rec.transcript)})
    _dump_json({"schema_version": SCHEMA_VERSION, "pages": out}, path)


def line_to_dict(rec: LineRecord) -> dict:
    d = {
        "page_id": rec.page_id,
        "line_index": rec.line_index,
        "bbox": list(rec.bbox),
        "image": rec.image_path,
        "status": rec.status.value,
    }
    if rec.transcript is not None:
        d["transcript"] = rec.transcript
    return d


def save_line_manifest(lines: Sequence[LineRecord], path: PathLike) -> None:
    validate_lines(lines)
    _dump_json({"schema_version": SCHEMA_VERSION, "lines": [line_to_dict(r) for r in lines]}, path)


def load_line_manifest(path: PathLike) -> List[LineRecord]:
    lines = []
    for i, entry in enumerate(_entries(_load_json(path), "lines", path)):
        if not isinstance(entry, dict):
            raise ManifestError(f"{path}: line entry {i} is not an object")
        missing = [k for k in ("page_id", "line_index", "bbox", "image", "status") if k not in entry]
        if missing:
            raise ManifestError(f"{path}: line entry {i} missing fields {missing}")
        try:
            rec = LineRecord(
                page_id=entry["page_id"],
                line_index=int(entry["line_index"]),
                bbox=tuple(entry["bbox"]),
                image_path=entry["image"],
                status=entry["status"],
                transcript=entry.get("transcript"),
            )
        except (TypeError, ValueError) as exc:
            raise ManifestError(f"{path}: line entry {i} ({entry.get('page_id')!r}): {exc}") from exc
        lines.append(rec)
    try:
        validate_lines(lines)
    except ManifestError as exc:
        raise ManifestError(f"{path}: {exc}") from exc
    return lines


def resolve(base: PathLike, rel: str) -> Path:
    """Resolve a manifest path relative to the manifest's directory."""
    p = Path(rel)
    return p if p.is_absolute() else Path(base).parent / p
