"""Core domain types and the bit-exact interchange formats.

Feature tensor file layout ("IPFT", little-endian, 32-byte header):

    offset  size  field
    0       4     magic b"IPFT"
    4       4     format version, u32 (currently 1)
    8       4     grid height, u32
    12      4     grid width, u32
    16      4     channels, u32
    20      4     image height in pixels, u32
    24      4     image width in pixels, u32
    28      1     source tag, u8 (0=dino, 1=sd, 2=fused, 3=other)
    29      3     zero padding (ignored on read, aligns payload to 4 bytes)
    32      -     height*width*channels IEEE-754 binary32 LE values,
                  row-major (row, col, channel)

Masks travel as binary PGM (P5, maxval 255): a pixel > 127 decodes to 1,
the writer emits only 0 and 255. Point prompts travel as UTF-8 JSON.
"""

from __future__ import annotations

import enum
import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, NamedTuple

import numpy as np

from .errors import (
    DataError,
    FormatError,
    GeometryError,
    ParamError,
    TruncatedStreamError,
    UnsupportedVersionError,
)

IPFT_MAGIC = b"IPFT"
IPFT_VERSION = 1
IPFT_HEADER = struct.Struct("<4sIIIIIIB3x")
IPFT_HEADER_LEN = IPFT_HEADER.size  # 32

_PNM_WHITESPACE = b" \t\n\r\x0b\x0c"


class SourceTag(enum.Enum):
    """Provenance of a feature map; encoded as one byte on disk."""

    DINO = 0
    SD = 1
    FUSED = 2
    OTHER = 3

    @classmethod
    def from_code(cls, code: int) -> "SourceTag":
        try:
            return cls(code)
        except ValueError:
            raise FormatError(f"unknown source tag code {code}") from None

    @classmethod
    def from_name(cls, name: str) -> "SourceTag":
        try:
            return cls[name.upper()]
        except KeyError:
            raise ParamError(f"unknown source tag {name!r}") from None


@dataclass(frozen=True)
class ImageGeometry:
    """Pixel dimensions of the image a feature grid was computed from."""

    image_height: int
    image_width: int

    def __post_init__(self):
        if self.image_height < 1 or self.image_width < 1:
            raise GeometryError(
                f"image dimensions must be >= 1, got {self.image_height}x{self.image_width}"
            )


class FeatureMap:
    """Dense H x W x C feature tensor with image-geometry metadata."""

    def __init__(self, data: np.ndarray, source_tag: SourceTag, geometry: ImageGeometry):
        arr = np.asarray(data, dtype=np.float32)
        if arr.ndim != 3:
            raise ParamError(f"feature data must be 3-dimensional, got shape {arr.shape}")
        h, w, c = arr.shape
        if h < 1 or w < 1 or c < 1:
            raise ParamError(f"feature dimensions must all be >= 1, got {h}x{w}x{c}")
        finite = np.isfinite(arr)
        if not finite.all():
            idx = int(np.flatnonzero(~finite.ravel())[0])
            raise DataError(f"non-finite value at flat index {idx}", index=idx)
        if geometry.image_height < h or geometry.image_width < w:
            raise GeometryError(
                f"feature grid {h}x{w} finer than image "
                f"{geometry.image_height}x{geometry.image_width}"
            )
        self.data = arr
        self.source_tag = source_tag
        self.geometry = geometry

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FeatureMap):
            return NotImplemented
        return (
            self.source_tag == other.source_tag
            and self.geometry == other.geometry
            and self.data.shape == other.data.shape
            and self.data.tobytes() == other.data.tobytes()
        )

    def __repr__(self) -> str:
        return (
            f"FeatureMap({self.height}x{self.width}x{self.channels}, "
            f"tag={self.source_tag.name.lower()}, geometry={self.geometry})"
        )


class SegMask:
    """Binary pixel mask: 0 background, 1 foreground."""

    def __init__(self, data: np.ndarray):
        arr = np.asarray(data, dtype=np.uint8)
        if arr.ndim != 2:
            raise ParamError(f"mask must be 2-dimensional, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ParamError(f"mask dimensions must be >= 1, got {arr.shape}")
        if not np.isin(arr, (0, 1)).all():
            raise ParamError("mask values must be exactly 0 or 1")
        self.data = arr

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SegMask):
            return NotImplemented
        return self.data.shape == other.data.shape and self.data.tobytes() == other.data.tobytes()

    def __repr__(self) -> str:
        return f"SegMask({self.height}x{self.width}, foreground={int(self.data.sum())}px)"


class PromptPoint(NamedTuple):
    """A single pixel-coordinate prompt with its similarity score."""

    x: int
    y: int
    score: float


@dataclass
class PointPromptSet:
    """Positive and negative point prompts handed to a promptable segmenter."""

    positives: list[PromptPoint]
    negatives: list[PromptPoint]
    k: int
    c: int

    def __post_init__(self):
        if self.k < 1 or self.c < 1:
            raise ParamError(f"k and c must be >= 1, got k={self.k} c={self.c}")
        if self.c > self.k:
            raise ParamError(f"c={self.c} must not exceed k={self.k}")
        for label, points in (("positives", self.positives), ("negatives", self.negatives)):
            if len(points) != self.c:
                raise ParamError(f"{label} length {len(points)} != c={self.c}")
            for p in points:
                if p.x < 0 or p.y < 0:
                    raise ParamError(f"{label} contain negative coordinate ({p.x}, {p.y})")
                if not math.isfinite(p.score):
                    raise ParamError(f"{label} contain non-finite score")


def _open_maybe(source, mode: str):
    if hasattr(source, "read" if "r" in mode else "write"):
        return source, False
    return open(Path(source), mode), True


def _read_exact(stream: BinaryIO, n: int, offset: int, what: str) -> bytes:
    try:
        buf = stream.read(n)
    except (OverflowError, MemoryError):
        # a declared size beyond addressable memory cannot be present
        raise TruncatedStreamError(
            f"truncated stream while reading {what}: declared size {n} is unsatisfiable",
            offset=offset,
        ) from None
    if buf is None:
        buf = b""
    if len(buf) != n:
        raise TruncatedStreamError(
            f"truncated stream while reading {what}: wanted {n} bytes at offset {offset}, "
            f"got {len(buf)}",
            offset=offset + len(buf),
        )
    return buf


def write_feature_map(fm: FeatureMap, destination) -> None:
    """Serialize a feature map to the IPFT binary layout."""
    stream, owned = _open_maybe(destination, "wb")
    try:
        header = IPFT_HEADER.pack(
            IPFT_MAGIC,
            IPFT_VERSION,
            fm.height,
            fm.width,
            fm.channels,
            fm.geometry.image_height,
            fm.geometry.image_width,
            fm.source_tag.value,
        )
        payload = np.ascontiguousarray(fm.data, dtype="<f4").tobytes()
        written = 0
        try:
            stream.write(header)
            written = len(header)
            stream.write(payload)
        except OSError as exc:
            raise OSError(f"write failed at byte offset {written}: {exc}") from exc
    finally:
        if owned:
            stream.close()


def read_feature_map(source) -> FeatureMap:
    """Parse an IPFT stream, validating magic, version, header and finiteness."""
    stream, owned = _open_maybe(source, "rb")
    try:
        raw = _read_exact(stream, IPFT_HEADER_LEN, 0, "header")
        magic, version, h, w, c, img_h, img_w, tag_code = IPFT_HEADER.unpack(raw)
        if magic != IPFT_MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {IPFT_MAGIC!r}")
        if version != IPFT_VERSION:
            raise UnsupportedVersionError(f"unsupported format version {version}")
        if h < 1 or w < 1 or c < 1:
            raise FormatError(f"header dimensions must be >= 1, got {h}x{w}x{c}")
        if img_h < h or img_w < w:
            raise FormatError(
                f"header geometry {img_h}x{img_w} finer than feature grid {h}x{w}"
            )
        tag = SourceTag.from_code(tag_code)
        count = h * w * c
        payload = _read_exact(stream, 4 * count, IPFT_HEADER_LEN, "payload")
        if stream.read(1) != b"":
            raise FormatError("trailing data after payload")
        values = np.frombuffer(payload, dtype="<f4")
        finite = np.isfinite(values)
        if not finite.all():
            idx = int(np.flatnonzero(~finite)[0])
            raise DataError(f"non-finite value at flat index {idx}", index=idx)
        data = values.reshape(h, w, c).copy()
        return FeatureMap(data, tag, ImageGeometry(img_h, img_w))
    finally:
        if owned:
            stream.close()


def write_mask(mask: SegMask, destination) -> None:
    """Write a mask as canonical binary PGM (P5, maxval 255, pixels 0 or 255)."""
    stream, owned = _open_maybe(destination, "wb")
    try:
        stream.write(f"P5\n{mask.width} {mask.height}\n255\n".encode("ascii"))
        stream.write((mask.data * np.uint8(255)).tobytes())
    finally:
        if owned:
            stream.close()


def _next_pnm_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    n = len(buf)
    while pos < n:
        b = buf[pos : pos + 1]
        if b == b"#":
            while pos < n and buf[pos : pos + 1] != b"\n":
                pos += 1
        elif b in _PNM_WHITESPACE:
            pos += 1
        else:
            break
    start = pos
    while pos < n and buf[pos : pos + 1] not in _PNM_WHITESPACE:
        pos += 1
    if start == pos:
        raise FormatError("unexpected end of PGM header")
    return buf[start:pos], pos


def read_mask(source) -> SegMask:
    """Parse a binary PGM (P5) mask; pixel values > 127 decode to foreground."""
    stream, owned = _open_maybe(source, "rb")
    try:
        buf = stream.read()
    finally:
        if owned:
            stream.close()
    if buf[:2] != b"P5":
        raise FormatError(f"bad PGM magic {buf[:2]!r}, expected b'P5'")
    if len(buf) < 3 or buf[2:3] not in _PNM_WHITESPACE and buf[2:3] != b"#":
        raise FormatError("PGM magic must be followed by whitespace")
    pos = 2
    tokens = []
    for _ in range(3):
        token, pos = _next_pnm_token(buf, pos)
        if not token.isdigit():
            raise FormatError(f"non-numeric PGM header token {token!r}")
        tokens.append(int(token))
    width, height, maxval = tokens
    if maxval != 255:
        raise FormatError(f"PGM maxval must be 255, got {maxval}")
    if pos >= len(buf) or buf[pos : pos + 1] not in _PNM_WHITESPACE:
        raise FormatError("PGM header must end with a single whitespace byte")
    pos += 1
    payload = buf[pos:]
    if len(payload) != width * height:
        raise FormatError(
            f"PGM size mismatch: header says {width}x{height} "
            f"({width * height} bytes), payload has {len(payload)}"
        )
    if width < 1 or height < 1:
        raise FormatError(f"PGM dimensions must be >= 1, got {width}x{height}")
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width)
    return SegMask((pixels > 127).astype(np.uint8))


PROMPT_SCHEMA_VERSION = 1


def write_prompts(pset: PointPromptSet, destination) -> None:
    """Serialize a prompt set to the versioned JSON schema."""
    doc = {
        "version": PROMPT_SCHEMA_VERSION,
        "k": pset.k,
        "c": pset.c,
        "positives": [{"x": p.x, "y": p.y, "score": p.score} for p in pset.positives],
        "negatives": [{"x": p.x, "y": p.y, "score": p.score} for p in pset.negatives],
    }
    payload = (json.dumps(doc, indent=2) + "\n").encode("utf-8")
    stream, owned = _open_maybe(destination, "wb")
    try:
        stream.write(payload)
    finally:
        if owned:
            stream.close()


def _require(condition: bool, path: str, message: str) -> None:
    if not condition:
        raise FormatError(f"{path}: {message}")


def _parse_int(doc: dict, key: str, path: str) -> int:
    _require(key in doc, path, f"missing key {key!r}")
    value = doc[key]
    _require(isinstance(value, int) and not isinstance(value, bool), f"{path}.{key}", "must be an integer")
    return value


def _parse_points(doc: dict, key: str, c: int, path: str) -> list[PromptPoint]:
    _require(key in doc, path, f"missing key {key!r}")
    items = doc[key]
    _require(isinstance(items, list), f"{path}.{key}", "must be an array")
    _require(len(items) == c, f"{path}.{key}", f"length {len(items)} != c={c}")
    points = []
    for i, item in enumerate(items):
        ipath = f"{path}.{key}[{i}]"
        _require(isinstance(item, dict), ipath, "must be an object")
        x = _parse_int(item, "x", ipath)
        y = _parse_int(item, "y", ipath)
        _require(x >= 0 and y >= 0, ipath, f"negative coordinate ({x}, {y})")
        _require("score" in item, ipath, "missing key 'score'")
        score = item["score"]
        _require(
            isinstance(score, (int, float)) and not isinstance(score, bool),
            f"{ipath}.score",
            "must be a number",
        )
        _require(math.isfinite(score), f"{ipath}.score", "must be finite")
        points.append(PromptPoint(x, y, float(score)))
    return points


def read_prompts(source) -> PointPromptSet:
    """Parse and validate the prompt JSON schema."""
    stream, owned = _open_maybe(source, "rb")
    try:
        raw = stream.read()
    finally:
        if owned:
            stream.close()
    try:
        doc = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"$: invalid JSON: {exc}") from exc
    _require(isinstance(doc, dict), "$", "document must be an object")
    version = _parse_int(doc, "version", "$")
    if version != PROMPT_SCHEMA_VERSION:
        raise FormatError(f"$.version: unsupported prompt schema version {version}")
    k = _parse_int(doc, "k", "$")
    c = _parse_int(doc, "c", "$")
    _require(k >= 1, "$.k", f"must be >= 1, got {k}")
    _require(c >= 1, "$.c", f"must be >= 1, got {c}")
    _require(c <= k, "$.c", f"c={c} must not exceed k={k}")
    positives = _parse_points(doc, "positives", c, "$")
    negatives = _parse_points(doc, "negatives", c, "$")
    return PointPromptSet(positives=positives, negatives=negatives, k=k, c=c)
