"""Image files, label export and run reports.

Two formats are read and written:

* binary PGM (``P5``), 2D, maxval up to 65535 (two big-endian bytes per
  sample above 255);
* PWV1 raw volumes: ``b"PWV1"``, three little-endian uint32 extents, one
  byte of element width (8, 16 or 32), then little-endian samples in
  row-major order.

Readers parse the whole header and check the payload length before any
sample is decoded, so a malformed file raises :class:`FormatError` and never
yields a partial image.
"""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .grid import Connectivity, GridImage, as_grid, dims3

PWV_MAGIC = b"PWV1"
_PWV_HEADER = struct.Struct("<4s3IB")
_PWV_DTYPES = {8: np.dtype("<u1"), 16: np.dtype("<u2"), 32: np.dtype("<u4")}


class FormatError(ValueError):
    """Malformed image file; ``offset`` is the byte where parsing failed."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


# -- PGM ---------------------------------------------------------------------

def _pgm_token(buf: bytes, pos: int) -> tuple[bytes, int, int]:
    """Next whitespace-delimited header token, skipping ``#`` comments.

    Returns (token, token_start, position after token).
    """
    n = len(buf)
    while pos < n:
        c = buf[pos]
        if c == ord("#"):
            while pos < n and buf[pos] not in b"\r\n":
                pos += 1
        elif chr(c) in " \t\r\n\v\f":
            pos += 1
        else:
            break
    start = pos
    while pos < n and chr(buf[pos]) not in " \t\r\n\v\f#":
        pos += 1
    return buf[start:pos], start, pos


def _pgm_int(buf: bytes, pos: int, what: str) -> tuple[int, int]:
    tok, start, pos = _pgm_token(buf, pos)
    if not tok:
        raise FormatError(f"PGM header ends before {what}", start)
    if not tok.isdigit():
        raise FormatError(f"PGM {what} is not a positive integer: {tok[:16]!r}", start)
    return int(tok), pos


def parse_pgm(buf: bytes) -> np.ndarray:
    if buf[:2] != b"P5":
        raise FormatError("not a binary PGM (magic P5 expected)", 0)
    pos = 2
    if pos >= len(buf) or chr(buf[pos]) not in " \t\r\n\v\f":
        raise FormatError("missing whitespace after PGM magic", pos)
    start = _pgm_token(buf, pos)[1]
    width, pos = _pgm_int(buf, pos, "width")
    if width == 0:
        raise FormatError("PGM width is zero", start)
    start = _pgm_token(buf, pos)[1]
    height, pos = _pgm_int(buf, pos, "height")
    if height == 0:
        raise FormatError("PGM height is zero", start)
    start = _pgm_token(buf, pos)[1]
    maxval, pos = _pgm_int(buf, pos, "maxval")
    if not 0 < maxval <= 65535:
        raise FormatError(f"unsupported PGM maxval {maxval}", start)
    if pos >= len(buf) or chr(buf[pos]) not in " \t\r\n\v\f":
        raise FormatError("missing whitespace after PGM maxval", pos)
    pos += 1
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    expected = width * height * dtype.itemsize
    if len(buf) - pos < expected:
        raise FormatError(
            f"PGM payload truncated: {len(buf) - pos} of {expected} bytes", len(buf)
        )
    if len(buf) - pos > expected:
        raise FormatError("trailing bytes after PGM payload", pos + expected)
    data = np.frombuffer(buf, dtype=dtype, count=width * height, offset=pos)
    if data.size and int(data.max()) > maxval:
        bad = int(np.argmax(data > maxval))
        raise FormatError(f"sample exceeds maxval {maxval}", pos + bad * dtype.itemsize)
    return data.astype(dtype.newbyteorder("=")).reshape(height, width)


def encode_pgm(img) -> bytes:
    grid = as_grid(img)
    data = grid.data
    if grid.ndim == 1:
        data = data.reshape(1, -1)
    if data.ndim != 2:
        raise ValueError("PGM holds 2D images only")
    if data.dtype == np.uint8:
        maxval, payload = 255, data.tobytes()
    elif data.dtype == np.uint16:
        maxval, payload = 65535, data.astype(">u2").tobytes()
    else:
        raise ValueError(f"PGM cannot hold {data.dtype} samples")
    h, w = data.shape
    return b"P5\n%d %d\n%d\n" % (w, h, maxval) + payload


# -- PWV1 --------------------------------------------------------------------

def parse_pwv(buf: bytes) -> np.ndarray:
    if len(buf) < _PWV_HEADER.size:
        if buf[: len(PWV_MAGIC)] != PWV_MAGIC[: len(buf)]:
            raise FormatError("bad PWV1 magic", 0)
        raise FormatError("PWV1 header truncated", len(buf))
    magic, d, h, w, width = _PWV_HEADER.unpack_from(buf)
    if magic != PWV_MAGIC:
        raise FormatError("bad PWV1 magic", 0)
    for i, extent in enumerate((d, h, w)):
        if extent == 0:
            raise FormatError("PWV1 extent is zero", 4 + 4 * i)
    if width not in _PWV_DTYPES:
        raise FormatError(f"unsupported PWV1 element width {width}", 16)
    dtype = _PWV_DTYPES[width]
    count = d * h * w
    pos = _PWV_HEADER.size
    expected = count * dtype.itemsize
    if len(buf) - pos < expected:
        raise FormatError(
            f"PWV1 payload truncated: {len(buf) - pos} of {expected} bytes", len(buf)
        )
    if len(buf) - pos > expected:
        raise FormatError("trailing bytes after PWV1 payload", pos + expected)
    data = np.frombuffer(buf, dtype=dtype, count=count, offset=pos)
    return data.astype(dtype.newbyteorder("=")).reshape(d, h, w)


def encode_pwv(img, width: int | None = None) -> bytes:
    """PWV1 bytes; 1D and 2D images are stored with leading extents of 1."""
    data = np.asarray(img.data if isinstance(img, GridImage) else img)
    width = width or data.dtype.itemsize * 8
    if width not in _PWV_DTYPES:
        raise ValueError(f"PWV1 element width must be 8, 16 or 32, got {width}")
    dtype = _PWV_DTYPES[width]
    if data.size and (data.min() < 0 or data.max() > np.iinfo(dtype).max):
        raise ValueError(f"values do not fit in {width} bits")
    d, h, w = dims3(data.shape)
    return _PWV_HEADER.pack(PWV_MAGIC, d, h, w, width) + data.astype(dtype).tobytes()


# -- files -------------------------------------------------------------------

def load_image(path, format: str = "auto") -> GridImage:
    """Read a PGM (2D) or PWV1 (3D) file; ``auto`` looks at the magic bytes."""
    buf = Path(path).read_bytes()
    if format == "auto":
        if buf[:4] == PWV_MAGIC:
            format = "pwv"
        elif buf[:2] == b"P5":
            format = "pgm"
        else:
            raise FormatError("unrecognised file magic", 0)
    if format == "pgm":
        return GridImage(parse_pgm(buf))
    if format == "pwv":
        return GridImage(parse_pwv(buf))
    raise ValueError(f"unknown format {format!r}")


def save_pgm(path, img) -> None:
    Path(path).write_bytes(encode_pgm(img))


def save_pwv(path, img, width: int | None = None) -> None:
    Path(path).write_bytes(encode_pwv(img, width))


# -- label export ------------------------------------------------------------

def compact_labels(labels) -> np.ndarray:
    """Renumber labels 0..R-1 in order of first appearance (row-major)."""
    labels = np.asarray(labels)
    flat = labels.reshape(-1)
    uniq, first, inverse = np.unique(flat, return_index=True, return_inverse=True)
    rank = np.empty(uniq.size, dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(uniq.size)
    return rank[inverse].astype(np.uint32).reshape(labels.shape)


def boundary_overlay(labels, conn: Connectivity | None = None) -> np.ndarray:
    """uint8 mask, 255 where a pixel has a neighbour with another label."""
    labels = np.asarray(labels)
    conn = conn or Connectivity.default_for(labels.ndim)
    vol = labels.reshape(dims3(labels.shape))
    d, h, w = vol.shape
    pad = np.pad(vol, 1, mode="edge")
    mask = np.zeros(vol.shape, dtype=bool)
    for dz, dy, dx in conn.offsets():
        shifted = pad[1 + dz : 1 + dz + d, 1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
        # edge padding repeats the border pixel, which never differs from it
        mask |= shifted != vol
    return np.where(mask, 255, 0).astype(np.uint8).reshape(labels.shape)


def export_labels(hierarchy, out_dir, conn: Connectivity | None = None) -> list[Path]:
    """Write labels_k.pwv, overlay_k.{pgm,pwv} and regions.csv; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for k, layer in enumerate(hierarchy.layers):
        path = out / f"labels_{k}.pwv"
        save_pwv(path, compact_labels(layer), width=32)
        written.append(path)
        overlay = boundary_overlay(layer, conn)
        if overlay.ndim <= 2:
            path = out / f"overlay_{k}.pgm"
            save_pgm(path, overlay)
        else:
            path = out / f"overlay_{k}.pwv"
            save_pwv(path, overlay)
        written.append(path)
    path = out / "regions.csv"
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["layer", "region_count"])
        for k, count in enumerate(hierarchy.region_counts):
            writer.writerow([k, count])
    written.append(path)
    return written


# -- run report --------------------------------------------------------------

@dataclass
class RunRecord:
    """Flat key=value summary of one CLI run.

    Timings are the minimum over all repeats, per step and per layer.
    """

    config: dict[str, object] = field(default_factory=dict)
    layer_timings: list[dict[str, float]] = field(default_factory=list)
    region_counts: list[int] = field(default_factory=list)
    repeats: int = 0
    verification: str | None = None

    def add_run(self, timings: list[dict[str, float]]) -> None:
        if not self.layer_timings:
            self.layer_timings = [dict(t) for t in timings]
        else:
            for best, t in zip(self.layer_timings, timings):
                for key, value in t.items():
                    best[key] = min(best.get(key, value), value)
        self.repeats += 1

    def to_text(self) -> str:
        lines = [f"config.{k}={v}" for k, v in self.config.items()]
        lines.append(f"repeats={self.repeats}")
        lines.append(f"layers={len(self.region_counts)}")
        for k, count in enumerate(self.region_counts):
            lines.append(f"layer.{k}.region_count={count}")
        for k, t in enumerate(self.layer_timings):
            for key, value in t.items():
                lines.append(f"layer.{k}.time_ms.{key}={value}")
        lines.append(f"verification={self.verification or 'not_run'}")
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.to_text())


def parse_report(text: str) -> dict[str, str]:
    out = {}
    for line in text.splitlines():
        if line.strip():
            key, _, value = line.partition("=")
            out[key] = value
    return out
