"""Flat binary container for recorded frame streams.

Layout (all integers little-endian)::

    offset  size  field
    0       4     magic b"QFRM"
    4       2     format version (currently 1)
    6       2     width
    8       2     height
    10      2     bins per pixel
    12      4     frame count
    16      ...   frame_count * height * width bytes, one pixel bin per byte,
                  frames in stream order, each frame row-major

A plain-text sidecar ``<path>.meta.txt`` carries ``key: value`` lines with
stream metadata (generator description, seed, ...).
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

from pseudocount.density import QuantizedFrame
from pseudocount.errors import ShapeError

MAGIC = b"QFRM"
VERSION = 1
_HEADER = struct.Struct("<4sHHHHI")


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta.txt")


def write_frame_stream(path, frames: Iterable[QuantizedFrame], metadata: Optional[Dict] = None) -> Path:
    frames = list(frames)
    if not frames:
        raise ShapeError("cannot write an empty frame stream")
    h, w, bins = frames[0].height, frames[0].width, frames[0].bins
    for f in frames:
        if (f.height, f.width, f.bins) != (h, w, bins):
            raise ShapeError("all frames in a stream must share dimensions and bin count")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, w, h, bins, len(frames)))
        for f in frames:
            fh.write(f.pixels.tobytes())
    meta = {"width": w, "height": h, "bins": bins, "frames": len(frames)}
    meta.update(metadata or {})
    with open(sidecar_path(path), "w") as fh:
        for k, v in meta.items():
            fh.write(f"{k}: {v}\n")
    return path


def read_header(path) -> Tuple[int, int, int, int]:
    """Return ``(width, height, bins, frame_count)``."""
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
    if len(raw) < _HEADER.size:
        raise ShapeError(f"{path}: truncated header")
    magic, version, w, h, bins, count = _HEADER.unpack(raw)
    if magic != MAGIC:
        raise ShapeError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise ShapeError(f"{path}: unsupported container version {version}")
    return w, h, bins, count


def read_frame_stream(path) -> List[QuantizedFrame]:
    w, h, bins, count = read_header(path)
    data = np.fromfile(path, dtype=np.uint8, offset=_HEADER.size)
    if data.size != count * h * w:
        raise ShapeError(f"{path}: expected {count * h * w} pixel bytes, found {data.size}")
    return [QuantizedFrame(block, bins=bins) for block in data.reshape(count, h, w)]


def read_metadata(path) -> Dict[str, str]:
    meta = {}
    sidecar = sidecar_path(path)
    if sidecar.exists():
        for line in sidecar.read_text().splitlines():
            if ":" in line:
                k, v = line.split(":", 1)
                meta[k.strip()] = v.strip()
    return meta
