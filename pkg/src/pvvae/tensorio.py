"""PVT1 tensor container: a minimal bit-exact float32 array file.

Layout on disk:
    magic ``PVT1`` (4 bytes)
    header length, 4-byte little-endian unsigned int
    UTF-8 JSON header, e.g. ``{"dtype": "f32", "shape": [17, 64, 64, 3], "layout": "THWC"}``
    raw little-endian IEEE-754 float32 payload, row-major in layout order
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

MAGIC = b"PVT1"


def _default_layout(ndim: int) -> str:
    # "THWC" for video-shaped tensors; generic axis tag otherwise.
    return "THWC" if ndim == 4 else "ND"


def write_tensor(path: str | Path, array: np.ndarray, layout: str | None = None) -> None:
    """Write ``array`` as float32 to ``path`` in the PVT1 container format."""
    arr = np.asarray(array, dtype=np.float32)
    if not arr.flags["C_CONTIGUOUS"]:
        arr = np.ascontiguousarray(arr)   # keeps ndim, unlike calling it on 0-d
    header = {
        "dtype": "f32",
        "shape": list(arr.shape),
        "layout": layout or _default_layout(arr.ndim),
    }
    blob = json.dumps(header).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        f.write(arr.astype("<f4", copy=False).tobytes(order="C"))


def read_tensor(path: str | Path) -> np.ndarray:
    """Read a PVT1 file back into a float32 array (lossless roundtrip)."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        raw_len = f.read(4)
        if len(raw_len) != 4:
            raise FormatError(f"{path}: truncated header length field")
        (header_len,) = struct.unpack("<I", raw_len)
        blob = f.read(header_len)
        if len(blob) != header_len:
            raise FormatError(f"{path}: truncated header")
        try:
            header = json.loads(blob.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise FormatError(f"{path}: header parse failure: {exc}") from exc
        if header.get("dtype") != "f32":
            raise FormatError(f"{path}: unsupported dtype {header.get('dtype')!r}")
        shape = header.get("shape")
        if not isinstance(shape, list) or not all(isinstance(s, int) and s >= 0 for s in shape):
            raise FormatError(f"{path}: invalid shape {shape!r}")
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        payload = f.read()
    if len(payload) != 4 * count:
        raise FormatError(
            f"{path}: payload holds {len(payload) // 4} floats, header declares {count}"
        )
    return np.frombuffer(payload, dtype="<f4").astype(np.float32, copy=True).reshape(shape)
