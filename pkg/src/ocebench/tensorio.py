"""Bit-exact tensor container.

Layout, all little-endian:

    bytes 0..7    magic "OCETNSR1"
    bytes 8..15   u64 header length H
    bytes 16..16+H  UTF-8 JSON header {"dtype": "f32", "shape": [...],
                    "axes": [...], "meta": {...}}
    remainder     raw 32-bit IEEE floats, row-major in axis order

Values are stored at 32-bit precision; read(write(t)) is the identity for
float32 data. One tensor per file, no compression.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import BadMagic, ShapeMismatch, TruncatedFile

MAGIC = b"OCETNSR1"

_AXIS_LABELS = ("c", "y", "z", "t")


@dataclass
class Tensor:
    """A labelled dense array. Axes are ordered labels from {c, y, z, t}."""

    data: np.ndarray
    axes: tuple[str, ...]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.asarray(self.data)
        self.axes = tuple(self.axes)
        if self.data.ndim != len(self.axes):
            raise ShapeMismatch(f"{self.data.ndim} dims vs {len(self.axes)} axis labels")
        if len(set(self.axes)) != len(self.axes):
            raise ShapeMismatch(f"duplicate axis labels: {self.axes}")
        for a in self.axes:
            if a not in _AXIS_LABELS:
                raise ShapeMismatch(f"unknown axis label {a!r}")
        if any(n < 1 for n in self.data.shape):
            raise ShapeMismatch(f"zero or negative extent in shape {self.data.shape}")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def axis(self, label: str) -> int:
        return self.axes.index(label)


def write_tensor(t: Tensor, path: str) -> None:
    """Serialize to the container format, casting values to float32."""
    if any(n < 1 for n in t.data.shape):
        raise ShapeMismatch(f"refusing to write zero-extent shape {t.data.shape}")
    payload = np.ascontiguousarray(t.data, dtype="<f4")
    header = {
        "dtype": "f32",
        "shape": list(payload.shape),
        "axes": list(t.axes),
        "meta": t.meta,
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(len(hbytes).to_bytes(8, "little"))
        fh.write(hbytes)
        fh.write(payload.tobytes())


def read_tensor(path: str) -> Tensor:
    """Parse a container file, validating magic, header and payload length."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < len(MAGIC):
        raise TruncatedFile(f"{path}: shorter than the magic header")
    if raw[: len(MAGIC)] != MAGIC:
        raise BadMagic(f"{path}: not a tensor container")
    if len(raw) < 16:
        raise TruncatedFile(f"{path}: header length field missing")
    hlen = int.from_bytes(raw[8:16], "little")
    if len(raw) < 16 + hlen:
        raise TruncatedFile(f"{path}: header truncated")
    try:
        header = json.loads(raw[16 : 16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise BadMagic(f"{path}: header is not valid JSON") from exc
    shape = tuple(int(n) for n in header["shape"])
    if any(n < 1 for n in shape):
        raise ShapeMismatch(f"{path}: illegal extent in {shape}")
    count = int(np.prod(shape))
    payload = raw[16 + hlen :]
    if len(payload) < 4 * count:
        raise TruncatedFile(f"{path}: payload has {len(payload)} bytes, need {4 * count}")
    if len(payload) != 4 * count:
        raise ShapeMismatch(f"{path}: payload length {len(payload)} != {4 * count}")
    data = np.frombuffer(payload, dtype="<f4").reshape(shape)
    return Tensor(data=data.copy(), axes=tuple(header["axes"]), meta=header.get("meta", {}))
