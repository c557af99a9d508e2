"""Parameter-set algebra and a portable named-array checkpoint format.

A ParameterSet is an ordered, immutable collection of named float32
arrays.  Every fine-tuning strategy, the zero-shot anchor, and every
ensembling step operate on ParameterSets, so interpolation and distance
live here rather than in any model class.

Checkpoints are directories containing:

    params.bin   magic + JSON table (name/shape/dtype/offset) + contiguous
                 little-endian float32 payloads
    meta.json    free-form run metadata (strategy, epoch, seed, ...)
    digest.txt   hex SHA-256 of params.bin
"""

from __future__ import annotations

import hashlib
import json
import struct
from collections.abc import Iterator, Mapping
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import AlignmentError, FormatVersionError, IntegrityError, NumericError

_MAGIC = b"SGTNARC\x00"
_FORMAT_VERSION = 1


class ParameterSet(Mapping):
    """Ordered name -> float32 array map, validated and frozen at construction."""

    def __init__(self, entries: Mapping[str, np.ndarray]):
        arrays: dict[str, np.ndarray] = {}
        for name, value in entries.items():
            if not isinstance(name, str) or not name:
                raise NumericError(f"parameter name must be a nonempty string, got {name!r}")
            # np.array (not ascontiguousarray) so 0-d scalars keep their shape
            arr = np.array(value, dtype=np.float32, order="C")
            if not np.all(np.isfinite(arr)):
                raise NumericError(f"parameter {name!r} contains non-finite values")
            arr.flags.writeable = False
            arrays[name] = arr
        self._arrays = arrays

    def __getitem__(self, name: str) -> np.ndarray:
        return self._arrays[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._arrays)

    def __len__(self) -> int:
        return len(self._arrays)

    @property
    def names(self) -> list[str]:
        return list(self._arrays)

    def shapes(self) -> dict[str, tuple[int, ...]]:
        return {name: arr.shape for name, arr in self._arrays.items()}

    def total_size(self) -> int:
        return sum(arr.size for arr in self._arrays.values())

    def digest(self) -> str:
        """Hex SHA-256 over the canonical binary serialization."""
        return hashlib.sha256(_pack(self)).hexdigest()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ParameterSet):
            return NotImplemented
        return self.names == other.names and all(
            np.array_equal(self[n], other[n]) for n in self
        )

    def __repr__(self) -> str:
        return f"ParameterSet({len(self)} arrays, {self.total_size()} values)"


def assert_aligned(a: ParameterSet, b: ParameterSet) -> None:
    """Raise AlignmentError naming the first offending parameter."""
    for name in a:
        if name not in b:
            raise AlignmentError(f"parameter {name!r} missing from second set")
        if a[name].shape != b[name].shape:
            raise AlignmentError(
                f"parameter {name!r} shape mismatch: {a[name].shape} vs {b[name].shape}"
            )
    for name in b:
        if name not in a:
            raise AlignmentError(f"parameter {name!r} missing from first set")


def interpolate(anchor: ParameterSet, moving: ParameterSet, w: float) -> ParameterSet:
    """Elementwise w*anchor + (1-w)*moving over aligned parameter sets.

    The endpoints are returned as exact copies so that w=0 and w=1 are
    bit-identical to the inputs.
    """
    assert_aligned(anchor, moving)
    if not (0.0 <= w <= 1.0):
        raise NumericError(f"interpolation factor must lie in [0, 1], got {w}")
    if w == 0.0:
        return ParameterSet({n: moving[n] for n in moving})
    if w == 1.0:
        return ParameterSet({n: anchor[n] for n in anchor})
    w32 = np.float32(w)
    return ParameterSet(
        {n: w32 * anchor[n] + (np.float32(1.0) - w32) * moving[n] for n in anchor}
    )


def squared_distance(a: ParameterSet, b: ParameterSet) -> float:
    """Sum over all elements of squared differences, accumulated in float64."""
    assert_aligned(a, b)
    total = 0.0
    for name in a:
        diff = a[name].astype(np.float64) - b[name].astype(np.float64)
        total += float(np.sum(diff * diff))
    return total


@dataclass
class Checkpoint:
    """A ParameterSet plus run metadata, persisted as a directory."""

    params: ParameterSet
    meta: dict = field(default_factory=dict)


def _pack(params: ParameterSet) -> bytes:
    table = []
    offset = 0
    for name, arr in params.items():
        le = arr.astype("<f4", copy=False)
        nbytes = le.nbytes
        table.append(
            {"name": name, "shape": list(arr.shape), "dtype": "<f4", "offset": offset}
        )
        offset += nbytes
    header = json.dumps({"version": _FORMAT_VERSION, "entries": table}).encode("utf-8")
    parts = [_MAGIC, struct.pack("<I", len(header)), header]
    for arr in params.values():
        parts.append(arr.astype("<f4", copy=False).tobytes())
    return b"".join(parts)


def _unpack(blob: bytes) -> ParameterSet:
    if blob[: len(_MAGIC)] != _MAGIC:
        raise IntegrityError("bad magic bytes in params.bin")
    (header_len,) = struct.unpack_from("<I", blob, len(_MAGIC))
    header_start = len(_MAGIC) + 4
    header = json.loads(blob[header_start : header_start + header_len])
    if header.get("version") != _FORMAT_VERSION:
        raise FormatVersionError(f"unknown checkpoint format version {header.get('version')}")
    payload = blob[header_start + header_len :]
    entries: dict[str, np.ndarray] = {}
    for item in header["entries"]:
        shape = tuple(item["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(
            payload, dtype=item["dtype"], count=count, offset=item["offset"]
        ).reshape(shape)
        entries[item["name"]] = arr
    return ParameterSet(entries)


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    blob = _pack(ckpt.params)
    (path / "params.bin").write_bytes(blob)
    (path / "meta.json").write_text(json.dumps(ckpt.meta, indent=2, sort_keys=True))
    (path / "digest.txt").write_text(hashlib.sha256(blob).hexdigest() + "\n")


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    blob = (path / "params.bin").read_bytes()
    recorded = (path / "digest.txt").read_text().strip()
    actual = hashlib.sha256(blob).hexdigest()
    if actual != recorded:
        raise IntegrityError(
            f"params.bin digest mismatch under {path}: recorded {recorded}, actual {actual}"
        )
    params = _unpack(blob)
    meta = json.loads((path / "meta.json").read_text())
    return Checkpoint(params=params, meta=meta)
