"""Checkpoint files: length-prefixed JSON header followed by float32 payloads.

Layout: 8-byte little-endian header length, UTF-8 JSON header (parameter
names and shapes in declared order, seed, round, class names), then each
parameter matrix as raw little-endian float32, row-major, concatenated.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Final

import numpy as np

from semiweak_mil.errors import CheckpointError

from .abmil import PARAM_NAMES, MilParams

FORMAT_VERSION: Final[int] = 1
_LENGTH = struct.Struct("<Q")
_DTYPE: Final[np.dtype] = np.dtype("<f4")


@dataclass(frozen=True)
class Checkpoint:
    params: MilParams
    seed: int
    round: int
    classes: tuple[str, ...] = field(default_factory=tuple)


def _header(checkpoint: Checkpoint) -> bytes:
    header: dict[str, Any] = {
        "format": FORMAT_VERSION,
        "params": [{"name": name, "shape": list(getattr(checkpoint.params, name).shape)} for name in PARAM_NAMES],
        "seed": checkpoint.seed,
        "round": checkpoint.round,
        "classes": list(checkpoint.classes),
    }
    return json.dumps(header, sort_keys=True).encode("utf-8")


def save_checkpoint(checkpoint: Checkpoint, path: str | os.PathLike[str]) -> None:
    header = _header(checkpoint)
    payload = b"".join(
        np.ascontiguousarray(array, dtype=_DTYPE).tobytes() for array in checkpoint.params.arrays()
    )
    target = Path(path)
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(_LENGTH.pack(len(header)) + header + payload)
    except OSError as exc:
        raise CheckpointError("Failed to write checkpoint.", details=str(exc)) from exc


def load_checkpoint(path: str | os.PathLike[str]) -> Checkpoint:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError("Checkpoint could not be read.", details=str(exc)) from exc
    if len(raw) < _LENGTH.size:
        raise CheckpointError("Checkpoint is truncated.", details=str(path))
    (header_length,) = _LENGTH.unpack_from(raw)
    try:
        header = json.loads(raw[_LENGTH.size : _LENGTH.size + header_length].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError("Checkpoint header is not valid JSON.", details=str(exc)) from exc
    if not isinstance(header, dict):
        raise CheckpointError("Checkpoint header must be a JSON object.")
    if header.get("format") != FORMAT_VERSION:
        raise CheckpointError("Unsupported checkpoint format.", details=f"format={header.get('format')!r}")

    offset = _LENGTH.size + header_length
    arrays: list[np.ndarray] = []
    entries = header.get("params", [])
    if not isinstance(entries, list) or not all(isinstance(entry, dict) for entry in entries):
        raise CheckpointError("Checkpoint parameter table is malformed.")
    if [entry.get("name") for entry in entries] != list(PARAM_NAMES):
        raise CheckpointError("Checkpoint parameters are not in the declared order.")
    for entry in entries:
        try:
            rows, cols = (int(value) for value in entry["shape"])
        except (KeyError, TypeError, ValueError) as exc:
            details = f"{entry['name']}: {exc}"
            raise CheckpointError("Checkpoint parameter shape is malformed.", details=details) from exc
        if rows < 0 or cols < 0:
            raise CheckpointError("Checkpoint parameter shape is negative.", details=f"{entry['name']}: {rows}x{cols}")
        count = rows * cols
        end = offset + count * _DTYPE.itemsize
        if end > len(raw):
            raise CheckpointError("Checkpoint payload is truncated.", details=entry["name"])
        arrays.append(np.frombuffer(raw, dtype=_DTYPE, count=count, offset=offset).reshape(rows, cols))
        offset = end
    if offset != len(raw):
        raise CheckpointError("Checkpoint has trailing bytes.", details=f"{len(raw) - offset} bytes")
    params = MilParams.from_arrays([array.astype(np.float64) for array in arrays])
    try:
        seed, round_index = int(header.get("seed", 0)), int(header.get("round", 0))
        classes = tuple(str(name) for name in header.get("classes", ()))
    except (TypeError, ValueError) as exc:
        raise CheckpointError("Checkpoint metadata is malformed.", details=str(exc)) from exc
    return Checkpoint(params=params, seed=seed, round=round_index, classes=classes)


__all__ = ["FORMAT_VERSION", "Checkpoint", "load_checkpoint", "save_checkpoint"]
