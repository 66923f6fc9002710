"""On-disk feature store: ``manifest.json`` plus one raw float32 file per bag.

Feature files hold little-endian IEEE-754 32-bit floats, row-major ``N x d``,
with no header. The manifest lists classes in priority-ascending order unless
an explicit ``priority`` array (lowest first) is present.
"""

from __future__ import annotations

import json
import logging
import os
from pathlib import Path
from typing import Any, Final, Mapping

import numpy as np

from semiweak_mil.errors import DataError, FormatError, IntegrityError, StoreWriteError

from .bags import SPLITS, Bag, ClassPriority, Dataset

logger = logging.getLogger(__name__)

MANIFEST_NAME: Final[str] = "manifest.json"
MANIFEST_VERSION: Final[int] = 1
_STORAGE_DTYPE: Final[np.dtype] = np.dtype("<f4")


def _read_manifest(root: Path) -> Mapping[str, Any]:
    manifest_path = root / MANIFEST_NAME
    try:
        raw = manifest_path.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise FormatError("Feature store manifest is missing.", details=str(manifest_path)) from exc
    except OSError as exc:
        raise FormatError("Feature store manifest could not be read.", details=str(exc)) from exc
    try:
        manifest = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise FormatError("Feature store manifest is not valid JSON.", details=str(exc)) from exc
    if not isinstance(manifest, Mapping):
        raise FormatError("Feature store manifest must be a JSON object.")
    if manifest.get("version") != MANIFEST_VERSION:
        raise FormatError("Unsupported manifest version.", details=f"version={manifest.get('version')!r}")
    for key, kind in (("dim", int), ("classes", list), ("bags", list)):
        if not isinstance(manifest.get(key), kind) or isinstance(manifest.get(key), bool):
            raise FormatError(f"Manifest key '{key}' is missing or malformed.")
    return manifest


def _priority_from_manifest(manifest: Mapping[str, Any]) -> ClassPriority:
    classes = [str(name) for name in manifest["classes"]]
    order = manifest.get("priority")
    if order is None:
        return ClassPriority.ascending(classes)
    if not isinstance(order, list):
        raise FormatError("Manifest key 'priority' must be an array of class names.")
    return ClassPriority.from_order(classes, [str(name) for name in order])


def _load_matrix(path: Path, num_instances: int, dim: int, bag_id: str) -> np.ndarray:
    try:
        size = path.stat().st_size
    except FileNotFoundError as exc:
        raise FormatError("Feature file referenced by the manifest is missing.", details=str(path)) from exc
    expected = num_instances * dim * _STORAGE_DTYPE.itemsize
    if size != expected:
        raise IntegrityError(
            "Feature file size does not match the manifest shape.",
            details=f"bag={bag_id}, expected={expected} bytes, found={size} bytes",
        )
    matrix = np.fromfile(path, dtype=_STORAGE_DTYPE).reshape(num_instances, dim)
    if not np.all(np.isfinite(matrix)):
        raise DataError("Feature file contains non-finite values.", details=f"bag={bag_id}")
    return matrix.astype(np.float32)


def load_feature_store(path: str | os.PathLike[str]) -> Dataset:
    """Materialise every bag listed in ``path/manifest.json``.

    Bags without a ``split`` entry are assigned to ``train``.
    """

    root = Path(path)
    manifest = _read_manifest(root)
    dim = int(manifest["dim"])
    if dim < 1:
        raise FormatError("Manifest dim must be positive.")
    priority = _priority_from_manifest(manifest)

    bags: list[Bag] = []
    split: dict[str, str] = {}
    for entry in manifest["bags"]:
        if not isinstance(entry, Mapping):
            raise FormatError("Each manifest bag entry must be an object.")
        try:
            bag_id = str(entry["id"])
            label = int(entry["label"])
            num_instances = int(entry["num_instances"])
            file_name = str(entry["file"])
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError("Manifest bag entry is missing required keys.", details=repr(exc)) from exc
        if num_instances < 1:
            raise FormatError("Manifest num_instances must be positive.", details=f"bag={bag_id}")
        features = _load_matrix(root / file_name, num_instances, dim, bag_id)
        instance_labels = entry.get("instance_labels")
        if instance_labels is not None and len(instance_labels) != num_instances:
            raise FormatError("instance_labels length must equal num_instances.", details=f"bag={bag_id}")
        bag_split = entry.get("split", "train")
        if bag_split not in SPLITS:
            raise FormatError("Manifest split must be one of train/val/test.", details=f"bag={bag_id}")
        bags.append(Bag(id=bag_id, features=features, label=label, instance_labels=instance_labels))
        split[bag_id] = bag_split

    dataset = Dataset(bags=tuple(bags), priority=priority, split=split)
    logger.info("Loaded feature store", extra={"path": str(root), "bags": len(bags), "dim": dim})
    return dataset


def _file_name(index: int) -> str:
    return f"bag_{index:05d}.f32"


def build_manifest(ds: Dataset) -> dict[str, Any]:
    priority = ds.priority
    manifest: dict[str, Any] = {
        "version": MANIFEST_VERSION,
        "dim": ds.dim,
        "classes": list(priority.classes),
    }
    if list(priority.ranks) != list(range(priority.num_classes)):
        manifest["priority"] = sorted(priority.classes, key=lambda name: priority.ranks[priority.classes.index(name)])
    entries: list[dict[str, Any]] = []
    for index, bag in enumerate(ds.bags):
        entry: dict[str, Any] = {
            "id": bag.id,
            "label": bag.label,
            "num_instances": bag.num_instances,
            "file": _file_name(index),
            "split": ds.split[bag.id],
        }
        if bag.instance_labels is not None:
            entry["instance_labels"] = [int(value) for value in bag.instance_labels]
        entries.append(entry)
    manifest["bags"] = entries
    return manifest


def save_feature_store(ds: Dataset, path: str | os.PathLike[str]) -> None:
    """Write ``ds`` so that :func:`load_feature_store` inverts it bitwise."""

    root = Path(path)
    manifest = build_manifest(ds)
    try:
        root.mkdir(parents=True, exist_ok=True)
        for bag, entry in zip(ds.bags, manifest["bags"]):
            (root / entry["file"]).write_bytes(np.ascontiguousarray(bag.features, dtype=_STORAGE_DTYPE).tobytes())
        (root / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise StoreWriteError("Failed to write feature store.", details=str(exc)) from exc
    logger.info("Saved feature store", extra={"path": str(root), "bags": len(ds.bags)})


__all__ = ["MANIFEST_NAME", "MANIFEST_VERSION", "build_manifest", "load_feature_store", "save_feature_store"]
