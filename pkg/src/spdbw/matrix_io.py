"""Matrix CSV files and JSON batch/dataset manifests.

One matrix per CSV file: d rows of d comma-separated decimals, written
with 17 significant digits so values round-trip exactly. A batch is a
directory of such files plus a ``manifest.json`` with {dim, count,
label?, files}; a labeled dataset is a directory of class batches plus a
top-level ``dataset.json`` recording the generating spec.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import DimensionMismatchError

MATRIX_FMT = "%.17g"


def save_matrix_csv(path, array: np.ndarray) -> None:
    arr = np.asarray(array, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DimensionMismatchError(f"matrix must be square, got {arr.shape}")
    np.savetxt(path, arr, delimiter=",", fmt=MATRIX_FMT)


def load_matrix_csv(path) -> np.ndarray:
    arr = np.loadtxt(path, delimiter=",", dtype=float, ndmin=2)
    if arr.shape[0] != arr.shape[1]:
        raise DimensionMismatchError(f"{path}: expected a square matrix, got {arr.shape}")
    return arr


def save_batch(dirpath, arrays, label=None) -> Path:
    """Write matrices plus a manifest; returns the manifest path."""
    dirpath = Path(dirpath)
    dirpath.mkdir(parents=True, exist_ok=True)
    files = []
    dim = None
    for i, arr in enumerate(arrays):
        arr = np.asarray(arr, dtype=float)
        if dim is None:
            dim = arr.shape[0]
        elif arr.shape[0] != dim:
            raise DimensionMismatchError("all batch matrices must share one dimension")
        name = f"sample_{i:04d}.csv"
        save_matrix_csv(dirpath / name, arr)
        files.append(name)
    manifest = {"dim": dim if dim is not None else 0, "count": len(files), "files": files}
    if label is not None:
        manifest["label"] = label
    path = dirpath / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def load_batch(manifest_path) -> tuple[list[np.ndarray], dict]:
    manifest_path = Path(manifest_path)
    manifest = json.loads(manifest_path.read_text())
    arrays = [load_matrix_csv(manifest_path.parent / name) for name in manifest["files"]]
    for arr in arrays:
        if arr.shape[0] != manifest["dim"]:
            raise DimensionMismatchError(
                f"manifest dim {manifest['dim']} does not match file dim {arr.shape[0]}"
            )
    return arrays, manifest


def save_dataset(dirpath, matrices, labels, meta: dict) -> Path:
    """Write per-class batches plus a dataset.json; returns its path."""
    dirpath = Path(dirpath)
    dirpath.mkdir(parents=True, exist_ok=True)
    labels = np.asarray(labels)
    class_manifests = []
    for c in sorted(set(int(v) for v in labels)):
        arrays = [m.array for m, y in zip(matrices, labels) if int(y) == c]
        manifest = save_batch(dirpath / f"class_{c}", arrays, label=c)
        class_manifests.append(str(manifest.relative_to(dirpath)))
    dataset = {
        "dim": int(matrices[0].dim) if matrices else int(meta.get("dim", 0)),
        "num_classes": len(class_manifests),
        "class_manifests": class_manifests,
        "spec": meta,
    }
    path = dirpath / "dataset.json"
    path.write_text(json.dumps(dataset, indent=2) + "\n")
    return path


def load_dataset(dataset_path) -> tuple[list[np.ndarray], np.ndarray, dict]:
    dataset_path = Path(dataset_path)
    dataset = json.loads(dataset_path.read_text())
    arrays: list[np.ndarray] = []
    labels: list[int] = []
    for rel in dataset["class_manifests"]:
        batch, manifest = load_batch(dataset_path.parent / rel)
        arrays.extend(batch)
        labels.extend([int(manifest.get("label", 0))] * len(batch))
    return arrays, np.array(labels, dtype=int), dataset
