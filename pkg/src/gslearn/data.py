"""Dataset loading, deterministic splits, and synthetic benchmarks.

A dataset on disk is a manifest JSON naming a features CSV (one node per
line, comma-separated decimal floats), a labels file (one integer per
line), and optionally a splits CSV (``node_id,split`` with split one of
train/val/test). Written floats use the shortest round-trip representation
so write-then-load reproduces arrays exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .diffcore import ConfigError, NORM_FLOOR, RngState

SPLIT_NAMES = ("train", "val", "test")
DEFAULT_RATIOS = (0.5, 0.25, 0.25)


class ValidationError(ValueError):
    """Dataset contents violate the manifest contract."""


@dataclass
class SplitMasks:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def counts(self) -> tuple[int, int, int]:
        return (int(self.train.sum()), int(self.val.sum()), int(self.test.sum()))


@dataclass
class Dataset:
    name: str
    X: np.ndarray
    y: np.ndarray
    num_classes: int
    splits: SplitMasks | None = None

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


def l2_normalize_rows(X: np.ndarray, floor: float = NORM_FLOOR) -> np.ndarray:
    """Row-normalize features, leaving rows with norm below the floor
    untouched. Model-input preprocessing; the strict graph op rejects
    zero rows instead."""
    X = np.asarray(X, dtype=np.float64)
    norms = np.sqrt((X * X).sum(axis=1, keepdims=True))
    return X / np.maximum(norms, floor)


def make_splits(n: int, seed: int, ratios=DEFAULT_RATIOS) -> SplitMasks:
    """Deterministic shuffle then contiguous partition.

    Sizes are floor(r_train * n) and floor(r_val * n); the remainder is
    test, so proportions hold to within one node.
    """
    if n < 3:
        raise ConfigError(f"need at least 3 nodes to split, got {n}")
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"ratios must be three positives summing to 1, got {ratios}")
    perm = RngState(seed).generator("split").permutation(n)
    n_train = int(np.floor(ratios[0] * n))
    n_val = int(np.floor(ratios[1] * n))
    masks = []
    bounds = ((0, n_train), (n_train, n_train + n_val), (n_train + n_val, n))
    for lo, hi in bounds:
        m = np.zeros(n, dtype=bool)
        m[perm[lo:hi]] = True
        masks.append(m)
    return SplitMasks(*masks)


def synth_blobs(classes: int = 3, per_class: int = 200, dim: int = 16,
                separation: float = 3.0, noise: float = 0.5, seed: int = 0,
                name: str = "blobs") -> Dataset:
    """Gaussian clusters around random unit-norm centers scaled by
    ``separation``. Labels are the cluster ids."""
    if classes < 2 or per_class < 1 or dim < 1:
        raise ConfigError(
            f"blobs need classes >= 2, per_class >= 1, dim >= 1; "
            f"got {classes}, {per_class}, {dim}"
        )
    if separation < 0 or noise < 0:
        raise ConfigError("separation and noise must be non-negative")
    gen = RngState(seed).generator("synth")
    centers = gen.standard_normal((classes, dim))
    centers /= np.sqrt((centers * centers).sum(axis=1, keepdims=True))
    centers *= separation
    y = np.repeat(np.arange(classes), per_class)
    X = centers[y] + noise * gen.standard_normal((classes * per_class, dim))
    return Dataset(name=name, X=X, y=y.astype(np.int64), num_classes=classes)


def load_dataset(manifest_path) -> Dataset:
    """Load a dataset from its manifest, validating shapes and label range."""
    manifest_path = Path(manifest_path)
    with open(manifest_path) as f:
        manifest = json.load(f)
    for key in ("name", "n", "d", "num_classes", "features_csv", "labels_csv"):
        if key not in manifest:
            raise ValidationError(f"manifest missing required key {key!r}")
    base = manifest_path.parent
    n, d = int(manifest["n"]), int(manifest["d"])
    num_classes = int(manifest["num_classes"])

    features_path = base / manifest["features_csv"]
    if features_path.stat().st_size == 0:
        raise OSError(f"empty features file: {features_path}")
    X = np.loadtxt(features_path, delimiter=",", dtype=np.float64, ndmin=2)
    if X.shape != (n, d):
        raise ValidationError(
            f"features shape {X.shape} != manifest (n={n}, d={d}); "
            f"first mismatch near line {min(X.shape[0], n) + 1} of {features_path.name}"
        )

    y = np.loadtxt(base / manifest["labels_csv"], dtype=np.int64, ndmin=1)
    if y.shape != (n,):
        raise ValidationError(f"labels length {y.shape[0]} != n={n}")
    bad = np.flatnonzero((y < 0) | (y >= num_classes))
    if bad.size:
        raise ValidationError(
            f"label {y[bad[0]]} at line {bad[0] + 1} outside [0, {num_classes})"
        )

    splits = None
    if manifest.get("splits_csv"):
        splits = _load_splits(base / manifest["splits_csv"], n)
    return Dataset(
        name=str(manifest["name"]), X=X, y=y,
        num_classes=num_classes, splits=splits,
    )


def _load_splits(path: Path, n: int) -> SplitMasks:
    masks = {s: np.zeros(n, dtype=bool) for s in SPLIT_NAMES}
    with open(path) as f:
        lines = [ln.strip() for ln in f if ln.strip()]
    if not lines:
        raise ValidationError(f"splits file {path.name} is empty")
    start = 1 if lines[0].lower().replace(" ", "") == "node_id,split" else 0
    for i, line in enumerate(lines[start:], start=start + 1):
        parts = line.split(",")
        if len(parts) != 2:
            raise ValidationError(f"splits line {i}: expected node_id,split")
        idx, split = int(parts[0]), parts[1].strip()
        if not 0 <= idx < n:
            raise ValidationError(f"splits line {i}: node id {idx} outside [0, {n})")
        if split not in masks:
            raise ValidationError(f"splits line {i}: unknown split {split!r}")
        masks[split][idx] = True
    assigned = masks["train"] | masks["val"] | masks["test"]
    overlap = (masks["train"] & masks["val"]) | (masks["train"] & masks["test"]) | (
        masks["val"] & masks["test"])
    if overlap.any():
        raise ValidationError(
            f"node {int(np.flatnonzero(overlap)[0])} assigned to multiple splits"
        )
    if not assigned.all():
        raise ValidationError(
            f"node {int(np.flatnonzero(~assigned)[0])} missing a split assignment"
        )
    return SplitMasks(masks["train"], masks["val"], masks["test"])


def save_dataset(dataset: Dataset, out_dir) -> Path:
    """Write manifest + CSVs; floats use shortest round-trip formatting so
    a reload reproduces X and y exactly. Returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    features = out / "features.csv"
    with open(features, "w") as f:
        for row in dataset.X:
            f.write(",".join(repr(float(v)) for v in row))
            f.write("\n")
    labels = out / "labels.csv"
    with open(labels, "w") as f:
        f.writelines(f"{int(v)}\n" for v in dataset.y)
    manifest = {
        "name": dataset.name,
        "n": int(dataset.n),
        "d": int(dataset.d),
        "num_classes": int(dataset.num_classes),
        "features_csv": features.name,
        "labels_csv": labels.name,
    }
    if dataset.splits is not None:
        splits = out / "splits.csv"
        with open(splits, "w") as f:
            f.write("node_id,split\n")
            for tag, mask in zip(SPLIT_NAMES, (dataset.splits.train,
                                               dataset.splits.val,
                                               dataset.splits.test)):
                for idx in np.flatnonzero(mask):
                    f.write(f"{idx},{tag}\n")
        manifest["splits_csv"] = splits.name
    manifest_path = out / "manifest.json"
    with open(manifest_path, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return manifest_path
