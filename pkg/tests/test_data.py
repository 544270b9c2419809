import json

import numpy as np
import pytest

from _oracles import one_nn_accuracy
from gslearn import data
from gslearn.diffcore import ConfigError


def test_make_splits_sizes_and_disjoint_cover():
    masks = data.make_splits(600, seed=0)
    assert masks.counts() == (300, 150, 150)
    union = masks.train | masks.val | masks.test
    assert union.all()
    assert not (masks.train & masks.val).any()
    assert not (masks.train & masks.test).any()
    assert not (masks.val & masks.test).any()


def test_make_splits_smallest_case_and_determinism():
    masks = data.make_splits(4, seed=1)
    assert masks.counts() == (2, 1, 1)
    again = data.make_splits(4, seed=1)
    np.testing.assert_array_equal(masks.train, again.train)
    other = data.make_splits(4, seed=2)
    assert not np.array_equal(masks.train, other.train) or not np.array_equal(
        masks.val, other.val
    )


def test_make_splits_validation():
    with pytest.raises(ConfigError):
        data.make_splits(2, seed=0)
    with pytest.raises(ConfigError):
        data.make_splits(10, seed=0, ratios=(0.5, 0.5, 0.5))
    with pytest.raises(ConfigError):
        data.make_splits(10, seed=0, ratios=(1.0, -0.5, 0.5))


def test_synth_blobs_shapes_labels_and_determinism():
    ds = data.synth_blobs(classes=4, per_class=10, dim=6, seed=5)
    assert ds.X.shape == (40, 6)
    assert ds.y.shape == (40,)
    assert ds.num_classes == 4
    np.testing.assert_array_equal(np.bincount(ds.y), [10, 10, 10, 10])
    again = data.synth_blobs(classes=4, per_class=10, dim=6, seed=5)
    np.testing.assert_array_equal(ds.X, again.X)
    other = data.synth_blobs(classes=4, per_class=10, dim=6, seed=6)
    assert not np.array_equal(ds.X, other.X)


def test_synth_blobs_are_nearest_neighbor_learnable():
    """The default generation parameters give clusters clean enough for a
    plain 1-NN classifier to exceed 95 percent."""
    ds = data.synth_blobs(classes=3, per_class=200, dim=16,
                          separation=3.0, noise=0.5, seed=0)
    train = np.arange(ds.n) % 2 == 0
    acc = one_nn_accuracy(ds.X[train], ds.y[train], ds.X[~train], ds.y[~train])
    assert acc > 0.95


def test_synth_blobs_validation():
    with pytest.raises(ConfigError):
        data.synth_blobs(classes=1)
    with pytest.raises(ConfigError):
        data.synth_blobs(noise=-0.1)


def test_l2_normalize_rows_handles_zero_rows():
    X = np.array([[3.0, 4.0], [0.0, 0.0]])
    out = data.l2_normalize_rows(X)
    np.testing.assert_allclose(out[0], [0.6, 0.8])
    np.testing.assert_array_equal(out[1], [0.0, 0.0])


def test_save_load_round_trip_is_exact(tmp_path):
    ds = data.synth_blobs(classes=3, per_class=5, dim=4, seed=7)
    ds.splits = data.make_splits(ds.n, seed=7)
    manifest = data.save_dataset(ds, tmp_path / "blobs")
    loaded = data.load_dataset(manifest)
    np.testing.assert_array_equal(loaded.X, ds.X)
    np.testing.assert_array_equal(loaded.y, ds.y)
    assert loaded.name == ds.name
    assert loaded.num_classes == 3
    np.testing.assert_array_equal(loaded.splits.train, ds.splits.train)
    np.testing.assert_array_equal(loaded.splits.test, ds.splits.test)


def test_load_without_splits_gives_none(tmp_path):
    ds = data.synth_blobs(classes=2, per_class=4, dim=3, seed=8)
    manifest = data.save_dataset(ds, tmp_path / "plain")
    assert data.load_dataset(manifest).splits is None


def write_manifest(tmp_path, n=3, d=2, num_classes=2, features=None, labels=None,
                   splits=None, drop_key=None):
    folder = tmp_path / "ds"
    folder.mkdir(exist_ok=True)
    if features is None:
        features = [[0.5] * d for _ in range(n)]
    if labels is None:
        labels = [i % num_classes for i in range(n)]
    with open(folder / "features.csv", "w") as f:
        f.writelines(",".join(map(str, row)) + "\n" for row in features)
    with open(folder / "labels.csv", "w") as f:
        f.writelines(f"{v}\n" for v in labels)
    manifest = {
        "name": "toy", "n": n, "d": d, "num_classes": num_classes,
        "features_csv": "features.csv", "labels_csv": "labels.csv",
    }
    if splits is not None:
        with open(folder / "splits.csv", "w") as f:
            f.write("\n".join(splits) + "\n")
        manifest["splits_csv"] = "splits.csv"
    if drop_key:
        del manifest[drop_key]
    path = folder / "manifest.json"
    with open(path, "w") as f:
        json.dump(manifest, f)
    return path


def test_manifest_missing_key_rejected(tmp_path):
    path = write_manifest(tmp_path, drop_key="num_classes")
    with pytest.raises(data.ValidationError, match="num_classes"):
        data.load_dataset(path)


def test_manifest_shape_mismatch_rejected(tmp_path):
    path = write_manifest(tmp_path, n=5, features=[[0.5, 0.5]] * 3)
    with pytest.raises(data.ValidationError, match="shape"):
        data.load_dataset(path)


def test_manifest_label_range_checked(tmp_path):
    path = write_manifest(tmp_path, labels=[0, 1, 5])
    with pytest.raises(data.ValidationError, match="line 3"):
        data.load_dataset(path)


def test_manifest_empty_features_rejected(tmp_path):
    path = write_manifest(tmp_path, features=[])
    with pytest.raises(OSError):
        data.load_dataset(path)


def test_splits_header_is_optional(tmp_path):
    with_header = write_manifest(
        tmp_path, splits=["node_id,split", "0,train", "1,val", "2,test"]
    )
    ds = data.load_dataset(with_header)
    assert ds.splits.counts() == (1, 1, 1)
    bare = write_manifest(tmp_path, splits=["0,train", "1,val", "2,test"])
    assert data.load_dataset(bare).splits.counts() == (1, 1, 1)


@pytest.mark.parametrize(
    "rows,message",
    [
        (["0,train", "0,val", "1,test", "2,test"], "multiple"),
        (["0,train", "1,val"], "missing"),
        (["0,train", "9,val", "2,test"], "outside"),
        (["0,train", "1,party", "2,test"], "unknown split"),
        (["0,train,extra", "1,val", "2,test"], "expected"),
    ],
)
def test_split_file_validation(tmp_path, rows, message):
    path = write_manifest(tmp_path, splits=rows)
    with pytest.raises(data.ValidationError, match=message):
        data.load_dataset(path)
