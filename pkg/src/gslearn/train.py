"""Training loop, metrics, and checkpoint round-trip.

Runs are deterministic for a fixed config: parameter init, Gumbel noise,
dropout masks, and splits all derive from named substreams of the config
seed, and metrics files contain no timestamps, so identical configs
produce byte-identical metrics JSON. Evaluation always uses the fixed
"eval" child stream, which is why evaluating a checkpoint reproduces the
train-time accuracy exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .data import Dataset, SplitMasks, make_splits
from .diffcore import Adam, ConfigError, RngState, backward, cross_entropy
from .encoder import GslModel, ModelConfig

SCHEMA_VERSION = 1
CHECKPOINT_NAME = "checkpoint.npz"
METRICS_NAME = "metrics.json"


class CheckpointError(ValueError):
    """Checkpoint contents do not match the model they claim to restore."""


def _accuracy(logits: np.ndarray, y: np.ndarray, mask: np.ndarray) -> float:
    rows = np.flatnonzero(mask)
    if rows.size == 0:
        raise ConfigError("accuracy mask selects no rows")
    return float((logits[rows].argmax(axis=1) == y[rows]).mean())


def _loss_value(logits, y, mask) -> float:
    return float(cross_entropy(logits, y, mask).value[0, 0])


def _dataset_meta(dataset: Dataset) -> dict:
    return {
        "name": dataset.name,
        "n": int(dataset.n),
        "d": int(dataset.d),
        "num_classes": int(dataset.num_classes),
    }


def resolve_splits(dataset: Dataset, seed: int) -> SplitMasks:
    """Manifest-provided splits win; otherwise a deterministic 50/25/25
    shuffle-and-partition keyed by the seed."""
    return dataset.splits if dataset.splits is not None else make_splits(dataset.n, seed)


def train_model(dataset: Dataset, config: ModelConfig, epochs: int = 500,
                patience: int = 100, out_dir=None, log=None):
    """Train with early stopping on validation accuracy; parameters from
    the best-validation epoch are what the run reports and checkpoints.

    Returns (metrics, model). With ``out_dir`` set, metrics.json and
    checkpoint.npz land there.
    """
    config.validate()
    if epochs < 1:
        raise ConfigError(f"epochs must be >= 1, got {epochs}")
    if patience < 1:
        raise ConfigError(f"patience must be >= 1, got {patience}")
    splits = resolve_splits(dataset, config.seed)
    model = GslModel(config, dataset.d, dataset.num_classes, n_nodes=dataset.n)
    optimizer = Adam(model.parameters(), lr=config.lr)
    rng = RngState(config.seed)
    eval_rng = rng.child("eval")
    named = model.named_parameters()

    history = []
    best_epoch = -1
    best_val = -1.0
    best_params: dict[str, np.ndarray] = {}
    stopped_early = False

    for epoch in range(epochs):
        optimizer.zero_grad()
        logits = model.forward(dataset.X, rng.child("epoch", epoch), training=True)
        loss = cross_entropy(logits, dataset.y, splits.train)
        backward(loss)
        optimizer.step()

        eval_logits = model.forward(dataset.X, eval_rng, training=False).value
        record = {
            "epoch": epoch,
            "train_loss": float(loss.value[0, 0]),
            "train_accuracy": _accuracy(eval_logits, dataset.y, splits.train),
            "val_loss": _loss_value(eval_logits, dataset.y, splits.val),
            "val_accuracy": _accuracy(eval_logits, dataset.y, splits.val),
        }
        history.append(record)
        if record["val_accuracy"] > best_val:
            best_val = record["val_accuracy"]
            best_epoch = epoch
            best_params = {name: node.value.copy() for name, node in named.items()}
        if log and (epoch % 25 == 0 or epoch == epochs - 1):
            log(
                f"epoch {epoch:4d}  train_loss {record['train_loss']:.4f}  "
                f"val_acc {record['val_accuracy']:.4f}"
            )
        if epoch - best_epoch >= patience:
            stopped_early = True
            break

    for name, node in named.items():
        node.value = best_params[name].copy()
    final_logits = model.forward(dataset.X, eval_rng, training=False).value

    metrics = {
        "schema_version": SCHEMA_VERSION,
        "command": "train",
        "config": config.to_dict(),
        "dataset": _dataset_meta(dataset),
        "split_sizes": list(splits.counts()),
        "epochs_run": len(history),
        "stopped_early": stopped_early,
        "best_epoch": best_epoch,
        "best_val_accuracy": best_val,
        "test_accuracy": _accuracy(final_logits, dataset.y, splits.test),
        "final": {
            "train_accuracy": _accuracy(final_logits, dataset.y, splits.train),
            "val_accuracy": _accuracy(final_logits, dataset.y, splits.val),
            "test_accuracy": _accuracy(final_logits, dataset.y, splits.test),
            "val_loss": _loss_value(final_logits, dataset.y, splits.val),
        },
        "history": history,
    }
    if log:
        log(
            f"best epoch {best_epoch}  val_acc {best_val:.4f}  "
            f"test_acc {metrics['test_accuracy']:.4f}"
        )

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_metrics(out / METRICS_NAME, metrics)
        save_checkpoint(out / CHECKPOINT_NAME, model, dataset)
    return metrics, model


def write_metrics(path, metrics: dict):
    with open(path, "w") as f:
        json.dump(metrics, f, indent=2, sort_keys=True)
        f.write("\n")


def save_checkpoint(path, model: GslModel, dataset: Dataset):
    """Single npz holding a JSON header plus every parameter matrix under
    ``param::<name>``; shapes are validated on load."""
    meta = {
        "schema_version": SCHEMA_VERSION,
        "config": model.config.to_dict(),
        "dataset": _dataset_meta(dataset),
        "in_dim": model.in_dim,
        "num_classes": model.num_classes,
        "n_nodes": int(dataset.n),
    }
    arrays = {
        f"param::{name}": node.value
        for name, node in model.named_parameters().items()
    }
    np.savez(path, __meta__=json.dumps(meta, sort_keys=True), **arrays)


def load_checkpoint(path):
    """Returns (meta, {param name: array})."""
    path = Path(path)
    with np.load(path, allow_pickle=False) as archive:
        if "__meta__" not in archive:
            raise CheckpointError(f"{path.name} has no metadata record")
        meta = json.loads(str(archive["__meta__"].item()))
        params = {
            key[len("param::"):]: archive[key]
            for key in archive.files if key.startswith("param::")
        }
    if meta.get("schema_version") != SCHEMA_VERSION:
        raise CheckpointError(
            f"checkpoint schema {meta.get('schema_version')} != {SCHEMA_VERSION}"
        )
    return meta, params


def restore_model(path, dataset: Dataset) -> GslModel:
    """Rebuild the checkpointed model against a dataset, validating that
    dimensions and every parameter shape match."""
    meta, params = load_checkpoint(path)
    if dataset.d != meta["in_dim"] or dataset.num_classes != meta["num_classes"]:
        raise CheckpointError(
            f"dataset (d={dataset.d}, classes={dataset.num_classes}) does not match "
            f"checkpoint (d={meta['in_dim']}, classes={meta['num_classes']})"
        )
    config = ModelConfig.from_dict(meta["config"])
    if config.mode == "transition" and dataset.n != meta["n_nodes"]:
        raise CheckpointError(
            f"transition checkpoint bound to n={meta['n_nodes']}, dataset has n={dataset.n}"
        )
    model = GslModel(config, meta["in_dim"], meta["num_classes"],
                     n_nodes=meta["n_nodes"])
    named = model.named_parameters()
    missing = set(named) - set(params)
    extra = set(params) - set(named)
    if missing or extra:
        raise CheckpointError(
            f"parameter sets differ; missing {sorted(missing)}, extra {sorted(extra)}"
        )
    for name, node in named.items():
        if params[name].shape != node.value.shape:
            raise CheckpointError(
                f"{name}: checkpoint shape {params[name].shape} != model {node.value.shape}"
            )
        node.value = params[name].astype(np.float64)
    return model


def evaluate_checkpoint(path, dataset: Dataset) -> dict:
    """Accuracy per split using the checkpoint's own seed-derived splits
    and the fixed evaluation stream, so it reproduces train-time numbers."""
    model = restore_model(path, dataset)
    splits = resolve_splits(dataset, model.config.seed)
    eval_rng = RngState(model.config.seed).child("eval")
    logits = model.forward(dataset.X, eval_rng, training=False).value
    return {
        "schema_version": SCHEMA_VERSION,
        "command": "eval",
        "checkpoint": str(path),
        "config": model.config.to_dict(),
        "dataset": _dataset_meta(dataset),
        "accuracy": {
            "train": _accuracy(logits, dataset.y, splits.train),
            "val": _accuracy(logits, dataset.y, splits.val),
            "test": _accuracy(logits, dataset.y, splits.test),
        },
    }
