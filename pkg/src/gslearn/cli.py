"""Command-line interface: train, eval, and analyze subcommands.

Usage errors (bad flag combinations, malformed values) exit with status 2
before any compute; runtime failures exit 1; a run that completes with all
internal validations green exits 0. Setting GSL_NUM_THREADS caps BLAS
parallelism for reproducible timing.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    aggregation_bound_suite,
    complexity_probe,
    export_structure,
    kernel_curve,
    param_distribution,
    svg_line_plot,
    write_csv,
)
from .data import load_dataset, synth_blobs
from .diffcore import ConfigError, RngState
from .encoder import ModelConfig
from .similarity import GAUSIM_B_DEFAULT, GAUSIM_C_DEFAULT
from .train import evaluate_checkpoint, restore_model, train_model, write_metrics

SYNTH_DEFAULTS = {
    "classes": 3,
    "per_class": 200,
    "dim": 16,
    "separation": 3.0,
    "noise": 0.5,
    "seed": 0,
}


def _parse_synth(spec: str):
    """Parse "blobs" or "blobs:classes=3,per_class=200,..."."""
    name, _, rest = spec.partition(":")
    if name != "blobs":
        raise ConfigError(f"unknown synthetic dataset {name!r}; only 'blobs' exists")
    params = dict(SYNTH_DEFAULTS)
    if rest:
        for item in rest.split(","):
            key, sep, value = item.partition("=")
            if not sep or key not in params:
                raise ConfigError(
                    f"bad synth option {item!r}; known keys: {sorted(params)}"
                )
            params[key] = type(SYNTH_DEFAULTS[key])(value)
    return synth_blobs(name=f"blobs-seed{params['seed']}", **params)


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _add_dataset_flags(sub):
    group = sub.add_mutually_exclusive_group(required=True)
    group.add_argument("--dataset", metavar="MANIFEST",
                       help="path to a dataset manifest.json")
    group.add_argument("--synth", metavar="SPEC",
                       help="synthetic dataset, e.g. blobs or "
                            "blobs:classes=3,per_class=200,dim=16,separation=3,noise=0.5,seed=0")


def _resolve_dataset(args):
    if args.dataset:
        return load_dataset(args.dataset)
    return _parse_synth(args.synth)


def _build_config(args) -> ModelConfig:
    return ModelConfig(
        kernel=args.kernel,
        mode=args.mode,
        k=args.k,
        tau=args.tau,
        s=args.s,
        hidden=args.hidden,
        dropout=args.dropout,
        lr=args.lr,
        c_scale=args.c_scale,
        gausim_b=args.gausim_b,
        gausim_c=args.gausim_c,
        seed=args.seed,
        mask_self=args.mask_self,
        self_loop=args.self_loop,
        shared_transition=args.shared_transition,
        anchors_random=args.anchors_random,
        straight_through=args.straight_through,
    ).validate()


def _default_out(args, dataset_name: str) -> Path:
    return Path("runs") / (
        f"train-{dataset_name}-{args.kernel}-{args.mode}-k{args.k}-seed{args.seed}"
    )


def _cmd_train(args, parser) -> int:
    try:
        config = _build_config(args)
    except ConfigError as e:
        parser.error(str(e))
    dataset = _resolve_dataset(args)
    out = Path(args.out) if args.out else _default_out(args, dataset.name)
    log = None if args.quiet else print

    if args.k_sweep:
        runs = []
        for k in args.k_sweep:
            cfg = replace(config, k=k).validate()
            if log:
                log(f"[k={k}]")
            metrics, _ = train_model(dataset, cfg, epochs=args.epochs,
                                     patience=args.patience, log=log)
            runs.append(metrics)
        sweep = {
            "schema_version": 1,
            "command": "k-sweep",
            "k_values": list(args.k_sweep),
            "runs": runs,
        }
        out.mkdir(parents=True, exist_ok=True)
        write_metrics(out / "metrics.json", sweep)
        print(f"sweep metrics written to {out / 'metrics.json'}")
        return 0

    metrics, _ = train_model(dataset, config, epochs=args.epochs,
                             patience=args.patience, out_dir=out, log=log)
    print(f"test accuracy {metrics['test_accuracy']:.4f} "
          f"(best epoch {metrics['best_epoch']})")
    print(f"metrics written to {out / 'metrics.json'}")
    return 0


def _cmd_eval(args, parser) -> int:
    dataset = _resolve_dataset(args)
    metrics = evaluate_checkpoint(args.checkpoint, dataset)
    text = json.dumps(metrics, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        with open(args.out, "w") as f:
            f.write(text + "\n")
    print(text)
    return 0


def _cmd_bound(args, parser) -> int:
    report = aggregation_bound_suite(
        trials=args.trials, dims=args.dims, ks=args.ks,
        eps_grid=args.eps, seed=args.seed,
    )
    payload = report.to_dict()
    if args.out:
        with open(args.out, "w") as f:
            json.dump(payload, f, indent=2, sort_keys=True)
            f.write("\n")
    print(
        f"trials {report.total_trials}  violations {report.violations}  "
        f"infeasible slots {report.infeasible}"
    )
    for row in payload["configs"]:
        print(
            f"  dim {row['dim']:3d}  K {row['k']:3d}  eps {row['eps']:.3g}  "
            f"max distance {row['max_distance']:.6f}  min slack {row['min_slack']:.6f}"
        )
    return 0 if report.passed else 1


def _cmd_curves(args, parser) -> int:
    grid = np.linspace(-1.0, 1.0, args.points)
    rows = kernel_curve(args.kernel, grid, b=args.b, c=args.c, t=args.t)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(out, ["similarity", "score"], rows)
    print(f"curve written to {out}")
    if args.svg:
        xs = [r[0] for r in rows]
        svg_line_plot(args.svg, xs, {args.kernel: [r[1] for r in rows]},
                      x_label="similarity", y_label="score")
        print(f"plot written to {args.svg}")
    return 0


def _cmd_params(args, parser) -> int:
    dataset = _resolve_dataset(args)
    model = restore_model(args.checkpoint, dataset)
    summary = param_distribution(model, dataset.X)
    rows = [
        [name, stats["min"], stats["q1"], stats["median"], stats["q3"], stats["max"]]
        for name, stats in summary.items()
    ]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(out, ["param", "min", "q1", "median", "q3", "max"], rows)
    for row in rows:
        print(f"{row[0]}: median {row[3]:.4f}  iqr [{row[2]:.4f}, {row[4]:.4f}]")
    print(f"summary written to {out}")
    return 0


def _cmd_structure(args, parser) -> int:
    dataset = _resolve_dataset(args)
    model = restore_model(args.checkpoint, dataset)
    trace: dict = {}
    eval_rng = RngState(model.config.seed).child("eval")
    model.forward(dataset.X, eval_rng, training=False, trace=trace)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for layer in (1, 2):
        path = out / f"layer{layer}.tsv"
        kept = export_structure(trace[f"layer{layer}"]["adjacency"],
                                args.threshold, path)
        print(f"layer {layer}: {kept} edges above {args.threshold} -> {path}")
    return 0


def _cmd_complexity(args, parser) -> int:
    rows = complexity_probe(n_grid=args.n_grid, s=args.s, mode=args.mode,
                            repeats=args.repeats, seed=args.seed)
    table = [
        [r["n"], r["candidates"], r["buffer_entries"], r["seconds"], r["time_ratio"]]
        for r in rows
    ]
    if args.out:
        write_csv(args.out, ["n", "candidates", "buffer_entries", "seconds", "time_ratio"],
                  table)
    for r in rows:
        ratio = "" if np.isnan(r["time_ratio"]) else f"  ratio {r['time_ratio']:.2f}"
        print(
            f"n {r['n']:6d}  buffer {r['buffer_entries']:10d} entries  "
            f"{r['seconds'] * 1e3:8.2f} ms{ratio}"
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gslearn",
        description="Differentiable graph structure learning for node classification.",
    )
    parser.add_argument("--version", action="version", version=f"gslearn {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    train = commands.add_parser("train", help="train a model")
    _add_dataset_flags(train)
    train.add_argument("--kernel", default="neuralgau",
                       choices=["lin", "diff", "gau", "neuralgau", "heat"])
    train.add_argument("--mode", default="full",
                       choices=["full", "transition", "knn"])
    train.add_argument("--k", type=int, default=5, help="draws per row (default 5)")
    train.add_argument("--tau", type=float, default=0.25,
                       help="relaxation temperature (default 0.25)")
    train.add_argument("--s", type=int, default=500,
                       help="transition node count (default 500)")
    train.add_argument("--hidden", type=int, default=32)
    train.add_argument("--lr", type=float, default=0.001,
                       help="Adam learning rate (default 0.001; 0.01 suits "
                            "CiteSeer-scale runs)")
    train.add_argument("--dropout", type=float, default=0.5)
    train.add_argument("--c-scale", type=float, default=0.1, dest="c_scale")
    train.add_argument("--gausim-b", type=float, default=GAUSIM_B_DEFAULT,
                       dest="gausim_b")
    train.add_argument("--gausim-c", type=float, default=GAUSIM_C_DEFAULT,
                       dest="gausim_c", help="default 0.02*e")
    train.add_argument("--epochs", type=int, default=500)
    train.add_argument("--patience", type=int, default=100)
    train.add_argument("--seed", type=int, default=0)
    train.add_argument("--self-loop", action="store_true", dest="self_loop")
    train.add_argument("--mask-self", action="store_true", dest="mask_self")
    train.add_argument("--shared-transition", action="store_true",
                       dest="shared_transition")
    train.add_argument("--anchors-random", action="store_true",
                       dest="anchors_random")
    train.add_argument("--straight-through", action="store_true",
                       dest="straight_through")
    train.add_argument("--k-sweep", type=_int_list, default=None, dest="k_sweep",
                       metavar="K1,K2,...", help="train once per K, one metrics file")
    train.add_argument("--out", default=None, help="output directory")
    train.add_argument("--quiet", action="store_true")
    train.set_defaults(func=_cmd_train)

    evaluate = commands.add_parser("eval", help="evaluate a checkpoint")
    evaluate.add_argument("--checkpoint", required=True)
    _add_dataset_flags(evaluate)
    evaluate.add_argument("--out", default=None, help="optional metrics JSON path")
    evaluate.set_defaults(func=_cmd_eval)

    analyze = commands.add_parser("analyze", help="verification and inspection tools")
    tools = analyze.add_subparsers(dest="tool", required=True)

    bound = tools.add_parser(
        "bound", aliases=["theorem1"],
        help="randomized mean-aggregation bound suite",
    )
    bound.add_argument("--trials", type=int, default=400,
                       help="trials per (dim, K, eps) combination")
    bound.add_argument("--dims", type=_int_list, default=[4, 16, 64])
    bound.add_argument("--ks", type=_int_list, default=[1, 5, 20])
    bound.add_argument("--eps", type=_float_list, default=[0.1, 0.3, 1.0])
    bound.add_argument("--seed", type=int, default=0)
    bound.add_argument("--out", default=None, help="optional JSON report path")
    bound.set_defaults(func=_cmd_bound)

    curves = tools.add_parser("curves", help="kernel response curve CSV")
    curves.add_argument("--kernel", required=True,
                        choices=["lin", "diff", "gau", "neuralgau", "heat"])
    curves.add_argument("--b", type=float, default=GAUSIM_B_DEFAULT)
    curves.add_argument("--c", type=float, default=GAUSIM_C_DEFAULT)
    curves.add_argument("--t", type=float, default=1.0)
    curves.add_argument("--points", type=int, default=201)
    curves.add_argument("--out", required=True)
    curves.add_argument("--svg", default=None, help="optional SVG plot path")
    curves.set_defaults(func=_cmd_curves)

    params = tools.add_parser("params", help="learned Gaussian parameter summary")
    params.add_argument("--checkpoint", required=True)
    _add_dataset_flags(params)
    params.add_argument("--out", required=True)
    params.set_defaults(func=_cmd_params)

    structure = tools.add_parser("structure", help="export sampled structure")
    structure.add_argument("--checkpoint", required=True)
    _add_dataset_flags(structure)
    structure.add_argument("--threshold", type=float, default=0.0)
    structure.add_argument("--out", required=True, help="output directory")
    structure.set_defaults(func=_cmd_structure)

    complexity = tools.add_parser("complexity", help="similarity buffer probe")
    complexity.add_argument("--mode", default="transition",
                            choices=["full", "transition"])
    complexity.add_argument("--n-grid", type=_int_list, default=[1000, 2000, 4000],
                            dest="n_grid")
    complexity.add_argument("--s", type=int, default=500)
    complexity.add_argument("--repeats", type=int, default=5)
    complexity.add_argument("--seed", type=int, default=0)
    complexity.add_argument("--out", default=None)
    complexity.set_defaults(func=_cmd_complexity)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, parser)
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
