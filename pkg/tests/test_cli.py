import json

import numpy as np
import pytest

from gslearn.cli import main

SMALL_SYNTH = "blobs:classes=3,per_class=12,dim=6,separation=4,noise=0.4,seed=1"


def run_train(tmp_path, *extra):
    out = tmp_path / "run"
    argv = [
        "train", "--synth", SMALL_SYNTH, "--kernel", "lin", "--mode", "full",
        "--k", "2", "--s", "8", "--hidden", "6", "--epochs", "3",
        "--out", str(out), "--quiet", *extra,
    ]
    return main(argv), out


def test_version_flag():
    with pytest.raises(SystemExit) as exit_info:
        main(["--version"])
    assert exit_info.value.code == 0


def test_train_writes_metrics_and_checkpoint(tmp_path, capsys):
    code, out = run_train(tmp_path)
    assert code == 0
    metrics = json.loads((out / "metrics.json").read_text())
    assert metrics["schema_version"] == 1
    assert "test_accuracy" in metrics
    assert (out / "checkpoint.npz").exists()
    assert "test accuracy" in capsys.readouterr().out


def test_train_then_eval_reproduces_accuracy(tmp_path, capsys):
    code, out = run_train(tmp_path)
    assert code == 0
    metrics = json.loads((out / "metrics.json").read_text())
    capsys.readouterr()
    eval_code = main([
        "eval", "--checkpoint", str(out / "checkpoint.npz"),
        "--synth", SMALL_SYNTH,
    ])
    assert eval_code == 0
    report = json.loads(capsys.readouterr().out)
    assert report["accuracy"]["test"] == metrics["test_accuracy"]


def test_identical_train_invocations_write_identical_metrics(tmp_path):
    _, out1 = run_train(tmp_path / "a")
    _, out2 = run_train(tmp_path / "b")
    assert (out1 / "metrics.json").read_bytes() == (out2 / "metrics.json").read_bytes()


def test_k_sweep_collects_one_record_per_k(tmp_path):
    code, out = run_train(tmp_path, "--k-sweep", "1,2")
    assert code == 0
    sweep = json.loads((out / "metrics.json").read_text())
    assert sweep["command"] == "k-sweep"
    assert sweep["k_values"] == [1, 2]
    assert [r["config"]["k"] for r in sweep["runs"]] == [1, 2]


def test_invalid_flag_combination_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as exit_info:
        main(["train", "--synth", SMALL_SYNTH, "--kernel", "neuralgau",
              "--mode", "knn", "--epochs", "1"])
    assert exit_info.value.code == 2


def test_dataset_and_synth_are_mutually_exclusive(tmp_path):
    with pytest.raises(SystemExit) as exit_info:
        main(["train", "--synth", SMALL_SYNTH, "--dataset", "x.json"])
    assert exit_info.value.code == 2
    with pytest.raises(SystemExit) as exit_info:
        main(["train"])
    assert exit_info.value.code == 2


def test_bad_synth_spec_exits_one(tmp_path, capsys):
    code = main(["train", "--synth", "blobs:bogus=1", "--epochs", "1",
                 "--out", str(tmp_path / "x")])
    assert code == 1
    assert "error:" in capsys.readouterr().err


def test_missing_manifest_exits_one(tmp_path, capsys):
    code = main(["train", "--dataset", str(tmp_path / "nope.json"),
                 "--epochs", "1"])
    assert code == 1
    assert "error:" in capsys.readouterr().err


def test_eval_with_wrong_dataset_exits_one(tmp_path, capsys):
    _, out = run_train(tmp_path)
    capsys.readouterr()
    code = main([
        "eval", "--checkpoint", str(out / "checkpoint.npz"),
        "--synth", "blobs:classes=3,per_class=12,dim=9,seed=1",
    ])
    assert code == 1
    assert "error:" in capsys.readouterr().err


def test_bound_subcommand_writes_report(tmp_path, capsys):
    report_path = tmp_path / "bound.json"
    code = main(["analyze", "bound", "--trials", "10",
                 "--out", str(report_path)])
    assert code == 0
    report = json.loads(report_path.read_text())
    assert report["violations"] == 0
    assert "violations 0" in capsys.readouterr().out


def test_theorem1_alias_matches_bound(capsys):
    assert main(["analyze", "theorem1", "--trials", "5"]) == 0
    assert "violations 0" in capsys.readouterr().out


def test_curves_subcommand_writes_csv_and_svg(tmp_path):
    csv_path = tmp_path / "gau.csv"
    svg_path = tmp_path / "gau.svg"
    code = main(["analyze", "curves", "--kernel", "gau", "--points", "5",
                 "--out", str(csv_path), "--svg", str(svg_path)])
    assert code == 0
    rows = np.loadtxt(csv_path, delimiter=",", skiprows=1)
    peak = rows[np.argmax(rows[:, 1])]
    assert peak[0] == pytest.approx(0.5)
    assert peak[1] == pytest.approx(1.0)
    assert svg_path.read_text().startswith("<svg")


def test_params_subcommand_summarizes_checkpoint(tmp_path, capsys):
    out = tmp_path / "run"
    code = main([
        "train", "--synth", SMALL_SYNTH, "--kernel", "neuralgau",
        "--mode", "full", "--k", "2", "--hidden", "6", "--epochs", "2",
        "--out", str(out), "--quiet",
    ])
    assert code == 0
    capsys.readouterr()
    summary = tmp_path / "params.csv"
    code = main(["analyze", "params", "--checkpoint", str(out / "checkpoint.npz"),
                 "--synth", SMALL_SYNTH, "--out", str(summary)])
    assert code == 0
    lines = summary.read_text().strip().split("\n")
    assert lines[0] == "param,min,q1,median,q3,max"
    assert {line.split(",")[0] for line in lines[1:]} == {"b1", "c1", "b2", "c2"}


def test_structure_subcommand_exports_edge_lists(tmp_path, capsys):
    _, out = run_train(tmp_path)
    capsys.readouterr()
    edges = tmp_path / "edges"
    code = main(["analyze", "structure", "--checkpoint", str(out / "checkpoint.npz"),
                 "--synth", SMALL_SYNTH, "--threshold", "0.05",
                 "--out", str(edges)])
    assert code == 0
    for layer in (1, 2):
        text = (edges / f"layer{layer}.tsv").read_text()
        assert text.startswith("i\tj\tweight")


def test_complexity_subcommand_reports_buffer_sizes(tmp_path, capsys):
    csv_path = tmp_path / "complexity.csv"
    code = main(["analyze", "complexity", "--mode", "transition",
                 "--n-grid", "100,200", "--s", "20", "--repeats", "1",
                 "--out", str(csv_path)])
    assert code == 0
    rows = np.loadtxt(csv_path, delimiter=",", skiprows=1)
    np.testing.assert_array_equal(rows[:, 2], [100 * 20, 200 * 20])
    assert "buffer" in capsys.readouterr().out
