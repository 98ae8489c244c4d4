import csv
import hashlib
import json
import signal
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
import yaml

from akan.benchmarks.tasks import REGRESSION_TASKS, read_dataset_csv
from akan.cli import (
    _device_from_spec,
    emit_plotdata,
    run_command,
)
from akan.devices import AnalyticDevice
from akan.errors import ConfigError
from akan.network import load_model

QUICK = {
    "seed": 5,
    "task": {"kind": "moons", "n": 80, "noise": 0.05,
             "val_fraction": 0.25, "seed": 1},
    "device": {"kind": "analytic", "seed": 3},
    "topology": {"widths": [2, 1], "d": 2},
    "train": {"learning_rate": 8.0e-3, "epochs": 12, "restarts": 1},
}


def write_config(path, overrides=None, **replaced_sections):
    cfg = {k: dict(v) if isinstance(v, dict) else v for k, v in QUICK.items()}
    cfg.update(replaced_sections)
    for dotted, value in (overrides or {}).items():
        section, _, key = dotted.partition(".")
        if key:
            cfg.setdefault(section, {})[key] = value
        else:
            cfg[section] = value
    path.write_text(yaml.safe_dump(cfg))
    return path


@pytest.fixture(scope="module")
def trained_run(tmp_path_factory):
    base = tmp_path_factory.mktemp("trained")
    config = write_config(base / "quick.yaml")
    out = base / "run"
    assert run_command(["train", str(config), "--out-dir", str(out)]) == 0
    return config, out


# ---------------------------------------------------------------------------
# exit codes and argument handling

def test_help_exits_zero(capsys):
    assert run_command(["--help"]) == 0
    assert "train" in capsys.readouterr().out


def test_version_flag(capsys):
    assert run_command(["--version"]) == 0
    assert "akan" in capsys.readouterr().out


def test_no_command_is_usage_error():
    assert run_command([]) == 2


def test_unknown_command_is_usage_error():
    assert run_command(["transmogrify"]) == 2


def test_missing_config_file_is_config_error(capsys):
    assert run_command(["train", "/nonexistent/exp.yaml"]) == 2
    err = capsys.readouterr().err
    assert err.startswith("error:")
    assert err.count("\n") == 1  # one-line diagnostic


def test_config_requires_seed(tmp_path, capsys):
    cfg = {k: v for k, v in QUICK.items() if k != "seed"}
    path = tmp_path / "noseed.yaml"
    path.write_text(yaml.safe_dump(cfg))
    assert run_command(["train", str(path)]) == 2
    assert "seed" in capsys.readouterr().err


def test_config_rejects_unknown_root_key(tmp_path, capsys):
    path = write_config(tmp_path / "bad.yaml", {"topologee": {"widths": [2]}})
    assert run_command(["train", str(path)]) == 2
    assert "topologee" in capsys.readouterr().err


def test_config_rejects_unknown_task_kind(tmp_path):
    path = write_config(tmp_path / "bad.yaml", {"task.kind": "blobs"})
    assert run_command(["train", str(path)]) == 2


def test_config_rejects_unknown_regression_name(tmp_path, capsys):
    path = write_config(
        tmp_path / "bad.yaml",
        task={"kind": "regression", "name": "cosine"},
    )
    assert run_command(["train", str(path)]) == 2
    assert "cosine" in capsys.readouterr().err


def test_config_rejects_bad_train_value(tmp_path):
    path = write_config(tmp_path / "bad.yaml", {"train.learning_rate": 2.0})
    assert run_command(["train", str(path)]) == 2


def test_device_checkpoint_must_exist(tmp_path):
    path = write_config(tmp_path / "bad.yaml",
                        device={"kind": "checkpoint", "path": "gone.ckpt"})
    assert run_command(["train", str(path)]) == 2


# ---------------------------------------------------------------------------
# train

def test_train_writes_expected_artifacts(trained_run):
    _, out = trained_run
    for name in ("model.ckpt", "device.ckpt", "history.csv", "restarts.csv",
                 "decision_boundary.csv", "manifest.json"):
        assert (out / name).is_file(), name


def test_train_manifest_lists_every_artifact_with_true_hash(trained_run):
    _, out = trained_run
    manifest = json.loads((out / "manifest.json").read_text())
    on_disk = {p.name for p in out.iterdir()} - {"manifest.json"}
    assert set(manifest["files"]) == on_disk
    for name, digest in manifest["files"].items():
        assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest
    assert manifest["command"] == "train"
    assert manifest["seed"] == 5
    assert manifest["versions"]["backend"] in ("numba", "numpy")


def test_train_rerun_is_byte_identical(trained_run, tmp_path):
    config, out = trained_run
    again = tmp_path / "again"
    assert run_command(["train", str(config), "--out-dir", str(again)]) == 0
    for path in out.iterdir():
        assert (again / path.name).read_bytes() == path.read_bytes(), \
            path.name


def test_boundary_grid_is_200_by_200(trained_run):
    _, out = trained_run
    lines = (out / "decision_boundary.csv").read_text().splitlines()
    assert lines[0] == "x0,x1,output"
    assert len(lines) == 40_001


def test_saved_model_reloads_and_runs(trained_run):
    _, out = trained_run
    model = load_model(str(out / "model.ckpt"))
    preds = model.forward_batch(np.array([[0.0, 0.0], [1.0, 0.5]]))
    assert preds.shape == (2, 1)
    assert np.all(np.isfinite(preds))


def test_train_env_output_dir(tmp_path, monkeypatch):
    config = write_config(tmp_path / "quick.yaml")
    env_dir = tmp_path / "from_env"
    monkeypatch.setenv("AKAN_OUTPUT_DIR", str(env_dir))
    assert run_command(["train", str(config)]) == 0
    assert (env_dir / "manifest.json").is_file()
    # an explicit flag still wins over the environment
    flag_dir = tmp_path / "from_flag"
    assert run_command(["train", str(config), "--out-dir",
                        str(flag_dir)]) == 0
    assert (flag_dir / "manifest.json").is_file()


def test_train_regression_has_no_boundary_file(tmp_path):
    config = write_config(
        tmp_path / "sine.yaml",
        task={"kind": "regression", "name": "sine", "samples": 60, "seed": 0},
        topology={"widths": [1, 1], "d": 2},
    )
    out = tmp_path / "run"
    assert run_command(["train", str(config), "--out-dir", str(out)]) == 0
    assert not (out / "decision_boundary.csv").exists()
    history = (out / "history.csv").read_text().splitlines()
    assert history[0] == "epoch,loss,metric"
    assert len(history) == 1 + 12 + 1  # header, initial loss, then per epoch


def test_train_with_hardware_writes_estimate(tmp_path):
    repo_hw = Path(__file__).resolve().parent.parent / "configs/hardware.yaml"
    config = write_config(tmp_path / "quick.yaml",
                          hardware=str(repo_hw))
    out = tmp_path / "run"
    assert run_command(["train", str(config), "--out-dir", str(out)]) == 0
    rows = dict(csv.reader((out / "estimate.csv").open()))
    assert rows["architecture"] == "[2,1]x2"
    assert float(rows["t_d_s"]) == 5.2e-7  # one edge layer


# ---------------------------------------------------------------------------
# sweep

@pytest.fixture(scope="module")
def sweep_run(tmp_path_factory):
    base = tmp_path_factory.mktemp("sweep")
    config = write_config(
        base / "sweep.yaml",
        overrides={"train.epochs": 2, "task": {"samples": 50}},
    )
    out = base / "run"
    assert run_command(["sweep", str(config), "--grid", "akan-1var",
                        "--max-cells", "2", "--out-dir", str(out)]) == 0
    return config, out


def test_sweep_writes_grid_and_cells(sweep_run):
    _, out = sweep_run
    rows = list(csv.DictReader((out / "sweep_akan-1var.csv").open()))
    assert len(rows) == 2 * 6  # 5 seeds + 1 summary per cell
    cells = sorted(p.name for p in (out / "cells").iterdir())
    assert cells == ["1-1-x10.csv", "1-1-x5.csv"]
    manifest = json.loads((out / "manifest.json").read_text())
    assert "cells/1-1-x5.csv" in manifest["files"]


def test_sweep_plot_rows_match_run_rows(sweep_run):
    _, out = sweep_run
    plot = list(csv.DictReader((out / "mse_vs_params.csv").open()))
    assert len(plot) == 2 * 5  # one per (cell, seed), summaries excluded
    assert {r["family"] for r in plot} == {"akan"}


def test_sweep_parallel_matches_serial(sweep_run, tmp_path):
    config, out = sweep_run
    par = tmp_path / "par"
    assert run_command(["sweep", str(config), "--grid", "akan-1var",
                        "--max-cells", "2", "--workers", "2",
                        "--out-dir", str(par)]) == 0
    for name in ("sweep_akan-1var.csv", "mse_vs_params.csv",
                 "manifest.json"):
        assert (par / name).read_bytes() == (out / name).read_bytes()


def test_sweep_unknown_grid_is_config_error(tmp_path, capsys):
    config = write_config(tmp_path / "sweep.yaml")
    assert run_command(["sweep", str(config), "--grid", "nope"]) == 2
    assert "available" in capsys.readouterr().err


def test_sweep_without_grid_anywhere_is_config_error(tmp_path):
    config = write_config(tmp_path / "sweep.yaml")
    assert run_command(["sweep", str(config)]) == 2


# ---------------------------------------------------------------------------
# prune

def test_prune_pipeline_artifacts(tmp_path):
    config = write_config(
        tmp_path / "prune.yaml",
        task={"kind": "regression", "name": "exp2", "samples": 120,
              "seed": 20},
        topology={"widths": [2, 2, 1], "d": 2},
        train={"learning_rate": 8.0e-3, "epochs": 25},
        prune={"reg_lambda": 1.0e-3,
               "finetune": {"learning_rate": 8.0e-3, "epochs": 15}},
    )
    out = tmp_path / "run"
    assert run_command(["prune", str(config), "--out-dir", str(out)]) == 0
    summary = json.loads((out / "prune_summary.json").read_text())
    assert summary["widths_before"] == [2, 2, 1]
    assert summary["edge_processors_before"] == 6
    header = (out / "removals.csv").read_text().splitlines()[0]
    assert header == "layer,src,dst,rule,statistic,threshold"
    model = load_model(str(out / "pruned.ckpt"))
    assert model.forward_batch(np.array([[0.5, 0.5]])).shape == (1, 1)


def test_prune_accepts_pretrained_checkpoint(trained_run, tmp_path):
    _, run_dir = trained_run
    config = write_config(
        tmp_path / "prune.yaml",
        overrides={"prune": {"finetune": {"learning_rate": 8.0e-3,
                                          "epochs": 5}}},
        model=str(run_dir / "model.ckpt"),
    )
    out = tmp_path / "run"
    assert run_command(["prune", str(config), "--out-dir", str(out)]) == 0
    assert (out / "pruned.ckpt").is_file()


# ---------------------------------------------------------------------------
# estimate

def test_estimate_topology_emits_530ns_row(tmp_path):
    out = tmp_path / "est"
    assert run_command(["estimate", "--topology", "[2,1,1]x3",
                        "--out-dir", str(out)]) == 0
    rows = dict(csv.reader((out / "estimate.csv").open()))
    assert float(rows["t_d_s"]) == 5.3e-7
    assert rows["architecture"] == "[2,1,1]x3"
    assert float(rows["samples"]) == 1000


def test_estimate_mlp_label(tmp_path):
    out = tmp_path / "est"
    assert run_command(["estimate", "--topology", "[2,200,1]:tanh",
                        "--out-dir", str(out)]) == 0
    rows = dict(csv.reader((out / "estimate.csv").open()))
    assert int(rows["cycles"]) == 52
    assert float(rows["t_d_s"]) == 52 / 500e6


def test_estimate_with_hardware_file(tmp_path):
    hw = tmp_path / "hw.yaml"
    hw.write_text("p_tia: 1.0e-6\n")
    out = tmp_path / "est"
    assert run_command(["estimate", "--topology", "[2,1,1]x3",
                        "--hardware", str(hw), "--out-dir", str(out)]) == 0
    rows = dict(csv.reader((out / "estimate.csv").open()))
    # 2 nodes * 1 uW * 530 ns * 1000 samples
    assert float(rows["e_tia_j"]) == pytest.approx(2 * 1e-6 * 5.3e-7 * 1000,
                                                   rel=1e-12)


def test_estimate_sweep_join(sweep_run, tmp_path):
    _, run_dir = sweep_run
    out = tmp_path / "est"
    assert run_command(["estimate", "--sweep",
                        str(run_dir / "sweep_akan-1var.csv"),
                        "--out-dir", str(out)]) == 0
    rows = list(csv.DictReader((out / "cost_vs_mse.csv").open()))
    assert len(rows) == 2  # one per summary row
    assert [r["family"] for r in rows] == ["akan", "akan"]
    assert float(rows[0]["energy_j"]) > 0


def test_estimate_without_inputs_is_usage_error(capsys):
    assert run_command(["estimate"]) == 2
    assert "topology" in capsys.readouterr().err


def test_estimate_bad_label_is_config_error():
    assert run_command(["estimate", "--topology", "[2,1,1]@3"]) == 2


# ---------------------------------------------------------------------------
# gen-data

def test_gen_data_moons_roundtrip(tmp_path):
    out = tmp_path / "moons.csv"
    assert run_command(["gen-data", "--task", "moons", "--n", "10",
                        "--noise", "0.05", "--seed", "1",
                        "--out", str(out)]) == 0
    X, y = read_dataset_csv(str(out))
    assert X.shape == (10, 2)
    assert set(np.unique(y)) <= {0.0, 1.0}


def test_gen_data_regression_targets_are_raw(tmp_path):
    out = tmp_path / "sine.csv"
    assert run_command(["gen-data", "--task", "sine", "--n", "8",
                        "--seed", "3", "--out", str(out)]) == 0
    X, y = read_dataset_csv(str(out))
    task = REGRESSION_TASKS["sine"]
    expect = task.fn(task.sample_inputs(3, 8))
    assert np.array_equal(y, expect)  # %.17g round-trips exactly


def test_gen_data_unknown_task(capsys):
    assert run_command(["gen-data", "--task", "blobs", "--out", "x.csv"]) == 2
    assert "moons" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# plot data

def test_emit_plotdata_refuses_empty(tmp_path):
    with pytest.raises(ConfigError):
        emit_plotdata(tmp_path)
    with pytest.raises(ConfigError):
        emit_plotdata(tmp_path, sweep_rows=[])


# ---------------------------------------------------------------------------
# device specs and the remote loop

def test_device_spec_parsing():
    assert isinstance(_device_from_spec("analytic:3"), AnalyticDevice)
    with pytest.raises(ConfigError):
        _device_from_spec("analytic:x")
    with pytest.raises(ConfigError):
        _device_from_spec("/nonexistent.ckpt")


def test_infer_remote_requires_endpoint(trained_run, tmp_path, monkeypatch,
                                        capsys):
    _, run_dir = trained_run
    monkeypatch.delenv("AKAN_DEVICE_ENDPOINT", raising=False)
    data = tmp_path / "d.csv"
    assert run_command(["gen-data", "--task", "moons", "--n", "4",
                        "--seed", "0", "--out", str(data)]) == 0
    assert run_command(["infer-remote", "--model",
                        str(run_dir / "model.ckpt"),
                        "--data", str(data)]) == 2
    assert "AKAN_DEVICE_ENDPOINT" in capsys.readouterr().err


def test_infer_remote_unreachable_endpoint_is_runtime_error(
        trained_run, tmp_path, capsys):
    _, run_dir = trained_run
    data = tmp_path / "d.csv"
    run_command(["gen-data", "--task", "moons", "--n", "4", "--seed", "0",
                 "--out", str(data)])
    assert run_command(["infer-remote", "--model",
                        str(run_dir / "model.ckpt"), "--data", str(data),
                        "--endpoint", "127.0.0.1:1",
                        "--out-dir", str(tmp_path / "o")]) == 1
    assert "cannot reach" in capsys.readouterr().err


def test_serve_device_and_infer_remote_subprocess(trained_run, tmp_path):
    """Full loop through real processes: serve, infer, SIGINT the server."""
    _, run_dir = trained_run
    data = tmp_path / "moons.csv"
    assert run_command(["gen-data", "--task", "moons", "--n", "6",
                        "--noise", "0.05", "--seed", "2",
                        "--out", str(data)]) == 0
    server = subprocess.Popen(
        [sys.executable, "-m", "akan.cli", "serve-device",
         "--device", "analytic:3", "--settle", "0"],
        stdout=subprocess.PIPE, text=True)
    try:
        endpoint = server.stdout.readline().strip().rsplit(" ", 1)[-1]
        out = tmp_path / "inf"
        assert run_command(["infer-remote",
                            "--model", str(run_dir / "model.ckpt"),
                            "--data", str(data),
                            "--endpoint", endpoint,
                            "--out-dir", str(out)]) == 0
        rows = list(csv.reader((out / "predictions.csv").open()))
        assert rows[0] == ["x0", "x1", "pred0"]
        preds = np.array([[float(c) for c in row] for row in rows[1:]])
        model = load_model(str(run_dir / "model.ckpt"))
        X, _ = read_dataset_csv(str(data))
        assert np.array_equal(preds[:, :2], X)
        assert np.array_equal(preds[:, 2:], model.forward_batch(X))
    finally:
        server.send_signal(signal.SIGINT)
    assert server.wait(timeout=10) == 0
