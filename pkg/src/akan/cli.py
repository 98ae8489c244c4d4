"""Command line front end: experiment configs in, CSV artifacts out.

Each run reads one YAML config, writes its outputs into a run directory,
and finishes with a ``manifest.json`` naming every artifact and its
SHA-256. Nothing in any output depends on the clock or the machine, and
all randomness flows from seeds recorded in the config, so rerunning an
unchanged config reproduces every file byte for byte.

Paths inside a config file resolve relative to the config file itself;
paths given on the command line resolve relative to the working
directory. ``AKAN_OUTPUT_DIR`` overrides the config's output directory
(an explicit ``--out-dir`` flag wins over both), and
``AKAN_DEVICE_ENDPOINT`` supplies a default device-server endpoint.

Exit codes: 0 success, 1 runtime failure (device link, checkpoint,
numerics), 2 bad usage or bad configuration.
"""

import argparse
import csv
import hashlib
import json
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from . import devlink
from . import hwcost as hw
from . import kernels
from .benchmarks.sweeps import SWEEP_GRIDS, parse_cell_label, run_sweep, \
    write_sweep_csv
from .benchmarks.tasks import REGRESSION_TASKS, ClassificationTask, \
    make_moons, make_spirals, read_dataset_csv, regression_dataset, \
    write_dataset_csv
from .checkpoint import format_float
from .devices import AnalyticDevice, MlpSurrogate, load_device, save_device
from .errors import AkanError, ConfigError, DataSchemaError, StructuralError
from .network import Topology, load_model, random_init, save_model
from .pruning import PruneConfig, prune_and_finetune, write_removal_log
from .training import TrainConfig, multi_restart, train, write_history_csv

__version__ = "0.1.0"

OUTPUT_DIR_VAR = "AKAN_OUTPUT_DIR"
ENDPOINT_VAR = "AKAN_DEVICE_ENDPOINT"
BOUNDARY_RESOLUTION = 200
COST_SAMPLES = 1000  # batch size that converter setup is amortized over


# ---------------------------------------------------------------------------
# small file plumbing

def _atomic(path: Path, writer) -> Path:
    """Write through ``writer(tmp)`` then rename; readers never see a
    half-written file and an interrupted run leaves no truncated output."""
    tmp = path.with_name(path.name + ".part")
    writer(str(tmp))
    os.replace(tmp, path)
    return path


def _atomic_text(path: Path, text: str) -> Path:
    return _atomic(path, lambda p: Path(p).write_text(text))


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _versions() -> dict:
    v = {
        "akan": __version__,
        "backend": kernels.active_backend(),
        "numpy": np.__version__,
        "python": platform.python_version(),
    }
    try:
        import numba
        v["numba"] = numba.__version__
    except ImportError:
        pass
    return v


def _write_manifest(out_dir: Path, command: str, config_sha: str, seed,
                    files) -> Path:
    entries = {
        f.relative_to(out_dir).as_posix(): _sha256(f)
        for f in sorted(set(files))
    }
    manifest = {
        "command": command,
        "config_sha256": config_sha,
        "files": entries,
        "seed": seed,
        "versions": _versions(),
    }
    return _atomic_text(out_dir / "manifest.json",
                        json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _resolve_out_dir(flag_value, config_value, default: str) -> Path:
    raw = flag_value or os.environ.get(OUTPUT_DIR_VAR) or config_value \
        or default
    out = Path(raw)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _slug(label: str) -> str:
    """Architecture label -> filename-safe token ('[2,5,1]:relu' ->
    '2-5-1-relu')."""
    runs, current = [], []
    for ch in label:
        if ch.isalnum():
            current.append(ch)
        elif current:
            runs.append("".join(current))
            current = []
    if current:
        runs.append("".join(current))
    return "-".join(runs)


# ---------------------------------------------------------------------------
# config loading

def _check_keys(section: dict, allowed, where: str) -> None:
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")


def _read_yaml_mapping(path: Path, what: str) -> dict:
    if not path.is_file():
        raise ConfigError(f"{what} {path} does not exist")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as ex:
        raise ConfigError(f"{what} {path} is not valid YAML: {ex}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{what} {path} must be a key-value mapping")
    return raw


_ROOT_KEYS = ("seed", "output_dir", "task", "device", "topology", "train",
              "prune", "model", "model_seed", "hardware", "grid")


class Experiment:
    """One parsed config file plus the digest that goes in the manifest."""

    def __init__(self, path):
        self.path = Path(path)
        if not self.path.is_file():
            raise ConfigError(f"config file {path} does not exist")
        self.digest = hashlib.sha256(self.path.read_bytes()).hexdigest()
        self.raw = _read_yaml_mapping(self.path, "config file")
        _check_keys(self.raw, _ROOT_KEYS, "config")
        if "seed" not in self.raw:
            raise ConfigError("config: 'seed' is required; every run must "
                              "pin its randomness")
        self.seed = int(self.raw["seed"])
        self.base = self.path.parent

    def section(self, name: str) -> dict:
        value = self.raw.get(name)
        if not isinstance(value, dict):
            raise ConfigError(f"config: '{name}' section is required")
        return value

    def ref(self, value) -> Path:
        """A path named inside the config, anchored at the config file."""
        p = Path(value)
        return p if p.is_absolute() else self.base / p


def _build_topology(section: dict):
    _check_keys(section, ("widths", "d", "skip", "node_bias"), "topology")
    if "widths" not in section:
        raise ConfigError("topology: 'widths' is required")
    try:
        topo = Topology(tuple(int(w) for w in section["widths"]),
                        int(section.get("d", 1)),
                        bool(section.get("skip", False)))
    except (StructuralError, TypeError, ValueError) as ex:
        raise ConfigError(f"topology: {ex}") from None
    return topo, bool(section.get("node_bias", False))


def _build_device(section: dict, exp: Experiment):
    _check_keys(section, ("kind", "seed", "path"), "device")
    kind = section.get("kind")
    if kind in ("analytic", "surrogate"):
        if "seed" not in section:
            raise ConfigError(f"device: '{kind}' needs a seed")
        cls = AnalyticDevice if kind == "analytic" else MlpSurrogate
        return cls.from_seed(int(section["seed"]))
    if kind == "checkpoint":
        if "path" not in section:
            raise ConfigError("device: 'checkpoint' needs a path")
        path = exp.ref(section["path"])
        if not path.is_file():
            raise ConfigError(f"device: checkpoint {path} does not exist")
        return load_device(str(path))
    raise ConfigError(
        f"device: kind must be analytic, surrogate or checkpoint, "
        f"got {kind!r}"
    )


_TRAIN_KEYS = ("learning_rate", "epochs", "batch_size", "l1_gain_penalty",
               "restarts", "seed", "beta1", "beta2", "epsilon")


def _build_train(section: dict, default_seed: int) -> TrainConfig:
    _check_keys(section, _TRAIN_KEYS, "train")
    kwargs = {k: section[k] for k in section}
    kwargs.setdefault("seed", default_seed)
    try:
        return TrainConfig(**kwargs)
    except (StructuralError, TypeError) as ex:
        raise ConfigError(f"train: {ex}") from None


def _build_dataset(section: dict, default_seed: int, exp: Experiment):
    kind = section.get("kind")
    seed = int(section.get("seed", default_seed))
    if kind == "regression":
        _check_keys(section, ("kind", "name", "samples", "seed",
                              "val_fraction"), "task")
        name = section.get("name")
        if name not in REGRESSION_TASKS:
            raise ConfigError(
                f"task: unknown regression target {name!r}; available: "
                f"{', '.join(sorted(REGRESSION_TASKS))}"
            )
        return regression_dataset(name, seed, section.get("samples"),
                                  float(section.get("val_fraction", 0.0)))
    if kind in ("moons", "spirals"):
        allowed = {"kind", "n", "noise", "seed", "val_fraction"}
        if kind == "spirals":
            allowed.add("turns")
        _check_keys(section, allowed, "task")
        params = {"n": int(section.get("n", 2000)),
                  "noise": float(section.get("noise", 0.05))}
        if kind == "spirals":
            params["turns"] = float(section.get("turns", 1.0))
        task = ClassificationTask(kind, kind, params,
                                  float(section.get("val_fraction", 0.2)),
                                  seed)
        return task.realize()
    if kind == "tabular":
        _check_keys(section, ("kind", "name", "path", "schema", "seed",
                              "val_fraction"), "task")
        for key in ("path", "schema"):
            if key not in section:
                raise ConfigError(f"task: tabular needs '{key}'")
        data_path = exp.ref(section["path"])
        if not data_path.is_file():
            raise ConfigError(f"task: dataset file {data_path} does not "
                              f"exist")
        schema = _read_yaml_mapping(exp.ref(section["schema"]),
                                    "dataset schema")
        task = ClassificationTask(
            section.get("name", data_path.stem), "tabular",
            {"path": str(data_path), "schema": schema},
            float(section.get("val_fraction", 0.2)), seed,
        )
        return task.realize()
    raise ConfigError(
        f"task: kind must be regression, moons, spirals or tabular, "
        f"got {kind!r}"
    )


# ---------------------------------------------------------------------------
# plot data

def write_boundary_csv(path, model) -> None:
    """Raw model output over a uniform grid spanning the model's feature
    window: one (x0, x1, output) row per grid point, 200 x 200 points."""
    enc = model.encoder
    if enc.src_lo.shape[0] != 2:
        raise ConfigError("decision boundary grids need exactly 2 features")
    axes = [np.linspace(enc.src_lo[i], enc.src_hi[i], BOUNDARY_RESOLUTION)
            for i in range(2)]
    g0, g1 = np.meshgrid(axes[0], axes[1], indexing="ij")
    X = np.column_stack([g0.ravel(), g1.ravel()])
    out = model.forward_batch(X)[:, 0]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x0", "x1", "output"])
        for row, value in zip(X, out):
            writer.writerow([format_float(row[0]), format_float(row[1]),
                             format_float(float(value))])


def write_accuracy_csv(path, rows) -> None:
    """(params, mse, family) per run row; summary rows are derived values
    and stay out of plot data."""
    data = [r for r in rows if r.seed != "summary"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["params", "mse", "family"])
        for r in data:
            writer.writerow([r.params, format_float(r.mse),
                             parse_cell_label(r.cell).kind])


def emit_plotdata(out_dir: Path, sweep_rows=None, boundary_model=None):
    """Plot-ready CSVs from finished results. Refuses empty input: a
    plot file with only a header would silently hide an upstream failure."""
    written = []
    if sweep_rows is not None:
        if not [r for r in sweep_rows if r.seed != "summary"]:
            raise ConfigError("no finished runs to plot")
        written.append(_atomic(out_dir / "mse_vs_params.csv",
                               lambda p: write_accuracy_csv(p, sweep_rows)))
    if boundary_model is not None:
        written.append(_atomic(out_dir / "decision_boundary.csv",
                               lambda p: write_boundary_csv(p,
                                                            boundary_model)))
    if not written:
        raise ConfigError("no results to plot")
    return written


def _write_cost_csv(path, label: str, samples: int, report) -> None:
    a = report.area
    rows = [
        ("architecture", label),
        ("samples", samples),
        ("t_d_s", format_float(report.t_d)),
        ("e_dac_j", format_float(report.e_dac)),
        ("e_adc_j", format_float(report.e_adc)),
        ("e_tia_j", format_float(report.e_tia)),
        ("e_rnpu_j", format_float(report.e_rnpu)),
        ("e_total_j", format_float(report.e_total)),
        ("energy_per_inference_j", format_float(report.energy_per_inference)),
        ("area_rnpu_m2", format_float(a.rnpu)),
        ("area_tia_m2", format_float(a.tia)),
        ("area_dac_m2", format_float(a.dac)),
        ("area_adc_m2", format_float(a.adc)),
        ("area_total_m2", format_float(a.total)),
    ]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["quantity", "value"])
        writer.writerows(rows)


def _write_digital_cost_csv(path, label: str, report) -> None:
    rows = [
        ("architecture", label),
        ("macs", report.macs),
        ("activations", report.activations),
        ("cycles", report.cycles),
        ("t_d_s", format_float(report.t_d)),
        ("e_total_j", format_float(report.e_total)),
        ("area_total_m2", format_float(report.area)),
    ]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["quantity", "value"])
        writer.writerows(rows)


def _estimate_files(out_dir: Path, model, spec, samples: int):
    """Cost table for a finished model; masked-out units cost nothing."""
    t = model.topology
    label = "[" + ",".join(str(w) for w in t.widths) + f"]x{t.d}"
    counts = hw.counts_from_model(model, samples=samples)
    report = hw.energy(counts, spec)
    return [_atomic(out_dir / "estimate.csv",
                    lambda p: _write_cost_csv(p, label, samples, report))]


def _load_hardware(path_value, exp: Experiment = None):
    if path_value is None:
        return None
    path = exp.ref(path_value) if exp is not None else Path(path_value)
    return hw.load_hardware_spec(str(path))


# ---------------------------------------------------------------------------
# commands

def cmd_train(args) -> int:
    exp = Experiment(args.config)
    out = _resolve_out_dir(args.out_dir, exp.raw.get("output_dir"),
                           f"runs/{exp.path.stem}")
    dataset = _build_dataset(exp.section("task"), exp.seed, exp)
    device = _build_device(exp.section("device"), exp)
    topo, node_bias = _build_topology(exp.section("topology"))
    config = _build_train(exp.raw.get("train") or {}, exp.seed)

    report = multi_restart(topo, device, dataset, config,
                           use_node_bias=node_bias)
    best = report.best

    files = [
        _atomic(out / "device.ckpt", lambda p: save_device(device, p)),
        _atomic(out / "model.ckpt",
                lambda p: save_model(best.model, p,
                                     device_ref="device.ckpt")),
        _atomic(out / "history.csv", lambda p: write_history_csv(p, best)),
        _atomic(out / "restarts.csv",
                lambda p: _write_restarts_csv(p, report)),
    ]
    if dataset.kind == "classification" and dataset.n_features == 2:
        files += emit_plotdata(out, boundary_model=best.model)
    if exp.raw.get("hardware"):
        spec = _load_hardware(exp.raw["hardware"], exp)
        files += _estimate_files(out, best.model, spec, COST_SAMPLES)
    _write_manifest(out, "train", exp.digest, exp.seed, files)

    line = f"train: best loss {best.best_loss:.6g}"
    if best.best_metric is not None:
        line += f", val accuracy {best.best_metric:.4f}"
    print(line + f" -> {out}")
    return 0


def _write_restarts_csv(path, report) -> None:
    """One row per restart, ranked by best loss (the order models are
    reported in, not the order they ran in)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rank", "best_epoch", "epochs_run", "best_loss",
                         "best_metric", "diverged", "plateau_stop"])
        for rank, r in enumerate(report.reports):
            writer.writerow([
                rank, r.best_epoch, r.epochs_run,
                format_float(r.best_loss),
                "" if r.best_metric is None else format_float(r.best_metric),
                int(r.diverged), int(r.plateau_stop),
            ])


def cmd_sweep(args) -> int:
    exp = Experiment(args.config)
    grid = args.grid or exp.raw.get("grid")
    if not grid:
        raise ConfigError("no sweep grid: pass --grid or set 'grid' in the "
                          "config")
    if grid not in SWEEP_GRIDS:
        raise ConfigError(
            f"unknown sweep grid {grid!r}; available: "
            f"{', '.join(sorted(SWEEP_GRIDS))}"
        )
    device = _build_device(exp.section("device"), exp)
    config = _build_train(exp.raw.get("train") or {}, exp.seed)
    task = exp.raw.get("task") or {}
    _check_keys(task, ("seed", "samples"), "task")

    cells = None
    if args.max_cells is not None:
        if args.max_cells < 1:
            raise ConfigError("--max-cells must be at least 1")
        cells = SWEEP_GRIDS[grid].cells[:args.max_cells]

    out = _resolve_out_dir(args.out_dir, exp.raw.get("output_dir"),
                           f"runs/{exp.path.stem}")
    cells_dir = out / "cells"
    cells_dir.mkdir(exist_ok=True)
    files = []

    def on_cell(cell, rows):
        path = cells_dir / f"{_slug(cell.label())}.csv"
        files.append(_atomic(path, lambda p: write_sweep_csv(p, rows)))

    rows = run_sweep(grid, device, config,
                     dataset_seed=int(task.get("seed", exp.seed)),
                     samples=task.get("samples"), cells=cells,
                     workers=args.workers, on_cell=on_cell)

    files.append(_atomic(out / f"sweep_{grid}.csv",
                         lambda p: write_sweep_csv(p, rows)))
    files += emit_plotdata(out, sweep_rows=rows)
    _write_manifest(out, "sweep", exp.digest, exp.seed, files)

    n_cells = len(cells if cells is not None else SWEEP_GRIDS[grid].cells)
    print(f"sweep {grid}: {n_cells} cells, {len(rows)} rows -> {out}")
    return 0


def cmd_prune(args) -> int:
    exp = Experiment(args.config)
    out = _resolve_out_dir(args.out_dir, exp.raw.get("output_dir"),
                           f"runs/{exp.path.stem}")
    dataset = _build_dataset(exp.section("task"), exp.seed, exp)
    device = _build_device(exp.section("device"), exp)
    topo, node_bias = _build_topology(exp.section("topology"))

    psec = exp.raw.get("prune") or {}
    _check_keys(psec, ("activation_threshold", "contribution_threshold",
                       "reg_lambda", "finetune"), "prune")
    try:
        config = PruneConfig(
            float(psec.get("activation_threshold", 1e-3)),
            float(psec.get("contribution_threshold", 1e-2)),
            finetune=_build_train(psec.get("finetune") or {}, exp.seed),
        )
    except StructuralError as ex:
        raise ConfigError(f"prune: {ex}") from None
    reg_lambda = psec.get("reg_lambda")
    reg_lambda = None if reg_lambda is None else float(reg_lambda)

    if exp.raw.get("model"):
        path = exp.ref(exp.raw["model"])
        if not path.is_file():
            raise ConfigError(f"model checkpoint {path} does not exist")
        model = load_model(str(path), device=device)
    else:
        model = random_init(topo, device,
                            int(exp.raw.get("model_seed", exp.seed)),
                            feature_lo=dataset.feature_lo,
                            feature_hi=dataset.feature_hi,
                            use_node_bias=node_bias)
        train(model, dataset, _build_train(exp.raw.get("train") or {},
                                           exp.seed))

    n_before = int(sum(lay.active.sum() for lay in model.edge_layers))
    report = prune_and_finetune(model, dataset, config, reg_lambda)

    summary = {
        "edge_processors_before": n_before,
        "edge_processors_removed": report.n_removed,
        "mse_finetuned": report.mse_finetuned,
        "mse_input": report.mse_input,
        "mse_pruned": report.mse_pruned,
        "mse_regularized": report.mse_regularized,
        "widths_after": list(report.model.topology.widths),
        "widths_before": list(topo.widths),
    }
    files = [
        _atomic(out / "device.ckpt", lambda p: save_device(device, p)),
        _atomic(out / "pruned.ckpt",
                lambda p: save_model(report.model, p,
                                     device_ref="device.ckpt")),
        _atomic(out / "removals.csv",
                lambda p: write_removal_log(p, report.log)),
        _atomic_text(out / "prune_summary.json",
                     json.dumps(summary, indent=2, sort_keys=True) + "\n"),
    ]
    if exp.raw.get("hardware"):
        spec = _load_hardware(exp.raw["hardware"], exp)
        files += _estimate_files(out, report.model, spec, COST_SAMPLES)
    _write_manifest(out, "prune", exp.digest, exp.seed, files)

    print(f"prune: removed {report.n_removed} of {n_before} edge "
          f"processors, mse {report.mse_input:.3g} -> "
          f"{report.mse_finetuned:.3g} -> {out}")
    return 0


def cmd_estimate(args) -> int:
    if not args.topology and not args.sweep:
        raise ConfigError("nothing to estimate: pass --topology and/or "
                          "--sweep")
    out = _resolve_out_dir(args.out_dir, None, "runs/estimate")
    spec = _load_hardware(args.hardware)
    digital = hw.load_digital_spec(args.digital) if args.digital else None
    files = []

    if args.topology:
        cell = parse_cell_label(args.topology)
        if cell.kind == "akan":
            counts = hw.counts_from_topology(
                Topology(cell.widths, cell.d), samples=args.samples)
            report = hw.energy(counts, spec,
                               single_shot_power=args.single_shot)
            files.append(_atomic(
                out / "estimate.csv",
                lambda p: _write_cost_csv(p, args.topology, args.samples,
                                          report)))
        else:
            report = hw.mlp_cost(cell.widths, digital)
            files.append(_atomic(
                out / "estimate.csv",
                lambda p: _write_digital_cost_csv(p, args.topology, report)))

    ratio = None
    if args.sweep:
        rows = []
        for sweep_csv in args.sweep:
            rows += hw.pareto_rows(sweep_csv, spec, digital,
                                   samples=args.samples)
        if not rows:
            raise ConfigError("sweep csv has no summary rows to estimate")
        files.append(_atomic(out / "cost_vs_mse.csv",
                             lambda p: hw.write_pareto_csv(p, rows)))
        ratio = hw.energy_ratio(rows)

    digest = hashlib.sha256(_canonical({
        "digital": args.digital, "hardware": args.hardware,
        "samples": args.samples, "single_shot": args.single_shot,
        "sweeps": list(args.sweep), "topology": args.topology,
    }).encode()).hexdigest()
    _write_manifest(out, "estimate", digest, None, files)

    line = f"estimate -> {out}"
    if ratio is not None:
        line = (f"estimate: digital needs {ratio:.3g}x the analog energy "
                f"at matched accuracy -> {out}")
    print(line)
    return 0


def cmd_gen_data(args) -> int:
    if args.task in REGRESSION_TASKS:
        task = REGRESSION_TASKS[args.task]
        X = task.sample_inputs(args.seed, args.n)
        y = task.fn(X)  # raw target values, not normalized
    elif args.task == "moons":
        X, y = make_moons(args.n, args.noise, args.seed)
    elif args.task == "spirals":
        X, y = make_spirals(args.n, args.turns, args.noise, args.seed)
    else:
        names = sorted(REGRESSION_TASKS) + ["moons", "spirals"]
        raise ConfigError(f"unknown task {args.task!r}; available: "
                          f"{', '.join(names)}")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _atomic(out, lambda p: write_dataset_csv(p, X, y))
    print(f"gen-data: {args.task}, {len(y)} samples -> {out}")
    return 0


def _device_from_spec(text: str):
    """'analytic:SEED', 'surrogate:SEED', or a device checkpoint path."""
    head, sep, tail = text.partition(":")
    if sep and head in ("analytic", "surrogate"):
        try:
            seed = int(tail)
        except ValueError:
            raise ConfigError(
                f"device seed in {text!r} is not an integer") from None
        cls = AnalyticDevice if head == "analytic" else MlpSurrogate
        return cls.from_seed(seed)
    if Path(text).is_file():
        return load_device(text)
    raise ConfigError(
        f"device spec {text!r} is neither analytic:SEED, surrogate:SEED "
        f"nor an existing checkpoint"
    )


def cmd_serve_device(args) -> int:
    device = _device_from_spec(args.device)
    config = devlink.ServerConfig(device, settle_s=args.settle,
                                  host=args.host, port=args.port)
    server = devlink.serve(config)
    host, port = server.endpoint
    print(f"serving device on {host}:{port}", flush=True)
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        pass
    finally:
        server.close()
    return 0


def cmd_infer_remote(args) -> int:
    endpoint = args.endpoint or os.environ.get(ENDPOINT_VAR)
    if not endpoint:
        raise ConfigError(f"no device endpoint: pass --endpoint or set "
                          f"{ENDPOINT_VAR}")
    endpoint = devlink.parse_endpoint(endpoint)
    device = load_device(args.device) if args.device else None
    model = load_model(args.model, device=device)
    X, _ = read_dataset_csv(args.data)
    out = _resolve_out_dir(args.out_dir, None, "runs/infer")

    with devlink.DeviceClient(endpoint) as client:
        preds = np.atleast_2d(devlink.timemux_infer(model, X, client))
        n_requests = client.request_count

    def write_predictions(path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"x{i}" for i in range(X.shape[1])]
                            + [f"pred{j}" for j in range(preds.shape[1])])
            for row, pred in zip(X, preds):
                writer.writerow([format_float(v) for v in row]
                                + [format_float(float(v)) for v in pred])

    files = [_atomic(out / "predictions.csv", write_predictions)]
    digest = hashlib.sha256(_canonical({
        "data": args.data, "device": args.device, "model": args.model,
    }).encode()).hexdigest()
    _write_manifest(out, "infer-remote", digest, None, files)
    print(f"infer-remote: {X.shape[0]} samples, {n_requests} measurements "
          f"-> {out}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="akan",
        description="Train, prune and cost-model analog "
                    "Kolmogorov-Arnold networks.",
    )
    parser.add_argument("--version", action="version",
                        version=f"akan {__version__}")
    sub = parser.add_subparsers(dest="command", required=True,
                                metavar="command")

    p = sub.add_parser("train", help="fit one model from a config file")
    p.add_argument("config", help="experiment YAML")
    p.add_argument("--out-dir", help=f"run directory (overrides "
                                     f"{OUTPUT_DIR_VAR} and the config)")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("sweep",
                       help="train an architecture grid and tabulate losses")
    p.add_argument("config", help="experiment YAML (device, train, seed)")
    p.add_argument("--grid", help="grid name (overrides the config)")
    p.add_argument("--workers", type=int, default=1,
                   help="cells trained in parallel")
    p.add_argument("--max-cells", type=int,
                   help="only run the first N cells (smoke tests)")
    p.add_argument("--out-dir")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("prune",
                       help="sparsify a trained model and fine-tune it")
    p.add_argument("config", help="experiment YAML with a prune section")
    p.add_argument("--out-dir")
    p.set_defaults(fn=cmd_prune)

    p = sub.add_parser("estimate",
                       help="hardware cost model: energy, latency, area")
    p.add_argument("--topology",
                   help="architecture label, '[2,1,1]x3' or '[2,200,1]:tanh'")
    p.add_argument("--samples", type=int, default=COST_SAMPLES,
                   help="batch size converter setup is amortized over")
    p.add_argument("--hardware", help="YAML overriding analog constants")
    p.add_argument("--digital", help="YAML overriding digital constants")
    p.add_argument("--single-shot", action="store_true",
                   help="cost one isolated inference instead of a batch")
    p.add_argument("--sweep", action="append", default=[],
                   help="sweep CSV to join into a cost/accuracy table "
                        "(repeatable)")
    p.add_argument("--out-dir")
    p.set_defaults(fn=cmd_estimate)

    p = sub.add_parser("gen-data", help="write a dataset CSV")
    p.add_argument("--task", required=True,
                   help="sine, bessel, exp2, exp4, moons or spirals")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--noise", type=float, default=0.05,
                   help="moons/spirals only")
    p.add_argument("--turns", type=float, default=1.0, help="spirals only")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("serve-device",
                       help="expose a device over a TCP measurement link")
    p.add_argument("--device", required=True,
                   help="analytic:SEED, surrogate:SEED or checkpoint path")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=0,
                   help="0 lets the OS pick a free port")
    p.add_argument("--settle", type=float, default=devlink.DEFAULT_SETTLE_S,
                   help="simulated settling time per measurement, seconds")
    p.set_defaults(fn=cmd_serve_device)

    p = sub.add_parser("infer-remote",
                       help="run a model with every measurement served "
                            "remotely")
    p.add_argument("--model", required=True, help="model checkpoint")
    p.add_argument("--data", required=True, help="input CSV (gen-data "
                                                 "format; labels ignored)")
    p.add_argument("--endpoint", help=f"host:port (default from "
                                      f"{ENDPOINT_VAR})")
    p.add_argument("--device",
                   help="device checkpoint overriding the model's reference")
    p.add_argument("--out-dir")
    p.set_defaults(fn=cmd_infer_remote)
    return parser


def run_command(argv) -> int:
    """Parse and run one command; exceptions become exit codes, not
    tracebacks (0 ok, 1 runtime failure, 2 usage or config)."""
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as ex:  # argparse already printed the reason
        return int(ex.code or 0)
    try:
        return args.fn(args)
    except (ConfigError, DataSchemaError) as ex:
        print(f"error: {ex}", file=sys.stderr)
        return 2
    except FileNotFoundError as ex:
        print(f"error: {ex}", file=sys.stderr)
        return 2
    except AkanError as ex:
        print(f"error: {ex}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
