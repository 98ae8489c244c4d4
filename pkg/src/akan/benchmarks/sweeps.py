"""Configuration sweeps: MSE versus trainable-parameter count.

Each grid pairs one regression target with a family of architectures.
Every cell runs five independent seeded initializations; the CSV gets one
row per run plus a summary row carrying the best value and the min/max of
the top five. The runtime column is part of the layout but intentionally
left empty so that repeated runs produce byte-identical files.
"""

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from ..checkpoint import format_float
from ..errors import ConfigError
from ..network import Topology, random_init
from ..training import TrainConfig, train
from .mlp import ACTIVATIONS, MlpModel, mlp_param_count
from .tasks import regression_dataset

RUNS_PER_CELL = 5


@dataclass(frozen=True)
class SweepCell:
    kind: str  # "akan" | "mlp"
    widths: tuple
    d: int = None  # RNPUs per EP; None for MLP cells
    activation: str = None  # MLP nonlinearity; None for network cells

    def label(self) -> str:
        body = "[" + ",".join(str(w) for w in self.widths) + "]"
        if self.kind == "akan":
            return f"{body}x{self.d}"
        return f"{body}:{self.activation}"


def parse_cell_label(label: str) -> SweepCell:
    """Inverse of SweepCell.label(): '[2,3,1]x4' or '[2,5,1]:relu'."""
    text = label.strip()
    bad = ConfigError(f"unknown architecture label {label!r}; expected "
                      "'[w0,w1,...]xD' or '[w0,w1,...]:activation'")
    if not text.startswith("[") or "]" not in text:
        raise bad
    body, _, tail = text[1:].partition("]")
    try:
        widths = tuple(int(w) for w in body.split(","))
    except ValueError:
        raise bad from None
    if len(widths) < 2 or any(w < 1 for w in widths):
        raise bad
    if tail.startswith("x"):
        try:
            d = int(tail[1:])
        except ValueError:
            raise bad from None
        if d < 1:
            raise bad
        return SweepCell("akan", widths, d=d)
    if tail.startswith(":") and tail[1:] in ACTIVATIONS:
        return SweepCell("mlp", widths, activation=tail[1:])
    raise bad


@dataclass(frozen=True)
class SweepGrid:
    name: str
    task: str
    cells: tuple


def _akan_grid(name, task, width_lists, d_values):
    return SweepGrid(name, task, tuple(
        SweepCell("akan", tuple(w), d=d)
        for w in width_lists for d in d_values
    ))


def _mlp_grid(name, task, width_lists):
    return SweepGrid(name, task, tuple(
        SweepCell("mlp", tuple(w), activation=act)
        for w in width_lists for act in ("relu", "tanh")
    ))


SWEEP_GRIDS = {
    g.name: g
    for g in (
        _akan_grid("akan-1var", "bessel", [[1, 1]],
                   [5, 10, 15, 20, 25, 30, 35, 40, 45, 50]),
        _akan_grid("akan-2var", "exp2",
                   [[2, 1, 1], [2, 2, 1], [2, 3, 1], [2, 4, 1], [2, 5, 1],
                    [2, 1, 1, 1], [2, 2, 2, 1], [2, 3, 3, 1], [2, 4, 4, 1],
                    [2, 5, 5, 1]],
                   [1, 2, 3, 4, 5]),
        _akan_grid("akan-4var", "exp4",
                   [[4, 2, 1], [4, 3, 1], [4, 4, 1], [4, 1, 1, 1],
                    [4, 2, 2, 1], [4, 3, 3, 1], [4, 4, 4, 1],
                    [4, 1, 1, 1, 1], [4, 2, 2, 2, 1], [4, 3, 3, 3, 1],
                    [4, 4, 4, 4, 1]],
                   [1, 2, 3]),
        _mlp_grid("mlp-1var", "bessel",
                  [[1, 50, 1], [1, 100, 1], [1, 150, 1], [1, 200, 1],
                   [1, 250, 1], [1, 300, 1], [1, 350, 1], [1, 400, 1]]),
        _mlp_grid("mlp-2var", "exp2",
                  [[2, 5, 1], [2, 10, 1], [2, 20, 1], [2, 50, 1],
                   [2, 100, 1], [2, 200, 1], [2, 300, 1], [2, 400, 1],
                   [2, 500, 1]]),
        _mlp_grid("mlp-4var", "exp4",
                  [[4, 50, 1], [4, 100, 1], [4, 150, 1], [4, 200, 1],
                   [4, 250, 1], [4, 300, 1], [4, 10, 10, 1], [4, 15, 15, 1],
                   [4, 20, 20, 1], [4, 50, 50, 1], [4, 200, 200, 1],
                   [4, 300, 300, 1], [4, 400, 400, 1]]),
    )
}

CSV_COLUMNS = ("grid", "task", "cell", "params", "seed", "mse",
               "top5_min", "top5_max", "runtime")


@dataclass
class SweepRow:
    grid: str
    task: str
    cell: str
    params: int
    seed: str  # run seed, or "summary"
    mse: float
    top5_min: float = None
    top5_max: float = None


def cell_seeds(root_seed: int, cell_index: int, runs: int = RUNS_PER_CELL):
    """Stable per-cell seed pairs, independent of execution order."""
    children = np.random.SeedSequence([root_seed, cell_index]).spawn(runs)
    pairs = []
    for child in children:
        words = child.generate_state(2)
        pairs.append((int(words[0]), int(words[1])))
    return pairs


def _cell_param_count(cell: SweepCell, device) -> int:
    if cell.kind == "mlp":
        return mlp_param_count(cell.widths)
    topo = Topology(cell.widths, cell.d)
    model = random_init(topo, device, 0)
    return model.n_trainable()


def _run_cell(grid: SweepGrid, index: int, cell: SweepCell, device,
              config: TrainConfig, dataset):
    losses = []
    n_params = _cell_param_count(cell, device)
    for model_seed, batch_seed in cell_seeds(config.seed, index):
        if cell.kind == "akan":
            model = random_init(Topology(cell.widths, cell.d), device,
                                model_seed,
                                feature_lo=dataset.feature_lo,
                                feature_hi=dataset.feature_hi)
        else:
            model = MlpModel.from_seed(cell.widths, cell.activation,
                                       model_seed)
        report = train(model, dataset, replace(config, seed=batch_seed))
        losses.append((model_seed, report.best_loss))
    rows = [
        SweepRow(grid.name, grid.task, cell.label(), n_params,
                 str(seed), loss)
        for seed, loss in losses
    ]
    ranked = sorted(loss for _, loss in losses)[:5]
    rows.append(
        SweepRow(grid.name, grid.task, cell.label(), n_params, "summary",
                 ranked[0], top5_min=ranked[0], top5_max=ranked[-1])
    )
    return rows


def run_sweep(grid_name: str, device, config: TrainConfig,
              dataset_seed: int = 0, samples: int = None,
              cells=None, workers: int = 1, on_cell=None):
    """Train every cell of a named grid; returns rows in grid order.

    ``on_cell(cell, rows)`` is invoked once per finished cell, from the
    calling thread only, so the callback may write files without locking.
    """
    if grid_name not in SWEEP_GRIDS:
        raise ConfigError(
            f"unknown sweep grid {grid_name!r}; "
            f"available: {', '.join(sorted(SWEEP_GRIDS))}"
        )
    grid = SWEEP_GRIDS[grid_name]
    chosen = list(grid.cells if cells is None else cells)
    dataset = regression_dataset(grid.task, dataset_seed, samples)
    if workers <= 1:
        blocks = []
        for i, cell in enumerate(chosen):
            block = _run_cell(grid, i, cell, device, config, dataset)
            if on_cell is not None:
                on_cell(cell, block)
            blocks.append(block)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(_run_cell, grid, i, cell, device, config, dataset)
                for i, cell in enumerate(chosen)
            ]
            blocks = []
            for cell, fut in zip(chosen, futures):  # keeps grid order
                block = fut.result()
                if on_cell is not None:
                    on_cell(cell, block)
                blocks.append(block)
    return [row for block in blocks for row in block]


def write_sweep_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in rows:
            writer.writerow([
                r.grid, r.task, r.cell, r.params, r.seed,
                format_float(r.mse),
                "" if r.top5_min is None else format_float(r.top5_min),
                "" if r.top5_max is None else format_float(r.top5_max),
                "",  # runtime stays blank: reruns must be byte-identical
            ])
