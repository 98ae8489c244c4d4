"""Target functions and dataset plumbing for the benchmark suite.

Regression targets are evaluated in closed form and normalized to [-1, 1]
with the affine map recorded, so raw-scale predictions can be recovered.
Synthetic classification generators are seed-deterministic and draw their
noise through the same stream regardless of the noise level, which keeps
the clean geometry reproducible for statistical tests.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from ..checkpoint import format_float
from ..errors import DataSchemaError, RangeViolationError, StructuralError
from ..network import _lerp_exact

BESSEL_TERMS = 60
BESSEL_MAX_ARG = 25.0


def bessel_j0(x, terms: int = BESSEL_TERMS):
    """Order-zero Bessel function of the first kind via its power series.

    Terms follow the recurrence t_m = -t_{m-1} * (x/2)^2 / m^2, which keeps
    each term cheap and avoids forming factorials. The truncation budget is
    tuned for |x| <= 25; larger arguments are refused rather than returned
    inaccurately.
    """
    arr = np.asarray(x, dtype=float)
    if np.any(np.abs(arr) > BESSEL_MAX_ARG):
        raise RangeViolationError(
            f"series truncated at {terms} terms is only valid for "
            f"|x| <= {BESSEL_MAX_ARG}"
        )
    q = arr * arr / 4.0
    term = np.ones_like(arr)
    total = np.ones_like(arr)
    for m in range(1, terms + 1):
        term = -term * q / (m * m)
        total = total + term
    return float(total) if arr.ndim == 0 else total


def _sine_target(X):
    return np.sin(2.0 * np.pi * X[:, 0])


def _bessel_target(X):
    return bessel_j0(20.0 * X[:, 0])


def _exp2_target(X):
    return np.exp(np.sin(np.pi * X[:, 0]) + X[:, 1] ** 2)


def _exp4_target(X):
    a = np.sin(np.pi * (X[:, 0] ** 2 + X[:, 1] ** 2))
    b = np.sin(np.pi * (X[:, 2] ** 2 + X[:, 3] ** 2))
    return np.exp(a + b)


@dataclass(frozen=True)
class RegressionTask:
    name: str
    arity: int
    fn: callable
    domain_lo: tuple = None  # per-feature; defaults to the unit hypercube
    domain_hi: tuple = None
    samples: int = 1000

    def __post_init__(self):
        if self.arity not in (1, 2, 4):
            raise StructuralError("supported target arities are 1, 2 and 4")
        if self.domain_lo is None:
            object.__setattr__(self, "domain_lo", (0.0,) * self.arity)
        if self.domain_hi is None:
            object.__setattr__(self, "domain_hi", (1.0,) * self.arity)

    def sample_inputs(self, seed: int, n: int = None) -> np.ndarray:
        rng = np.random.default_rng(seed)
        n = self.samples if n is None else n
        return rng.uniform(self.domain_lo, self.domain_hi, (n, self.arity))


REGRESSION_TASKS = {
    t.name: t
    for t in (
        RegressionTask("sine", 1, _sine_target),
        RegressionTask("bessel", 1, _bessel_target),
        RegressionTask("exp2", 2, _exp2_target),
        RegressionTask("exp4", 4, _exp4_target),
    )
}


@dataclass(frozen=True)
class NormalizationMap:
    """Invertible affine map between raw targets and [-1, 1]."""

    raw_lo: float
    raw_hi: float

    def normalize(self, y):
        y = np.asarray(y, float)
        if self.raw_hi == self.raw_lo:
            return np.zeros_like(y)
        return _lerp_exact(y, np.asarray(self.raw_lo), np.asarray(self.raw_hi),
                           np.asarray(-1.0), np.asarray(1.0))

    def denormalize(self, y):
        y = np.asarray(y, float)
        if self.raw_hi == self.raw_lo:
            return np.full_like(y, self.raw_lo)
        return _lerp_exact(y, np.asarray(-1.0), np.asarray(1.0),
                           np.asarray(self.raw_lo), np.asarray(self.raw_hi))


def target_eval(task: RegressionTask, inputs):
    """Closed-form targets normalized to [-1, 1] by their batch min/max."""
    X = np.atleast_2d(np.asarray(inputs, float))
    if X.shape[1] != task.arity:
        raise StructuralError(
            f"task {task.name!r} takes {task.arity} inputs, got {X.shape[1]}"
        )
    lo = np.asarray(task.domain_lo)
    hi = np.asarray(task.domain_hi)
    if np.any(X < lo - 1e-12) or np.any(X > hi + 1e-12):
        raise RangeViolationError(f"inputs outside the {task.name!r} domain")
    raw = np.asarray(task.fn(X), float)
    norm = NormalizationMap(float(raw.min()), float(raw.max()))
    return norm.normalize(raw), norm


# -- synthetic classification ---------------------------------------------


def make_moons(n: int, noise: float, seed: int):
    """Two interleaved half-circles; labels in {0, 1}."""
    if n % 2:
        raise StructuralError("sample count must be even for balanced classes")
    if noise < 0:
        raise StructuralError("noise must be >= 0")
    rng = np.random.default_rng(seed)
    half = n // 2
    t0 = rng.uniform(0.0, np.pi, half)
    t1 = rng.uniform(0.0, np.pi, half)
    X = np.empty((n, 2))
    X[:half, 0] = np.cos(t0)
    X[:half, 1] = np.sin(t0)
    X[half:, 0] = 1.0 - np.cos(t1)
    X[half:, 1] = 0.5 - np.sin(t1)
    # noise drawn unconditionally so the clean geometry is seed-stable
    X = X + noise * rng.standard_normal((n, 2))
    y = np.repeat([0, 1], half)
    return X, y


def make_spirals(n: int, turns: float, noise: float, seed: int):
    """Two interleaved spiral arms; radius uniform on [0.1, 1]."""
    if n % 2:
        raise StructuralError("sample count must be even for balanced classes")
    if turns <= 0:
        raise StructuralError("turns must be > 0")
    rng = np.random.default_rng(seed)
    half = n // 2
    X = np.empty((n, 2))
    for k in (0, 1):
        r = rng.uniform(0.1, 1.0, half)
        theta = 2.0 * np.pi * turns * r + k * np.pi
        rows = slice(k * half, (k + 1) * half)
        X[rows, 0] = r * np.cos(theta)
        X[rows, 1] = r * np.sin(theta)
    X = X + 0.025 * noise * rng.standard_normal((n, 2))
    y = np.repeat([0, 1], half)
    return X, y


# -- dataset container -------------------------------------------------------


@dataclass
class Dataset:
    name: str
    X_train: np.ndarray
    y_train: np.ndarray
    X_val: np.ndarray
    y_val: np.ndarray
    kind: str  # "regression" | "classification"
    feature_lo: np.ndarray
    feature_hi: np.ndarray
    norm: NormalizationMap = None  # regression only

    @property
    def n_features(self) -> int:
        return self.X_train.shape[1]


def split_dataset(name, X, y, kind, seed, val_fraction=0.2,
                  norm=None) -> Dataset:
    """Seeded shuffle-split; classification labels re-encoded to {-1, +1}."""
    X = np.asarray(X, float)
    y = np.asarray(y, float)
    if len(X) != len(y):
        raise StructuralError("feature/label row counts differ")
    if not 0.0 <= val_fraction < 1.0:
        raise StructuralError("validation fraction must be in [0, 1)")
    if kind == "classification":
        bad = set(np.unique(y)) - {0.0, 1.0}
        if bad:
            raise StructuralError(f"labels must be 0/1, found {sorted(bad)}")
        y = np.where(y == 1.0, 1.0, -1.0)
    order = np.random.default_rng(seed).permutation(len(X))
    n_train = len(X) - int(round(len(X) * val_fraction))
    tr, va = order[:n_train], order[n_train:]
    return Dataset(
        name=name,
        X_train=X[tr], y_train=y[tr],
        X_val=X[va] if len(va) else None,
        y_val=y[va] if len(va) else None,
        kind=kind,
        feature_lo=X.min(axis=0), feature_hi=X.max(axis=0),
        norm=norm,
    )


def regression_dataset(task_name: str, seed: int, samples: int = None,
                       val_fraction: float = 0.0) -> Dataset:
    """Uniform input batch with normalized closed-form targets."""
    task = REGRESSION_TASKS[task_name]
    X = task.sample_inputs(seed, samples)
    y, norm = target_eval(task, X)
    ds = split_dataset(task_name, X, y, "regression", seed,
                       val_fraction, norm)
    ds.feature_lo = np.asarray(task.domain_lo, float)
    ds.feature_hi = np.asarray(task.domain_hi, float)
    return ds


@dataclass(frozen=True)
class ClassificationTask:
    """Recipe for one binary classification dataset."""

    name: str
    source: str  # "moons" | "spirals" | "tabular"
    params: dict = field(default_factory=dict)
    val_fraction: float = 0.2
    seed: int = 0

    def realize(self) -> Dataset:
        p = dict(self.params)
        if self.source == "moons":
            X, y = make_moons(p.get("n", 2000), p.get("noise", 0.05),
                              self.seed)
        elif self.source == "spirals":
            X, y = make_spirals(p.get("n", 2000), p.get("turns", 1.0),
                                p.get("noise", 1.0), self.seed)
        elif self.source == "tabular":
            X, y = load_tabular(p["path"], p["schema"])
        else:
            raise StructuralError(f"unknown dataset source {self.source!r}")
        return split_dataset(self.name, X, y, "classification",
                             self.seed, self.val_fraction)


# -- tabular ingestion --------------------------------------------------------


def load_tabular(path, schema: dict):
    """Delimiter-separated file -> (scaled features, 0/1 labels).

    Every feature column is mapped onto [-1, 1] by its own min/max so the
    endpoints land exactly on the operating-range endpoints. Parse problems
    carry 1-based line/column coordinates.
    """
    delimiter = schema.get("delimiter", ",")
    n_columns = int(schema["columns"])
    label_col = int(schema["label_column"])
    label_map = {str(k): int(v) for k, v in schema["label_map"].items()}
    skip = int(schema.get("skip_lines", 0))
    if not 0 <= label_col < n_columns:
        raise DataSchemaError("label column outside declared column range")
    if set(label_map.values()) - {0, 1}:
        raise DataSchemaError("label map must target classes 0 and 1")

    features, labels = [], []
    with open(path, newline="") as fh:
        for lineno, rawline in enumerate(fh, start=1):
            if lineno <= skip or not rawline.strip():
                continue
            cells = rawline.strip().split(delimiter)
            if len(cells) != n_columns:
                raise DataSchemaError(
                    f"line {lineno}: expected {n_columns} columns, "
                    f"found {len(cells)}"
                )
            row = []
            for col, cell in enumerate(cells, start=1):
                if col - 1 == label_col:
                    key = cell.strip()
                    if key not in label_map:
                        raise DataSchemaError(
                            f"line {lineno}, column {col}: "
                            f"unmapped label {key!r}"
                        )
                    labels.append(label_map[key])
                else:
                    try:
                        row.append(float(cell))
                    except ValueError:
                        raise DataSchemaError(
                            f"line {lineno}, column {col}: "
                            f"non-numeric cell {cell.strip()!r}"
                        ) from None
            features.append(row)
    if not features:
        raise DataSchemaError(f"no data rows in {path}")
    X = np.asarray(features, float)
    y = np.asarray(labels, float)
    lo, hi = X.min(axis=0), X.max(axis=0)
    span_ok = hi > lo
    scaled = np.where(
        span_ok,
        _lerp_exact(X, lo, np.where(span_ok, hi, lo + 1.0),
                    np.full_like(lo, -1.0), np.full_like(hi, 1.0)),
        0.0,
    )
    return scaled, y


# -- CSV round trip ------------------------------------------------------------


def write_dataset_csv(path, X, y) -> None:
    """Header, one row per sample, label last."""
    X = np.asarray(X, float)
    y = np.asarray(y)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i}" for i in range(X.shape[1])] + ["label"])
        for row, lab in zip(X, y):
            cells = [format_float(float(v)) for v in row]
            lab = float(lab)
            cells.append(str(int(lab)) if lab == int(lab)
                         else format_float(lab))
            writer.writerow(cells)


def read_dataset_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[-1] != "label":
            raise DataSchemaError("expected a header ending in 'label'")
        n = len(header) - 1
        X, y = [], []
        for lineno, cells in enumerate(reader, start=2):
            if len(cells) != n + 1:
                raise DataSchemaError(
                    f"line {lineno}: expected {n + 1} columns, "
                    f"found {len(cells)}"
                )
            try:
                X.append([float(c) for c in cells[:n]])
                y.append(float(cells[n]))
            except ValueError:
                raise DataSchemaError(
                    f"line {lineno}: non-numeric cell"
                ) from None
    if not X:
        raise DataSchemaError(f"no data rows in {path}")
    return np.asarray(X), np.asarray(y)
