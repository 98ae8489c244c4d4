"""Adam training loop with box-projected control voltages.

Any model exposing param_set / apply_params / forward_batch / forward_taped /
calibrate can be trained here; both the edge-processor networks and the
digital MLP baseline satisfy that protocol.

Conventions worth knowing before reading the loop:
  * the loss trace holds one entry per evaluation, starting with the
    untrained model, so ``len(trace) == epochs_run + 1`` and epochs=0
    still yields a single-entry trace;
  * the trace records plain data loss (no L1 term) measured on the full
    training set, and "best" means the minimum of that trace;
  * clamp counters accumulate on those evaluation passes.
"""

import csv
import time
from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .checkpoint import format_float
from .errors import NonFiniteValueError, StructuralError
from .network import ClampStats, TrainFlags, random_init

PLATEAU_EPOCHS = 200
PLATEAU_DELTA = 1e-6
DIVERGENCE_LOSS = 1e6


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 5e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    epochs: int = 2000
    batch_size: int = None  # None = full batch
    l1_gain_penalty: float = 0.0
    restarts: int = 5
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.learning_rate < 1.0:
            raise StructuralError(
                f"learning rate {self.learning_rate} outside (0, 1)"
            )
        if self.l1_gain_penalty < 0:
            raise StructuralError("L1 penalty must be >= 0")
        if self.restarts < 1:
            raise StructuralError("need at least one restart")
        if self.epochs < 0:
            raise StructuralError("epochs must be >= 0")
        if self.batch_size is not None and self.batch_size < 1:
            raise StructuralError("batch size must be >= 1")


@dataclass
class TrainSet:
    """Minimal dataset contract consumed by train()."""

    X_train: np.ndarray
    y_train: np.ndarray
    kind: str = "regression"  # or "classification"
    X_val: np.ndarray = None
    y_val: np.ndarray = None

    def __post_init__(self):
        self.X_train = np.atleast_2d(np.asarray(self.X_train, float))
        self.y_train = _as_targets(self.y_train)
        if self.X_val is not None:
            self.X_val = np.atleast_2d(np.asarray(self.X_val, float))
            self.y_val = _as_targets(self.y_val)
        if self.kind not in ("regression", "classification"):
            raise StructuralError(f"unknown task kind {self.kind!r}")
        if len(self.X_train) == 0:
            raise StructuralError("empty training set")
        if len(self.X_train) != len(self.y_train):
            raise StructuralError("feature/target row counts differ")


def _as_targets(y):
    y = np.asarray(y, float)
    return y[:, None] if y.ndim == 1 else y


@dataclass
class TrainReport:
    model: object
    params: ad.ParamSet
    trace: np.ndarray
    metric_trace: np.ndarray  # val accuracy per eval, or None
    best_epoch: int
    best_loss: float
    best_metric: float  # None when no metric applies
    clamp_stats: ClampStats
    wall_time: float  # seconds; informational only, never serialized
    diverged: bool = False
    plateau_stop: bool = False

    @property
    def epochs_run(self) -> int:
        return len(self.trace) - 1


def mse_loss(predictions, targets) -> float:
    predictions = np.asarray(predictions, float)
    targets = np.asarray(targets, float)
    if predictions.shape != targets.shape:
        raise StructuralError(
            f"shape mismatch {predictions.shape} vs {targets.shape}"
        )
    if predictions.size == 0:
        raise StructuralError("empty loss inputs")
    return float(np.mean((predictions - targets) ** 2))


def classification_metrics(predictions, labels, threshold: float = 0.0):
    """Accuracy of sign-thresholded scalar outputs against {-1,+1} labels.

    Outputs strictly above the threshold count as +1; a tie goes to -1.
    """
    predictions = np.asarray(predictions, float).ravel()
    labels = np.asarray(labels, float).ravel()
    if predictions.size == 0:
        raise StructuralError("empty metric inputs")
    if predictions.shape != labels.shape:
        raise StructuralError("prediction/label counts differ")
    assigned = np.where(predictions > threshold, 1.0, -1.0)
    return float(np.mean(assigned == labels))


# -- optimizer ------------------------------------------------------------


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n))


def adam_step(params: ad.ParamSet, grads, state: AdamState,
              config: TrainConfig) -> AdamState:
    """One in-place Adam update followed by projection onto the boxes."""
    g = np.asarray(grads, float)
    if g.shape != params.vector.shape:
        raise StructuralError("gradient length does not match parameters")
    if not np.all(np.isfinite(g)):
        bad = [name for name in params.names()
               if not np.all(np.isfinite(g[params.slice_of(name)]))]
        raise NonFiniteValueError(
            "non-finite gradient in " + ", ".join(bad)
        )
    state.t += 1
    state.m = config.beta1 * state.m + (1 - config.beta1) * g
    state.v = config.beta2 * state.v + (1 - config.beta2) * g * g
    m_hat = state.m / (1 - config.beta1 ** state.t)
    v_hat = state.v / (1 - config.beta2 ** state.t)
    params.vector -= config.learning_rate * m_hat / (np.sqrt(v_hat)
                                                     + config.epsilon)
    params.vector[...] = params.project(params.vector)
    return state


# -- training loop ---------------------------------------------------------


def _taped_loss(model, X, y, tape, leaves, l1):
    pred = model.forward_taped(X, tape, leaves)
    loss = ad.reduce_mean(ad.power(ad.sub(pred, y), 2))
    if l1 > 0.0:
        for name, leaf in leaves.items():
            if name.endswith("/k") and isinstance(leaf, ad.Node):
                loss = ad.add(loss, ad.mul(l1, ad.reduce_sum(ad.absolute(leaf))))
    return loss


def _batches(n, batch_size, rng):
    if batch_size is None or batch_size >= n:
        yield slice(None)
        return
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def train(model, dataset, config: TrainConfig,
          flags: TrainFlags = None, calibrate: bool = True,
          restore_best: bool = True) -> TrainReport:
    """Run Adam on the dataset and leave the best-so-far parameters applied.

    Divergence (non-finite values anywhere, or data loss above 1e6) stops
    the run and sets the report flag instead of raising.

    `restore_best=False` keeps the final-epoch parameters instead. The
    trace always records the plain data loss, so a penalized run whose
    point is to shrink gains (at some cost in raw fit) must not snap back
    to its best-by-data-loss epoch.
    """
    if not isinstance(dataset, TrainSet):
        dataset = TrainSet(dataset.X_train, dataset.y_train,
                           dataset.kind,
                           getattr(dataset, "X_val", None),
                           getattr(dataset, "y_val", None))
    X, y = dataset.X_train, dataset.y_train
    started = time.perf_counter()
    if calibrate:
        model.calibrate(X)
    flags = flags or TrainFlags()
    ps = model.param_set(flags)
    state = AdamState.zeros(len(ps))
    stats = ClampStats()
    rng = np.random.default_rng(config.seed)

    def evaluate():
        pred = model.forward_batch(X, stats=stats)
        loss = mse_loss(pred, y)
        metric = None
        if dataset.kind == "classification":
            if dataset.X_val is not None:
                pred = model.forward_batch(dataset.X_val, stats=stats)
                metric = classification_metrics(pred, dataset.y_val)
            else:
                metric = classification_metrics(pred, y)
        return loss, metric

    trace, metrics = [], []
    diverged = plateau = False
    loss0, metric0 = evaluate()
    if not np.isfinite(loss0):
        raise NonFiniteValueError("initial model evaluation is non-finite")
    trace.append(loss0)
    metrics.append(metric0)
    best_loss = loss0
    best_vec = ps.vector.copy()
    # plateau bookkeeping: the reference loss only moves on improvements
    # larger than the delta, so slow steady progress keeps the run alive
    plateau_loss, plateau_epoch = loss0, 0

    for epoch in range(1, config.epochs + 1):
        try:
            for idx in _batches(len(X), config.batch_size, rng):
                tape = ad.Tape()
                leaves = ps.leaves(tape)
                loss_node = _taped_loss(model, X[idx], y[idx], tape, leaves,
                                        config.l1_gain_penalty)
                g = ad.grad(loss_node, ps)
                adam_step(ps, g, state, config)
        except NonFiniteValueError:
            diverged = True
            break
        model.apply_params(ps)
        loss, metric = evaluate()
        if not np.isfinite(loss):
            diverged = True
            break
        trace.append(loss)
        metrics.append(metric)
        if loss < best_loss:
            best_loss = loss
            best_vec = ps.vector.copy()
        if loss > DIVERGENCE_LOSS:
            diverged = True
            break
        if loss < plateau_loss - PLATEAU_DELTA:
            plateau_loss, plateau_epoch = loss, epoch
        elif epoch - plateau_epoch >= PLATEAU_EPOCHS:
            plateau = True
            break

    if restore_best:
        ps.vector[...] = best_vec
    model.apply_params(ps)
    metric_trace = (None if metrics[0] is None
                    else np.array(metrics, float))
    best_idx = int(np.argmin(trace))
    return TrainReport(
        model=model,
        params=ps,
        trace=np.array(trace, float),
        metric_trace=metric_trace,
        best_epoch=best_idx,
        best_loss=float(trace[best_idx]),
        best_metric=None if metric_trace is None
        else float(metric_trace[best_idx]),
        clamp_stats=stats,
        wall_time=time.perf_counter() - started,
        diverged=diverged,
        plateau_stop=plateau,
    )


# -- restarts ---------------------------------------------------------------


@dataclass
class MultiRestartReport:
    reports: tuple  # sorted by best loss, ascending
    seeds: tuple  # (model_seed, batch_seed) per restart, run order

    @property
    def best(self) -> TrainReport:
        return self.reports[0]

    @property
    def top5(self):
        return self.reports[:5]

    def prediction_envelope(self, X):
        """Pointwise min/max over the top-5 fits; degenerate when R < 5."""
        preds = np.stack([r.model.forward_batch(X) for r in self.top5])
        return preds.min(axis=0), preds.max(axis=0)


def restart_seeds(seed: int, restarts: int):
    """Derive (model_seed, batch_seed) pairs from one root seed."""
    children = np.random.SeedSequence(seed).spawn(restarts)
    pairs = []
    for child in children:
        words = child.generate_state(2)
        pairs.append((int(words[0]), int(words[1])))
    return tuple(pairs)


def multi_restart(topology, device, dataset, config: TrainConfig,
                  flags: TrainFlags = None, use_node_bias: bool = False,
                  seeds=None) -> MultiRestartReport:
    """Independent training runs over re-randomized electrode selections.

    Each restart draws a fresh model (different signal-electrode choices
    and control initializations) and its own batch-shuffle seed. Pass
    `seeds` explicitly to pin the pairs; otherwise they derive from
    config.seed.
    """
    if not isinstance(dataset, TrainSet):
        dataset = TrainSet(dataset.X_train, dataset.y_train,
                           dataset.kind,
                           getattr(dataset, "X_val", None),
                           getattr(dataset, "y_val", None))
    if seeds is None:
        seeds = restart_seeds(config.seed, config.restarts)
    elif len(seeds) != config.restarts:
        raise StructuralError("seed list length must equal restart count")
    lo = dataset.X_train.min(axis=0)
    hi = dataset.X_train.max(axis=0)
    reports = []
    for model_seed, batch_seed in seeds:
        model = random_init(topology, device, model_seed,
                            feature_lo=lo, feature_hi=hi,
                            use_node_bias=use_node_bias)
        run_cfg = replace(config, seed=batch_seed)
        reports.append(train(model, dataset, run_cfg, flags))
    order = sorted(range(len(reports)), key=lambda i: reports[i].best_loss)
    return MultiRestartReport(
        reports=tuple(reports[i] for i in order),
        seeds=tuple(seeds),
    )


# -- artifacts ---------------------------------------------------------------


def write_history_csv(path, report: TrainReport) -> None:
    """epoch,loss,metric rows; metric column empty for regression."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss", "metric"])
        for epoch, loss in enumerate(report.trace):
            metric = ""
            if report.metric_trace is not None:
                metric = format_float(float(report.metric_trace[epoch]))
            writer.writerow([epoch, format_float(float(loss)), metric])
