"""Dense MLP baseline driven by the same optimizer and loss as the
edge-processor networks."""

from dataclasses import dataclass, replace

import numpy as np

from .. import autodiff as ad
from ..errors import ConfigError, StructuralError
from ..training import (
    MultiRestartReport,
    TrainConfig,
    TrainReport,
    TrainSet,
    restart_seeds,
    train,
)

ACTIVATIONS = {"relu": (lambda z: np.maximum(z, 0.0), ad.relu),
               "tanh": (np.tanh, ad.tanh)}


def mlp_param_count(widths) -> int:
    return sum(a * b + b for a, b in zip(widths[:-1], widths[1:]))


class MlpModel:
    """Fully connected net satisfying the train() model protocol."""

    def __init__(self, widths, activation, weights, biases):
        widths = tuple(int(w) for w in widths)
        if len(widths) < 2 or any(w < 1 for w in widths):
            raise StructuralError("need at least input and output widths >= 1")
        if activation not in ACTIVATIONS:
            raise ConfigError(
                f"activation must be one of {sorted(ACTIVATIONS)}, "
                f"got {activation!r}"
            )
        self.widths = widths
        self.activation = activation
        self.weights = [np.asarray(w, float) for w in weights]
        self.biases = [np.asarray(b, float) for b in biases]
        for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
            if self.weights[i].shape != (a, b) or self.biases[i].shape != (b,):
                raise StructuralError(f"weight {i} shape mismatch")

    @classmethod
    def from_seed(cls, widths, activation, seed) -> "MlpModel":
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for a, b in zip(widths[:-1], widths[1:]):
            bound = 1.0 / np.sqrt(a)
            weights.append(rng.uniform(-bound, bound, (a, b)))
            biases.append(rng.uniform(-bound, bound, b))
        return cls(widths, activation, weights, biases)

    @property
    def n_params(self) -> int:
        return mlp_param_count(self.widths)

    def calibrate(self, X):
        pass

    def param_set(self, flags=None) -> ad.ParamSet:
        ps = ad.ParamSet()
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            ps.add(f"w{i}", w)
            ps.add(f"b{i}", b)
        return ps

    def apply_params(self, ps: ad.ParamSet):
        for i in range(len(self.weights)):
            self.weights[i][...] = ps.get(f"w{i}")
            self.biases[i][...] = ps.get(f"b{i}")

    def copy(self) -> "MlpModel":
        return MlpModel(self.widths, self.activation,
                        [w.copy() for w in self.weights],
                        [b.copy() for b in self.biases])

    def forward_batch(self, X, stats=None, device=None):
        act = ACTIVATIONS[self.activation][0]
        z = np.atleast_2d(np.asarray(X, float))
        if z.shape[1] != self.widths[0]:
            raise StructuralError(
                f"expected {self.widths[0]} features, got {z.shape[1]}"
            )
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = z @ w + b
            if i != last:
                z = act(z)
        return z

    def forward_taped(self, X, tape, leaves):
        act = ACTIVATIONS[self.activation][1]
        z = np.atleast_2d(np.asarray(X, float))
        last = len(self.weights) - 1
        for i in range(len(self.weights)):
            w = leaves.get(f"w{i}", self.weights[i])
            b = leaves.get(f"b{i}", self.biases[i])
            z = ad.affine(z, w, b)
            if i != last:
                z = act(z)
        return z


@dataclass(frozen=True)
class MlpBaseline:
    widths: tuple
    activation: str = "relu"
    config: TrainConfig = None

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(self.widths))
        if self.config is None:
            object.__setattr__(self, "config", TrainConfig())


def mlp_baseline_train(baseline: MlpBaseline, dataset,
                       seed: int = None) -> TrainReport:
    model = MlpModel.from_seed(baseline.widths, baseline.activation,
                               baseline.config.seed if seed is None else seed)
    return train(model, dataset, baseline.config)


def mlp_multi_restart(baseline: MlpBaseline, dataset,
                      seeds=None) -> MultiRestartReport:
    """Re-initialized runs mirroring the network restart search."""
    config = baseline.config
    if not isinstance(dataset, TrainSet):
        dataset = TrainSet(dataset.X_train, dataset.y_train, dataset.kind,
                           getattr(dataset, "X_val", None),
                           getattr(dataset, "y_val", None))
    if seeds is None:
        seeds = restart_seeds(config.seed, config.restarts)
    elif len(seeds) != config.restarts:
        raise StructuralError("seed list length must equal restart count")
    reports = []
    for model_seed, batch_seed in seeds:
        model = MlpModel.from_seed(baseline.widths, baseline.activation,
                                   model_seed)
        reports.append(train(model, dataset, replace(config, seed=batch_seed)))
    order = sorted(range(len(reports)), key=lambda i: reports[i].best_loss)
    return MultiRestartReport(
        reports=tuple(reports[i] for i in order),
        seeds=tuple(seeds),
    )
