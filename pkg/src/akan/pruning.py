"""Structural EP removal: regularize, absorb gains, threshold, fine-tune.

Removal decisions use statistics gathered on the training inputs. Two rules
apply, combined with OR:
  * activation: the EP's source voltage barely varies over the data, so the
    edge function sees an (almost) constant input;
  * contribution: the EP's share of its target nodes' summed signal is a
    negligible fraction of the layer's pooled node-sum spread.
Nodes left without incoming or outgoing EPs are swept away transitively,
and the survivors are rebuilt into a dense, genuinely smaller network.
Indices in the removal log refer to the topology as it was when prune()
was called.
"""

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .checkpoint import format_float
from .errors import StructuralError
from .network import (
    AkanModel,
    EdgeLayerParams,
    Scaler,
    Topology,
    TrainFlags,
)
from .training import TrainConfig, TrainSet, mse_loss, train

RULE_ACTIVATION = "activation"
RULE_CONTRIBUTION = "contribution"
RULE_DANGLING = "dangling"


@dataclass(frozen=True)
class PruneConfig:
    activation_threshold: float = 1e-3  # std of the EP's source voltage
    contribution_threshold: float = 1e-2  # fraction of pooled node-sum std
    finetune: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.activation_threshold <= 0 or self.contribution_threshold <= 0:
            raise StructuralError("pruning thresholds must be > 0")


@dataclass(frozen=True)
class Removal:
    layer: int
    src: int
    dst: int
    rule: str
    statistic: float
    threshold: float


def absorb_gains(model: AkanModel) -> AkanModel:
    """Fold each EP's pruning gain into its member gains; k returns to 1.

    The network function is unchanged up to float rounding (exactly when
    k is 0, 1, or a power of two).
    """
    out = model.copy()
    for lay in out.edge_layers:
        lay.gains *= lay.k[:, None]
        if lay.skip is not None:
            lay.skip *= lay.k
        lay.k[:] = 1.0
    return out


def _training_inputs(dataset):
    if isinstance(dataset, np.ndarray):
        return np.atleast_2d(dataset)
    return np.atleast_2d(np.asarray(dataset.X_train, float))


def _spread(x) -> float:
    # std after shifting by the first element: same quantity, but exactly
    # zero for constant signals (np.std alone leaks ~1e-15 of mean rounding)
    x = np.asarray(x, float)
    return float(np.std(x - x.flat[0]))


def prune(model: AkanModel, dataset, config: PruneConfig = None):
    """Threshold-based EP removal -> (smaller model, removal log)."""
    config = config or PruneConfig()
    X = _training_inputs(dataset)
    work = model.copy()
    traces = []
    work.forward_batch(X, trace=traces)
    t = work.topology
    log = []

    # rule pass: every active EP is tested against both thresholds
    for l, lay in enumerate(work.edge_layers):
        tr = traces[l]
        w_next = t.widths[l + 1]
        pooled = _spread(tr.sums)
        contribution_floor = config.contribution_threshold * pooled
        for e in np.flatnonzero(lay.active):
            src, dst = divmod(int(e), w_next)
            act_std = _spread(tr.v_in[:, src])
            if act_std < config.activation_threshold:
                lay.active[e] = False
                log.append(Removal(l, src, dst, RULE_ACTIVATION, act_std,
                                   config.activation_threshold))
                continue
            contrib = abs(float(lay.k[e])) * _spread(tr.pre_k[:, e])
            if contrib < contribution_floor:
                lay.active[e] = False
                log.append(Removal(l, src, dst, RULE_CONTRIBUTION, contrib,
                                   contribution_floor))

    _sweep_dangling_nodes(work, log)

    if not _connected(work):
        raise StructuralError(
            "pruning removed every input-to-output path; "
            "raise the thresholds or retrain with weaker regularization"
        )
    return _rebuild_dense(work), log


def _sweep_dangling_nodes(work: AkanModel, log) -> None:
    """Deactivate EPs around hidden nodes that lost all inputs or outputs."""
    t = work.topology
    changed = True
    while changed:
        changed = False
        for h in range(1, len(t.widths) - 1):
            incoming = work.edge_layers[h - 1]
            outgoing = work.edge_layers[h]
            w_h = t.widths[h]
            w_next = t.widths[h + 1]
            for node in range(w_h):
                has_in = incoming.active[node::w_h].any()
                has_out = outgoing.active[
                    node * w_next:(node + 1) * w_next].any()
                if has_in and has_out:
                    continue
                for e in np.flatnonzero(incoming.active[node::w_h]):
                    src = int(e)
                    incoming.active[src * w_h + node] = False
                    log.append(Removal(h - 1, src, node, RULE_DANGLING,
                                       0.0, 0.0))
                    changed = True
                for dst in np.flatnonzero(
                        outgoing.active[node * w_next:(node + 1) * w_next]):
                    outgoing.active[node * w_next + int(dst)] = False
                    log.append(Removal(h, node, int(dst), RULE_DANGLING,
                                       0.0, 0.0))
                    changed = True


def _connected(work: AkanModel) -> bool:
    """True when at least one active path still reaches an output node."""
    t = work.topology
    reachable = np.ones(t.widths[0], dtype=bool)
    for l, lay in enumerate(work.edge_layers):
        w_l, w_next = t.widths[l], t.widths[l + 1]
        nxt = np.zeros(w_next, dtype=bool)
        for e in np.flatnonzero(lay.active):
            src, dst = divmod(int(e), w_next)
            if reachable[src]:
                nxt[dst] = True
        reachable = nxt
    return bool(reachable.any())


def _rebuild_dense(work: AkanModel) -> AkanModel:
    """Drop pruned-out hidden nodes and re-index the surviving grid."""
    t = work.topology
    keep = [np.arange(t.widths[0])]
    for h in range(1, len(t.widths) - 1):
        incoming = work.edge_layers[h - 1]
        outgoing = work.edge_layers[h]
        w_h, w_next = t.widths[h], t.widths[h + 1]
        alive = [
            node for node in range(w_h)
            if incoming.active[node::w_h].any()
            and outgoing.active[node * w_next:(node + 1) * w_next].any()
        ]
        keep.append(np.asarray(alive, dtype=int))
    keep.append(np.arange(t.widths[-1]))

    new_topo = Topology(tuple(len(k) for k in keep), t.d, t.use_skip)

    layers = []
    for l, lay in enumerate(work.edge_layers):
        old_next = t.widths[l + 1]
        srcs, dsts = keep[l], keep[l + 1]
        old_e = (srcs[:, None] * old_next + dsts[None, :]).ravel()
        layers.append(EdgeLayerParams(
            electrodes=lay.electrodes[old_e].copy(),
            controls=lay.controls[old_e].copy(),
            gains=lay.gains[old_e].copy(),
            k=lay.k[old_e].copy(),
            skip=None if lay.skip is None else lay.skip[old_e].copy(),
            active=lay.active[old_e].copy(),
        ))

    scalers = [
        Scaler(sc.src_lo[keep[i + 1]].copy(), sc.src_hi[keep[i + 1]].copy(),
               sc.dst_lo[keep[i + 1]].copy(), sc.dst_hi[keep[i + 1]].copy())
        for i, sc in enumerate(work.scalers)
    ]
    bias = None
    if work.node_bias is not None:
        bias = [b[keep[i + 1]].copy() for i, b in enumerate(work.node_bias)]
    return AkanModel(
        new_topo,
        work.device,
        layers,
        work.encoder,
        scalers,
        work.readout_gain.copy(),
        work.readout_offset.copy(),
        bias,
    )


@dataclass
class PruneReport:
    model: AkanModel
    log: list
    mse_input: float
    mse_regularized: float
    mse_pruned: float
    mse_finetuned: float

    @property
    def n_removed(self) -> int:
        return len(self.log)


def prune_and_finetune(model: AkanModel, dataset, config: PruneConfig = None,
                       reg_lambda: float = None,
                       flags: TrainFlags = None) -> PruneReport:
    """Full pipeline: optional L1 stage, gain absorption, removal, recovery.

    Pass ``reg_lambda`` to run the sparsifying stage here (the incoming
    model is then treated as unregularized); leave it None when the model
    was already trained with the L1 penalty.
    """
    config = config or PruneConfig()
    if not isinstance(dataset, TrainSet):
        dataset = TrainSet(dataset.X_train, dataset.y_train,
                           getattr(dataset, "kind", "regression"),
                           getattr(dataset, "X_val", None),
                           getattr(dataset, "y_val", None))
    X, y = dataset.X_train, dataset.y_train
    mse_input = mse_loss(model.forward_batch(X), y)

    work = model
    mse_regularized = mse_input
    if reg_lambda is not None:
        work = model.copy()
        reg_flags = replace(flags or TrainFlags(), pruning_gains=True)
        reg_cfg = replace(config.finetune, l1_gain_penalty=reg_lambda)
        # keep the final epoch: restoring the best-by-data-loss epoch would
        # throw away exactly the gain shrinkage the penalty exists to produce
        train(work, dataset, reg_cfg, reg_flags, calibrate=False,
              restore_best=False)
        mse_regularized = mse_loss(work.forward_batch(X), y)

    pruned, log = prune(absorb_gains(work), X, config)
    mse_pruned = mse_loss(pruned.forward_batch(X), y)

    tune_cfg = replace(config.finetune, l1_gain_penalty=0.0)
    tune_flags = replace(flags or TrainFlags(), pruning_gains=False)
    train(pruned, dataset, tune_cfg, tune_flags)
    mse_finetuned = mse_loss(pruned.forward_batch(X), y)

    return PruneReport(pruned, log, mse_input, mse_regularized,
                       mse_pruned, mse_finetuned)


def write_removal_log(path, log) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["layer", "src", "dst", "rule", "statistic",
                         "threshold"])
        for r in log:
            writer.writerow([r.layer, r.src, r.dst, r.rule,
                             format_float(r.statistic),
                             format_float(r.threshold)])
