"""Layered networks of nonlinear device edges.

A model is a grid of edge processors (EPs): every edge between adjacent
layers carries d parallel device units whose normalized output currents are
mixed by trainable gains (plus an optional linear skip path and a per-EP
pruning gain k). Nodes sum incoming edge outputs; per-node affine scalers
map hidden sums back into the devices' input-voltage window; a final linear
readout produces the prediction.

Two forward implementations must agree: ``forward_batch`` (plain numpy over
the batched device kernels, used for inference and metrics) and
``forward_taped`` (autodiff primitives, used for training). Cross-checking
them is part of the test suite.

Edges on layer l are indexed src-major: e = src * width(l+1) + dst.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import checkpoint
from .devices import (
    N_CONTROLS,
    N_ELECTRODES,
    RnpuConfig,
    assemble_rnpu_input,
    control_slots,
    device_forward,
    norm_params,
    taped_normalized_current,
)
from .errors import StructuralError

_TOPOLOGY_RE = re.compile(r"^\s*\[\s*(\d+(?:\s*,\s*\d+)*)\s*\]\s*(?:x\s*(\d+))?\s*$")


@dataclass(frozen=True)
class Topology:
    """Layer widths, devices per edge, and the skip-connection flag.

    Rendered as "[2,1,1]x3": widths 2,1,1 with d = 3.
    """

    widths: tuple
    d: int = 1
    use_skip: bool = False

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if len(self.widths) < 2:
            raise StructuralError("a topology needs at least input and output layers")
        if any(w < 1 for w in self.widths):
            raise StructuralError(f"all widths must be >= 1, got {self.widths}")
        if self.d < 1:
            raise StructuralError(f"d must be >= 1, got {self.d}")

    @property
    def n_inputs(self) -> int:
        return self.widths[0]

    @property
    def n_outputs(self) -> int:
        return self.widths[-1]

    @property
    def hidden_widths(self) -> tuple:
        return self.widths[1:-1]

    @property
    def n_edge_layers(self) -> int:
        return len(self.widths) - 1

    def edge_count(self, layer: int) -> int:
        return self.widths[layer] * self.widths[layer + 1]

    @property
    def n_eps(self) -> int:
        return sum(self.edge_count(l) for l in range(self.n_edge_layers))

    @property
    def n_rnpus(self) -> int:
        return self.n_eps * self.d

    def to_string(self) -> str:
        return "[" + ",".join(str(w) for w in self.widths) + f"]x{self.d}"

    @classmethod
    def from_string(cls, text: str, use_skip: bool = False) -> "Topology":
        m = _TOPOLOGY_RE.match(text)
        if not m:
            raise StructuralError(
                f"cannot parse topology {text!r}; expected e.g. [2,1,1]x3"
            )
        widths = tuple(int(t) for t in m.group(1).split(","))
        d = int(m.group(2)) if m.group(2) else 1
        return cls(widths, d, use_skip)


@dataclass(frozen=True)
class EdgeProcessor:
    """One edge's worth of parallel device units plus mixing gains."""

    rnpus: tuple
    k: float = 1.0
    skip_gain: float = None

    def __post_init__(self):
        if not self.rnpus:
            raise StructuralError("an edge processor needs at least one unit")


def ep_forward(ep: EdgeProcessor, v_in: float, device) -> float:
    """k * (sum_r gain_r * normalized_current_r + skip_gain * v_in)."""
    offset, scale = norm_params(device)
    acc = 0.0
    for r in ep.rnpus:
        current = device_forward(device, assemble_rnpu_input(r, v_in))
        acc += r.output_gain * ((current - offset) * scale)
    if ep.skip_gain is not None:
        acc += ep.skip_gain * v_in
    return ep.k * acc


@dataclass
class TrainFlags:
    """Which parameter groups the optimizer touches."""

    controls: bool = True
    gains: bool = True
    pruning_gains: bool = False
    skip_gains: bool = True
    scalers: bool = False
    readout: bool = True
    node_bias: bool = True


@dataclass
class EdgeLayerParams:
    electrodes: np.ndarray  # (E, d) int, input electrode per unit
    controls: np.ndarray  # (E, d, 6)
    gains: np.ndarray  # (E, d)
    k: np.ndarray  # (E,)
    skip: np.ndarray = None  # (E,) or None
    active: np.ndarray = None  # (E,) bool mask; pruned edges contribute 0

    def __post_init__(self):
        if self.active is None:
            self.active = np.ones(self.k.shape[0], dtype=bool)

    def copy(self) -> "EdgeLayerParams":
        return EdgeLayerParams(
            self.electrodes.copy(),
            self.controls.copy(),
            self.gains.copy(),
            self.k.copy(),
            None if self.skip is None else self.skip.copy(),
            self.active.copy(),
        )


@dataclass
class LayerTrace:
    """Per-edge-layer intermediates captured during one inference pass."""

    v_in: np.ndarray  # (n, w_l) voltages feeding the layer
    pre_k: np.ndarray  # (n, E) EP outputs before pruning gain and mask
    sums: np.ndarray  # (n, w_next) node sums before bias/scaling


@dataclass
class ClampStats:
    """Out-of-range events counted during forward passes."""

    input_clamps: int = 0
    hidden_clamps: int = 0

    @property
    def total(self) -> int:
        return self.input_clamps + self.hidden_clamps


def _lerp_exact(x, src_lo, src_hi, dst_lo, dst_hi):
    """Interval map whose weights hit 0 and 1 exactly at the endpoints, so
    src_lo -> dst_lo and src_hi -> dst_hi are bit-exact."""
    span = src_hi - src_lo
    w_hi = (x - src_lo) / span
    w_lo = (src_hi - x) / span
    return dst_lo * w_lo + dst_hi * w_hi


def _layer_leaf(lay, leaves: dict, l: int, name: str, stored):
    """Resolve one edge-layer parameter group for the taped lane. Pruned
    layers carry compressed leaves that must be re-embedded at the active
    rows; inactive rows keep their stored (masked-out) values."""
    leaf = leaves.get(f"layer{l}/{name}")
    if leaf is None:
        return stored
    if lay.active.all():
        return leaf
    return ad.embed_rows(leaf, np.flatnonzero(lay.active), stored)


def _lerp_taped(x, src_lo, src_hi, dst_lo, dst_hi):
    span = src_hi - src_lo
    w_hi = ad.div(ad.sub(x, src_lo), span)
    w_lo = ad.div(ad.sub(np.asarray(src_hi), x), span)
    return ad.add(ad.mul(w_lo, dst_lo), ad.mul(w_hi, dst_hi))


@dataclass
class InputEncoder:
    """Affine feature-to-voltage map; endpoints of the declared feature
    interval land exactly on the voltage interval endpoints."""

    src_lo: np.ndarray  # (n_features,)
    src_hi: np.ndarray
    dst_lo: float
    dst_hi: float

    def scale(self) -> np.ndarray:
        return (self.dst_hi - self.dst_lo) / (self.src_hi - self.src_lo)

    def offset(self) -> np.ndarray:
        return self.dst_lo - self.src_lo * self.scale()


def encode_input(feature, encoder: InputEncoder, column: int = 0,
                 stats: ClampStats = None):
    """Encode one feature value (clamping out-of-range values, counted)."""
    lo = encoder.src_lo[column]
    hi = encoder.src_hi[column]
    if feature < lo or feature > hi:
        if stats is not None:
            stats.input_clamps += 1
        feature = min(max(feature, lo), hi)
    return float(
        _lerp_exact(feature, lo, hi, encoder.dst_lo, encoder.dst_hi)
    )


@dataclass
class Scaler:
    """Per-node affine map from summed edge outputs onto the next layer's
    input-voltage window; source interval comes from calibration."""

    src_lo: np.ndarray  # (width,)
    src_hi: np.ndarray
    dst_lo: np.ndarray  # (width,) trainable when flagged
    dst_hi: np.ndarray

    def scale(self) -> np.ndarray:
        return (self.dst_hi - self.dst_lo) / (self.src_hi - self.src_lo)

    def offset(self) -> np.ndarray:
        return self.dst_lo - self.src_lo * self.scale()

    def copy(self) -> "Scaler":
        return Scaler(
            self.src_lo.copy(), self.src_hi.copy(),
            self.dst_lo.copy(), self.dst_hi.copy(),
        )


class AkanModel:
    """Mutable parameter container plus the two forward implementations."""

    def __init__(self, topology: Topology, device, edge_layers, encoder,
                 scalers, readout_gain, readout_offset, node_bias=None):
        self.topology = topology
        self.device = device
        self.edge_layers = list(edge_layers)
        self.encoder = encoder
        self.scalers = list(scalers)  # one per hidden layer
        self.readout_gain = np.asarray(readout_gain, dtype=float)
        self.readout_offset = np.asarray(readout_offset, dtype=float)
        # per hidden layer or None: added to node sums before scaling
        self.node_bias = node_bias
        self._validate()

    def _validate(self):
        t = self.topology
        if len(self.edge_layers) != t.n_edge_layers:
            raise StructuralError(
                f"{len(self.edge_layers)} edge layers for {t.n_edge_layers}-layer topology"
            )
        for l, lay in enumerate(self.edge_layers):
            e = t.edge_count(l)
            if lay.controls.shape != (e, t.d, N_CONTROLS):
                raise StructuralError(
                    f"layer {l}: controls shape {lay.controls.shape} != "
                    f"({e}, {t.d}, {N_CONTROLS})"
                )
            if lay.gains.shape != (e, t.d) or lay.k.shape != (e,):
                raise StructuralError(f"layer {l}: gain/k shapes inconsistent")
            if t.use_skip and lay.skip is None:
                raise StructuralError(f"layer {l}: missing skip gains")
        if len(self.scalers) != len(t.hidden_widths):
            raise StructuralError("one scaler per hidden layer required")
        if self.readout_gain.shape != (t.n_outputs,):
            raise StructuralError("readout gain shape mismatch")

    # -- parameter registry ---------------------------------------------------

    def param_set(self, flags: TrainFlags = None) -> ad.ParamSet:
        """Register every trainable scalar exactly once, in a fixed order.
        Control voltages carry their electrode box constraints. Layers with
        pruned entries register only the surviving EPs' parameters."""
        flags = flags or TrainFlags()
        t = self.topology
        ps = ad.ParamSet()
        v_min = self.device.ranges.v_min
        v_max = self.device.ranges.v_max
        for l, lay in enumerate(self.edge_layers):
            mask = slice(None) if lay.active.all() else lay.active
            if flags.controls:
                slots = np.array(
                    [[control_slots(e) for e in row] for row in lay.electrodes]
                )
                ps.add(
                    f"layer{l}/controls",
                    lay.controls[mask],
                    lower=v_min[slots[mask]],
                    upper=v_max[slots[mask]],
                )
            if flags.gains:
                ps.add(f"layer{l}/gains", lay.gains[mask])
            if flags.pruning_gains:
                ps.add(f"layer{l}/k", lay.k[mask])
            if t.use_skip and flags.skip_gains:
                ps.add(f"layer{l}/skip", lay.skip[mask])
        for i, sc in enumerate(self.scalers):
            if flags.scalers:
                ps.add(f"scaler{i + 1}/dst_lo", sc.dst_lo)
                ps.add(f"scaler{i + 1}/dst_hi", sc.dst_hi)
            if self.node_bias is not None and flags.node_bias:
                ps.add(f"bias{i + 1}", self.node_bias[i])
        if flags.readout:
            ps.add("readout/gain", self.readout_gain)
            ps.add("readout/offset", self.readout_offset)
        return ps

    def apply_params(self, ps: ad.ParamSet):
        """Write a ParamSet's current values back into the model arrays."""
        for l, lay in enumerate(self.edge_layers):
            mask = slice(None) if lay.active.all() else lay.active
            if f"layer{l}/controls" in ps:
                lay.controls[mask] = ps.get(f"layer{l}/controls")
            if f"layer{l}/gains" in ps:
                lay.gains[mask] = ps.get(f"layer{l}/gains")
            if f"layer{l}/k" in ps:
                lay.k[mask] = ps.get(f"layer{l}/k")
            if f"layer{l}/skip" in ps:
                lay.skip[mask] = ps.get(f"layer{l}/skip")
        for i, sc in enumerate(self.scalers):
            if f"scaler{i + 1}/dst_lo" in ps:
                sc.dst_lo[...] = ps.get(f"scaler{i + 1}/dst_lo")
                sc.dst_hi[...] = ps.get(f"scaler{i + 1}/dst_hi")
            if f"bias{i + 1}" in ps:
                self.node_bias[i][...] = ps.get(f"bias{i + 1}")
        if "readout/gain" in ps:
            self.readout_gain[...] = ps.get("readout/gain")
            self.readout_offset[...] = ps.get("readout/offset")

    def n_trainable(self, flags: TrainFlags = None) -> int:
        return len(self.param_set(flags))

    def copy(self) -> "AkanModel":
        return AkanModel(
            self.topology,
            self.device,
            [lay.copy() for lay in self.edge_layers],
            InputEncoder(
                self.encoder.src_lo.copy(), self.encoder.src_hi.copy(),
                self.encoder.dst_lo, self.encoder.dst_hi,
            ),
            [sc.copy() for sc in self.scalers],
            self.readout_gain.copy(),
            self.readout_offset.copy(),
            None if self.node_bias is None
            else [b.copy() for b in self.node_bias],
        )

    def calibrate(self, X) -> None:
        """Fit the hidden-layer scalers to a representative batch."""
        calibrate_scalers(self, X)

    def edge_processor(self, layer: int, src: int, dst: int) -> EdgeProcessor:
        """Assemble the structured view of one EP from the flat arrays."""
        t = self.topology
        e = src * t.widths[layer + 1] + dst
        lay = self.edge_layers[layer]
        rnpus = tuple(
            RnpuConfig(
                int(lay.electrodes[e, r]),
                lay.controls[e, r],
                float(lay.gains[e, r]),
            )
            for r in range(t.d)
        )
        skip = None if lay.skip is None else float(lay.skip[e])
        return EdgeProcessor(rnpus, float(lay.k[e]), skip)

    # -- forward passes -------------------------------------------------------

    def _voltage_window(self):
        r = self.device.ranges
        return float(np.max(r.v_min)), float(np.min(r.v_max))

    def forward_batch(self, X, stats: ClampStats = None, device=None,
                      trace: list = None):
        """Inference lane: numpy over the batched device kernels -> (n, n_O).
        Pass a list as ``trace`` to collect one LayerTrace per edge layer."""
        dev = device if device is not None else self.device
        t = self.topology
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != t.n_inputs:
            raise StructuralError(
                f"got {X.shape[1]} features for {t.n_inputs} input nodes"
            )
        v_lo, v_hi = self._voltage_window()
        enc = self.encoder
        if stats is not None:
            stats.input_clamps += int(
                np.sum((X < enc.src_lo) | (X > enc.src_hi))
            )
        Xc = np.clip(X, enc.src_lo, enc.src_hi)
        v = _lerp_exact(Xc, enc.src_lo, enc.src_hi, enc.dst_lo, enc.dst_hi)
        offset, scale = norm_params(dev)
        n = X.shape[0]
        for l in range(t.n_edge_layers):
            lay = self.edge_layers[l]
            w_l, w_next = t.widths[l], t.widths[l + 1]
            E, d = w_l * w_next, t.d
            U = E * d
            src_units = np.repeat(np.arange(E) // w_next, d)
            elec = lay.electrodes.reshape(U)
            volts = np.zeros((n, U, N_ELECTRODES))
            volts[:, np.arange(U), elec] = v[:, src_units]
            slot_idx = np.empty((U, N_CONTROLS), dtype=np.intp)
            for u in range(U):
                slot_idx[u] = control_slots(elec[u])
            volts[:, np.arange(U)[:, None], slot_idx] = lay.controls.reshape(
                U, N_CONTROLS
            )
            current = dev.eval_batch(volts.reshape(n * U, N_ELECTRODES))
            unit_out = ((current - offset) * scale).reshape(n, E, d)
            ep = np.einsum("ned,ed->ne", unit_out, lay.gains)
            if lay.skip is not None:
                ep += lay.skip * v[:, np.arange(E) // w_next]
            pre_k = ep.copy() if trace is not None else None
            ep *= lay.k
            if not lay.active.all():
                ep *= lay.active
            sums = ep.reshape(n, w_l, w_next).sum(axis=1)
            if trace is not None:
                trace.append(LayerTrace(v.copy(), pre_k, sums.copy()))
            if l == t.n_edge_layers - 1:
                return sums * self.readout_gain + self.readout_offset
            if self.node_bias is not None:
                sums = sums + self.node_bias[l]
            sc = self.scalers[l]
            v = _lerp_exact(sums, sc.src_lo, sc.src_hi, sc.dst_lo, sc.dst_hi)
            if stats is not None:
                stats.hidden_clamps += int(np.sum((v < v_lo) | (v > v_hi)))
            v = np.clip(v, v_lo, v_hi)
        raise AssertionError("unreachable")

    def forward_taped(self, X, tape: ad.Tape, leaves: dict):
        """Training lane: the same arithmetic through autodiff primitives.
        Groups absent from ``leaves`` are treated as constants."""
        t = self.topology
        X = np.atleast_2d(np.asarray(X, dtype=float))
        v_lo, v_hi = self._voltage_window()
        enc = self.encoder
        Xc = np.clip(X, enc.src_lo, enc.src_hi)
        v = tape.param(
            _lerp_exact(Xc, enc.src_lo, enc.src_hi, enc.dst_lo, enc.dst_hi)
        )
        n = X.shape[0]
        for l in range(t.n_edge_layers):
            lay = self.edge_layers[l]
            w_l, w_next = t.widths[l], t.widths[l + 1]
            E, d = w_l * w_next, t.d
            U = E * d
            src_units = np.repeat(np.arange(E) // w_next, d)
            elec = lay.electrodes.reshape(U)
            controls = _layer_leaf(lay, leaves, l, "controls", lay.controls)
            ctrl2d = ad.reshape(controls, (U, N_CONTROLS)) \
                if isinstance(controls, ad.Node) else controls.reshape(U, N_CONTROLS)
            placed = ad.place_controls(ctrl2d, elec)
            full = ad.add(
                ad.put_input(ad.gather_cols(v, src_units), elec),
                ad.tile_rows(placed, n),
            )
            unit_out = ad.reshape(
                taped_normalized_current(self.device, full), (n, E, d)
            )
            gains = _layer_leaf(lay, leaves, l, "gains", lay.gains)
            ep = ad.reduce_sum(ad.mul(unit_out, gains), axis=2)
            if lay.skip is not None:
                skip = _layer_leaf(lay, leaves, l, "skip", lay.skip)
                ep = ad.add(
                    ep, ad.mul(ad.gather_cols(v, np.arange(E) // w_next), skip)
                )
            k = _layer_leaf(lay, leaves, l, "k", lay.k)
            ep = ad.mul(ep, k)
            if not lay.active.all():
                ep = ad.mul(ep, lay.active.astype(float))
            sums = ad.reduce_sum(ad.reshape(ep, (n, w_l, w_next)), axis=1)
            if l == t.n_edge_layers - 1:
                gain = leaves.get("readout/gain", self.readout_gain)
                off = leaves.get("readout/offset", self.readout_offset)
                return ad.add(ad.mul(sums, gain), off)
            if self.node_bias is not None:
                sums = ad.add(sums, leaves.get(f"bias{l + 1}", self.node_bias[l]))
            sc = self.scalers[l]
            dst_lo = leaves.get(f"scaler{l + 1}/dst_lo", sc.dst_lo)
            dst_hi = leaves.get(f"scaler{l + 1}/dst_hi", sc.dst_hi)
            v = ad.clamp(
                _lerp_taped(sums, sc.src_lo, sc.src_hi, dst_lo, dst_hi),
                v_lo, v_hi,
            )
        raise AssertionError("unreachable")


def akan_forward(model: AkanModel, features, stats: ClampStats = None):
    """Single-sample convenience wrapper -> (n_O,) prediction."""
    return model.forward_batch(np.asarray(features, dtype=float)[None, :],
                               stats=stats)[0]


def random_init(topology: Topology, device, seed: int,
                feature_lo=None, feature_hi=None,
                use_node_bias: bool = False) -> AkanModel:
    """Seeded model: input electrodes uniform over 0..6, control voltages
    uniform within their electrode ranges, gains uniform in [-1, 1], k = 1.

    Draw order per edge layer: electrodes, controls, gains, then skip gains;
    fixed so a seed pins the model bit-exactly.
    """
    rng = np.random.default_rng(seed)
    r = device.ranges
    layers = []
    for l in range(topology.n_edge_layers):
        E, d = topology.edge_count(l), topology.d
        electrodes = rng.integers(0, N_ELECTRODES, size=(E, d))
        slots = np.array([[control_slots(e) for e in row] for row in electrodes])
        controls = rng.uniform(r.v_min[slots], r.v_max[slots])
        gains = rng.uniform(-1.0, 1.0, (E, d))
        skip = rng.uniform(-1.0, 1.0, E) if topology.use_skip else None
        layers.append(
            EdgeLayerParams(electrodes, controls, gains, np.ones(E), skip)
        )
    v_lo, v_hi = float(np.max(r.v_min)), float(np.min(r.v_max))
    n_in = topology.n_inputs
    feature_lo = (
        -np.ones(n_in) if feature_lo is None
        else np.broadcast_to(np.asarray(feature_lo, dtype=float), (n_in,)).copy()
    )
    feature_hi = (
        np.ones(n_in) if feature_hi is None
        else np.broadcast_to(np.asarray(feature_hi, dtype=float), (n_in,)).copy()
    )
    encoder = InputEncoder(feature_lo, feature_hi, v_lo, v_hi)
    scalers = [
        Scaler(
            np.full(w, v_lo), np.full(w, v_hi),
            np.full(w, v_lo), np.full(w, v_hi),
        )
        for w in topology.hidden_widths
    ]
    bias = (
        [np.zeros(w) for w in topology.hidden_widths] if use_node_bias else None
    )
    return AkanModel(
        topology, device, layers, encoder, scalers,
        np.ones(topology.n_outputs), np.zeros(topology.n_outputs), bias,
    )


def calibrate_scalers(model: AkanModel, X) -> None:
    """Set each hidden scaler's source interval to the empirical min/max of
    its node sums over X, so the observed range maps exactly onto the
    voltage window. Degenerate (constant) nodes get a unit-width source
    interval centered on the constant, which maps it to the window center."""
    t = model.topology
    X = np.atleast_2d(np.asarray(X, dtype=float))
    enc = model.encoder
    v_lo, v_hi = model._voltage_window()
    Xc = np.clip(X, enc.src_lo, enc.src_hi)
    v = _lerp_exact(Xc, enc.src_lo, enc.src_hi, enc.dst_lo, enc.dst_hi)
    offset, scale = norm_params(model.device)
    n = X.shape[0]
    for l in range(t.n_edge_layers - 1):
        lay = model.edge_layers[l]
        w_l, w_next = t.widths[l], t.widths[l + 1]
        E, d = w_l * w_next, t.d
        U = E * d
        src_units = np.repeat(np.arange(E) // w_next, d)
        elec = lay.electrodes.reshape(U)
        volts = np.zeros((n, U, N_ELECTRODES))
        volts[:, np.arange(U), elec] = v[:, src_units]
        slot_idx = np.empty((U, N_CONTROLS), dtype=np.intp)
        for u in range(U):
            slot_idx[u] = control_slots(elec[u])
        volts[:, np.arange(U)[:, None], slot_idx] = lay.controls.reshape(
            U, N_CONTROLS
        )
        current = model.device.eval_batch(volts.reshape(n * U, N_ELECTRODES))
        unit_out = ((current - offset) * scale).reshape(n, E, d)
        ep = np.einsum("ned,ed->ne", unit_out, lay.gains)
        if lay.skip is not None:
            ep += lay.skip * v[:, np.arange(E) // w_next]
        ep *= lay.k
        if not lay.active.all():
            ep *= lay.active
        sums = ep.reshape(n, w_l, w_next).sum(axis=1)
        if model.node_bias is not None:
            sums = sums + model.node_bias[l]
        sc = model.scalers[l]
        lo = sums.min(axis=0)
        hi = sums.max(axis=0)
        flat = hi - lo < 1e-12
        lo[flat] -= 0.5
        hi[flat] += 0.5
        sc.src_lo[...] = lo
        sc.src_hi[...] = hi
        v = np.clip(
            _lerp_exact(sums, sc.src_lo, sc.src_hi, sc.dst_lo, sc.dst_hi),
            v_lo, v_hi,
        )


# -- persistence ----------------------------------------------------------

def save_model(model: AkanModel, path, device_ref: str = "") -> None:
    t = model.topology
    fields = {
        "widths": " ".join(str(w) for w in t.widths),
        "d": str(t.d),
        "use_skip": str(int(t.use_skip)),
        "use_node_bias": str(int(model.node_bias is not None)),
        "device_ref": device_ref,
        "feature_lo": model.encoder.src_lo,
        "feature_hi": model.encoder.src_hi,
        "volt_window": (model.encoder.dst_lo, model.encoder.dst_hi),
    }
    arrays = {}
    for l, lay in enumerate(model.edge_layers):
        E, d = lay.gains.shape
        arrays[f"electrodes{l}"] = lay.electrodes.astype(float)
        arrays[f"controls{l}"] = lay.controls.reshape(E * d, N_CONTROLS)
        arrays[f"gains{l}"] = lay.gains
        arrays[f"k{l}"] = lay.k
        if lay.skip is not None:
            arrays[f"skip{l}"] = lay.skip
        arrays[f"active{l}"] = lay.active.astype(float)
    for i, sc in enumerate(model.scalers):
        arrays[f"scaler{i + 1}"] = np.stack(
            [sc.src_lo, sc.src_hi, sc.dst_lo, sc.dst_hi]
        )
        if model.node_bias is not None:
            arrays[f"bias{i + 1}"] = model.node_bias[i]
    arrays["readout_gain"] = model.readout_gain
    arrays["readout_offset"] = model.readout_offset
    checkpoint.write_checkpoint(path, "akan-model", fields, arrays)


def load_model(path, device=None) -> AkanModel:
    """Load a model; the backing device is taken from ``device`` or loaded
    from the checkpoint's device_ref (resolved against the model's folder)."""
    import os

    from .devices import load_device

    kind, fields, arrays = checkpoint.read_checkpoint(path)
    if kind != "akan-model":
        raise StructuralError(f"{path}: checkpoint kind {kind!r} is not a model")
    widths = tuple(int(w) for w in fields["widths"].split())
    d = int(fields["d"])
    use_skip = bool(int(fields["use_skip"]))
    use_bias = bool(int(fields.get("use_node_bias", "0")))
    topology = Topology(widths, d, use_skip)
    if device is None:
        ref = fields.get("device_ref", "").strip()
        if not ref:
            raise StructuralError(
                f"{path}: no device given and checkpoint has no device_ref"
            )
        ref_path = ref if os.path.isabs(ref) else os.path.join(
            os.path.dirname(os.path.abspath(path)), ref
        )
        device = load_device(ref_path)
    layers = []
    for l in range(topology.n_edge_layers):
        E = topology.edge_count(l)
        electrodes = arrays[f"electrodes{l}"].astype(np.intp)
        controls = arrays[f"controls{l}"].reshape(E, d, N_CONTROLS)
        skip = arrays.get(f"skip{l}")
        layers.append(
            EdgeLayerParams(
                electrodes, controls, arrays[f"gains{l}"], arrays[f"k{l}"],
                skip, arrays[f"active{l}"].astype(bool),
            )
        )
    n_in = topology.n_inputs
    feat_lo = checkpoint.field_floats(fields, "feature_lo", n_in, str(path))
    feat_hi = checkpoint.field_floats(fields, "feature_hi", n_in, str(path))
    v_lo, v_hi = checkpoint.field_floats(fields, "volt_window", 2, str(path))
    encoder = InputEncoder(feat_lo, feat_hi, float(v_lo), float(v_hi))
    scalers = []
    bias = [] if use_bias else None
    for i, w in enumerate(topology.hidden_widths):
        block = arrays[f"scaler{i + 1}"]
        scalers.append(
            Scaler(block[0].copy(), block[1].copy(), block[2].copy(), block[3].copy())
        )
        if use_bias:
            bias.append(arrays[f"bias{i + 1}"])
    return AkanModel(
        topology, device, layers, encoder, scalers,
        arrays["readout_gain"], arrays["readout_offset"], bias,
    )
