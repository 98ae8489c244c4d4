"""Differentiable stand-ins for a physical nonlinear processing unit.

Two device families share one calling convention: a 7-electrode voltage
vector in, one output current (nA) out. ``MlpSurrogate`` mirrors the
feed-forward surrogate architecture used to model measured devices (five
ReLU hidden layers of 90 units). ``AnalyticDevice`` is a smooth seeded
tanh-mixture used as an exact-gradient test oracle, since no measured
weights are published.

Models are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import checkpoint, kernels
from .errors import RangeViolationError, StructuralError

N_ELECTRODES = 7
N_CONTROLS = 6
MLP_LAYER_DIMS = (7, 90, 90, 90, 90, 90, 1)


def _frozen(arr) -> np.ndarray:
    out = np.array(arr, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ElectrodeRanges:
    """Closed per-electrode voltage intervals plus output-current metadata."""

    v_min: np.ndarray
    v_max: np.ndarray
    i_min: float = -1.0
    i_max: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "v_min", _frozen(self.v_min))
        object.__setattr__(self, "v_max", _frozen(self.v_max))
        if self.v_min.shape != (N_ELECTRODES,) or self.v_max.shape != (N_ELECTRODES,):
            raise StructuralError(
                f"electrode ranges need exactly {N_ELECTRODES} intervals, "
                f"got shapes {self.v_min.shape} and {self.v_max.shape}"
            )
        if not np.all(self.v_min < self.v_max):
            bad = int(np.flatnonzero(~(self.v_min < self.v_max))[0])
            raise StructuralError(f"electrode {bad}: v_min must be < v_max")
        if not self.i_min < self.i_max:
            raise StructuralError("current range: i_min must be < i_max")

    @classmethod
    def default(cls) -> "ElectrodeRanges":
        # stand-in for unpublished per-electrode hardware limits
        return cls(v_min=-np.ones(N_ELECTRODES), v_max=np.ones(N_ELECTRODES))

    def with_current_range(self, i_min: float, i_max: float) -> "ElectrodeRanges":
        return ElectrodeRanges(self.v_min, self.v_max, i_min, i_max)

    def contains(self, volts: np.ndarray, slack: float = 1e-12) -> bool:
        volts = np.asarray(volts, dtype=float)
        return bool(
            np.all(volts >= self.v_min - slack) and np.all(volts <= self.v_max + slack)
        )

    def clip(self, volts: np.ndarray) -> np.ndarray:
        return np.clip(volts, self.v_min, self.v_max)


@dataclass(frozen=True)
class RnpuConfig:
    """One unit's wiring: which electrode takes the signal, the six control
    voltages on the remaining electrodes (ascending order), and the output
    transimpedance gain."""

    input_electrode: int
    control_voltages: np.ndarray
    output_gain: float = 1.0

    def __post_init__(self):
        if not 0 <= self.input_electrode < N_ELECTRODES:
            raise StructuralError(
                f"input electrode {self.input_electrode} outside 0..{N_ELECTRODES - 1}"
            )
        object.__setattr__(self, "control_voltages", _frozen(self.control_voltages))
        if self.control_voltages.shape != (N_CONTROLS,):
            raise StructuralError(
                f"expected {N_CONTROLS} control voltages, "
                f"got shape {self.control_voltages.shape}"
            )


def control_slots(input_electrode: int) -> np.ndarray:
    """Electrode indices that hold control voltages, ascending."""
    return np.array(
        [e for e in range(N_ELECTRODES) if e != input_electrode], dtype=np.intp
    )


def assemble_rnpu_input(config: RnpuConfig, input_voltage: float) -> np.ndarray:
    """Place the signal voltage on the input electrode and the controls on the
    remaining six slots in ascending electrode order."""
    out = np.empty(N_ELECTRODES)
    out[config.input_electrode] = input_voltage
    out[control_slots(config.input_electrode)] = config.control_voltages
    return out


def disassemble_rnpu_input(input_electrode: int, volts: np.ndarray):
    """Inverse of assemble_rnpu_input -> (input_voltage, control_voltages)."""
    volts = np.asarray(volts, dtype=float)
    if volts.shape != (N_ELECTRODES,):
        raise StructuralError(f"expected a {N_ELECTRODES}-vector, got {volts.shape}")
    return float(volts[input_electrode]), volts[control_slots(input_electrode)].copy()


@dataclass(frozen=True)
class AnalyticDevice:
    """Smooth synthetic device I(v) = sum_j a_j * tanh(W_j . v + b_j).

    Infinitely differentiable with a closed-form input jacobian, which makes
    it the reference oracle for gradient tests.
    """

    amplitudes: np.ndarray
    weights: np.ndarray
    biases: np.ndarray
    ranges: ElectrodeRanges = field(default_factory=ElectrodeRanges.default)

    kind = "analytic"

    def __post_init__(self):
        object.__setattr__(self, "amplitudes", _frozen(self.amplitudes))
        object.__setattr__(self, "weights", _frozen(self.weights))
        object.__setattr__(self, "biases", _frozen(self.biases))
        units = self.amplitudes.shape[0]
        if self.weights.shape != (units, N_ELECTRODES):
            raise StructuralError(
                f"weights shape {self.weights.shape} does not match "
                f"({units}, {N_ELECTRODES})"
            )
        if self.biases.shape != (units,):
            raise StructuralError(
                f"biases shape {self.biases.shape} does not match ({units},)"
            )
        for name in ("amplitudes", "weights", "biases"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise StructuralError(f"non-finite entries in {name}")

    @classmethod
    def from_seed(
        cls, seed: int, units: int = 16, ranges: ElectrodeRanges | None = None
    ) -> "AnalyticDevice":
        rng = np.random.default_rng(seed)
        amplitudes = rng.uniform(-25.0, 25.0, units)  # nA scale
        weights = rng.uniform(-2.0, 2.0, (units, N_ELECTRODES))
        biases = rng.uniform(-1.0, 1.0, units)
        base = ranges if ranges is not None else ElectrodeRanges.default()
        bound = float(np.sum(np.abs(amplitudes)))
        if bound == 0.0:
            bound = 1.0
        return cls(amplitudes, weights, biases, base.with_current_range(-bound, bound))

    def eval_batch(self, volts: np.ndarray) -> np.ndarray:
        volts = np.ascontiguousarray(volts, dtype=float)
        if volts.ndim != 2 or volts.shape[1] != N_ELECTRODES:
            raise StructuralError(f"expected (n, {N_ELECTRODES}), got {volts.shape}")
        return kernels.analytic_forward(volts, self.amplitudes, self.weights, self.biases)

    def input_jacobian(self, volts: np.ndarray) -> np.ndarray:
        """Closed-form dI/dv, shape (n, 7)."""
        volts = np.ascontiguousarray(volts, dtype=float)
        return kernels.analytic_jacobian(
            volts, self.amplitudes, self.weights, self.biases
        )


@dataclass(frozen=True)
class MlpSurrogate:
    """Feed-forward surrogate of a measured device: dims (7, 90x5, 1), ReLU."""

    layers: tuple  # ((W, b), ...) with W shape (fan_in, fan_out)
    ranges: ElectrodeRanges = field(default_factory=ElectrodeRanges.default)

    kind = "mlp"

    def __post_init__(self):
        frozen_layers = []
        dims = MLP_LAYER_DIMS
        if len(self.layers) != len(dims) - 1:
            raise StructuralError(
                f"expected {len(dims) - 1} layers, got {len(self.layers)}"
            )
        for l, (w, b) in enumerate(self.layers):
            w = _frozen(w)
            b = _frozen(b)
            if w.shape != (dims[l], dims[l + 1]):
                raise StructuralError(
                    f"layer {l}: weight shape {w.shape}, expected "
                    f"({dims[l]}, {dims[l + 1]})"
                )
            if b.shape != (dims[l + 1],):
                raise StructuralError(
                    f"layer {l}: bias shape {b.shape}, expected ({dims[l + 1]},)"
                )
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise StructuralError(f"layer {l}: non-finite weights")
            frozen_layers.append((w, b))
        object.__setattr__(self, "layers", tuple(frozen_layers))
        # packed views consumed by the batched kernel
        object.__setattr__(self, "_w_in", frozen_layers[0][0])
        object.__setattr__(self, "_b_in", frozen_layers[0][1])
        object.__setattr__(
            self, "_w_hid", np.ascontiguousarray([w for w, _ in frozen_layers[1:-1]])
        )
        object.__setattr__(
            self, "_b_hid", np.ascontiguousarray([b for _, b in frozen_layers[1:-1]])
        )
        object.__setattr__(self, "_w_out", np.ascontiguousarray(frozen_layers[-1][0][:, 0]))
        object.__setattr__(self, "_b_out", float(frozen_layers[-1][1][0]))

    @classmethod
    def from_seed(
        cls,
        seed: int,
        ranges: ElectrodeRanges | None = None,
        probe_samples: int = 2048,
    ) -> "MlpSurrogate":
        """Random surrogate: uniform weights scaled by 1/sqrt(fan_in); the
        output-current range is probed empirically over in-range inputs."""
        rng = np.random.default_rng(seed)
        dims = MLP_LAYER_DIMS
        layers = []
        for l in range(len(dims) - 1):
            bound = 1.0 / np.sqrt(dims[l])
            w = rng.uniform(-bound, bound, (dims[l], dims[l + 1]))
            b = rng.uniform(-0.1, 0.1, dims[l + 1])
            layers.append((w, b))
        base = ranges if ranges is not None else ElectrodeRanges.default()
        model = cls(tuple(layers), base)
        probe = rng.uniform(
            base.v_min, base.v_max, (probe_samples, N_ELECTRODES)
        )
        out = model.eval_batch(probe)
        lo, hi = float(out.min()), float(out.max())
        span = hi - lo
        if span < 1e-9:
            lo, hi = -1.0, 1.0
        else:
            lo -= 0.1 * span
            hi += 0.1 * span
        return cls(tuple(layers), base.with_current_range(lo, hi))

    def eval_batch(self, volts: np.ndarray) -> np.ndarray:
        volts = np.ascontiguousarray(volts, dtype=float)
        if volts.ndim != 2 or volts.shape[1] != N_ELECTRODES:
            raise StructuralError(f"expected (n, {N_ELECTRODES}), got {volts.shape}")
        return kernels.mlp_forward(
            volts,
            self._w_in,
            self._b_in,
            self._w_hid,
            self._b_hid,
            self._w_out,
            self._b_out,
        )


def norm_params(device) -> tuple:
    """(offset, scale) mapping raw current onto [-1, 1] via the stored range."""
    lo, hi = device.ranges.i_min, device.ranges.i_max
    return (hi + lo) / 2.0, 2.0 / (hi - lo)


def normalized_batch(device, volts: np.ndarray) -> np.ndarray:
    offset, scale = norm_params(device)
    return (device.eval_batch(volts) - offset) * scale


def device_forward(model, electrode_voltages) -> float:
    """Single-sample evaluation with full precondition checks -> current nA."""
    volts = np.asarray(electrode_voltages, dtype=float)
    if volts.shape != (N_ELECTRODES,):
        raise StructuralError(
            f"expected a {N_ELECTRODES}-vector of voltages, got shape {volts.shape}"
        )
    if not model.ranges.contains(volts):
        over = np.flatnonzero(
            (volts < model.ranges.v_min - 1e-12) | (volts > model.ranges.v_max + 1e-12)
        )
        raise RangeViolationError(
            f"voltage out of range on electrode(s) {over.tolist()}"
        )
    return float(model.eval_batch(volts[None, :])[0])


def save_device(model, path) -> None:
    r = model.ranges
    fields = {
        "v_min": r.v_min,
        "v_max": r.v_max,
        "i_range": (r.i_min, r.i_max),
    }
    if model.kind == "analytic":
        fields["units"] = str(model.amplitudes.shape[0])
        arrays = {
            "amplitudes": model.amplitudes,
            "weights": model.weights,
            "biases": model.biases,
        }
    elif model.kind == "mlp":
        fields["layers"] = " ".join(str(d) for d in MLP_LAYER_DIMS)
        arrays = {}
        for l, (w, b) in enumerate(model.layers):
            arrays[f"w{l}"] = w
            arrays[f"b{l}"] = b
    else:
        raise StructuralError(f"unknown device kind {model.kind!r}")
    checkpoint.write_checkpoint(path, model.kind, fields, arrays)


def _ranges_from_fields(fields, where) -> ElectrodeRanges:
    v_min = checkpoint.field_floats(fields, "v_min", N_ELECTRODES, where)
    v_max = checkpoint.field_floats(fields, "v_max", N_ELECTRODES, where)
    i_lo, i_hi = checkpoint.field_floats(fields, "i_range", 2, where)
    return ElectrodeRanges(v_min, v_max, float(i_lo), float(i_hi))


def taped_current(device, volts_node):
    """Forward a (m, 7) voltage node through the device on its tape -> (m,) nA.

    Built from generic tape primitives so gradients flow through the same
    reverse-mode path as everything else; the closed-form jacobian of
    AnalyticDevice stays an independent oracle.
    """
    from . import autodiff as ad

    if device.kind == "analytic":
        z = ad.affine(volts_node, device.weights.T, device.biases)
        return ad.matmul(ad.tanh(z), device.amplitudes)
    if device.kind == "mlp":
        z = volts_node
        for w, b in device.layers[:-1]:
            z = ad.relu(ad.affine(z, w, b))
        w, b = device.layers[-1]
        return ad.add(ad.matmul(z, w[:, 0]), b[0])
    raise StructuralError(f"unknown device kind {device.kind!r}")


def taped_normalized_current(device, volts_node):
    """taped_current mapped onto [-1, 1] via the stored current range."""
    from . import autodiff as ad

    offset, scale = norm_params(device)
    return ad.mul(ad.sub(taped_current(device, volts_node), offset), scale)


def load_device(path):
    kind, fields, arrays = checkpoint.read_checkpoint(path)
    where = str(path)
    ranges = _ranges_from_fields(fields, where)
    if kind == "analytic":
        for name in ("amplitudes", "weights", "biases"):
            if name not in arrays:
                raise StructuralError(f"{where}: missing array {name!r}")
        return AnalyticDevice(
            arrays["amplitudes"], arrays["weights"], arrays["biases"], ranges
        )
    if kind == "mlp":
        layers = []
        for l in range(len(MLP_LAYER_DIMS) - 1):
            if f"w{l}" not in arrays or f"b{l}" not in arrays:
                raise StructuralError(f"{where}: missing arrays for layer {l}")
            w = arrays[f"w{l}"]
            b = arrays[f"b{l}"]
            if l == len(MLP_LAYER_DIMS) - 2 and w.ndim == 1:
                w = w[:, None]  # (90,) stored for the single output column
            layers.append((w, b))
        return MlpSurrogate(tuple(layers), ranges)
    raise StructuralError(f"{where}: unknown device kind {kind!r}")
