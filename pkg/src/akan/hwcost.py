"""Energy, latency, and silicon-area estimates for analog networks.

The analog model charges converters per conversion (control DACs are set
once per evaluation, input DACs and the output ADC fire per sample) and
the powered blocks (TIAs, devices) for the time they stay on. A parallel
fixed-point MLP model covers the digital baseline: 4-lane SIMD neurons,
single-cycle table lookup activations, user-editable per-op constants.

All quantities are SI (joules, seconds, square meters).
"""

import csv
import math
import warnings
from dataclasses import dataclass, replace

import yaml

from .benchmarks.sweeps import parse_cell_label
from .checkpoint import format_float
from .errors import ConfigError, StructuralError
from .network import Topology

# converter datasheet anchors; energies and conversion times derive from
# the (power, rate) pairs instead of being hard-coded
DAC_POWER_W = 1.46e-6
DAC_RATE_HZ = 2e6
ADC_POWER_W = 2.6e-3
ADC_RATE_HZ = 100e6

DEVICE_POWER_W = 50e-9
DEVICE_LATENCY_S = 10e-9
DEVICE_AREA_M2 = 1e-12  # ~1 um^2 including routing
TIA_POWER_W = 94e-6
TIA_AREA_M2 = 7000e-12

CONTROLS_PER_DEVICE = 6
SIMD_LANES = 4


def _require_positive(obj, fields):
    for name in fields:
        v = getattr(obj, name)
        if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
            raise ConfigError(f"{name} must be a positive finite number, "
                              f"got {v!r}")


@dataclass(frozen=True)
class HardwareSpec:
    """Per-component constants of the analog stack."""

    e_aconv: float  # J per DAC conversion
    e_dconv: float  # J per ADC conversion
    t_dac: float
    t_adc: float
    t_rnpu: float
    p_tia: float
    p_rnpu: float
    a_rnpu: float
    a_tia: float
    a_dac: float = 0.0  # no published figure; excluded from totals
    a_adc: float = 0.0

    def __post_init__(self):
        _require_positive(self, ("e_aconv", "e_dconv", "t_dac", "t_adc",
                                 "t_rnpu", "p_tia", "p_rnpu", "a_rnpu",
                                 "a_tia"))
        for name in ("a_dac", "a_adc"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v)
                    and v >= 0):
                raise ConfigError(f"{name} must be a finite number >= 0, "
                                  f"got {v!r}")

    @classmethod
    def default(cls) -> "HardwareSpec":
        return cls(
            e_aconv=DAC_POWER_W / DAC_RATE_HZ,
            e_dconv=ADC_POWER_W / ADC_RATE_HZ,
            t_dac=1.0 / DAC_RATE_HZ,
            t_adc=1.0 / ADC_RATE_HZ,
            t_rnpu=DEVICE_LATENCY_S,
            p_tia=TIA_POWER_W,
            p_rnpu=DEVICE_POWER_W,
            a_rnpu=DEVICE_AREA_M2,
            a_tia=TIA_AREA_M2,
        )


@dataclass(frozen=True)
class NetworkCounts:
    """Resource counts one evaluation touches."""

    n_in: int
    n_out: int
    n_control: int
    n_nodes: int  # summation points carrying a TIA
    n_rnpu: int
    n_layer: int  # edge layers crossed in series
    samples: int = 1

    def __post_init__(self):
        for name in ("n_in", "n_out", "n_control", "n_nodes",
                     "n_rnpu", "n_layer"):
            if getattr(self, name) < 0:
                raise StructuralError(f"{name} must be >= 0")
        if self.samples < 1:
            raise StructuralError("samples must be >= 1")


def counts_from_topology(topology: Topology, samples: int = 1) -> NetworkCounts:
    n_rnpu = topology.d * topology.n_eps
    return NetworkCounts(
        n_in=topology.n_inputs,
        n_out=topology.n_outputs,
        n_control=CONTROLS_PER_DEVICE * n_rnpu,
        n_nodes=sum(topology.hidden_widths) + topology.n_outputs,
        n_rnpu=n_rnpu,
        n_layer=topology.n_edge_layers,
        samples=samples,
    )


def counts_from_model(model, samples: int = 1) -> NetworkCounts:
    """Counts honoring pruned-out slots: inactive edges carry no devices,
    and a node whose incoming edges are all gone needs no TIA."""
    t = model.topology
    eps = 0
    n_nodes = 0
    for l, lay in enumerate(model.edge_layers):
        w_next = t.widths[l + 1]
        eps += int(lay.active.sum())
        incoming = lay.active.reshape(t.widths[l], w_next)
        n_nodes += int(incoming.any(axis=0).sum())
    n_rnpu = t.d * eps
    return NetworkCounts(
        n_in=t.n_inputs,
        n_out=t.n_outputs,
        n_control=CONTROLS_PER_DEVICE * n_rnpu,
        n_nodes=n_nodes,
        n_rnpu=n_rnpu,
        n_layer=t.n_edge_layers,
        samples=samples,
    )


def latency(counts: NetworkCounts, spec: HardwareSpec = None) -> float:
    """Serial path: one DAC conversion, the device layers, one ADC
    conversion. Independent of widths and of the sample count."""
    spec = spec or HardwareSpec.default()
    return spec.t_dac + spec.t_rnpu * counts.n_layer + spec.t_adc


@dataclass(frozen=True)
class AreaBreakdown:
    rnpu: float
    tia: float
    dac: float
    adc: float
    total: float


def area(counts: NetworkCounts, spec: HardwareSpec = None) -> AreaBreakdown:
    spec = spec or HardwareSpec.default()
    if ((spec.a_dac == 0.0 and counts.n_in + counts.n_control > 0)
            or (spec.a_adc == 0.0 and counts.n_out > 0)):
        warnings.warn("converter areas are zero; the area total leaves "
                      "out DAC/ADC silicon", stacklevel=2)
    a_rnpu = counts.n_rnpu * spec.a_rnpu
    a_tia = counts.n_nodes * spec.a_tia
    a_dac = (counts.n_in + counts.n_control) * spec.a_dac
    a_adc = counts.n_out * spec.a_adc
    return AreaBreakdown(a_rnpu, a_tia, a_dac, a_adc,
                         a_rnpu + a_tia + a_dac + a_adc)


@dataclass(frozen=True)
class CostReport:
    """Energy terms are totals for the whole `samples`-point evaluation."""

    samples: int
    t_d: float
    e_dac: float
    e_adc: float
    e_tia: float
    e_rnpu: float
    e_total: float
    area: AreaBreakdown

    @property
    def energy_per_inference(self) -> float:
        return self.e_total / self.samples

    def per_inference(self) -> dict:
        p = self.samples
        return {
            "e_dac": self.e_dac / p,
            "e_adc": self.e_adc / p,
            "e_tia": self.e_tia / p,
            "e_rnpu": self.e_rnpu / p,
            "e_total": self.e_total / p,
        }


def energy(counts: NetworkCounts, spec: HardwareSpec = None,
           single_shot_power: bool = False) -> CostReport:
    """Evaluation energy for `counts.samples` points.

    Control DACs convert once per evaluation; input DACs and the ADC
    convert per sample. The powered blocks (TIAs, devices) stay on for
    the whole evaluation by default, so their terms scale with the
    sample count; `single_shot_power` charges them for a single
    inference window instead, whatever the sample count.
    """
    spec = spec or HardwareSpec.default()
    p = counts.samples
    t_d = latency(counts, spec)
    window = 1 if single_shot_power else p
    e_dac = counts.n_in * spec.e_aconv * p + counts.n_control * spec.e_aconv
    e_adc = counts.n_out * spec.e_dconv * p
    e_tia = counts.n_nodes * spec.p_tia * t_d * window
    e_rnpu = counts.n_rnpu * spec.p_rnpu * t_d * window
    return CostReport(
        samples=p,
        t_d=t_d,
        e_dac=e_dac,
        e_adc=e_adc,
        e_tia=e_tia,
        e_rnpu=e_rnpu,
        e_total=e_dac + e_adc + e_tia + e_rnpu,
        area=area(counts, spec),
    )


# -- digital baseline ---------------------------------------------------------


@dataclass(frozen=True)
class DigitalSpec:
    """Per-op constants of the fixed-point MLP datapath."""

    e_mac: float  # J per multiply-accumulate
    e_lut: float  # J per table-lookup activation
    a_mac: float  # m^2 per MAC lane
    a_lut: float  # m^2 per activation table
    clock_hz: float
    lanes: int = SIMD_LANES

    def __post_init__(self):
        _require_positive(self, ("e_mac", "e_lut", "a_mac", "a_lut",
                                 "clock_hz"))
        if not isinstance(self.lanes, int) or self.lanes < 1:
            raise ConfigError(f"lanes must be an integer >= 1, "
                              f"got {self.lanes!r}")

    @classmethod
    def default(cls) -> "DigitalSpec":
        # representative open-library 16-bit figures; edit the shipped
        # spec file rather than these
        return cls(e_mac=2e-12, e_lut=2e-13, a_mac=1000e-12,
                   a_lut=500e-12, clock_hz=500e6)


@dataclass(frozen=True)
class DigitalCostReport:
    macs: int
    activations: int
    cycles: int
    t_d: float
    e_mac: float  # totals, not per-op
    e_lut: float
    e_total: float
    area: float

    @property
    def energy_per_inference(self) -> float:
        return self.e_total  # digital cost is already per inference


def mlp_cost(widths, spec: DigitalSpec = None) -> DigitalCostReport:
    """Per-inference cost of a layered MLP on parallel SIMD neurons.

    Every neuron owns a `lanes`-wide MAC unit, so a layer finishes in
    ceil(fan_in / lanes) cycles regardless of its width; activations add
    one lookup cycle per hidden layer.
    """
    spec = spec or DigitalSpec.default()
    widths = tuple(int(w) for w in widths)
    if len(widths) < 2 or any(w < 1 for w in widths):
        raise StructuralError(f"need at least two positive widths, "
                              f"got {widths}")
    macs = sum(a * b for a, b in zip(widths, widths[1:]))
    activations = sum(widths[1:-1])
    neurons = sum(widths[1:])
    cycles = (sum(math.ceil(w / spec.lanes) for w in widths[:-1])
              + len(widths) - 2)
    e_mac = macs * spec.e_mac
    e_lut = activations * spec.e_lut
    return DigitalCostReport(
        macs=macs,
        activations=activations,
        cycles=cycles,
        t_d=cycles / spec.clock_hz,
        e_mac=e_mac,
        e_lut=e_lut,
        e_total=e_mac + e_lut,
        area=neurons * spec.lanes * spec.a_mac + activations * spec.a_lut,
    )


# -- spec files ---------------------------------------------------------------


def _load_spec(path, cls, label):
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"{label} spec file not found: {path}") from None
    except yaml.YAMLError as ex:
        raise ConfigError(f"malformed {label} spec {path}: {ex}") from None
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{label} spec {path} must be a mapping")
    known = set(cls.__dataclass_fields__)
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown {label} spec keys {unknown}; "
                          f"expected a subset of {sorted(known)}")
    try:
        return replace(cls.default(), **raw)
    except TypeError as ex:
        raise ConfigError(f"bad {label} spec values in {path}: {ex}") from None


def load_hardware_spec(path) -> HardwareSpec:
    """Read overrides for the analog constants; unset keys keep defaults."""
    return _load_spec(path, HardwareSpec, "hardware")


def load_digital_spec(path) -> DigitalSpec:
    return _load_spec(path, DigitalSpec, "digital")


# -- accuracy/cost sweep join -------------------------------------------------

PARETO_COLUMNS = ("family", "cell", "params", "mse",
                  "energy_j", "latency_s", "area_m2")


def pareto_rows(sweep_csv, spec: HardwareSpec = None,
                digital: DigitalSpec = None, samples: int = 1000) -> list:
    """Join the cost model onto sweep summary rows.

    Returns one dict per architecture with per-inference energy (analog
    power amortized over `samples` evaluations), latency, and area.
    """
    spec = spec or HardwareSpec.default()
    digital = digital or DigitalSpec.default()
    rows = []
    with open(sweep_csv, newline="") as fh:
        for rec in csv.DictReader(fh):
            if rec.get("seed") != "summary":
                continue
            cell = parse_cell_label(rec["cell"])
            if cell.kind == "akan":
                counts = counts_from_topology(
                    Topology(cell.widths, cell.d), samples)
                rep = energy(counts, spec)
                e_inf = rep.energy_per_inference
                t_d, a = rep.t_d, rep.area.total
            else:
                rep = mlp_cost(cell.widths, digital)
                e_inf, t_d, a = rep.e_total, rep.t_d, rep.area
            rows.append({
                "family": cell.kind,
                "cell": rec["cell"],
                "params": int(rec["params"]),
                "mse": float(rec["mse"]),
                "energy_j": e_inf,
                "latency_s": t_d,
                "area_m2": a,
            })
    return rows


def energy_ratio(rows) -> float:
    """Largest digital-to-analog energy ratio at matched accuracy: each
    MLP row is compared against the cheapest analog config that reaches
    its MSE or better. None when no analog config qualifies anywhere."""
    best = None
    for row in rows:
        if row["family"] != "mlp":
            continue
        candidates = [r["energy_j"] for r in rows
                      if r["family"] == "akan" and r["mse"] <= row["mse"]]
        if not candidates:
            continue
        ratio = row["energy_j"] / min(candidates)
        best = ratio if best is None or ratio > best else best
    return best


def write_pareto_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(PARETO_COLUMNS)
        for row in rows:
            writer.writerow([
                row["family"], row["cell"], row["params"],
                format_float(row["mse"]), format_float(row["energy_j"]),
                format_float(row["latency_s"]), format_float(row["area_m2"]),
            ])
