import csv
import json
import warnings
from pathlib import Path

import numpy as np
import pytest

import akan.hwcost as hw
import akan.network as nw
import akan.pruning as pr
from akan.benchmarks.sweeps import SWEEP_GRIDS
from akan.devices import AnalyticDevice
from akan.errors import ConfigError, StructuralError
from akan.network import Topology

GOLDEN = json.loads(
    (Path(__file__).parent / "golden" / "energy_akan_2x1x1_d3.json")
    .read_text())


def _quiet_energy(counts, spec=None, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return hw.energy(counts, spec, **kw)


# -- spec ----------------------------------------------------------------------


def test_default_constants_derive_from_rate_pairs():
    spec = hw.HardwareSpec.default()
    assert spec.e_aconv == pytest.approx(0.73e-12, rel=1e-15)
    assert spec.e_dconv == pytest.approx(26e-12, rel=1e-15)
    assert spec.t_dac == 5e-7
    assert spec.t_adc == 1e-8
    assert spec.t_rnpu == 1e-8
    assert spec.p_tia == 94e-6
    assert spec.p_rnpu == 50e-9
    assert spec.a_tia == 7000e-12
    assert spec.a_rnpu == 1e-12
    assert spec.a_dac == 0.0 and spec.a_adc == 0.0


@pytest.mark.parametrize("field,value", [
    ("p_tia", 0.0), ("e_aconv", -1e-12), ("t_rnpu", float("nan")),
    ("e_dconv", float("inf")), ("a_dac", -1e-12),
])
def test_hardware_spec_rejects_bad_values(field, value):
    from dataclasses import replace
    with pytest.raises(ConfigError):
        replace(hw.HardwareSpec.default(), **{field: value})


# -- counts --------------------------------------------------------------------


def test_counts_for_two_edge_layer_net():
    c = hw.counts_from_topology(Topology((2, 1, 1), 3))
    assert (c.n_in, c.n_out) == (2, 1)
    assert c.n_rnpu == 9
    assert c.n_control == 54
    assert c.n_nodes == 2
    assert c.n_layer == 2


def test_counts_for_single_edge_and_wider_nets():
    c = hw.counts_from_topology(Topology((1, 1), 5))
    assert (c.n_rnpu, c.n_nodes, c.n_layer) == (5, 1, 1)
    c = hw.counts_from_topology(Topology((2, 3, 1), 4))
    assert (c.n_rnpu, c.n_nodes, c.n_layer) == (36, 4, 2)


def test_counts_reject_bad_samples():
    with pytest.raises(StructuralError):
        hw.counts_from_topology(Topology((2, 1, 1), 3), samples=0)


def test_counts_from_model_matches_topology_when_dense():
    model = nw.random_init(Topology((2, 3, 1), 2), AnalyticDevice.from_seed(0), 1)
    assert hw.counts_from_model(model, 7) == hw.counts_from_topology(
        model.topology, 7)


def test_counts_from_model_skips_pruned_slots():
    model = nw.random_init(Topology((2, 2, 2, 1), 2),
                           AnalyticDevice.from_seed(3), 11)
    X = np.random.default_rng(1).uniform(-1, 1, (100, 2))
    model.calibrate(X)
    model.edge_layers[1].k[1] = 0.0
    pruned, log = pr.prune(model, X, pr.PruneConfig(1e-300, 1e-300))
    assert len(log) == 1
    dense = hw.counts_from_topology(pruned.topology)
    got = hw.counts_from_model(pruned)
    assert got.n_rnpu == dense.n_rnpu - pruned.topology.d
    assert got.n_control == dense.n_control - 6 * pruned.topology.d
    assert got.n_nodes == dense.n_nodes  # every node kept an input


def test_counts_from_model_drops_tia_of_unfed_node():
    model = nw.random_init(Topology((1, 2, 1), 2),
                           AnalyticDevice.from_seed(3), 11)
    model.edge_layers[0].active[1] = False  # hidden node 1 loses its input
    got = hw.counts_from_model(model)
    assert got.n_nodes == 2  # hidden node 0 and the output


# -- latency -------------------------------------------------------------------


def test_latency_serial_path():
    c = hw.counts_from_topology(Topology((2, 1, 1), 3))
    assert hw.latency(c) == 5.3e-7
    c9 = hw.NetworkCounts(1, 1, 6, 1, 1, 9)
    assert hw.latency(c9) == pytest.approx(6e-7, rel=1e-12)
    c0 = hw.NetworkCounts(1, 1, 6, 1, 1, 0)
    spec = hw.HardwareSpec.default()
    assert hw.latency(c0) == spec.t_dac + spec.t_adc


def test_latency_ignores_sample_count_and_widths():
    a = hw.counts_from_topology(Topology((2, 1, 1), 3), samples=1)
    b = hw.counts_from_topology(Topology((2, 5, 1), 5), samples=100000)
    assert hw.latency(a) == hw.latency(b)


# -- energy --------------------------------------------------------------------


def test_energy_matches_golden_value():
    c = hw.counts_from_topology(Topology((2, 1, 1), 3), samples=GOLDEN["samples"])
    rep = _quiet_energy(c)
    assert rep.t_d == GOLDEN["t_d_s"]
    assert abs(rep.e_total - GOLDEN["e_total_j"]) <= 1e-12 * GOLDEN["e_total_j"]


def test_energy_total_is_exact_sum_of_terms():
    c = hw.counts_from_topology(Topology((2, 5, 1), 4), samples=333)
    rep = _quiet_energy(c)
    assert rep.e_total == rep.e_dac + rep.e_adc + rep.e_tia + rep.e_rnpu
    for v in (rep.e_dac, rep.e_adc, rep.e_tia, rep.e_rnpu):
        assert v >= 0


def test_energy_zero_counts_is_zero():
    rep = _quiet_energy(hw.NetworkCounts(0, 0, 0, 0, 0, 0, samples=1))
    assert rep.e_total == 0.0


def test_energy_scales_linearly_past_the_one_time_control_setup():
    spec = hw.HardwareSpec.default()
    topo = Topology((2, 3, 1), 2)
    setup = hw.counts_from_topology(topo).n_control * spec.e_aconv
    e1 = _quiet_energy(hw.counts_from_topology(topo, 1000), spec).e_total
    e2 = _quiet_energy(hw.counts_from_topology(topo, 2000), spec).e_total
    assert e2 - setup == pytest.approx(2 * (e1 - setup), rel=1e-12)


def test_energy_homogeneous_in_power_constants():
    from dataclasses import replace
    c = hw.counts_from_topology(Topology((4, 3, 1), 3), samples=50)
    base = _quiet_energy(c)
    spec = hw.HardwareSpec.default()
    doubled = replace(spec, e_aconv=2 * spec.e_aconv,
                      e_dconv=2 * spec.e_dconv, p_tia=2 * spec.p_tia,
                      p_rnpu=2 * spec.p_rnpu)
    rep = _quiet_energy(c, doubled)
    assert rep.e_dac == 2 * base.e_dac
    assert rep.e_adc == 2 * base.e_adc
    assert rep.e_tia == 2 * base.e_tia
    assert rep.e_rnpu == 2 * base.e_rnpu
    assert rep.e_total == 2 * base.e_total


def test_single_shot_power_charges_one_inference_window():
    c = hw.counts_from_topology(Topology((2, 1, 1), 3), samples=1000)
    amortized = _quiet_energy(c)
    shot = _quiet_energy(c, single_shot_power=True)
    assert shot.e_tia * 1000 == amortized.e_tia
    assert shot.e_rnpu * 1000 == amortized.e_rnpu
    assert shot.e_dac == amortized.e_dac
    assert shot.e_adc == amortized.e_adc


def test_per_inference_views():
    c = hw.counts_from_topology(Topology((2, 1, 1), 3), samples=1000)
    rep = _quiet_energy(c)
    assert rep.energy_per_inference == rep.e_total / 1000
    view = rep.per_inference()
    assert view["e_total"] == rep.energy_per_inference
    assert sum(view[k] for k in ("e_dac", "e_adc", "e_tia", "e_rnpu")) == \
        pytest.approx(view["e_total"], rel=1e-12)


# -- area ----------------------------------------------------------------------


def test_area_terms_for_reference_net():
    c = hw.counts_from_topology(Topology((2, 1, 1), 3))
    with pytest.warns(UserWarning, match="converter areas"):
        a = hw.area(c)
    assert a.tia == 1.4e-8
    assert a.rnpu == 9e-12
    assert a.total == a.rnpu + a.tia + a.dac + a.adc


def test_area_zero_counts_no_warning():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        a = hw.area(hw.NetworkCounts(0, 0, 0, 0, 0, 0))
    assert a.total == 0.0


def test_area_with_converter_constants_does_not_warn():
    from dataclasses import replace
    spec = replace(hw.HardwareSpec.default(), a_dac=1e-10, a_adc=5e-9)
    c = hw.counts_from_topology(Topology((2, 1, 1), 3))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        a = hw.area(c, spec)
    assert a.dac == (2 + 54) * 1e-10
    assert a.adc == 5e-9


def test_tia_silicon_dominates_device_silicon():
    for grid in SWEEP_GRIDS.values():
        for cell in grid.cells:
            if cell.kind != "akan":
                continue
            c = hw.counts_from_topology(Topology(cell.widths, cell.d))
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                a = hw.area(c)
            assert a.tia > 100 * a.rnpu, cell.label()
    c = hw.counts_from_topology(Topology((2, 1, 1), 3))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        a = hw.area(c)
    assert a.tia > 1000 * a.rnpu


# -- digital baseline ----------------------------------------------------------


def test_mlp_cost_counts_ops():
    rep = hw.mlp_cost((2, 5, 1))
    assert rep.macs == 15
    assert rep.activations == 5
    rep = hw.mlp_cost((3, 2))
    assert (rep.macs, rep.activations, rep.cycles) == (6, 0, 1)


def test_mlp_cost_latency_near_hundred_ns_for_mid_width():
    rep = hw.mlp_cost((2, 200, 1))
    assert rep.cycles == 52
    assert rep.t_d == 52 / 500e6
    assert 5e-8 < rep.t_d < 2e-7


def test_mlp_cost_energy_and_area_from_unit_constants():
    spec = hw.DigitalSpec(e_mac=3e-12, e_lut=1e-12, a_mac=1e-9,
                          a_lut=2e-10, clock_hz=1e9)
    rep = hw.mlp_cost((2, 4, 1), spec)
    assert rep.e_mac == 12 * 3e-12
    assert rep.e_lut == 4 * 1e-12
    assert rep.e_total == rep.e_mac + rep.e_lut
    assert rep.area == 5 * 4 * 1e-9 + 4 * 2e-10
    assert rep.energy_per_inference == rep.e_total


def test_mlp_cost_lane_count_sets_the_schedule():
    from dataclasses import replace
    narrow = replace(hw.DigitalSpec.default(), lanes=1)
    rep = hw.mlp_cost((2, 200, 1), narrow)
    assert rep.cycles == 2 + 200 + 1


def test_mlp_cost_rejects_bad_widths():
    with pytest.raises(StructuralError):
        hw.mlp_cost((5,))
    with pytest.raises(StructuralError):
        hw.mlp_cost((2, 0, 1))


def test_digital_spec_validation():
    with pytest.raises(ConfigError):
        hw.DigitalSpec(e_mac=0, e_lut=1e-12, a_mac=1e-9, a_lut=1e-10,
                       clock_hz=5e8)
    from dataclasses import replace
    with pytest.raises(ConfigError):
        replace(hw.DigitalSpec.default(), lanes=0)
    with pytest.raises(ConfigError):
        replace(hw.DigitalSpec.default(), lanes=2.0)


# -- spec files ----------------------------------------------------------------


def test_load_hardware_spec_overrides_subset(tmp_path):
    path = tmp_path / "hw.yaml"
    path.write_text("p_tia: 47.0e-6\na_adc: 1.0e-9\n")
    spec = hw.load_hardware_spec(path)
    assert spec.p_tia == 47e-6
    assert spec.a_adc == 1e-9
    assert spec.e_aconv == hw.HardwareSpec.default().e_aconv


def test_load_digital_spec(tmp_path):
    path = tmp_path / "dig.yaml"
    path.write_text("e_mac: 5.0e-12\nlanes: 8\n")
    spec = hw.load_digital_spec(path)
    assert spec.e_mac == 5e-12
    assert spec.lanes == 8


@pytest.mark.parametrize("text", [
    "e_mac: 1e-12\nrogue_key: 3\n",
    "e_mac: [1, 2]\n",
    "- just\n- a\n- list\n",
    "e_mac: walrus\n",
])
def test_load_digital_spec_rejects_malformed(tmp_path, text):
    path = tmp_path / "dig.yaml"
    path.write_text(text)
    with pytest.raises(ConfigError):
        hw.load_digital_spec(path)


def test_load_spec_missing_file():
    with pytest.raises(ConfigError):
        hw.load_hardware_spec("/nonexistent/hw.yaml")


# -- sweep join ----------------------------------------------------------------


def _sweep_fixture(tmp_path):
    path = tmp_path / "sweep.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("grid", "task", "cell", "params", "seed", "mse",
                    "top5_min", "top5_max", "runtime"))
        w.writerow(("akan-2var", "exp2", "[2,1,1]x3", "14", "123",
                    "2e-3", "", "", ""))
        w.writerow(("akan-2var", "exp2", "[2,1,1]x3", "14", "summary",
                    "1e-3", "1e-3", "4e-3", ""))
        w.writerow(("akan-2var", "exp2", "[2,2,1]x3", "28", "summary",
                    "5e-3", "5e-3", "9e-3", ""))
        w.writerow(("mlp-2var", "exp2", "[2,200,1]:tanh", "801", "summary",
                    "2e-3", "2e-3", "6e-3", ""))
    return path


def test_pareto_rows_join_cost_onto_summaries(tmp_path):
    rows = hw.pareto_rows(_sweep_fixture(tmp_path), samples=1000)
    assert [r["family"] for r in rows] == ["akan", "akan", "mlp"]
    c = hw.counts_from_topology(Topology((2, 1, 1), 3), samples=1000)
    assert rows[0]["energy_j"] == _quiet_energy(c).energy_per_inference
    assert rows[0]["latency_s"] == 5.3e-7
    mlp = hw.mlp_cost((2, 200, 1))
    assert rows[2]["energy_j"] == mlp.e_total
    assert rows[2]["latency_s"] == mlp.t_d


def test_pareto_energy_ratio_matches_hand_value(tmp_path):
    rows = hw.pareto_rows(_sweep_fixture(tmp_path), samples=1000)
    # only the [2,1,1]x3 summary reaches the MLP's MSE of 2e-3
    expect = rows[2]["energy_j"] / rows[0]["energy_j"]
    assert hw.energy_ratio(rows) == expect
    assert hw.energy_ratio([r for r in rows if r["family"] == "mlp"]) is None


def test_pareto_rejects_unknown_label(tmp_path):
    path = tmp_path / "sweep.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("grid", "task", "cell", "params", "seed", "mse",
                    "top5_min", "top5_max", "runtime"))
        w.writerow(("g", "t", "[2,1,1]@3", "14", "summary", "1e-3",
                    "", "", ""))
    with pytest.raises(ConfigError):
        hw.pareto_rows(path)


def test_pareto_csv_round_trip(tmp_path):
    rows = hw.pareto_rows(_sweep_fixture(tmp_path))
    out = tmp_path / "pareto.csv"
    hw.write_pareto_csv(out, rows)
    lines = out.read_text().splitlines()
    assert lines[0] == ",".join(hw.PARETO_COLUMNS)
    assert len(lines) == 1 + len(rows)
    first = out.read_bytes()
    hw.write_pareto_csv(out, rows)
    assert out.read_bytes() == first
