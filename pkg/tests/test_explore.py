import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from chiral_transport.dynamics import IntegratorSettings
from chiral_transport.explore import (
    OptimizationError, SimulationSpec, SweepSpec, apply_axis, baseline_spec, config_hash,
    detuned, detuning_robustness, dicke_spec, distance_scan, golden_section_max, loss_scan,
    map_points, optimize_coupling, simulate, sweep,
)
from chiral_transport.model import NetworkConfig, NodeConfig
from chiral_transport.states import NodeStateSpec

FAST = IntegratorSettings(dt=1e-2, t_max=10.0)


def fast_baseline(**kw):
    return baseline_spec(settings=FAST, **kw)


@given(st.floats(0.1, 0.9), st.floats(0.5, 5))
def test_golden_section_finds_quadratic_max(x0, scale):
    x, fx = golden_section_max(lambda x: 1 - scale * (x - x0) ** 2, 0.0, 1.0, tol=1e-6)
    assert x == pytest.approx(x0, abs=1e-6)
    assert fx == pytest.approx(1, abs=1e-10)


def test_golden_section_rejects_empty_bracket():
    with pytest.raises(ValueError):
        golden_section_max(lambda x: x, 1.0, 1.0)


def test_simulate_baseline_shapes():
    res = simulate(fast_baseline())
    assert res.dim == 7
    assert res.times[0] == 0 and res.times[-1] == pytest.approx(10)
    assert res.concurrence_node1[0] == pytest.approx(1)
    assert res.fidelity_node2[0] == pytest.approx(0)
    assert 0.9 < res.C_max < 0.92
    assert res.F_max == pytest.approx(math.sqrt(res.C_max), abs=1e-4)


def test_sector_and_full_basis_agree():
    for spec in (fast_baseline(), fast_baseline(initial1=NodeStateSpec.bell("phi+"))):
        a = simulate(spec)
        b = simulate(replace(spec, basis="full"))
        assert a.dim < b.dim
        np.testing.assert_allclose(a.fidelity_node2, b.fidelity_node2, atol=1e-8)
        np.testing.assert_allclose(a.concurrence_node2, b.concurrence_node2, atol=1e-8)


@pytest.mark.parametrize("chi", [0.0, 0.5])
def test_gauge_symmetry_kd_plus_pi(chi):
    # a2 -> -a2, sigma2 -> -sigma2 maps kD to kD + pi with identical node-2 metrics
    base = apply_axis(fast_baseline(), "chi", chi)
    for kd in (0.3, 1.9):
        a = simulate(apply_axis(base, "kD", kd))
        b = simulate(apply_axis(base, "kD", kd + math.pi))
        assert a.C_max == pytest.approx(b.C_max, abs=1e-10)


def test_spec_validation_and_defaults():
    spec = baseline_spec()
    assert spec.node2_state == NodeStateSpec.ground(2)
    assert spec.reference_state == NodeStateSpec.bell("psi+")
    with pytest.raises(ValueError):
        SimulationSpec(initial1=NodeStateSpec.dicke(3, 1))
    with pytest.raises(ValueError):
        replace(spec, basis="weird")
    assert dicke_spec(3, 0.2, m=5).reference_state == NodeStateSpec.dicke(5, 1)


def test_config_hash_stable_and_sensitive():
    a, b = baseline_spec(), baseline_spec()
    assert a.digest() == b.digest()
    assert baseline_spec(g=0.31).digest() != a.digest()
    assert config_hash({"x": 1, "y": 2}) == config_hash({"y": 2, "x": 1})


def test_sweep_serial_and_parallel_identical():
    spec = SweepSpec(fast_baseline(), (("g1", [0.2, 0.3]), ("g2", [0.25, 0.35])), "C_max")
    serial = sweep(spec)
    parallel = sweep(spec, workers=2)
    np.testing.assert_array_equal(serial.table, parallel.table)
    assert serial.table.shape == (2, 2)
    assert serial.table[serial.argmax()] == serial.table.max()
    assert serial.provenance["axes"] == {"g1": [0.2, 0.3], "g2": [0.25, 0.35]}


def test_sweep_records_point_errors():
    # a negative decay rate fails inside the point, not at spec time
    spec = SweepSpec(fast_baseline(), (("Gamma", [0.0, -0.1]),), "F_max")
    res = sweep(spec)
    assert np.isfinite(res.table[0]) and np.isnan(res.table[1])
    assert "ConfigError" in res.errors[(1,)]


def test_sweep_spec_validation():
    with pytest.raises(ValueError):
        SweepSpec(baseline_spec(), (("bogus", [1.0]),))
    with pytest.raises(ValueError):
        SweepSpec(baseline_spec(), (("g", []),))
    with pytest.raises(ValueError):
        SweepSpec(baseline_spec(), (("g", [1]), ("g1", [1]), ("g2", [1])))
    with pytest.raises(ValueError):
        SweepSpec(baseline_spec(), (("g", [1]),), metric="N")


def test_map_points_preserves_order():
    assert map_points(abs, [-3, 1, -2], workers=2) == [3, 1, 2]


def test_detuning_draws_are_keyed():
    spec = dicke_spec(3, 0.248)
    a = detuned(spec, 0.1, "qubit", (4, 9))
    b = detuned(spec, 0.1, "qubit", (4, 9))
    c = detuned(spec, 0.1, "qubit", (5, 9))
    assert a == b and a != c
    shifts = np.array(a.config.node1.qubit_freqs + a.config.node2.qubit_freqs)
    assert np.all(np.abs(shifts) <= 0.1) and np.any(shifts != 0)
    assert a.config.frame_freq == 0.0
    cav = detuned(spec, 0.1, "cavity", (0, 0)).config
    assert cav.node1.qubit_freqs == (0.0,) * 3 and cav.node1.cavity_freq != 0
    with pytest.raises(ValueError):
        detuned(spec, 0.1, "photon", (0, 0))


def test_robustness_reproducible_and_zero_delta():
    base = dicke_spec(2, 0.3, settings=FAST)
    a = detuning_robustness(0.1, "qubit", 3, seed=2, base=base)
    b = detuning_robustness(0.1, "qubit", 3, seed=2, base=base, workers=2)
    np.testing.assert_array_equal(a.values, b.values)
    zero = detuning_robustness(0.0, "qubit", 2, base=base)
    assert zero.min == zero.max == pytest.approx(simulate(base).F_max)
    assert a.min <= a.mean <= a.max


def test_optimize_coupling_interior_and_boundary():
    opt = optimize_coupling(fast_baseline(), (0.1, 0.6), coarse_points=6, tol=5e-3)
    assert 0.28 < opt.g_opt < 0.32
    assert opt.value == max(opt.evaluations.values())
    with pytest.raises(OptimizationError):
        optimize_coupling(fast_baseline(), (0.4, 0.8), coarse_points=4)


def test_optimum_is_local_max():
    base = fast_baseline()
    opt = optimize_coupling(base, (0.1, 0.6), coarse_points=6, tol=1e-3)
    for g in (opt.g_opt - 0.01, opt.g_opt + 0.01):
        neighbour = replace(base, config=base.config.with_couplings(g))
        assert simulate(neighbour).F_max <= opt.value + 1e-6


def test_distance_scan_validation_and_chiral_independence():
    res = distance_scan([1.0], [0.0, 2.0, 4.0], base=fast_baseline())
    assert np.ptp(res.table) < 1e-9
    with pytest.raises(ValueError):
        distance_scan([1.5], [0.0])
    with pytest.raises(ValueError):
        distance_scan([1.0], [7.0])


def test_loss_scan_fixed_coupling():
    res = loss_scan([0.0, 0.05], optimize_g=False, base=fast_baseline())
    chiral, nonchiral = res.values["F_max_chiral"], res.values["F_max_nonchiral"]
    assert chiral[0] > chiral[1]
    assert np.all(chiral > nonchiral)
    np.testing.assert_array_equal(res.values["g_opt_chiral"], [0.3, 0.3])
    with pytest.raises(ValueError):
        loss_scan([-0.1], optimize_g=False)


def test_cross_node_dicke_spec():
    spec = dicke_spec(2, 0.3, m=3, g2=0.248)
    assert spec.config.node2 == NodeConfig(3, couplings=0.248)
    assert isinstance(spec.config, NetworkConfig)
