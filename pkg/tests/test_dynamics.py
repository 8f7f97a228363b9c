import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from chiral_transport import dynamics
from chiral_transport.dynamics import (
    IntegratorSettings, InvariantError, evolve, evolve_exact, invariant_mask, lindblad_rhs,
    liouvillian_matrix, rk4_step_matrix, sparse_liouvillian,
)
from chiral_transport.hilbert import (
    boson, build_layout, lowering_op, number_op, op_add, op_scale, adjoint, qubit,
)
from chiral_transport.model import NetworkConfig, NodeConfig, build_model, custom_model
from chiral_transport.states import NodeStateSpec, embed_global, make_node_state
from conftest import random_density


def decaying_qubit(gamma=0.7):
    layout = build_layout([qubit()])
    return custom_model(layout, np.zeros((2, 2)), [math.sqrt(gamma) * lowering_op(layout, 0)])


def damped_cavity(kappa=0.4, cutoff=3):
    layout = build_layout([boson(cutoff)])
    return custom_model(layout, op_scale(number_op(layout, 0), 0.3),
                        [math.sqrt(kappa) * lowering_op(layout, 0)])


def bell_model(cfg=None, cap=1):
    cfg = cfg or NetworkConfig().with_couplings(0.3)
    model = build_model(cfg, cap)
    rho0 = embed_global(model.layout, make_node_state(NodeStateSpec.bell("psi+")),
                        make_node_state(NodeStateSpec.ground(2)))
    return model, rho0


def test_single_qubit_decay_spectrum():
    gamma = 0.7
    ev = np.linalg.eigvals(liouvillian_matrix(decaying_qubit(gamma)))
    np.testing.assert_allclose(np.sort(ev.real), [-gamma, -gamma / 2, -gamma / 2, 0], atol=1e-14)
    np.testing.assert_allclose(ev.imag, 0, atol=1e-14)


model_strategy = st.builds(
    lambda g1, g2, gl, kd, rate: build_model(
        NetworkConfig(NodeConfig(1, couplings=g1, qubit_decays=rate),
                      NodeConfig(2, couplings=g2, qubit_freqs=0.1), gl, 1.0, kd), 1),
    st.floats(-1, 1), st.floats(-1, 1), st.floats(0, 1), st.floats(0, 6.28), st.floats(0, 0.2))


@given(model_strategy)
def test_sparse_liouvillian_matches_dense_oracle(model):
    np.testing.assert_allclose(sparse_liouvillian(model).toarray(), liouvillian_matrix(model),
                               atol=1e-13)


@given(model_strategy, st.integers(0, 2**31 - 1))
def test_rhs_is_hermitian_and_traceless(model, seed):
    rho = random_density(np.random.default_rng(seed), model.dim)
    out = lindblad_rhs(model, rho)
    assert np.abs(out - out.conj().T).max() < 1e-12
    assert abs(np.trace(out)) < 1e-12


def test_stationary_state_of_decay_is_ground():
    ev, vec = np.linalg.eig(liouvillian_matrix(decaying_qubit()))
    ss = vec[:, np.argmin(np.abs(ev))].reshape(2, 2, order="F")
    ss /= np.trace(ss)
    np.testing.assert_allclose(ss, [[1, 0], [0, 0]], atol=1e-14)


def test_cavity_decay_matches_analytic():
    kappa = 0.4
    model = damped_cavity(kappa)
    rho0 = np.zeros((4, 4), dtype=complex)
    rho0[2, 2] = 1.0
    traj = evolve(model, rho0, IntegratorSettings(dt=1e-3, t_max=5.0, record_stride=100))
    t = traj.times
    np.testing.assert_allclose(traj.observables["N_tot"], 2 * np.exp(-kappa * t), atol=1e-10)
    p2 = traj.states[:, 2, 2].real
    p1 = traj.states[:, 1, 1].real
    np.testing.assert_allclose(p2, np.exp(-2 * kappa * t), atol=1e-10)
    np.testing.assert_allclose(p1, 2 * np.exp(-kappa * t) * (1 - np.exp(-kappa * t)), atol=1e-10)


def test_rk4_agrees_with_matrix_exponential():
    model, rho0 = bell_model(NetworkConfig(gamma_L=0.4, kD=1.0).with_couplings(0.3))
    traj = evolve(model, rho0, IntegratorSettings(dt=1e-3, t_max=10.0, record_stride=1000))
    for k, t in enumerate(traj.times):
        np.testing.assert_allclose(traj.states[k], evolve_exact(model, rho0, t), atol=1e-9)


def test_rk4_is_fourth_order():
    model, rho0 = bell_model()
    exact = evolve_exact(model, rho0, 2.0)
    errs = []
    for dt in (0.2, 0.1, 0.05):
        # coarse RK4 steps need not preserve positivity
        traj = evolve(model, rho0, IntegratorSettings(dt=dt, t_max=2.0, record_stride=1),
                      check=False)
        errs.append(np.abs(traj.states[-1] - exact).max())
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    assert all(12 <= r <= 20 for r in ratios), ratios


def test_step_matrix_matches_stage_form():
    model, rho0 = bell_model()
    sup = sparse_liouvillian(model)
    v = rho0.ravel(order="F")
    dt = 0.05
    k1 = sup @ v
    k2 = sup @ (v + dt / 2 * k1)
    k3 = sup @ (v + dt / 2 * k2)
    k4 = sup @ (v + dt * k3)
    np.testing.assert_allclose(rk4_step_matrix(sup, dt) @ v,
                               v + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4), atol=1e-15)


def test_dense_and_sparse_paths_agree(monkeypatch):
    model, rho0 = bell_model()
    settings = IntegratorSettings(dt=1e-2, t_max=4.0, record_stride=7)
    dense = evolve(model, rho0, settings)
    monkeypatch.setattr(dynamics, "DENSE_STEP_MAX_DIM", 0)
    sparse = evolve(model, rho0, settings)
    np.testing.assert_allclose(dense.states, sparse.states, atol=1e-12)


def test_invariant_mask_restricts_to_reached_blocks():
    model, rho0 = bell_model(cap=2)
    mask = invariant_mask(model, sparse_liouvillian(model), rho0)
    assert mask is not None and mask.sum() < model.dim**2
    # full integration without the restriction gives the same answer
    exact = evolve_exact(model, rho0, 1.0)
    traj = evolve(model, rho0, IntegratorSettings(dt=1e-3, t_max=1.0, record_stride=1000))
    np.testing.assert_allclose(traj.states[-1], exact, atol=1e-10)


def test_invariant_mask_skipped_when_blocks_couple():
    layout = build_layout([qubit()])
    s = lowering_op(layout, 0)
    model = custom_model(layout, op_add(s, adjoint(s)), [0.5 * s])
    rho0 = np.diag([1.0, 0.0]).astype(complex)
    assert invariant_mask(model, sparse_liouvillian(model), rho0) is None
    traj = evolve(model, rho0, IntegratorSettings(dt=1e-3, t_max=2.0, record_stride=500))
    np.testing.assert_allclose(traj.states[-1], evolve_exact(model, rho0, 2.0), atol=1e-10)


def test_recording_grid_includes_final_step():
    model, rho0 = bell_model()
    traj = evolve(model, rho0, IntegratorSettings(dt=0.1, t_max=1.05, record_stride=4),
                  check=False)
    np.testing.assert_allclose(traj.times, [0, 0.4, 0.8, 1.1])
    assert traj.states.shape == (4, 7, 7)
    assert evolve(model, rho0, IntegratorSettings(dt=0.01, t_max=1.0),
                  store_states=False).states is None


def test_diagnostics_within_tolerances():
    model, rho0 = bell_model(NetworkConfig().with_couplings(0.3).with_qubit_decay(0.05))
    traj = evolve(model, rho0)
    d = traj.diagnostics
    assert d["trace_drift"] <= 1e-8
    assert d["hermiticity"] <= 1e-10
    assert d["min_eigenvalue"] >= -1e-8
    assert d["max_excitation_increase"] <= 1e-12


def test_unstable_step_raises_invariant_error():
    model = damped_cavity(kappa=10.0)
    rho0 = np.diag([0, 0, 0, 1.0]).astype(complex)
    with pytest.raises(InvariantError) as info:
        evolve(model, rho0, IntegratorSettings(dt=1.0, t_max=5.0, record_stride=1))
    assert info.value.step in (1, 2)
    assert str(info.value).startswith(f"step {info.value.step}:")


def test_initial_state_validated():
    model, rho0 = bell_model()
    with pytest.raises(ValueError):
        evolve(model, 2 * rho0)


@pytest.mark.parametrize("kwargs", [dict(dt=0), dict(dt=-1e-3), dict(t_max=1e-4),
                                    dict(record_stride=0), dict(trace_tol=0)])
def test_settings_validation(kwargs):
    with pytest.raises(ValueError):
        IntegratorSettings(**kwargs)


def test_oracle_dimension_guard():
    model = build_model(NetworkConfig(NodeConfig(5), NodeConfig(5)), 2)
    assert model.dim > dynamics.ORACLE_MAX_DIM
    with pytest.raises(ValueError):
        liouvillian_matrix(model)
