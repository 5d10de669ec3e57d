import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hybrid_attitude.config import SIM_VECTORS, SIM_WEIGHTS
from hybrid_attitude.gain_design import design_parameters
from hybrid_attitude.observers import (
    AgasObserverState,
    ContractViolation,
    GasObserverState,
    LyapunovMonitor,
    ObserverGains,
    agas_flow_step,
    cf_zoh_step,
    gas_flow_step,
    gas_theta_jump,
    in_jump_set,
    innovation_agas,
    innovation_gas,
    lyapunov_VR,
    lyapunov_vr_i,
    measurement_jump,
    mu_phi,
    phi,
    select_theta,
)
from hybrid_attitude.sensing import VectorObservationSet, weight_matrix
from hybrid_attitude.so3 import angle_axis, integrate_rotation_step, is_rotation

from .strategies import random_rotation, rotations

OBS = VectorObservationSet(SIM_VECTORS, SIM_WEIGHTS)
AN = weight_matrix(OBS)
PARAMS = design_parameters(AN)
GAINS = ObserverGains(15.0, 0.45)
R_HAT0 = angle_axis(math.pi / 2, [0.8, 0.6, 0.0])


def sigma_oracle(r_hat, R_u=np.eye(3)):
    return sum(rho * np.cross(rh, R_u @ r) for rh, r, rho in zip(r_hat, OBS.vectors, OBS.weights))


def phi_oracle(theta, r_hat):
    Ru = angle_axis(theta, PARAMS.u)
    return 0.5 * sum(
        rho * np.sum((r - Ru.T @ rh) ** 2) for rh, r, rho in zip(r_hat, OBS.vectors, OBS.weights)
    ) + 0.5 * PARAMS.gamma * theta**2


def antipodal_state(v, R=np.eye(3)):
    """GAS state with R_tilde = R_a(pi, v) and vector errors zero."""
    R_tilde = angle_axis(math.pi, v)
    R_hat = R_tilde.T @ R
    r_hat = (R_hat @ (R.T @ OBS.vectors.T)).T
    return GasObserverState(R_hat, r_hat, 0.0)


# --- innovation ----------------------------------------------------------------------


def test_innovation_zero_when_estimates_match_references():
    np.testing.assert_array_equal(innovation_agas(AgasObserverState(R_HAT0, OBS.vectors.copy()), OBS), np.zeros(3))


@given(rotations)
def test_innovation_zero_at_converged_state(R):
    r_hat = (R @ (R.T @ OBS.vectors.T)).T  # r_hat_i = R_hat b_i with R_hat = R
    np.testing.assert_allclose(innovation_agas(AgasObserverState(R, r_hat), OBS), 0.0, atol=1e-15)


def test_innovation_matches_direct_sum():
    r_hat = OBS.vectors @ R_HAT0  # rows R_hat^T r_i
    np.testing.assert_allclose(innovation_agas(r_hat, OBS), sigma_oracle(r_hat), atol=1e-15)


@given(st.floats(-math.pi, math.pi), st.integers(0, 10_000))
def test_gas_innovation_matches_direct_sum(theta, seed):
    r_hat = np.random.default_rng(seed).standard_normal((3, 3))
    state = GasObserverState(np.eye(3), r_hat, theta)
    expected = sigma_oracle(r_hat, angle_axis(theta, PARAMS.u))
    np.testing.assert_allclose(innovation_gas(state, OBS, PARAMS), expected, atol=1e-13)


def test_gas_innovation_at_zero_theta_equals_agas():
    r_hat = OBS.vectors @ R_HAT0
    np.testing.assert_allclose(
        innovation_gas(GasObserverState(R_HAT0, r_hat, 0.0), OBS, PARAMS), innovation_agas(r_hat, OBS), atol=1e-15
    )


@pytest.mark.parametrize("k", range(3))
def test_gas_innovation_vanishes_at_antipode_until_theta_jump(k):
    state = antipodal_state(AN.eigenvectors[:, k])
    assert np.linalg.norm(innovation_gas(state, OBS, PARAMS)) < 1e-12
    jumped = gas_theta_jump(state, OBS, PARAMS)
    assert np.linalg.norm(innovation_gas(jumped, OBS, PARAMS)) > 1e-3


# --- flows ---------------------------------------------------------------------------


def test_agas_zero_innovation_follows_gyro():
    w = np.array([0.3, -0.2, 0.5])
    state = AgasObserverState(np.eye(3), OBS.vectors.copy())
    out = agas_flow_step(state, w, OBS, GAINS, 1e-3)
    np.testing.assert_array_equal(out.r_hat, state.r_hat)
    np.testing.assert_allclose(out.R_hat, integrate_rotation_step(np.eye(3), w, 1e-3), atol=1e-15)


def test_agas_frozen_without_dynamics():
    # k_o must be positive, so zero dynamics means zero innovation and zero rate
    state = AgasObserverState(R_HAT0, OBS.vectors.copy())
    out = agas_flow_step(state, np.zeros(3), OBS, GAINS, 1e-3)
    np.testing.assert_allclose(out.R_hat, R_HAT0, atol=1e-15)
    np.testing.assert_array_equal(out.r_hat, state.r_hat)


@given(rotations, st.integers(0, 10_000))
def test_flows_preserve_vector_estimate_norms(R_hat, seed):
    # reachable estimates: references seen through an arbitrary attitude error
    rng = np.random.default_rng(seed)
    r_hat = OBS.vectors @ random_rotation(rng)
    w = rng.standard_normal(3)
    a = agas_flow_step(AgasObserverState(R_hat, r_hat), w, OBS, GAINS, 1e-3)
    np.testing.assert_allclose(np.linalg.norm(a.r_hat, axis=1), np.linalg.norm(r_hat, axis=1), rtol=0, atol=1e-9)
    g = gas_flow_step(GasObserverState(R_hat, r_hat, 0.0), w, OBS, GAINS, PARAMS, 1e-3, check=False)
    np.testing.assert_allclose(np.linalg.norm(g.r_hat, axis=1), np.linalg.norm(r_hat, axis=1), rtol=0, atol=1e-9)
    assert is_rotation(a.R_hat) and is_rotation(g.R_hat)


def test_gas_converged_state_is_stationary():
    state = GasObserverState(np.eye(3), OBS.vectors.copy(), 0.0)
    out = gas_flow_step(state, np.zeros(3), OBS, GAINS, PARAMS, 1e-3)
    assert out.theta == 0.0
    np.testing.assert_array_equal(out.r_hat, state.r_hat)
    np.testing.assert_allclose(out.R_hat, np.eye(3), atol=1e-15)


def test_theta_decay_matches_closed_form():
    # zero vector estimates keep sigma identically zero, leaving theta' = -k_theta gamma theta
    theta0 = 1.0
    state = GasObserverState(np.eye(3), np.zeros((3, 3)), theta0)
    for _ in range(1000):
        state = gas_flow_step(state, np.zeros(3), OBS, GAINS, PARAMS, 1e-3)
    expected = theta0 * math.exp(-PARAMS.k_theta * PARAMS.gamma * 1.0)
    assert state.theta == pytest.approx(expected, abs=1e-6)


def _flat(s):
    return np.concatenate([s.R_hat.ravel(), s.r_hat.ravel(), [s.theta]])


def test_gas_step_richardson_order():
    rng = np.random.default_rng(4)
    state = GasObserverState(random_rotation(rng), rng.standard_normal((3, 3)), 0.4)
    w = np.array([1.0, -2.0, 0.5])

    def local_error(h):
        one = gas_flow_step(state, w, OBS, GAINS, PARAMS, h, check=False)
        half = gas_flow_step(state, w, OBS, GAINS, PARAMS, h / 2, check=False)
        two = gas_flow_step(half, w, OBS, GAINS, PARAMS, h / 2, check=False)
        return np.linalg.norm(_flat(one) - _flat(two))

    e1, e2 = local_error(0.02), local_error(0.01)
    # local error of a fourth-order step scales like h^5
    assert 2**4.5 < e1 / e2 < 2**5.5


def test_gas_flow_outside_flow_set_is_a_contract_violation():
    state = antipodal_state(AN.eigenvectors[:, 0])
    assert in_jump_set(state, OBS, PARAMS)
    with pytest.raises(ContractViolation):
        gas_flow_step(state, np.zeros(3), OBS, GAINS, PARAMS, 1e-3)


def test_gas_matches_agas_from_consistent_initialization():
    R = angle_axis(0.7, [0.0, 0.6, 0.8])
    a = AgasObserverState(R, OBS.vectors.copy())
    g = GasObserverState(R, OBS.vectors.copy(), 0.0)
    w = np.array([0.2, 0.1, -0.3])
    for _ in range(200):
        a = agas_flow_step(a, w, OBS, GAINS, 1e-3)
        g = gas_flow_step(g, w, OBS, GAINS, PARAMS, 1e-3)
    assert g.theta == 0.0
    np.testing.assert_allclose(g.R_hat, a.R_hat, atol=1e-12)
    np.testing.assert_allclose(g.r_hat, a.r_hat, atol=1e-12)


def test_theta_moves_without_jumps_once_innovation_is_nonzero():
    # theta flows whenever u . R_u^T sigma != 0, so the two observers separate even without theta jumps
    r_hat = OBS.vectors @ angle_axis(0.2, [0.0, 0.6, 0.8])
    g = GasObserverState(np.eye(3), r_hat, 0.0)
    assert not in_jump_set(g, OBS, PARAMS)
    g = gas_flow_step(g, np.zeros(3), OBS, GAINS, PARAMS, 1e-3)
    assert abs(g.theta) > 1e-6


# --- jumps ---------------------------------------------------------------------------


def test_measurement_jump_contracts_residual_and_keeps_attitude(rng):
    R_hat = random_rotation(rng)
    r_hat = rng.standard_normal((3, 3))
    b = rng.standard_normal(3)
    state = AgasObserverState(R_hat, r_hat)
    out = measurement_jump(state, 1, b, GAINS)
    assert out.R_hat is state.R_hat
    np.testing.assert_array_equal(out.r_hat[[0, 2]], r_hat[[0, 2]])
    np.testing.assert_allclose(out.r_hat[1] - R_hat @ b, 0.55 * (r_hat[1] - R_hat @ b), atol=1e-15)


def test_measurement_jump_fixed_point():
    b = np.array(SIM_VECTORS[2]) @ R_HAT0
    state = AgasObserverState(R_HAT0, OBS.vectors.copy())
    r_hat = state.r_hat.copy()
    r_hat[2] = R_HAT0 @ b
    out = measurement_jump(AgasObserverState(R_HAT0, r_hat), 2, b, GAINS)
    np.testing.assert_array_equal(out.r_hat, r_hat)


def test_measurement_jump_unit_residual():
    # residual [1, 0, 0] with R_hat = I and b = 0
    state = AgasObserverState(np.eye(3), np.array([[1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0]]))
    out = measurement_jump(state, 0, np.zeros(3), GAINS)
    np.testing.assert_allclose(out.r_hat[0], [0.55, 0.0, 0.0], atol=1e-16)


def test_measurement_jump_rejects_bad_index():
    with pytest.raises(IndexError):
        measurement_jump(AgasObserverState(np.eye(3), OBS.vectors.copy()), 3, np.zeros(3), GAINS)


def test_measurement_jump_keeps_theta():
    state = GasObserverState(np.eye(3), OBS.vectors.copy(), 0.3)
    assert measurement_jump(state, 0, np.zeros(3), GAINS).theta == 0.3


# --- switching cost and theta jumps ----------------------------------------------------


def test_phi_examples(rng):
    assert phi(0.0, OBS.vectors, OBS, PARAMS) == pytest.approx(0.0, abs=1e-15)
    r_hat = rng.standard_normal((3, 3))
    expected = 0.5 * sum(rho * np.sum((r - rh) ** 2) for r, rh, rho in zip(OBS.vectors, r_hat, OBS.weights))
    assert phi(0.0, r_hat, OBS, PARAMS) == pytest.approx(expected, abs=1e-12)


@given(st.floats(-4.0, 4.0), st.integers(0, 10_000))
def test_phi_matches_duplicate_implementation(theta, seed):
    r_hat = np.random.default_rng(seed).standard_normal((3, 3))
    assert phi(theta, r_hat, OBS, PARAMS) == pytest.approx(phi_oracle(theta, r_hat), abs=1e-12)


def test_mu_phi_zero_at_minimizer(rng):
    r_hat = rng.standard_normal((3, 3))
    best = select_theta(r_hat, OBS, PARAMS)
    assert mu_phi(best, r_hat, OBS, PARAMS) == 0.0


def test_mu_phi_nonpositive_at_converged_state():
    m = mu_phi(0.0, OBS.vectors, OBS, PARAMS)
    assert m <= 0.0
    assert m == pytest.approx(-min(phi_oracle(t, OBS.vectors) for t in PARAMS.theta_set), abs=1e-12)


@pytest.mark.parametrize("sign", [1.0, -1.0])
@pytest.mark.parametrize("k", range(3))
def test_mu_phi_exceeds_delta_at_undesired_equilibria(k, sign):
    state = antipodal_state(sign * AN.eigenvectors[:, k])
    assert mu_phi(0.0, state.r_hat, OBS, PARAMS) > PARAMS.delta


@given(st.integers(0, 10_000))
def test_theta_jump_is_exact_argmin_and_drops_cost(seed):
    rng = np.random.default_rng(seed)
    state = GasObserverState(random_rotation(rng), 2.0 * rng.standard_normal((3, 3)), float(rng.uniform(-3, 3)))
    m = mu_phi(state.theta, state.r_hat, OBS, PARAMS)
    if m < PARAMS.delta:
        with pytest.raises(ContractViolation):
            gas_theta_jump(state, OBS, PARAMS)
        return
    out = gas_theta_jump(state, OBS, PARAMS)
    assert out.theta in PARAMS.theta_set
    assert out.R_hat is state.R_hat and out.r_hat is state.r_hat
    assert mu_phi(out.theta, out.r_hat, OBS, PARAMS) == 0.0
    drop = phi(state.theta, state.r_hat, OBS, PARAMS) - phi(out.theta, out.r_hat, OBS, PARAMS)
    assert drop == pytest.approx(m, abs=1e-12)
    assert drop >= PARAMS.delta - 1e-12


def test_theta_selection_stable_under_storage_order():
    import dataclasses
    import itertools

    state = antipodal_state(AN.eigenvectors[:, 1])
    picks = set()
    for perm in itertools.permutations(PARAMS.theta_set):
        p = dataclasses.replace(PARAMS, theta_set=perm)
        picks.add(select_theta(state.r_hat, OBS, p))
    assert len(picks) == 1


def test_tie_break_prefers_small_magnitude_then_positive():
    import dataclasses

    # r_hat = 0 makes phi depend on theta only through gamma theta^2 / 2
    p = dataclasses.replace(PARAMS, theta_set=(-math.pi / 2, math.pi, math.pi / 2))
    assert select_theta(np.zeros((3, 3)), OBS, p) == math.pi / 2


# --- complementary filter ----------------------------------------------------------------


def test_cf_consistent_hold_has_zero_correction(rng):
    R = random_rotation(rng)
    held = OBS.vectors @ R  # rows R^T r_i
    sigma = sum(k * np.cross(R @ b, r) for k, b, r in zip(OBS.weights, held, OBS.vectors))
    np.testing.assert_allclose(sigma, 0.0, atol=1e-15)
    # without rotation the estimate therefore stays put
    out = cf_zoh_step(R, np.zeros(3), held, OBS, 12.0, OBS.weights, 1e-3)
    np.testing.assert_allclose(out, R, atol=1e-15)


def test_cf_without_proportional_gain_is_open_loop(rng):
    R = random_rotation(rng)
    w = np.array([0.5, -0.4, 0.2])
    out = cf_zoh_step(R, w, rng.standard_normal((3, 3)), OBS, 0.0, OBS.weights, 1e-3)
    np.testing.assert_allclose(out, integrate_rotation_step(R, w, 1e-3), atol=1e-14)


def test_cf_empty_hold_contributes_nothing(rng):
    R = random_rotation(rng)
    out = cf_zoh_step(R, np.zeros(3), np.zeros((3, 3)), OBS, 12.0, OBS.weights, 1e-3)
    np.testing.assert_allclose(out, R, atol=1e-15)


# --- Lyapunov monitors -------------------------------------------------------------------


def test_monitor_constants():
    m = LyapunovMonitor(0.45, 0.11)
    mu = -math.log(0.55) / 0.11
    assert m.mu == pytest.approx(mu, rel=1e-15)
    assert m.lambda_jump == pytest.approx(math.exp(mu * 0.11) * 0.55**2, rel=1e-14)
    assert m.lambda_jump == pytest.approx(0.55, rel=1e-14)
    assert m.alpha == pytest.approx(1 / 0.55, rel=1e-14)
    assert m.rate == pytest.approx(min(-math.log(0.55), mu), rel=1e-14)
    assert 0 < m.lambda_jump < 1 and m.rate > 0


@given(st.floats(0.01, 0.99), st.floats(0.01, 1.0), st.floats(0.01, 0.99))
def test_monitor_invariants(k_r, t_max, frac):
    sup = -2 / t_max * math.log(1 - k_r)
    m = LyapunovMonitor(k_r, t_max, frac * sup)
    assert 0 < m.lambda_jump < 1
    assert m.rate > 0


def test_monitor_rejects_mu_outside_range():
    with pytest.raises(ValueError):
        LyapunovMonitor(0.45, 0.11, mu=-2 / 0.11 * math.log(0.55))


def test_vr_i_examples():
    m = LyapunovMonitor(0.45, 0.11)
    assert lyapunov_vr_i(np.zeros(3), 0.05, m) == 0.0
    assert lyapunov_vr_i(np.array([1.0, 2.0, 2.0]), 0.0, m) == 9.0
    assert lyapunov_vr_i(np.array([1.0, 0, 0]), 0.1, m) == pytest.approx(math.exp(m.mu * 0.1))


def test_VR_examples():
    A = np.diag([1.0, 2.0, 3.0])
    assert lyapunov_VR(np.eye(3), 0.0, A, 0.1) == 0.0
    assert lyapunov_VR(angle_axis(math.pi, [0.0, 0.0, 1.0]), 0.0, A, 0.1) == pytest.approx(6.0, abs=1e-14)
    with pytest.raises(ValueError):
        lyapunov_VR(np.eye(3), 0.5, A, 0.1)


@given(rotations, st.floats(-3.0, 3.0))
def test_VR_nonnegative_and_matches_trace_form(R_tilde, theta):
    A = AN.A
    V = lyapunov_VR(R_tilde, theta, A, PARAMS.gamma, PARAMS.u)
    T = R_tilde @ angle_axis(theta, PARAMS.u)
    assert V == pytest.approx(np.trace((np.eye(3) - T) @ A) + 0.5 * PARAMS.gamma * theta**2, abs=1e-12)
    assert V >= -1e-12
