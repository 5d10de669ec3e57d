"""Hybrid attitude observers driven by continuous gyro data and intermittent vectors.

Two hybrid observers share the same structure: the attitude estimate flows
continuously, while auxiliary estimates ``r_hat_i`` of ``R_hat b_i`` flow
between samples and jump toward ``R_hat b_i`` when vector ``i`` is measured.

* AGAS: innovation ``sum_i rho_i r_hat_i x r_i``.
* GAS: adds a switching angle ``theta`` that rotates the references about a
  designed axis ``u`` and jumps to the minimizer of a cost over a finite set
  whenever the current value is worse by more than ``delta``.

A complementary filter fed by zero-order-held measurements is included as a
baseline, together with the Lyapunov functions used to audit runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .gain_design import ParameterSetA
from .sensing import VectorObservationSet, cross_operator
from .so3 import reorthonormalize, skew

_I3 = np.eye(3)
_I3.setflags(write=False)


class ContractViolation(RuntimeError):
    """A hybrid step was requested outside its flow or jump set."""


@dataclass(frozen=True)
class AgasObserverState:
    R_hat: np.ndarray
    r_hat: np.ndarray  # (N, 3)


@dataclass(frozen=True)
class GasObserverState:
    R_hat: np.ndarray
    r_hat: np.ndarray
    theta: float = 0.0


@dataclass(frozen=True)
class ObserverGains:
    k_o: float = 15.0
    k_r: float = 0.45

    def __post_init__(self):
        if not self.k_o > 0:
            raise ValueError(f"k_o must be positive, got {self.k_o}")
        if not 0.0 < self.k_r < 1.0:
            raise ValueError(f"k_r must lie in (0, 1), got {self.k_r}")


def _axis_rotation(theta: float, U: np.ndarray, UU: np.ndarray) -> np.ndarray:
    # angle_axis without the unit-norm check; U = skew(u), UU = U @ U
    return _I3 + math.sin(theta) * U + (1.0 - math.cos(theta)) * UU


class _AxisRotation:
    """Cached ``R_u(theta)`` for a fixed unit axis ``u``."""

    def __init__(self, u):
        self.u = np.asarray(u, dtype=float)
        self.U = skew(self.u)
        self.UU = self.U @ self.U
        # flattened transposes for tr(U C) and tr(UU C) as dot products
        self.Ut_flat = self.U.T.ravel()
        self.UUt_flat = self.UU.T.ravel()

    def __call__(self, theta: float) -> np.ndarray:
        return _axis_rotation(theta, self.U, self.UU)


_axis_cache: dict[tuple, _AxisRotation] = {}


def axis_rotation(params: ParameterSetA) -> _AxisRotation:
    key = tuple(params.u.tolist())
    rot = _axis_cache.get(key)
    if rot is None:
        rot = _axis_cache[key] = _AxisRotation(params.u)
    return rot


def _rk4(deriv, y, dt):
    """Classical RK4 over a tuple of arrays/scalars."""
    k1 = deriv(*y)
    k2 = deriv(*(a + 0.5 * dt * b for a, b in zip(y, k1)))
    k3 = deriv(*(a + 0.5 * dt * b for a, b in zip(y, k2)))
    k4 = deriv(*(a + dt * b for a, b in zip(y, k3)))
    return tuple(
        a + (dt / 6.0) * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
        for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4)
    )


# --- AGAS observer -----------------------------------------------------------


def _sigma_agas(r_hat: np.ndarray, M: np.ndarray) -> np.ndarray:
    return M @ r_hat.ravel()


def innovation_agas(state, obs: VectorObservationSet) -> np.ndarray:
    """``sum_i rho_i r_hat_i x r_i``."""
    r_hat = state.r_hat if hasattr(state, "r_hat") else np.asarray(state, dtype=float)
    return _sigma_agas(r_hat, obs.cross_operator)


def agas_flow_step(
    state: AgasObserverState, omega, obs: VectorObservationSet, gains: ObserverGains, dt: float
) -> AgasObserverState:
    """RK4 over ``(R_hat, r_hat)`` with the innovation re-evaluated at every stage."""
    w = np.asarray(omega, dtype=float)
    M = obs.cross_operator
    k_o = gains.k_o

    def deriv(R_hat, r_hat):
        sigma = M @ r_hat.ravel()
        return R_hat @ skew(w + k_o * (R_hat.T @ sigma)), k_o * (r_hat @ skew(sigma).T)

    R_new, r_new = _rk4(deriv, (state.R_hat, state.r_hat), dt)
    return AgasObserverState(reorthonormalize(R_new), r_new)


def measurement_jump(state, i: int, b_i, gains: ObserverGains):
    """``r_hat_i += k_r (R_hat b_i - r_hat_i)``; every other component is carried over unchanged."""
    if not 0 <= i < state.r_hat.shape[0]:
        raise IndexError(f"measurement index {i} out of range")
    r_hat = state.r_hat.copy()
    r_hat[i] = r_hat[i] + gains.k_r * (state.R_hat @ np.asarray(b_i, dtype=float) - r_hat[i])
    return replace(state, r_hat=r_hat)


agas_measurement_jump = measurement_jump
gas_measurement_jump = measurement_jump


# --- GAS observer ------------------------------------------------------------


def innovation_gas(state: GasObserverState, obs: VectorObservationSet, params: ParameterSetA):
    """``sum_i rho_i r_hat_i x R_u(theta) r_i``."""
    Ru = axis_rotation(params)(state.theta)
    return Ru @ (obs.cross_operator @ (state.r_hat @ Ru).ravel())


def _phi_values(thetas, r_hat, obs: VectorObservationSet, params: ParameterSetA) -> list[float]:
    # With C = sum rho_i r_i r_hat_i^T and R_u = I + s U + (1 - c) U^2, the cross
    # term sum rho_i r_hat_i^T R_u r_i is tr(R_u C), affine in (s, 1 - c).
    rot = axis_rotation(params)
    rho = obs.weights
    C = (obs.vectors.T * rho) @ r_hat
    base = 0.5 * float(rho @ (np.einsum("ij,ij->i", obs.vectors, obs.vectors)
                               + np.einsum("ij,ij->i", r_hat, r_hat)))
    c = C.ravel()
    t0 = float(c[0] + c[4] + c[8])
    t1 = float(rot.Ut_flat @ c)
    t2 = float(rot.UUt_flat @ c)
    half_gamma = 0.5 * params.gamma
    return [
        base - (t0 + math.sin(th) * t1 + (1.0 - math.cos(th)) * t2) + half_gamma * th * th
        for th in thetas
    ]


def phi(theta: float, r_hat, obs: VectorObservationSet, params: ParameterSetA) -> float:
    """Switching cost ``1/2 sum rho_i |r_i - R_u(theta)^T r_hat_i|^2 + gamma/2 theta^2``."""
    return _phi_values([theta], np.asarray(r_hat, dtype=float), obs, params)[0]


def _canonical_order(theta_set) -> list[float]:
    # smallest magnitude first, positive before negative
    return sorted(theta_set, key=lambda t: (abs(t), t < 0))


def mu_phi(theta: float, r_hat, obs: VectorObservationSet, params: ParameterSetA) -> float:
    """Excess of ``phi(theta)`` over its minimum on the switching set."""
    values = _phi_values([theta, *params.theta_set], np.asarray(r_hat, dtype=float), obs, params)
    return values[0] - min(values[1:])


def in_jump_set(state: GasObserverState, obs, params) -> bool:
    """Jumps fire only on strict excess; at equality the observer keeps flowing."""
    return mu_phi(state.theta, state.r_hat, obs, params) > params.delta


def gas_flow_step(
    state: GasObserverState,
    omega,
    obs: VectorObservationSet,
    gains: ObserverGains,
    params: ParameterSetA,
    dt: float,
    check: bool = True,
) -> GasObserverState:
    if check and in_jump_set(state, obs, params):
        raise ContractViolation(
            f"flow requested outside the flow set (mu_phi > delta = {params.delta:.6g}); jump first"
        )
    w = np.asarray(omega, dtype=float)
    M = obs.cross_operator
    rot = axis_rotation(params)
    u = params.u
    k_o, k_th, gamma = gains.k_o, params.k_theta, params.gamma

    def deriv(R_hat, r_hat, theta):
        Ru = rot(theta)
        sigma = Ru @ (M @ (r_hat @ Ru).ravel())
        # R_u u = u, so u . R_u^T sigma = u . sigma
        dtheta = -k_th * (gamma * theta + 2.0 * float(u @ sigma))
        return R_hat @ skew(w + k_o * (R_hat.T @ sigma)), k_o * (r_hat @ skew(sigma).T), dtheta

    R_new, r_new, th_new = _rk4(deriv, (state.R_hat, state.r_hat, state.theta), dt)
    return GasObserverState(reorthonormalize(R_new), r_new, float(th_new))


def select_theta(r_hat, obs, params) -> float:
    """Deterministic argmin of ``phi(., r_hat)`` over the switching set."""
    order = _canonical_order(params.theta_set)
    values = _phi_values(order, np.asarray(r_hat, dtype=float), obs, params)
    best = min(values)
    return order[values.index(best)]


def gas_theta_jump(state: GasObserverState, obs, params: ParameterSetA) -> GasObserverState:
    if mu_phi(state.theta, state.r_hat, obs, params) < params.delta:
        raise ContractViolation("theta jump requested outside the jump set (mu_phi < delta)")
    return replace(state, theta=float(select_theta(state.r_hat, obs, params)))


# --- complementary filter with zero-order hold -------------------------------


def cf_sigma_map(held, M) -> np.ndarray:
    """``(3, 9)`` matrix ``G`` with ``G @ R.ravel() == M @ (held @ R.T).ravel()``."""
    n = held.shape[0]
    return np.einsum("kia,ib->kab", M.reshape(3, n, 3), held).reshape(3, 9)


def cf_zoh_step(R_hat, omega, held, obs: VectorObservationSet, k_p: float, k_i, dt: float, M=None, G=None):
    """Complementary filter step using the latest held body vectors.

    ``k_i`` are per-vector gains; ``M`` may carry a precomputed
    :func:`~hybrid_attitude.sensing.cross_operator` for ``(obs.vectors, k_i)``
    and ``G`` a precomputed :func:`cf_sigma_map` for the current holds.
    """
    if G is None:
        if M is None:
            M = cross_operator(obs.vectors, k_i)
        G = cf_sigma_map(np.asarray(held, dtype=float), M)
    w = np.asarray(omega, dtype=float)

    def deriv(R):
        return R @ skew(w + k_p * (R.T @ (G @ R.ravel())))

    R = np.asarray(R_hat, dtype=float)
    k1 = deriv(R)
    k2 = deriv(R + (0.5 * dt) * k1)
    k3 = deriv(R + (0.5 * dt) * k2)
    k4 = deriv(R + dt * k3)
    return reorthonormalize(R + (dt / 6.0) * (k1 + 2.0 * (k2 + k3) + k4))


# --- Lyapunov monitors ---------------------------------------------------------


@dataclass(frozen=True)
class LyapunovMonitor:
    """Decay constants for the vector-error envelope.

    ``mu`` defaults to half its admissible supremum ``-(2/T_max) ln(1 - k_r)``.
    """

    k_r: float
    t_bar_max: float
    mu: float | None = None

    def __post_init__(self):
        sup = self.mu_supremum
        if self.mu is None:
            object.__setattr__(self, "mu", 0.5 * sup)
        elif not 0.0 < self.mu < sup:
            raise ValueError(f"mu must lie in (0, {sup}), got {self.mu}")

    @property
    def mu_supremum(self) -> float:
        return -2.0 / self.t_bar_max * math.log(1.0 - self.k_r)

    @property
    def lambda_jump(self) -> float:
        return math.exp(self.mu * self.t_bar_max) * (1.0 - self.k_r) ** 2

    @property
    def alpha(self) -> float:
        return math.exp(self.mu * self.t_bar_max)

    @property
    def rate(self) -> float:
        return min(-math.log(self.lambda_jump), self.mu)

    def envelope(self, t: float, initial_sq: float) -> float:
        return self.alpha * math.exp(-self.rate * t) * initial_sq


def lyapunov_vr_i(r_tilde_i, tau_i: float, monitor: LyapunovMonitor) -> float:
    r = np.asarray(r_tilde_i, dtype=float)
    return math.exp(monitor.mu * tau_i) * float(r @ r)


def lyapunov_VR(R_tilde, theta: float, A, gamma: float, u=None) -> float:
    """``tr((I - R_tilde R_u(theta)) A) + gamma/2 theta^2``; ``u`` is needed when ``theta != 0``."""
    T = np.asarray(R_tilde, dtype=float)
    A = np.asarray(A, dtype=float)
    if theta != 0.0:
        if u is None:
            raise ValueError("rotation axis u is required for nonzero theta")
        U = skew(u)
        T = T @ _axis_rotation(theta, U, U @ U)
    # tr(T A) as a flat dot product of T^T and A
    return float(A.trace() - T.T.ravel() @ A.ravel()) + 0.5 * gamma * theta * theta
