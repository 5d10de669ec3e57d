"""Hybrid-time simulation loop, run records, metrics and CSV output."""

from __future__ import annotations

import csv
import functools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import observers as obs_mod
from .config import ScenarioConfig
from .gain_design import ParameterSetA, design_parameters
from .observers import (
    AgasObserverState,
    GasObserverState,
    LyapunovMonitor,
    ObserverGains,
)
from .sensing import (
    SamplingSchedule,
    TimerBank,
    VectorObservationSet,
    advance_timers,
    cross_operator,
    measure,
    reset_timer,
    weight_matrix,
)
from .so3 import geodesic_angle_deg, integrate_rotation_step


def truth_omega(t: float, omega_o: float) -> np.ndarray:
    """Body rate profile of the simulation study (rad/s)."""
    return omega_o * np.array([math.sin(0.1 * t), math.sin(0.1 * t + math.pi / 3), math.cos(0.5 * t)])


@functools.lru_cache(maxsize=8)
def _truth_cached(R0_bytes: bytes, omega_o: float, dt: float, n_steps: int):
    R = np.frombuffer(R0_bytes).reshape(3, 3).copy()
    omegas = np.empty((n_steps, 3))
    Rs = np.empty((n_steps + 1, 3, 3))
    Rs[0] = R
    for k in range(n_steps):
        w = truth_omega(k * dt, omega_o)
        omegas[k] = w
        R = integrate_rotation_step(R, w, dt)
        Rs[k + 1] = R
    omegas.setflags(write=False)
    Rs.setflags(write=False)
    return omegas, Rs


def truth_trajectory(R0, omega_o: float, dt: float, n_steps: int):
    """Gyro samples ``omega(k dt)`` and attitudes ``R(k dt)`` of the truth model.

    The truth does not depend on the seed or observer, so trajectories are memoized.
    """
    R0 = np.ascontiguousarray(R0, dtype=float)
    return _truth_cached(R0.tobytes(), float(omega_o), float(dt), int(n_steps))


# --- observer adapters ---------------------------------------------------------


class HybridObserver:
    """Uniform stepping interface over the three estimators."""

    name = ""
    has_vector_estimates = True

    def flow(self, omega, dt): ...

    def measurement(self, i, b_i): ...

    def theta_jump_due(self) -> bool:
        return False

    def theta_jump(self): ...

    @property
    def R_hat(self):
        return self.state.R_hat

    @property
    def r_hat(self):
        return self.state.r_hat

    @property
    def theta(self) -> float:
        return 0.0

    def mu_phi(self) -> float:
        return math.nan


class AgasRunner(HybridObserver):
    name = "agas"

    def __init__(self, state: AgasObserverState, obs: VectorObservationSet, gains: ObserverGains):
        self.state, self.obs, self.gains = state, obs, gains

    def flow(self, omega, dt):
        self.state = obs_mod.agas_flow_step(self.state, omega, self.obs, self.gains, dt)

    def measurement(self, i, b_i):
        self.state = obs_mod.measurement_jump(self.state, i, b_i, self.gains)


class GasRunner(HybridObserver):
    name = "gas"

    def __init__(self, state: GasObserverState, obs, gains, params: ParameterSetA):
        self.state, self.obs, self.gains, self.params = state, obs, gains, params
        self._mu_for, self._mu = None, math.nan

    def flow(self, omega, dt):
        # the loop guarantees the flow-set precondition by jumping first
        if self.theta_jump_due():
            raise obs_mod.ContractViolation("flow requested while mu_phi > delta")
        self.state = obs_mod.gas_flow_step(
            self.state, omega, self.obs, self.gains, self.params, dt, check=False
        )

    def measurement(self, i, b_i):
        self.state = obs_mod.measurement_jump(self.state, i, b_i, self.gains)

    def mu_phi(self) -> float:
        # states are immutable, so cache on identity
        if self._mu_for is not self.state:
            self._mu = obs_mod.mu_phi(self.state.theta, self.state.r_hat, self.obs, self.params)
            self._mu_for = self.state
        return self._mu

    def theta_jump_due(self) -> bool:
        return self.mu_phi() > self.params.delta

    def theta_jump(self):
        self.state = obs_mod.gas_theta_jump(self.state, self.obs, self.params)

    @property
    def theta(self) -> float:
        return self.state.theta


@dataclass
class _CfState:
    R_hat: np.ndarray


class CfZohRunner(HybridObserver):
    name = "cf"
    has_vector_estimates = False

    def __init__(self, R_hat0, obs: VectorObservationSet, k_p: float, k_i):
        self.state = _CfState(np.array(R_hat0, dtype=float))
        self.obs, self.k_p = obs, k_p
        self.k_i = np.asarray(k_i, dtype=float)
        self.M = cross_operator(obs.vectors, self.k_i)
        # zero hold = vector not yet received, contributes nothing
        self.held = np.zeros_like(obs.vectors)
        self.G = obs_mod.cf_sigma_map(self.held, self.M)

    def flow(self, omega, dt):
        self.state = _CfState(
            obs_mod.cf_zoh_step(self.state.R_hat, omega, self.held, self.obs, self.k_p, self.k_i, dt, G=self.G)
        )

    def measurement(self, i, b_i):
        self.held = self.held.copy()
        self.held[i] = b_i
        self.G = obs_mod.cf_sigma_map(self.held, self.M)

    @property
    def r_hat(self):
        return None


def build_observer(cfg: ScenarioConfig, obs: VectorObservationSet, r_hat0, params=None) -> HybridObserver:
    gains = ObserverGains(cfg.k_o, cfg.k_r)
    R_hat0 = np.array(cfg.R_hat0, dtype=float)
    if cfg.observer == "agas":
        return AgasRunner(AgasObserverState(R_hat0, r_hat0), obs, gains)
    if cfg.observer == "gas":
        return GasRunner(GasObserverState(R_hat0, r_hat0, float(cfg.theta0)), obs, gains, params)
    k_i = obs.weights if cfg.cf_gains is None else cfg.cf_gains
    return CfZohRunner(R_hat0, obs, cfg.k_p, k_i)


def design_for(cfg: ScenarioConfig, obs: VectorObservationSet) -> ParameterSetA:
    return design_parameters(
        weight_matrix(obs),
        gamma_fraction=cfg.gamma_fraction,
        delta_fraction=cfg.delta_fraction,
        theta_set=cfg.theta_set,
        k_theta=cfg.k_o if cfg.k_theta is None else cfg.k_theta,
    )


# --- records -----------------------------------------------------------------


@dataclass
class JumpAudit:
    """Snapshot around one jump, computed from truth (simulation only)."""

    kind: str  # "measurement" or "theta"
    t: float
    j: int  # jump counter after this jump
    index: int  # vector index, -1 for theta jumps
    R_hat_before: np.ndarray
    R_hat_after: np.ndarray
    r_tilde_sq_before: float = math.nan
    r_tilde_sq_after: float = math.nan
    vr_before: float = math.nan
    vr_after: float = math.nan
    mu_phi_before: float = math.nan
    VR_before: float = math.nan
    VR_after: float = math.nan
    weighted_r_tilde_sq: float = math.nan
    theta_before: float = math.nan
    theta_after: float = math.nan


@dataclass
class RunRecord:
    columns: list[str]
    rows: list[tuple] = field(default_factory=list)
    audits: list[JumpAudit] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        k = self.columns.index(name)
        return np.array([row[k] for row in self.rows], dtype=float)


def record_columns(n: int) -> list[str]:
    return (
        ["t", "j", "attitude_error_deg", "r_tilde_norm", "theta", "mu_phi", "V_R"]
        + [f"V_r_{i + 1}" for i in range(n)]
        + ["events"]
    )


def averaged_error(record: RunRecord, t_start: float = 2.0) -> float:
    """Mean attitude error (deg) over rows with ``t >= t_start``."""
    t = record.column("t")
    err = record.column("attitude_error_deg")
    mask = t >= t_start - 1e-12
    if not np.any(mask):
        raise ValueError(f"record has no samples at or after t = {t_start}")
    return float(err[mask].mean())


# --- simulation loop -------------------------------------------------------------


class _Truth:
    """Truth-side quantities needed for the per-row monitors."""

    def __init__(self, obs, A, gamma, u, monitor):
        self.r = obs.vectors
        self.rho = obs.weights
        self.A = A
        self.gamma = gamma
        self.u = u
        self.monitor = monitor

    def r_tilde(self, R, observer):
        R_tilde = R @ observer.R_hat.T
        return self.r - observer.r_hat @ R_tilde.T

    def V_R(self, R, observer):
        return obs_mod.lyapunov_VR(R @ observer.R_hat.T, observer.theta, self.A, self.gamma, self.u)


def run_scenario(cfg: ScenarioConfig, audit: bool = True, probe=None) -> RunRecord:
    """Simulate truth, sampling and one observer over ``cfg.duration`` seconds.

    Per integration step: flow truth and observer over ``dt`` with the gyro
    held at the step start, then apply the measurement jumps of every timer
    that expired (ascending index), then at most one theta jump. The theta
    check also runs once at ``t = 0`` before the first flow.

    ``probe(t, R, observer)``, if given, is called after every step.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    obs = VectorObservationSet(cfg.vectors, cfg.weights)
    analysis = weight_matrix(obs)
    schedule = SamplingSchedule(cfg.t_min, cfg.t_max)
    monitor = LyapunovMonitor(cfg.k_r, schedule.longest, cfg.monitor_mu)
    params = design_for(cfg, obs) if cfg.observer == "gas" else None
    gamma = params.gamma if params is not None else 0.0
    u = params.u if params is not None else None
    truth = _Truth(obs, analysis.A, gamma, u, monitor)
    n = len(obs)

    R = np.array(cfg.R0, dtype=float)
    if isinstance(cfg.r_hat0, str):
        if cfg.r_hat0 == "reference":
            r_hat0 = obs.vectors.copy()
        else:
            r_hat0 = (np.asarray(cfg.R_hat0) @ (R.T @ obs.vectors.T)).T
    else:
        r_hat0 = np.array(cfg.r_hat0, dtype=float)
    observer = build_observer(cfg, obs, r_hat0, params)
    timers = TimerBank.initial(schedule, rng)
    noise = (cfg.sigma, cfg.noise_convention)

    record = RunRecord(record_columns(n))
    record.meta.update(
        observer=cfg.observer,
        seed=cfg.seed,
        monitor=monitor,
        params=params,
        A=analysis.A,
        k_r=cfg.k_r,
    )
    if observer.has_vector_estimates:
        record.meta["r_tilde0_sq"] = np.einsum("ij,ij->i", *(2 * [truth.r_tilde(R, observer)]))

    j = 0
    events: list[str] = []

    def emit_row(t):
        R_tilde = R @ observer.R_hat.T
        row = [t, j, geodesic_angle_deg(R_tilde)]
        if observer.has_vector_estimates:
            rt = obs.vectors - observer.r_hat @ R_tilde.T
            sq = np.einsum("ij,ij->i", rt, rt)
            vr = np.exp(monitor.mu * timers.tau) * sq
            row += [math.sqrt(float(sq.sum())), observer.theta, observer.mu_phi(), truth.V_R(R, observer)]
            row += [float(x) for x in vr]
        else:
            row += [math.nan, 0.0, math.nan, truth.V_R(R, observer)] + [math.nan] * n
        row.append("|".join(events))
        record.rows.append(tuple(row))

    def theta_check(t):
        nonlocal j
        if not observer.theta_jump_due():
            return
        if audit:
            rt = truth.r_tilde(R, observer)
            a = JumpAudit(
                "theta", t, j + 1, -1, observer.R_hat,
                None,
                mu_phi_before=observer.mu_phi(),
                VR_before=truth.V_R(R, observer),
                weighted_r_tilde_sq=float(obs.weights @ np.einsum("ij,ij->i", rt, rt)),
                theta_before=observer.theta,
            )
        observer.theta_jump()
        j += 1
        events.append("theta")
        if audit:
            a.R_hat_after = observer.R_hat
            a.VR_after = truth.V_R(R, observer)
            a.theta_after = observer.theta
            record.audits.append(a)

    def measurement_jumps(t, fired):
        nonlocal j, timers
        for i in fired:
            b = measure(R, obs.vectors[i], noise[0], rng, noise[1])
            if audit and observer.has_vector_estimates:
                rt = truth.r_tilde(R, observer)[i]
                before_sq = float(rt @ rt)
                a = JumpAudit(
                    "measurement", t, j + 1, i, observer.R_hat, None,
                    r_tilde_sq_before=before_sq,
                    vr_before=obs_mod.lyapunov_vr_i(rt, timers.tau[i], monitor),
                )
            elif audit:
                a = JumpAudit("measurement", t, j + 1, i, observer.R_hat, None)
            observer.measurement(i, b)
            j += 1
            events.append(f"m{i + 1}")
            timers.tau[i] = reset_timer(i, schedule, rng)
            if audit:
                a.R_hat_after = observer.R_hat
                if observer.has_vector_estimates:
                    rt = truth.r_tilde(R, observer)[i]
                    a.r_tilde_sq_after = float(rt @ rt)
                    a.vr_after = obs_mod.lyapunov_vr_i(rt, timers.tau[i], monitor)
                record.audits.append(a)

    emit_row(0.0)
    initial = [i for i in range(n) if timers.tau[i] <= 0.0]
    measurement_jumps(0.0, initial)
    theta_check(0.0)
    if events:
        emit_row(0.0)

    dt = cfg.dt
    omegas, Rs = truth_trajectory(cfg.R0, cfg.omega_amplitude, dt, cfg.n_steps)
    for k in range(cfg.n_steps):
        events = []
        w = omegas[k]
        t = (k + 1) * dt
        R = Rs[k + 1]
        observer.flow(w, dt)
        timers, fired = advance_timers(timers, dt)
        measurement_jumps(t, fired)
        theta_check(t)
        if (k + 1) % cfg.record_every == 0 or events:
            emit_row(t)
        if probe is not None:
            probe(t, R, observer)
    record.meta["final_R"] = R
    record.meta["final_R_hat"] = observer.R_hat
    return record


# --- CSV ------------------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def emit_csv(record: RunRecord, path) -> Path:
    """Write the record as CSV; floats use shortest round-trip repr."""
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(record.columns)
            for row in record.rows:
                writer.writerow([_fmt(x) for x in row])
    except OSError as exc:
        raise OSError(f"cannot write CSV to {path}: {exc}") from exc
    return path


def read_csv(path) -> RunRecord:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        columns = next(reader)
        rows = []
        for raw in reader:
            row = []
            for name, value in zip(columns, raw):
                if name == "events":
                    row.append(value)
                elif name == "j":
                    row.append(int(value))
                else:
                    row.append(float(value))
            rows.append(tuple(row))
    return RunRecord(columns, rows)
