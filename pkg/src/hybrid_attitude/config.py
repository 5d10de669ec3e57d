"""Scenario configuration, presets and the flat ``key = value`` config format."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .gain_design import DEFAULT_THETA_SET, ParameterSetA
from .so3 import angle_axis, is_rotation

SQRT2 = math.sqrt(2.0)

# r_1 is taken exactly as printed for the simulation study; its norm is sqrt(2.5).
SIM_VECTORS = ((SQRT2 / 2, SQRT2, 0.0), (SQRT2 / 2, -SQRT2 / 2, 0.0), (0.0, 0.0, -1.0))
SIM_WEIGHTS = (0.2, 0.3, 0.5)
SIM_T_MIN = (0.09, 0.04, 0.01)
SIM_T_MAX = (0.11, 0.06, 0.03)
SIM_INITIAL_AXIS = (0.8, 0.6, 0.0)

OBSERVERS = ("agas", "gas", "cf")


class ConfigError(ValueError):
    pass


@dataclass
class ScenarioConfig:
    duration: float = 20.0
    dt: float = 1e-3
    omega_amplitude: float = 2.0
    sigma: float = 0.0
    noise_convention: str = "std"
    vectors: np.ndarray = field(default_factory=lambda: np.array(SIM_VECTORS))
    weights: np.ndarray = field(default_factory=lambda: np.array(SIM_WEIGHTS))
    t_min: np.ndarray = field(default_factory=lambda: np.array(SIM_T_MIN))
    t_max: np.ndarray = field(default_factory=lambda: np.array(SIM_T_MAX))
    observer: str = "agas"
    k_o: float = 15.0
    k_r: float = 0.45
    k_p: float = 12.0
    cf_gains: np.ndarray | None = None  # defaults to the weights
    gamma_fraction: float = 0.5
    delta_fraction: float = 0.5
    theta_set: tuple = DEFAULT_THETA_SET
    k_theta: float | None = None  # defaults to k_o
    monitor_mu: float | None = None
    R0: np.ndarray = field(default_factory=lambda: np.eye(3))
    R_hat0: np.ndarray = field(
        default_factory=lambda: angle_axis(math.pi / 2, np.array(SIM_INITIAL_AXIS))
    )
    r_hat0: str | np.ndarray = "reference"  # "reference" | "measured" | (N, 3) array
    theta0: float = 0.0
    seed: int = 0
    record_every: int = 1
    out: str | None = None

    def validate(self) -> "ScenarioConfig":
        n = np.asarray(self.vectors).shape[0]
        if not self.duration > 0:
            raise ConfigError("duration must be positive")
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        for name in ("weights", "t_min", "t_max"):
            if np.asarray(getattr(self, name)).shape != (n,):
                raise ConfigError(f"{name} needs one entry per vector ({n})")
        if self.dt > float(np.min(self.t_min)) + 1e-15:
            raise ConfigError(f"dt = {self.dt} exceeds the shortest sampling bound {np.min(self.t_min)}")
        if self.observer not in OBSERVERS:
            raise ConfigError(f"observer must be one of {OBSERVERS}, got {self.observer!r}")
        if self.noise_convention not in ("std", "cov"):
            raise ConfigError("noise_convention must be 'std' or 'cov'")
        if self.sigma < 0:
            raise ConfigError("sigma must be nonnegative")
        if not self.k_o > 0 or not 0 < self.k_r < 1 or not self.k_p > 0:
            raise ConfigError("need k_o > 0, 0 < k_r < 1, k_p > 0")
        for name in ("R0", "R_hat0"):
            if not is_rotation(getattr(self, name)):
                raise ConfigError(f"{name} is not a rotation matrix")
        if isinstance(self.r_hat0, str):
            if self.r_hat0 not in ("reference", "measured"):
                raise ConfigError("r_hat0 must be 'reference', 'measured' or an (N, 3) array")
        elif np.asarray(self.r_hat0).shape != (n, 3):
            raise ConfigError("r_hat0 array must have shape (N, 3)")
        if self.record_every < 1:
            raise ConfigError("record_every must be >= 1")
        return self

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))


def preset(name: str, **overrides) -> ScenarioConfig:
    """Simulation presets ``test1`` .. ``test6``."""
    table = {
        "test1": dict(sigma=0.0, omega_amplitude=2.0),
        "test2": dict(sigma=0.0, omega_amplitude=5.0),
        "test3": dict(sigma=0.08, omega_amplitude=2.0),
        "test4": dict(sigma=0.08, omega_amplitude=5.0),
        "test5": dict(sigma=0.0, omega_amplitude=2.0),
        "test6": dict(sigma=0.08, omega_amplitude=2.0),
    }
    if name not in table:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(table)}")
    cfg = ScenarioConfig(**table[name])
    if name in ("test5", "test6"):
        # second vector slowed to ~10 Hz
        cfg.t_min = np.array([0.09, 0.09, 0.01])
        cfg.t_max = np.array([0.11, 0.11, 0.03])
    return replace(cfg, **overrides) if overrides else cfg


PRESETS = tuple(f"test{i}" for i in range(1, 7))


# --- flat key = value format --------------------------------------------------

_FLOAT_KEYS = {
    "duration", "dt", "omega_amplitude", "sigma", "k_o", "k_r", "k_p",
    "gamma_fraction", "delta_fraction", "k_theta", "monitor_mu", "theta0",
}
_INT_KEYS = {"seed", "record_every"}
_STR_KEYS = {"observer", "noise_convention", "out"}
_VEC_KEYS = {"weights", "t_min", "t_max", "cf_gains", "theta_set"}
_MAT_KEYS = {"vectors", "R0", "R_hat0", "r_hat0"}


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.replace(",", " ").split()]


def _rows(text: str) -> np.ndarray:
    return np.array([_floats(row) for row in text.split(";") if row.strip()])


def parse_config_text(text: str, source: str = "<config>") -> ScenarioConfig:
    """Parse the flat format.

    One ``key = value`` per line, ``#`` starts a comment. Vectors are comma or
    space separated; matrices separate rows with ``;``. ``preset = testN``
    seeds every unspecified field. ``R_hat0_angle`` plus ``R_hat0_axis``
    (and likewise for ``R0``) build a rotation from angle and axis.
    """
    raw: dict[str, tuple[int, str]] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        raw[key] = (lineno, value)

    cfg = preset(raw.pop("preset")[1]) if "preset" in raw else ScenarioConfig()
    updates = {}
    for name in ("R0", "R_hat0"):
        if f"{name}_angle" in raw or f"{name}_axis" in raw:
            try:
                angle = float(raw.pop(f"{name}_angle")[1])
                axis = np.array(_floats(raw.pop(f"{name}_axis")[1]))
            except KeyError as exc:
                raise ConfigError(f"{source}: {name}_angle and {name}_axis go together") from exc
            updates[name] = angle_axis(angle, axis / np.linalg.norm(axis))
    known = {f.name for f in fields(ScenarioConfig)}
    for key, (lineno, value) in raw.items():
        if key not in known:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            if key in _FLOAT_KEYS:
                updates[key] = None if value.lower() == "none" else float(value)
            elif key in _INT_KEYS:
                updates[key] = int(value)
            elif key in _STR_KEYS:
                updates[key] = value
            elif key in _VEC_KEYS:
                updates[key] = None if value.lower() == "none" else np.array(_floats(value))
            elif key == "r_hat0" and value in ("reference", "measured"):
                updates[key] = value
            elif key in _MAT_KEYS:
                m = _rows(value)
                if key in ("R0", "R_hat0") and m.size == 9:
                    m = m.reshape(3, 3)
                updates[key] = m
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from exc
    if "theta_set" in updates and updates["theta_set"] is not None:
        updates["theta_set"] = tuple(float(x) for x in updates["theta_set"])
    return replace(cfg, **updates).validate()


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    return parse_config_text(path.read_text(), source=str(path))


def _fmt_vec(v) -> str:
    return ", ".join(repr(float(x)) for x in np.ravel(v))


def _fmt_mat(m) -> str:
    return "; ".join(_fmt_vec(row) for row in np.atleast_2d(m))


def format_config(cfg: ScenarioConfig) -> str:
    """Serialize ``cfg`` so that :func:`parse_config_text` reproduces it exactly."""
    lines = []
    for f in fields(ScenarioConfig):
        value = getattr(cfg, f.name)
        if value is None:
            if f.name == "out":
                continue
            lines.append(f"{f.name} = none")
        elif f.name in _MAT_KEYS and not isinstance(value, str):
            lines.append(f"{f.name} = {_fmt_mat(value)}")
        elif f.name in _VEC_KEYS:
            lines.append(f"{f.name} = {_fmt_vec(value)}")
        elif f.name in _FLOAT_KEYS:
            lines.append(f"{f.name} = {float(value)!r}")
        else:
            lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


# --- parameter-set serialization ------------------------------------------------------

_PARAM_KEYS = ("case", "theta_set", "k_theta", "gamma", "u", "delta", "delta_star", "alphas")


def format_params(params: ParameterSetA) -> str:
    """Designed switching parameters in the flat format (derived ``delta_star`` included)."""
    d = params.to_dict()
    lines = []
    for key in _PARAM_KEYS:
        value = d[key]
        lines.append(f"{key} = {_fmt_vec(value) if isinstance(value, list) else repr(value)}")
    return "\n".join(lines) + "\n"


def parse_params_text(text: str, source: str = "<params>") -> ParameterSetA:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = (s.strip() for s in line.partition("="))
        if not sep or key not in _PARAM_KEYS:
            raise ConfigError(f"{source}:{lineno}: expected one of {_PARAM_KEYS} as 'key = value'")
        try:
            values[key] = _floats(value) if key in ("theta_set", "u", "alphas") else float(value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from exc
    missing = set(_PARAM_KEYS) - set(values)
    if missing:
        raise ConfigError(f"{source}: missing keys {sorted(missing)}")
    return ParameterSetA.from_dict(values)


def antipodal_config(observer: str, eigen_index: int = 0, base: str = "test1", **overrides) -> ScenarioConfig:
    """Start exactly on an undesired equilibrium: ``R_tilde(0) = R_a(pi, v_k)`` with zero vector error.

    ``v_k`` is the eigenvector of the weight matrix for its ``eigen_index``-th
    smallest eigenvalue; the vector estimates start at ``R_hat(0) b_i(0)``.
    """
    from .sensing import VectorObservationSet, weight_matrix

    cfg = preset(base, observer=observer, sigma=0.0)
    v = weight_matrix(VectorObservationSet(cfg.vectors, cfg.weights)).eigenvectors[:, eigen_index]
    R_tilde = angle_axis(math.pi, v)
    cfg = replace(cfg, R_hat0=R_tilde.T @ cfg.R0, r_hat0="measured", theta0=0.0)
    return replace(cfg, **overrides) if overrides else cfg
