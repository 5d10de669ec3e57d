"""Fiducial-tag ingestion: RGB-D corner detections to body-frame unit vectors.

A square tag provides four corner landmarks. Each corner is deprojected with
the pinhole model, centered on the tag centroid and normalized; a fifth vector
normal to the tag plane comes from the first two. Logged recordings can be
replayed through any of the observers, scored by the residual RMSE since no
ground truth is available.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .gain_design import design_parameters
from .harness import (
    AgasRunner,
    CfZohRunner,
    GasRunner,
    RunRecord,
    truth_omega,
)
from .observers import AgasObserverState, GasObserverState, ObserverGains
from .sensing import VectorObservationSet, weight_matrix
from .so3 import angle_axis, integrate_rotation_step

DEGENERATE_TOL = 1e-9
_H = math.sqrt(2.0) / 2.0


class InvalidDepthError(ValueError):
    pass


class DegenerateTagError(ValueError):
    pass


class TagLogError(ValueError):
    """Malformed tag log; ``lineno`` points at the offending line (1-based)."""

    def __init__(self, message: str, lineno: int | None = None, source: str = "<log>"):
        self.lineno = lineno
        where = f"{source}:{lineno}" if lineno is not None else source
        super().__init__(f"{where}: {message}")


class TagLogOrderError(TagLogError):
    pass


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not all(math.isfinite(v) for v in (self.fx, self.fy, self.cx, self.cy)):
            raise ValueError("intrinsics must be finite")


# roughly a 640x480 RGB-D stream
DEFAULT_INTRINSICS = CameraIntrinsics(615.0, 615.0, 320.0, 240.0)


@dataclass(frozen=True)
class TagObservation:
    timestamp: float
    corners: np.ndarray  # (4, 2) pixels
    depths: np.ndarray  # (4,) meters

    def __post_init__(self):
        c = np.array(self.corners, dtype=float)
        d = np.array(self.depths, dtype=float)
        if c.shape != (4, 2) or d.shape != (4,):
            raise ValueError(f"need 4 corners and 4 depths, got {c.shape} and {d.shape}")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(d))):
            raise ValueError("corners and depths must be finite")
        if np.any(d <= 0):
            raise InvalidDepthError(f"depths must be positive, got {d}")
        object.__setattr__(self, "corners", c)
        object.__setattr__(self, "depths", d)


def deproject(pixel, depth: float, K: CameraIntrinsics) -> np.ndarray:
    """Body-frame point ``d [(u - cx)/fx, (v - cy)/fy, 1]``."""
    if not depth > 0:
        raise InvalidDepthError(f"depth must be positive, got {depth}")
    u, v = pixel
    return depth * np.array([(u - K.cx) / K.fx, (v - K.cy) / K.fy, 1.0])


def project(point, K: CameraIntrinsics) -> tuple[tuple[float, float], float]:
    """Pinhole forward model; returns ``((u, v), depth)``."""
    x, y, z = (float(c) for c in point)
    if not z > 0:
        raise InvalidDepthError(f"point is behind the camera (z = {z})")
    return (K.fx * x / z + K.cx, K.fy * y / z + K.cy), z


def inertial_reference_vectors() -> np.ndarray:
    """Corner directions from the tag center, then the tag normal ``r1 x r2``."""
    return np.array(
        [[-_H, -_H, 0.0], [-_H, _H, 0.0], [_H, _H, 0.0], [_H, -_H, 0.0], [0.0, 0.0, -1.0]]
    )


def default_tag_weights() -> np.ndarray:
    return np.array([(6 - i) / 15 for i in range(1, 6)])


def _unit(v, what: str) -> np.ndarray:
    n = float(np.linalg.norm(v))
    if n < DEGENERATE_TOL:
        raise DegenerateTagError(f"{what} has norm {n:.3g}")
    return v / n


def tag_to_body_vectors(obs: TagObservation, K: CameraIntrinsics, corner_map=(0, 1, 2, 3)) -> np.ndarray:
    """Five body-frame unit vectors matching :func:`inertial_reference_vectors`.

    ``corner_map[k]`` is the reference index of detector corner ``k``.
    """
    if sorted(corner_map) != [0, 1, 2, 3]:
        raise ValueError(f"corner_map must be a permutation of 0..3, got {corner_map}")
    p = np.array([deproject(obs.corners[k], obs.depths[k], K) for k in range(4)])
    centered = p - p.mean(axis=0)
    b = np.empty((5, 3))
    for k in range(4):
        b[corner_map[k]] = _unit(centered[k], f"corner {k} offset from the tag center")
    b[4] = _unit(np.cross(b[0], b[1]), "b1 x b2")
    return b


def rmse(R_hat, r, b) -> float:
    """``sqrt(mean_i |R_hat^T r_i - b_i|^2)``."""
    r = np.atleast_2d(np.asarray(r, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if r.shape != b.shape or r.shape[0] < 1:
        raise ValueError(f"need matching non-empty (N, 3) arrays, got {r.shape} and {b.shape}")
    e = r @ np.asarray(R_hat) - b  # rows (R_hat^T r_i - b_i)
    return math.sqrt(float(np.mean(np.einsum("ij,ij->i", e, e))))


# --- log format ------------------------------------------------------------------


@dataclass
class TagLog:
    intrinsics: CameraIntrinsics
    gyro_t: np.ndarray = field(default_factory=lambda: np.zeros(0))
    gyro: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    tags: list[TagObservation] = field(default_factory=list)

    def __eq__(self, other):
        if not isinstance(other, TagLog):
            return NotImplemented
        return (
            self.intrinsics == other.intrinsics
            and np.array_equal(self.gyro_t, other.gyro_t)
            and np.array_equal(self.gyro, other.gyro)
            and len(self.tags) == len(other.tags)
            and all(
                a.timestamp == b.timestamp
                and np.array_equal(a.corners, b.corners)
                and np.array_equal(a.depths, b.depths)
                for a, b in zip(self.tags, other.tags)
            )
        )


def parse_tag_log_text(text: str, source: str = "<log>") -> TagLog:
    intrinsics = None
    gyro_t, gyro, tags = [], [], []
    last = {"G": -math.inf, "T": -math.inf}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if parts and parts[0] == "intrinsics":
                try:
                    intrinsics = CameraIntrinsics(*(float(x) for x in parts[1:]))
                except (TypeError, ValueError) as exc:
                    raise TagLogError(f"bad intrinsics header: {exc}", lineno, source) from exc
            continue
        kind, *fields_ = line.split()
        expected = {"G": 4, "T": 13}.get(kind)
        if expected is None:
            raise TagLogError(f"unknown record type {kind!r}", lineno, source)
        if len(fields_) != expected:
            raise TagLogError(f"{kind} record needs {expected} numbers, got {len(fields_)}", lineno, source)
        try:
            values = [float(x) for x in fields_]
        except ValueError as exc:
            raise TagLogError(f"not a number: {exc}", lineno, source) from exc
        if not all(math.isfinite(v) for v in values):
            raise TagLogError("non-finite value", lineno, source)
        t = values[0]
        if t <= last[kind]:
            raise TagLogOrderError(
                f"{kind} timestamp {t!r} does not increase (previous {last[kind]!r})", lineno, source
            )
        last[kind] = t
        if kind == "G":
            gyro_t.append(t)
            gyro.append(values[1:])
        else:
            q = np.array(values[1:]).reshape(4, 3)
            try:
                tags.append(TagObservation(t, q[:, :2], q[:, 2]))
            except ValueError as exc:
                raise TagLogError(str(exc), lineno, source) from exc
    if intrinsics is None:
        raise TagLogError("missing '# intrinsics fx fy cx cy' header", None, source)
    return TagLog(intrinsics, np.array(gyro_t, dtype=float), np.array(gyro, dtype=float).reshape(-1, 3), tags)


def parse_tag_log(path) -> TagLog:
    path = Path(path)
    return parse_tag_log_text(path.read_text(encoding="utf-8"), source=str(path))


def format_tag_log(log: TagLog) -> str:
    """Text form with shortest round-trip floats; records interleaved by time."""
    K = log.intrinsics
    lines = [f"# intrinsics {K.fx!r} {K.fy!r} {K.cx!r} {K.cy!r}"]
    records = [(float(t), 0, "G " + " ".join(repr(float(x)) for x in (t, *w))) for t, w in zip(log.gyro_t, log.gyro)]
    for tag in log.tags:
        nums = [tag.timestamp]
        for (u, v), d in zip(tag.corners, tag.depths):
            nums += [u, v, d]
        records.append((float(tag.timestamp), 1, "T " + " ".join(repr(float(x)) for x in nums)))
    records.sort(key=lambda rec: rec[:2])
    lines += [rec[2] for rec in records]
    return "\n".join(lines) + "\n"


def write_tag_log(log: TagLog, path) -> Path:
    path = Path(path)
    path.write_text(format_tag_log(log), encoding="utf-8")
    return path


# --- synthetic scenes --------------------------------------------------------------


def render_tag(R, K: CameraIntrinsics, t: float = 0.0, half_diagonal: float = 0.1, offset=(0.0, 0.0, 0.6)) -> TagObservation:
    """Detections of a tag centered at the inertial origin, seen by a camera with attitude ``R``.

    Corner ``i`` sits at ``half_diagonal * r_i``; the camera is placed so that
    the tag center appears at ``offset`` in the body frame. ``offset[2]`` must
    exceed ``half_diagonal`` to keep every corner in front of the camera.
    """
    R = np.asarray(R, dtype=float)
    offset = np.asarray(offset, dtype=float)
    r = inertial_reference_vectors()[:4]
    body = (half_diagonal * r) @ R + offset  # R^T (p_I - p_cam) with p_cam = -R offset
    pix, depth = zip(*(project(p, K) for p in body))
    return TagObservation(t, np.array(pix), np.array(depth))


def synthetic_tag_log(
    duration: float = 10.0,
    gyro_rate: float = 200.0,
    tag_rate: float = 30.0,
    omega_amplitude: float = 0.5,
    R0=None,
    K: CameraIntrinsics = DEFAULT_INTRINSICS,
    dt: float = 1e-3,
    pixel_noise: float = 0.0,
    depth_noise: float = 0.0,
    seed: int = 0,
) -> tuple[TagLog, np.ndarray]:
    """Log of a body rotating under the simulation rate profile; also returns truth at tag times.

    Truth is integrated with the same zero-order-held gyro the replay sees.
    """
    rng = np.random.default_rng(seed)
    R = angle_axis(0.6, np.array([2.0, -2.0, 1.0]) / 3.0) if R0 is None else np.array(R0, dtype=float)
    gyro_t = np.arange(int(math.floor(duration * gyro_rate)) + 1) / gyro_rate
    gyro = np.array([truth_omega(t, omega_amplitude) for t in gyro_t])
    tag_t = (np.arange(int(math.floor(duration * tag_rate))) + 0.5) / tag_rate
    tags, truth = [], []
    t, g = 0.0, 0
    for tt in tag_t:
        while t < tt:
            while g + 1 < len(gyro_t) and gyro_t[g + 1] <= t:
                g += 1
            t_next = min(tt, gyro_t[g + 1]) if g + 1 < len(gyro_t) else tt
            n = max(1, math.ceil((t_next - t) / dt - 1e-9))
            h = (t_next - t) / n
            for _ in range(n):
                R = integrate_rotation_step(R, gyro[g], h)
            t = t_next
        obs = render_tag(R, K, float(tt))
        if pixel_noise or depth_noise:
            obs = TagObservation(
                obs.timestamp,
                obs.corners + pixel_noise * rng.standard_normal((4, 2)),
                obs.depths + depth_noise * rng.standard_normal(4),
            )
        tags.append(obs)
        truth.append(R)
    return TagLog(K, gyro_t, gyro, tags), np.array(truth).reshape(-1, 3, 3)


# --- replay --------------------------------------------------------------------------


@dataclass
class ReplayConfig:
    observer: str = "agas"
    weights: np.ndarray = field(default_factory=default_tag_weights)
    k_o: float = 10.5
    k_r: float = 0.5
    k_p: float = 9.5
    cf_gains: np.ndarray | None = None
    R_hat0: np.ndarray = field(default_factory=lambda: np.eye(3))
    dt: float = 1e-3  # longest integration substep
    corner_map: tuple = (0, 1, 2, 3)


REPLAY_COLUMNS = ["t", "j", "rmse", "theta", "mu_phi", "events"]


def _replay_observer(cfg: ReplayConfig, obs: VectorObservationSet):
    gains = ObserverGains(cfg.k_o, cfg.k_r)
    R_hat0 = np.array(cfg.R_hat0, dtype=float)
    if cfg.observer == "agas":
        return AgasRunner(AgasObserverState(R_hat0, obs.vectors.copy()), obs, gains)
    if cfg.observer == "gas":
        params = design_parameters(weight_matrix(obs), k_theta=cfg.k_o)
        return GasRunner(GasObserverState(R_hat0, obs.vectors.copy(), 0.0), obs, gains, params)
    if cfg.observer == "cf":
        k_i = obs.weights if cfg.cf_gains is None else cfg.cf_gains
        return CfZohRunner(R_hat0, obs, cfg.k_p, k_i)
    raise ValueError(f"unknown observer {cfg.observer!r}")


def replay(log: TagLog, cfg: ReplayConfig | None = None) -> RunRecord:
    """Run an observer over a recorded log.

    The gyro is zero-order held from its latest sample (zero before the first);
    flow proceeds in substeps of at most ``cfg.dt`` between events, and each tag
    detection applies five measurement jumps in reference order. Rows are
    recorded at the start and after every tag; no truth-based monitors.
    """
    cfg = cfg or ReplayConfig()
    r = inertial_reference_vectors()
    obs = VectorObservationSet(r, cfg.weights)
    observer = _replay_observer(cfg, obs)
    record = RunRecord(list(REPLAY_COLUMNS), meta={"observer": cfg.observer})

    times = [float(t) for t in log.gyro_t] + [tag.timestamp for tag in log.tags]
    if not times:
        return record
    t = min(times)
    j = 0
    events: list[str] = []
    record.rows.append((t, j, math.nan, observer.theta, observer.mu_phi(), ""))

    def theta_check():
        nonlocal j
        if observer.theta_jump_due():
            observer.theta_jump()
            j += 1
            events.append("theta")

    def flow_to(t_end, w):
        nonlocal t
        if t_end <= t:
            return
        n = max(1, math.ceil((t_end - t) / cfg.dt - 1e-9))
        h = (t_end - t) / n
        for _ in range(n):
            observer.flow(w, h)
            theta_check()
        t = t_end

    theta_check()
    g = -1
    w = np.zeros(3)
    gyro_t = log.gyro_t
    for tag in log.tags:
        while g + 1 < len(gyro_t) and gyro_t[g + 1] <= tag.timestamp:
            flow_to(float(gyro_t[g + 1]), w)
            g += 1
            w = log.gyro[g]
        flow_to(tag.timestamp, w)
        b = tag_to_body_vectors(tag, log.intrinsics, cfg.corner_map)
        for i in range(5):
            observer.measurement(i, b[i])
            j += 1
            events.append(f"m{i + 1}")
        theta_check()
        record.rows.append((t, j, rmse(observer.R_hat, r, b), observer.theta, observer.mu_phi(), "|".join(events)))
        events = []
    record.meta["final_R_hat"] = observer.R_hat
    return record
