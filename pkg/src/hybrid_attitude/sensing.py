"""Inertial reference vectors, weight-matrix analysis, virtual sampling timers
and the body-frame measurement model."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

COLLINEAR_TOL = 1e-9
REPEATED_EIG_RTOL = 1e-8
# Absorbs ulp drift from repeated ``tau - dt`` so an exact multiple of dt fires on time.
TIMER_FIRE_EPS = 1e-12


class AssumptionViolation(ValueError):
    """The vector set does not satisfy the observability requirements."""


@dataclass(frozen=True)
class VectorObservationSet:
    """Known inertial vectors ``r_i`` (rows of ``vectors``) with positive weights ``rho_i``."""

    vectors: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        r = np.array(self.vectors, dtype=float)
        rho = np.array(self.weights, dtype=float)
        if r.ndim != 2 or r.shape[1] != 3:
            raise ValueError(f"vectors must have shape (N, 3), got {r.shape}")
        if rho.shape != (r.shape[0],):
            raise ValueError(f"need one weight per vector, got {rho.shape} for N={r.shape[0]}")
        if r.shape[0] < 2:
            raise AssumptionViolation("at least two inertial vectors are required")
        if not np.all(np.isfinite(r)) or not np.all(np.isfinite(rho)):
            raise ValueError("vectors and weights must be finite")
        if np.any(rho <= 0):
            raise ValueError("all weights must be strictly positive")
        if not _has_noncollinear_pair(r):
            raise AssumptionViolation("all inertial vectors are collinear")
        r.setflags(write=False)
        rho.setflags(write=False)
        object.__setattr__(self, "vectors", r)
        object.__setattr__(self, "weights", rho)

    def __len__(self):
        return self.vectors.shape[0]

    @cached_property
    def cross_operator(self) -> np.ndarray:
        """``(3, 3N)`` matrix ``M`` with ``M @ x.ravel() == sum_i rho_i x_i cross r_i``."""
        return cross_operator(self.vectors, self.weights)


def cross_operator(vectors, weights) -> np.ndarray:
    """Stacked ``-w_i skew(r_i)`` blocks; maps stacked vectors ``x`` to ``sum_i w_i x_i cross r_i``."""
    blocks = []
    for (x, y, z), w in zip(np.asarray(vectors, dtype=float), np.asarray(weights, dtype=float)):
        blocks.append(-w * np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]]))
    return np.hstack(blocks)


def _has_noncollinear_pair(r: np.ndarray) -> bool:
    n = r.shape[0]
    for i in range(n):
        for j in range(i + 1, n):
            if np.linalg.norm(np.cross(r[i], r[j])) > COLLINEAR_TOL:
                return True
    return False


@dataclass(frozen=True)
class WeightMatrixAnalysis:
    """``A = sum_i rho_i r_i r_i^T`` with ascending eigenvalues and column eigenvectors."""

    A: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def positive_definite(self) -> bool:
        return bool(self.eigenvalues[0] > 0.0)

    def _same(self, a: float, b: float) -> bool:
        return abs(b - a) <= REPEATED_EIG_RTOL * max(abs(a), abs(b), 1e-300)

    @property
    def low_pair_repeated(self) -> bool:
        """``lambda_1 == lambda_2`` within the relative tolerance."""
        return self._same(self.eigenvalues[0], self.eigenvalues[1])

    @property
    def high_pair_repeated(self) -> bool:
        return self._same(self.eigenvalues[1], self.eigenvalues[2])

    @property
    def distinct(self) -> bool:
        return not (self.low_pair_repeated or self.high_pair_repeated)

    def unit_eigenvectors(self) -> np.ndarray:
        """The six signed unit eigenvectors ``+-v_k`` as rows."""
        V = self.eigenvectors.T
        return np.concatenate([V, -V])


def weight_matrix(obs: VectorObservationSet) -> WeightMatrixAnalysis:
    r, rho = obs.vectors, obs.weights
    A = (r.T * rho) @ r
    A = 0.5 * (A + A.T)
    w, V = np.linalg.eigh(A)
    if np.linalg.matrix_rank(A) < 2:
        raise AssumptionViolation(f"weight matrix has rank < 2 (eigenvalues {w})")
    return WeightMatrixAnalysis(A=A, eigenvalues=w, eigenvectors=V)


def augment_cross_product(
    obs: VectorObservationSet, rho_new: float, pair: tuple[int, int] = (0, 1)
) -> VectorObservationSet:
    """Append ``r_i x r_j`` as an extra reference vector with weight ``rho_new``.

    The matching body measurement is ``b_i x b_j``; see :func:`cross_measurement`.
    """
    i, j = pair
    c = np.cross(obs.vectors[i], obs.vectors[j])
    if np.linalg.norm(c) <= COLLINEAR_TOL:
        raise AssumptionViolation(f"vectors {i} and {j} are collinear; cannot augment")
    return VectorObservationSet(
        np.vstack([obs.vectors, c]), np.append(obs.weights, float(rho_new))
    )


def cross_measurement(b_i, b_j) -> np.ndarray:
    return np.cross(b_i, b_j)


@dataclass(frozen=True)
class SamplingSchedule:
    """Per-vector bounds ``[T_min, T_max]`` on the time between samples (seconds)."""

    t_min: np.ndarray
    t_max: np.ndarray

    def __post_init__(self):
        lo = np.array(self.t_min, dtype=float)
        hi = np.array(self.t_max, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("t_min and t_max must be 1-D arrays of equal length")
        if np.any(lo <= 0) or np.any(hi < lo) or not np.all(np.isfinite(hi)):
            raise ValueError(f"need 0 < t_min <= t_max < inf, got {lo} / {hi}")
        object.__setattr__(self, "t_min", lo)
        object.__setattr__(self, "t_max", hi)

    def __len__(self):
        return self.t_min.shape[0]

    @property
    def longest(self) -> float:
        return float(self.t_max.max())


@dataclass
class TimerBank:
    """Countdown ``tau_i`` to the next sample of each vector."""

    tau: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @classmethod
    def initial(cls, schedule: SamplingSchedule, rng: np.random.Generator) -> "TimerBank":
        return cls(rng.uniform(0.0, schedule.t_max))


def advance_timers(bank: TimerBank, dt: float) -> tuple[TimerBank, list[int]]:
    """Flow every timer by ``-dt``; timers reaching zero are clamped and reported."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    tau = bank.tau - dt
    fired = np.nonzero(tau <= TIMER_FIRE_EPS)[0]
    tau[fired] = 0.0
    return TimerBank(tau), [int(i) for i in fired]


def reset_timer(i: int, schedule: SamplingSchedule, rng: np.random.Generator) -> float:
    lo, hi = schedule.t_min[i], schedule.t_max[i]
    if lo == hi:
        return float(lo)
    return float(rng.uniform(lo, hi))


def noise_std(sigma: float, convention: str = "std") -> float:
    """Per-axis standard deviation for a noise level ``sigma``.

    ``"std"`` reads sigma as the standard deviation, ``"cov"`` reads it as the
    covariance scale (covariance ``sigma * I``).
    """
    if sigma < 0:
        raise ValueError("noise level must be nonnegative")
    if convention == "std":
        return float(sigma)
    if convention == "cov":
        return float(np.sqrt(sigma))
    raise ValueError(f"unknown noise convention {convention!r}")


def measure(R, r_i, sigma: float, rng: np.random.Generator | None = None, convention: str = "std"):
    """Body-frame reading ``R^T r_i`` plus isotropic Gaussian noise (not renormalized)."""
    b = np.asarray(R).T @ np.asarray(r_i, dtype=float)
    std = noise_std(sigma, convention)
    if std > 0.0:
        b = b + std * rng.standard_normal(3)
    return b
