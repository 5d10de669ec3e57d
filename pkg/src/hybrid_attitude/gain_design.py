"""Closed-form design of the switching-observer parameters from the spectrum of A."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .sensing import WeightMatrixAnalysis

DEFAULT_THETA_SET = (math.pi / 2, -math.pi / 2, math.pi)


class UnsupportedSpectrum(ValueError):
    pass


@dataclass(frozen=True)
class ParameterSetA:
    theta_set: tuple[float, ...]
    k_theta: float
    gamma: float
    u: np.ndarray
    delta: float
    delta_star: float
    alphas: np.ndarray
    case: int

    @property
    def theta_max(self) -> float:
        return max(abs(t) for t in self.theta_set)

    @property
    def gamma_bound(self) -> float:
        return 4.0 * self.delta_star / math.pi**2

    @property
    def delta_bound(self) -> float:
        return (self.gamma_bound - self.gamma) * self.theta_max**2 / 2.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["u"] = [float(x) for x in self.u]
        d["alphas"] = [float(x) for x in self.alphas]
        d["theta_set"] = [float(x) for x in self.theta_set]
        d["theta_max"] = self.theta_max
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ParameterSetA":
        return cls(
            theta_set=tuple(float(x) for x in d["theta_set"]),
            k_theta=float(d["k_theta"]),
            gamma=float(d["gamma"]),
            u=np.asarray(d["u"], dtype=float),
            delta=float(d["delta"]),
            delta_star=float(d["delta_star"]),
            alphas=np.asarray(d["alphas"], dtype=float),
            case=int(d["case"]),
        )


def select_case(analysis: WeightMatrixAnalysis) -> int:
    """Which of the three closed-form cases applies (1, 2 or 3)."""
    l1, l2, l3 = analysis.eigenvalues
    if not analysis.positive_definite:
        raise UnsupportedSpectrum(f"A must be positive definite, eigenvalues {analysis.eigenvalues}")
    if analysis.high_pair_repeated:
        raise UnsupportedSpectrum("the two largest eigenvalues of A coincide")
    if analysis.low_pair_repeated:
        return 1
    threshold = l1 * l3 / (l3 - l1)
    return 2 if threshold <= l2 else 3


def optimal_mixing(analysis: WeightMatrixAnalysis) -> tuple[int, np.ndarray, float]:
    """Return ``(case, alphas, delta_star)`` with nonnegative mixing coefficients."""
    case = select_case(analysis)
    l1, l2, l3 = analysis.eigenvalues
    if case == 1:
        a3sq = 1.0 - l2 / l3
        sq = np.array([1.0 - a3sq, 0.0, a3sq])
        delta_star = l1 * a3sq
    elif case == 2:
        sq = np.array([0.0, l2 / (l2 + l3), l3 / (l2 + l3)])
        delta_star = l1
    else:
        lam = np.array([l1, l2, l3])
        sigma_a = 2.0 * (l1 * l2 + l1 * l3 + l2 * l3)
        prod_others = np.array([l2 * l3, l1 * l3, l1 * l2])
        sq = 1.0 - 4.0 / sigma_a * prod_others
        delta_star = 4.0 / sigma_a * float(np.prod(lam))
    alphas = np.sqrt(np.clip(sq, 0.0, None))
    return case, alphas, float(delta_star)


def design_parameters(
    analysis: WeightMatrixAnalysis,
    gamma_fraction: float = 0.5,
    delta_fraction: float = 0.5,
    theta_set=DEFAULT_THETA_SET,
    k_theta: float = 15.0,
) -> ParameterSetA:
    if not 0.0 < gamma_fraction < 1.0 or not 0.0 < delta_fraction < 1.0:
        raise ValueError("gamma_fraction and delta_fraction must lie in (0, 1)")
    if k_theta <= 0:
        raise ValueError("k_theta must be positive")
    theta_set = tuple(float(t) for t in theta_set)
    if not theta_set or any(not 0.0 < abs(t) <= math.pi for t in theta_set):
        raise ValueError(f"theta_set entries need magnitudes in (0, pi], got {theta_set}")
    case, alphas, delta_star = optimal_mixing(analysis)
    u = analysis.eigenvectors @ alphas
    u = u / np.linalg.norm(u)
    theta_max = max(abs(t) for t in theta_set)
    gamma_bound = 4.0 * delta_star / math.pi**2
    gamma = gamma_fraction * gamma_bound
    delta = delta_fraction * (gamma_bound - gamma) * theta_max**2 / 2.0
    return ParameterSetA(
        theta_set=theta_set,
        k_theta=float(k_theta),
        gamma=gamma,
        u=u,
        delta=delta,
        delta_star=delta_star,
        alphas=alphas,
        case=case,
    )


def gap_function(u, v, A) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    A = np.asarray(A, dtype=float)
    M = np.trace(A) * np.eye(3) - A - 2.0 * (v @ A @ v) * (np.eye(3) - np.outer(v, v))
    return float(u @ M @ u)


def min_gap_over_eigenvectors(u, analysis: WeightMatrixAnalysis) -> float:
    return min(gap_function(u, v, analysis.A) for v in analysis.unit_eigenvectors())


def validate(params: ParameterSetA, analysis: WeightMatrixAnalysis) -> list[str]:
    """List every violated design constraint; empty when the set is admissible."""
    problems = []
    if not params.theta_set:
        problems.append("Theta: must be nonempty")
    elif any(not 0.0 < abs(t) <= math.pi for t in params.theta_set):
        problems.append("Theta: magnitudes must lie in (0, pi]")
    if not params.k_theta > 0:
        problems.append("k_theta: must be positive")
    if abs(np.linalg.norm(params.u) - 1.0) > 1e-12:
        problems.append("u: must be a unit vector")
    if abs(float(np.sum(params.alphas**2)) - 1.0) > 1e-12:
        problems.append("alpha: squared coefficients must sum to 1")
    try:
        _, _, delta_star = optimal_mixing(analysis)
    except UnsupportedSpectrum as exc:
        problems.append(f"spectrum: {exc}")
        delta_star = params.delta_star
    if abs(delta_star - params.delta_star) > 1e-12 * max(1.0, delta_star):
        problems.append(f"Delta*: {params.delta_star} does not match A (expected {delta_star})")
    gamma_bound = 4.0 * delta_star / math.pi**2
    if not 0.0 < params.gamma < gamma_bound:
        problems.append(f"gamma: need 0 < gamma < 4 Delta*/pi^2 = {gamma_bound}, got {params.gamma}")
    if params.theta_set:
        delta_bound = (gamma_bound - params.gamma) * params.theta_max**2 / 2.0
        if not 0.0 < params.delta < delta_bound:
            problems.append(f"delta: need 0 < delta < {delta_bound}, got {params.delta}")
    return problems
