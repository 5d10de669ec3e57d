"""Rotation-group helpers on SO(3).

Rotation matrices are plain ``(3, 3)`` float arrays; vectors are ``(3,)``.
All functions return fresh arrays and never mutate their inputs.
"""

from __future__ import annotations

import math

import numpy as np

UNIT_TOL = 1e-9
_I3 = np.eye(3)
_I3.setflags(write=False)


class DegenerateMatrixError(ValueError):
    """Raised when a matrix cannot be mapped onto SO(3)."""


def skew(v) -> np.ndarray:
    """Return the cross-product matrix ``v^x`` so that ``skew(v) @ w == cross(v, w)``."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def psi(A) -> np.ndarray:
    """Half the vectorized antisymmetric part of ``A``.

    Satisfies ``trace(A.T @ skew(x)) == 2 * x @ psi(A)`` for every ``x``.
    """
    A = np.asarray(A)
    return 0.5 * np.array([A[2, 1] - A[1, 2], A[0, 2] - A[2, 0], A[1, 0] - A[0, 1]])


def angle_axis(theta: float, u) -> np.ndarray:
    """Rodrigues rotation by ``theta`` radians about the unit axis ``u``."""
    u = np.asarray(u, dtype=float)
    norm = np.linalg.norm(u)
    if abs(norm - 1.0) > UNIT_TOL:
        raise ValueError(
            f"rotation axis must be unit length (|u| = {norm:.12g}); pass u / np.linalg.norm(u)"
        )
    U = skew(u)
    return np.eye(3) + np.sin(theta) * U + (1.0 - np.cos(theta)) * (U @ U)


def geodesic_angle_deg(R) -> float:
    """Rotation angle of ``R`` in degrees, in ``[0, 180]``."""
    R = np.asarray(R)
    c = 0.5 * (float(R[0, 0] + R[1, 1] + R[2, 2]) - 1.0)
    return math.degrees(math.acos(min(1.0, max(-1.0, c))))


def orthogonality_residual(R) -> float:
    """Frobenius norm of ``R^T R - I``."""
    R = np.asarray(R)
    return float(np.linalg.norm(R.T @ R - np.eye(3)))


def project_to_so3(M) -> np.ndarray:
    """Nearest rotation to ``M`` in Frobenius norm (polar factor via SVD)."""
    M = np.asarray(M, dtype=float)
    det = np.linalg.det(M)
    if not det > 0.0:
        raise DegenerateMatrixError(f"cannot project matrix with det = {det:.3g} onto SO(3)")
    U, _, Vt = np.linalg.svd(M)
    D = np.ones(3)
    D[2] = np.sign(np.linalg.det(U @ Vt))
    return (U * D) @ Vt


def reorthonormalize(M, tol: float = 1e-6) -> np.ndarray:
    """Polar factor of a nearly orthogonal ``M``.

    One Newton-Schulz sweep ``X = M (3I - M^T M) / 2`` leaves an orthogonality
    defect quadratic in that of ``M``, which after an RK4 step is already far
    below machine precision. Falls back to :func:`project_to_so3` when ``M`` is
    not close to orthogonal.
    """
    E = M.T @ M - _I3
    if abs(E).max() > tol:
        return project_to_so3(M)
    return M - 0.5 * (M @ E)


def is_rotation(R, tol: float = 1e-9) -> bool:
    R = np.asarray(R)
    return (
        R.shape == (3, 3)
        and bool(np.all(np.isfinite(R)))
        and orthogonality_residual(R) <= tol
        and abs(np.linalg.det(R) - 1.0) <= tol
    )


def rk4_rotation(R: np.ndarray, body_rate, dt: float) -> np.ndarray:
    """One classical RK4 step of ``dR/dt = R skew(w)`` with ``w`` held constant.

    The result is not re-orthonormalized.
    """
    W = skew(body_rate)
    k1 = R @ W
    k2 = (R + 0.5 * dt * k1) @ W
    k3 = (R + 0.5 * dt * k2) @ W
    k4 = (R + dt * k3) @ W
    return R + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_rotation_factor(body_rate, dt: float) -> np.ndarray:
    """Right factor ``P`` of one RK4 step, so that ``rk4_rotation(R, w, dt) == R @ P``.

    With ``w`` held, the four stages sum to ``I + hW + (hW)^2/2 + (hW)^3/6 + (hW)^4/24``;
    ``W^3 = -|w|^2 W`` reduces this to ``I + a W + b W^2``.
    """
    x, y, z = (float(c) for c in body_rate)
    n2 = x * x + y * y + z * z
    h = dt
    a = h - h**3 * n2 / 6.0
    b = h * h / 2.0 - h**4 * n2 / 24.0
    # W^2 = w w^T - |w|^2 I
    return np.array(
        [
            [1.0 + b * (x * x - n2), -a * z + b * x * y, a * y + b * x * z],
            [a * z + b * x * y, 1.0 + b * (y * y - n2), -a * x + b * y * z],
            [-a * y + b * x * z, a * x + b * y * z, 1.0 + b * (z * z - n2)],
        ]
    )


def integrate_rotation_step(R, body_rate, dt: float) -> np.ndarray:
    """Advance ``R`` by ``dt`` seconds under a zero-order-held body rate.

    One RK4 step of ``dR/dt = R skew(w)`` (evaluated through its closed-form
    factor) followed by projection back onto SO(3). A zero rate returns an
    exact copy of ``R``.
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    R = np.asarray(R, dtype=float)
    x, y, z = body_rate
    if x == 0.0 and y == 0.0 and z == 0.0:
        return R.copy()
    return reorthonormalize(R @ rk4_rotation_factor(body_rate, dt))


def exp_rotation_step(R, body_rate, dt: float) -> np.ndarray:
    """Exact update ``R @ expm(skew(w) dt)`` for a constant rate; used as a cross-check."""
    w = np.asarray(body_rate, dtype=float)
    angle = float(np.linalg.norm(w)) * dt
    if angle == 0.0:
        return np.array(R, dtype=float)
    return np.asarray(R) @ angle_axis(angle, w / np.linalg.norm(w))
