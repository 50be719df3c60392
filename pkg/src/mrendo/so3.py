"""Rotation utilities: skew maps, exp/log on SO(3), polar re-orthonormalization."""

from __future__ import annotations

import numpy as np

_EPS_ANGLE = 1e-8


def skew(w: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrix such that skew(w) @ v == cross(w, v)."""
    return np.array([
        [0.0, -w[2], w[1]],
        [w[2], 0.0, -w[0]],
        [-w[1], w[0], 0.0],
    ])


def vee(W: np.ndarray) -> np.ndarray:
    """Inverse of skew for a skew-symmetric matrix."""
    return np.array([W[2, 1], W[0, 2], W[1, 0]])


def exp_so3(w: np.ndarray) -> np.ndarray:
    """Rodrigues formula, Taylor-expanded near zero angle."""
    theta = float(np.linalg.norm(w))
    W = skew(w)
    if theta < _EPS_ANGLE:
        # sin(t)/t ~ 1 - t^2/6, (1-cos t)/t^2 ~ 1/2 - t^2/24
        a = 1.0 - theta * theta / 6.0
        b = 0.5 - theta * theta / 24.0
    else:
        a = np.sin(theta) / theta
        b = (1.0 - np.cos(theta)) / (theta * theta)
    return np.eye(3) + a * W + b * (W @ W)


def log_so3(R: np.ndarray) -> np.ndarray:
    """Rotation-vector logarithm of R, stable at both branch points.

    Returns the axis-angle vector with norm in [0, pi].  Near angle pi the
    axis is recovered from the diagonal of (R + I)/2, which stays well
    conditioned where the antisymmetric part vanishes.
    """
    c = (np.trace(R) - 1.0) / 2.0
    c = min(1.0, max(-1.0, c))
    theta = np.arccos(c)
    if theta < _EPS_ANGLE:
        # R ~ I + skew(w): first-order recovery
        return vee(R - R.T) / 2.0
    if np.pi - theta < 1e-4:
        # Branch near pi: R ~ 2*outer(n, n) - I plus O(pi - theta)
        B = (R + np.eye(3)) / 2.0
        n = np.sqrt(np.maximum(np.diag(B), 0.0))
        # Fix signs from the largest off-diagonal products
        k = int(np.argmax(n))
        n = n.copy()
        for i in range(3):
            if i != k and B[k, i] < 0.0:
                n[i] = -n[i]
        n /= np.linalg.norm(n)
        # Orient so the result agrees with the antisymmetric part when nonzero
        w_asym = vee(R - R.T)
        if np.dot(w_asym, n) < 0.0:
            n = -n
        return theta * n
    return theta / (2.0 * np.sin(theta)) * vee(R - R.T)


def polar_orthonormalize(R: np.ndarray) -> np.ndarray:
    """Nearest rotation matrix (polar factor) of a near-orthonormal matrix.

    Two Newton-Schulz sweeps converge to the polar factor to machine
    precision when ||R^T R - I|| << 1, which holds for per-step integrator
    drift.  Falls back to an SVD projection when the input is badly
    conditioned.
    """
    X = R
    for _ in range(3):
        E = X.T @ X - np.eye(3)
        if np.abs(E).max() < 1e-15:
            break
        if np.abs(E).max() > 0.5:
            U, _, Vt = np.linalg.svd(R)
            X = U @ Vt
            if np.linalg.det(X) < 0.0:
                U[:, -1] = -U[:, -1]
                X = U @ Vt
            return X
        X = X @ (1.5 * np.eye(3) - 0.5 * (X.T @ X))
    return X


def rotation_about(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rotation of `angle` radians about a (not necessarily unit) axis."""
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n == 0.0:
        raise ValueError("rotation axis must be nonzero")
    return exp_so3(axis / n * angle)


def is_rotation(R: np.ndarray, tol: float = 1e-9) -> bool:
    return (
        np.linalg.norm(R.T @ R - np.eye(3), ord="fro") < tol
        and abs(np.linalg.det(R) - 1.0) < tol
    )
