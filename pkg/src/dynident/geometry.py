"""Rigid-transform helpers shared by the kinematics and dynamics code.

Conventions: rotations are 3x3 matrices mapping child-frame vectors into the
parent frame; homogeneous transforms are 4x4 with the same orientation
convention. Batched variants carry a leading batch axis.
"""

import numpy as np


def rpy_matrix(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Fixed-axis roll/pitch/yaw rotation, R = Rz(yaw) @ Ry(pitch) @ Rx(roll)."""
    cr, sr = np.cos(roll), np.sin(roll)
    cp, sp = np.cos(pitch), np.sin(pitch)
    cy, sy = np.cos(yaw), np.sin(yaw)
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cr, -sr], [0.0, sr, cr]])
    ry = np.array([[cp, 0.0, sp], [0.0, 1.0, 0.0], [-sp, 0.0, cp]])
    rz = np.array([[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]])
    return rz @ ry @ rx


def axis_rotation(axis: np.ndarray, angle) -> np.ndarray:
    """Rotation about a unit axis by `angle` (Rodrigues).

    `angle` may be a scalar or a 1-D array; the batched form returns
    shape (B, 3, 3).
    """
    axis = np.asarray(axis, dtype=float)
    angle = np.asarray(angle, dtype=float)
    k = skew(axis)
    kk = k @ k
    if angle.ndim == 0:
        return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * kk
    s = np.sin(angle)[:, None, None]
    c = (1.0 - np.cos(angle))[:, None, None]
    return np.eye(3)[None, :, :] + s * k[None, :, :] + c * kk[None, :, :]


def skew(v: np.ndarray) -> np.ndarray:
    """Cross-product matrix [v]x such that [v]x @ w == v x w."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def make_transform(rotation: np.ndarray, translation: np.ndarray) -> np.ndarray:
    t = np.eye(4)
    t[:3, :3] = rotation
    t[:3, 3] = translation
    return t


def transform_inverse(t: np.ndarray) -> np.ndarray:
    r = t[:3, :3]
    out = np.eye(4)
    out[:3, :3] = r.T
    out[:3, 3] = -r.T @ t[:3, 3]
    return out


def transform_points(t: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Apply a 4x4 transform to points of shape (..., 3)."""
    return points @ t[:3, :3].T + t[:3, 3]
