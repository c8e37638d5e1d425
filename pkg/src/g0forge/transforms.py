"""Quaternion and rigid-transform helpers.

Quaternions are stored as ``(w, x, y, z)`` and are canonicalised so that
``w >= 0``. Everything here works on plain numpy arrays; :class:`Pose6D` is the
only value type.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

IDENTITY_QUAT = (1.0, 0.0, 0.0, 0.0)


def canonical_quat(q: Sequence[float]) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if not np.isfinite(n) or n < 1e-12:
        raise ValueError(f"cannot normalise quaternion {q!r}")
    # already unit to rounding: leave the bits alone so normalisation is idempotent
    if abs(n - 1.0) > 4e-16:
        q = q / n
    if q[0] < 0.0:
        q = -q
    return q


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conj(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_to_matrix(q: Sequence[float]) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def matrix_to_quat(R: np.ndarray) -> np.ndarray:
    """Shepperd's method; result is canonical (w >= 0)."""
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0:
        s = 2.0 * math.sqrt(tr + 1.0)
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
    else:
        s = 2.0 * math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    return canonical_quat(q)


def axis_angle_matrix(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation about a unit axis."""
    x, y, z = axis
    c = math.cos(angle)
    s = math.sin(angle)
    C = 1.0 - c
    return np.array([
        [c + x * x * C, x * y * C - z * s, x * z * C + y * s],
        [y * x * C + z * s, c + y * y * C, y * z * C - x * s],
        [z * x * C - y * s, z * y * C + x * s, c + z * z * C],
    ])


def axis_angle_quat(axis: Sequence[float], angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    h = 0.5 * angle
    return canonical_quat([math.cos(h), *(math.sin(h) * axis)])


def quat_log(q: np.ndarray) -> np.ndarray:
    """Rotation vector (axis * angle) of a unit quaternion, angle in [0, pi]."""
    if q[0] < 0:
        q = -q
    v = q[1:]
    vn = math.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
    if vn < 1e-15:
        return 2.0 * v  # first-order limit
    return (2.0 * math.atan2(vn, q[0]) / vn) * v


def rotation_error(q_target: np.ndarray, q_current: np.ndarray) -> np.ndarray:
    """World-frame rotation vector taking ``q_current`` onto ``q_target``."""
    return quat_log(quat_mul(q_target, quat_conj(q_current)))


def quat_angle(a: Sequence[float], b: Sequence[float]) -> float:
    """Geodesic angle between two orientations, in [0, pi]."""
    d = abs(float(np.dot(a, b)))
    return 2.0 * math.acos(min(1.0, d))


def slerp(a: np.ndarray, b: np.ndarray, u: float) -> np.ndarray:
    """Shortest-path spherical interpolation; ``u`` in [0, 1]."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d = float(np.dot(a, b))
    if d < 0.0:
        b = -b
        d = -d
    theta = math.acos(min(1.0, d))
    if theta < 1e-6:
        out = a + u * (b - a)
    else:
        s = math.sin(theta)
        out = (math.sin((1.0 - u) * theta) / s) * a + (math.sin(u * theta) / s) * b
    return canonical_quat(out)


def rpy_to_matrix(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """URDF convention: R = Rz(yaw) @ Ry(pitch) @ Rx(roll)."""
    cr, sr = math.cos(roll), math.sin(roll)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(yaw), math.sin(yaw)
    return np.array([
        [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
        [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
        [-sp, cp * sr, cp * cr],
    ])


def matrix_to_rpy(R: np.ndarray) -> tuple[float, float, float]:
    pitch = math.asin(max(-1.0, min(1.0, -R[2, 0])))
    if abs(math.cos(pitch)) < 1e-9:
        # gimbal lock: fold everything into yaw
        return 0.0, pitch, math.atan2(-R[0, 1], R[1, 1])
    return math.atan2(R[2, 1], R[2, 2]), pitch, math.atan2(R[1, 0], R[0, 0])


def homogeneous(R: np.ndarray, p: Sequence[float]) -> np.ndarray:
    T = np.eye(4)
    T[:3, :3] = R
    T[:3, 3] = p
    return T


def invert_homogeneous(T: np.ndarray) -> np.ndarray:
    R = T[:3, :3]
    return homogeneous(R.T, -R.T @ T[:3, 3])


@dataclass(frozen=True)
class Pose6D:
    """Rigid pose: translation in meters, rotation as a canonical unit quaternion."""

    translation: tuple[float, float, float] = (0.0, 0.0, 0.0)
    rotation: tuple[float, float, float, float] = IDENTITY_QUAT

    def __post_init__(self):
        t = tuple(float(v) for v in self.translation)
        if len(t) != 3 or not all(math.isfinite(v) for v in t):
            raise ValueError(f"bad translation {self.translation!r}")
        q = tuple(float(v) for v in canonical_quat(self.rotation))
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "rotation", q)

    @classmethod
    def from_matrix(cls, T: np.ndarray) -> "Pose6D":
        return cls(tuple(T[:3, 3]), tuple(matrix_to_quat(T[:3, :3])))

    @classmethod
    def from_rpy(cls, xyz: Sequence[float], rpy: Sequence[float]) -> "Pose6D":
        return cls(tuple(xyz), tuple(matrix_to_quat(rpy_to_matrix(*rpy))))

    def matrix(self) -> np.ndarray:
        return homogeneous(quat_to_matrix(self.rotation), self.translation)

    def rpy(self) -> tuple[float, float, float]:
        return matrix_to_rpy(quat_to_matrix(self.rotation))

    def compose(self, other: "Pose6D") -> "Pose6D":
        """``self * other``: ``other`` expressed in ``self``'s frame."""
        R = quat_to_matrix(self.rotation)
        p = np.asarray(self.translation) + R @ np.asarray(other.translation)
        q = quat_mul(np.asarray(self.rotation), np.asarray(other.rotation))
        return Pose6D(tuple(p), tuple(q))

    def inverse(self) -> "Pose6D":
        qi = quat_conj(np.asarray(self.rotation))
        p = -(quat_to_matrix(qi) @ np.asarray(self.translation))
        return Pose6D(tuple(p), tuple(qi))

    def apply(self, point: Sequence[float]) -> np.ndarray:
        return np.asarray(self.translation) + quat_to_matrix(self.rotation) @ np.asarray(point, dtype=float)

    def to_json(self) -> dict:
        return {"p": list(self.translation), "q": list(self.rotation)}

    @classmethod
    def from_json(cls, d: dict) -> "Pose6D":
        return cls(tuple(d["p"]), tuple(d["q"]))
