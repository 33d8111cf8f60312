"""Rigid-body helpers: quaternions (w, x, y, z), poses and SE(3) screw motion."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

_EPS = 1e-12


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


def quat_normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n < _EPS:
        raise ValueError("zero-norm quaternion")
    q = q / n
    # canonical sign keeps serialization stable
    if q[0] < 0:
        q = -q
    return q


def quat_mul(a, b) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conj(q) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]], dtype=float)


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def matrix_to_quat(R) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0:
        s = np.sqrt(tr + 1.0) * 2
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif R[1, 1] > R[2, 2]:
        s = np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
    else:
        s = np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    return quat_normalize(q)


def axis_angle_matrix(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    K = skew(axis)
    return np.eye(3) + np.sin(angle) * K + (1 - np.cos(angle)) * (K @ K)


def skew(v) -> np.ndarray:
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def rotation_log(R) -> np.ndarray:
    """Rotation vector (axis * angle) of a rotation matrix."""
    R = np.asarray(R, dtype=float)
    cos_a = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    angle = np.arccos(cos_a)
    if angle < 1e-9:
        return 0.5 * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if np.pi - angle < 1e-6:
        # near pi the antisymmetric part vanishes; recover the axis from R + I
        M = (R + np.eye(3)) / 2.0
        i = int(np.argmax(np.diag(M)))
        axis = M[:, i] / np.sqrt(max(M[i, i], _EPS))
        return axis / np.linalg.norm(axis) * angle
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return w * (angle / (2.0 * np.sin(angle)))


def yaw_quat(yaw: float) -> np.ndarray:
    return np.array([np.cos(yaw / 2.0), 0.0, 0.0, np.sin(yaw / 2.0)])


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform; ``p`` in meters, ``q`` a unit quaternion (w, x, y, z)."""

    p: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        q = np.asarray(self.q, dtype=float)
        if p.shape != (3,) or q.shape != (4,):
            raise ValueError(f"bad pose shapes {p.shape}, {q.shape}")
        if not np.all(np.isfinite(p)) or not np.all(np.isfinite(q)):
            raise ValueError("non-finite pose")
        if abs(np.linalg.norm(q) - 1.0) > 1e-9:
            raise ValueError(f"quaternion not unit norm: |q|={np.linalg.norm(q)!r}")
        object.__setattr__(self, "p", _frozen(p))
        object.__setattr__(self, "q", _frozen(q))

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.zeros(3), np.array([1.0, 0.0, 0.0, 0.0]))

    @classmethod
    def from_list(cls, values: Sequence[float]) -> "Pose":
        values = list(values)
        if len(values) != 7:
            raise ValueError(f"pose needs 7 numbers, got {len(values)}")
        return cls(np.array(values[:3]), np.array(values[3:]))

    @classmethod
    def from_matrix(cls, T) -> "Pose":
        T = np.asarray(T, dtype=float)
        return cls(T[:3, 3].copy(), matrix_to_quat(T[:3, :3]))

    @classmethod
    def from_rotation(cls, p, R) -> "Pose":
        return cls(np.asarray(p, dtype=float), matrix_to_quat(R))

    def to_list(self) -> list[float]:
        return [float(v) for v in self.p] + [float(v) for v in self.q]

    @property
    def R(self) -> np.ndarray:
        return quat_to_matrix(self.q)

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.R
        T[:3, 3] = self.p
        return T

    def __mul__(self, other: "Pose") -> "Pose":
        q = quat_mul(self.q, other.q)
        q = q / np.linalg.norm(q)
        return Pose(self.p + self.R @ other.p, q)

    def inverse(self) -> "Pose":
        qc = quat_conj(self.q)
        return Pose(-(quat_to_matrix(qc) @ self.p), qc)

    def transform_point(self, x) -> np.ndarray:
        return self.p + self.R @ np.asarray(x, dtype=float)

    def rotate(self, v) -> np.ndarray:
        return self.R @ np.asarray(v, dtype=float)

    def equals(self, other: "Pose") -> bool:
        return np.array_equal(self.p, other.p) and np.array_equal(self.q, other.q)

    def allclose(self, other: "Pose", atol: float = 1e-9) -> bool:
        same_q = np.allclose(self.q, other.q, atol=atol) or np.allclose(self.q, -other.q, atol=atol)
        return bool(np.allclose(self.p, other.p, atol=atol) and same_q)

    def __repr__(self) -> str:
        return f"Pose(p={self.p.tolist()}, q={self.q.tolist()})"


def se3_log(T) -> np.ndarray:
    """Twist (v, w) with exp(twist) == T."""
    R = T[:3, :3]
    t = T[:3, 3]
    w = rotation_log(R)
    angle = np.linalg.norm(w)
    if angle < 1e-9:
        return np.concatenate([t, w])
    W = skew(w)
    A = np.sin(angle) / angle
    B = (1 - np.cos(angle)) / angle**2
    V_inv = np.eye(3) - 0.5 * W + (1.0 / angle**2) * (1 - A / (2 * B)) * (W @ W)
    return np.concatenate([V_inv @ t, w])


def se3_exp(xi) -> np.ndarray:
    v = np.asarray(xi[:3], dtype=float)
    w = np.asarray(xi[3:], dtype=float)
    angle = np.linalg.norm(w)
    T = np.eye(4)
    if angle < 1e-9:
        T[:3, :3] = np.eye(3) + skew(w)
        T[:3, 3] = v
        return T
    W = skew(w)
    R = np.eye(3) + np.sin(angle) / angle * W + (1 - np.cos(angle)) / angle**2 * (W @ W)
    V = np.eye(3) + (1 - np.cos(angle)) / angle**2 * W + (angle - np.sin(angle)) / angle**3 * (W @ W)
    T[:3, :3] = R
    T[:3, 3] = V @ v
    return T


def screw_interpolate(start: Pose, goal: Pose, s: float) -> Pose:
    """Constant-twist interpolation: start * exp(s * log(start^-1 goal))."""
    if s <= 0.0:
        return start
    if s >= 1.0:
        return goal
    T0 = start.matrix()
    rel = np.linalg.inv(T0) @ goal.matrix()
    return Pose.from_matrix(T0 @ se3_exp(s * se3_log(rel)))


def unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n < 1e-9:
        raise ValueError("degenerate (near-zero) axis")
    return v / n
