"""Minimal SO(3) / compound-manifold algebra used across the estimator.

Rotations are stored as unit quaternions (w, x, y, z) and renormalized after
every composition so long propagation chains do not drift off the manifold.
Compound states are plain sequences mixing ``Rotation3`` blocks and flat
``numpy`` vector blocks; ``boxplus``/``boxminus`` operate blockwise, with
rotation blocks composed on the right: R (+) r = R * Exp(r).

All functions are pure; ``Rotation3`` is an immutable value type.
"""

from __future__ import annotations

import math
from typing import Sequence, Union

import numpy as np

# Below this tangent norm the closed forms of Exp and A(u)^-1 are replaced
# by 2nd-order series (avoids 0/0 in sin/cos ratios).
SMALL_ANGLE = 1e-4


def skew(k) -> np.ndarray:
    """Cross-product matrix: skew(k) @ v == cross(k, v)."""
    k = np.asarray(k, dtype=float)
    return np.array([
        [0.0, -k[2], k[1]],
        [k[2], 0.0, -k[0]],
        [-k[1], k[0], 0.0],
    ])


class Rotation3:
    """Element of SO(3) backed by a unit quaternion (w, x, y, z)."""

    __slots__ = ("q", "_mat")

    def __init__(self, q):
        q = np.asarray(q, dtype=float)
        if q.shape != (4,) or not np.all(np.isfinite(q)):
            raise ValueError("quaternion must be a finite 4-vector (w, x, y, z)")
        n = math.sqrt(float(q @ q))
        if n < 1e-12:
            raise ValueError("quaternion norm too small")
        q = q / n
        if q[0] < 0.0:  # canonical hemisphere, keeps log in the principal branch
            q = -q
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "_mat", None)

    def __setattr__(self, name, value):
        raise AttributeError("Rotation3 is immutable")

    @staticmethod
    def identity() -> "Rotation3":
        return Rotation3(np.array([1.0, 0.0, 0.0, 0.0]))

    @staticmethod
    def from_matrix(m) -> "Rotation3":
        """Quaternion from a rotation matrix (Shepperd's method)."""
        m = np.asarray(m, dtype=float)
        if m.shape != (3, 3):
            raise ValueError("rotation matrix must be 3x3")
        t = np.trace(m)
        if t > 0.0:
            s = math.sqrt(t + 1.0) * 2.0
            w = 0.25 * s
            x = (m[2, 1] - m[1, 2]) / s
            y = (m[0, 2] - m[2, 0]) / s
            z = (m[1, 0] - m[0, 1]) / s
        elif m[0, 0] >= m[1, 1] and m[0, 0] >= m[2, 2]:
            s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
            w = (m[2, 1] - m[1, 2]) / s
            x = 0.25 * s
            y = (m[0, 1] + m[1, 0]) / s
            z = (m[0, 2] + m[2, 0]) / s
        elif m[1, 1] >= m[2, 2]:
            s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
            w = (m[0, 2] - m[2, 0]) / s
            x = (m[0, 1] + m[1, 0]) / s
            y = 0.25 * s
            z = (m[1, 2] + m[2, 1]) / s
        else:
            s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
            w = (m[1, 0] - m[0, 1]) / s
            x = (m[0, 2] + m[2, 0]) / s
            y = (m[1, 2] + m[2, 1]) / s
            z = 0.25 * s
        return Rotation3(np.array([w, x, y, z]))

    @property
    def matrix(self) -> np.ndarray:
        """3x3 rotation matrix (cached; do not mutate the returned array)."""
        if self._mat is None:
            w, x, y, z = self.q
            object.__setattr__(self, "_mat", np.array([
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ]))
        return self._mat

    def __matmul__(self, other: "Rotation3") -> "Rotation3":
        """Composition self * other (quaternion product, renormalized)."""
        w1, x1, y1, z1 = self.q
        w2, x2, y2, z2 = other.q
        return Rotation3(np.array([
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ]))

    def inverse(self) -> "Rotation3":
        w, x, y, z = self.q
        return Rotation3(np.array([w, -x, -y, -z]))

    def apply(self, v) -> np.ndarray:
        """Rotate a (3,) vector or the rows of an (N, 3) array."""
        v = np.asarray(v, dtype=float)
        if v.ndim == 1:
            return self.matrix @ v
        return v @ self.matrix.T

    def angle_to(self, other: "Rotation3") -> float:
        """Geodesic angle between two rotations, radians in [0, pi]."""
        return float(np.linalg.norm(so3_log(self.inverse() @ other)))

    def is_valid(self, tol: float = 1e-9) -> bool:
        m = self.matrix
        return (np.allclose(m.T @ m, np.eye(3), atol=tol)
                and abs(np.linalg.det(m) - 1.0) < tol)

    def __repr__(self) -> str:
        return f"Rotation3(q={self.q.tolist()})"


def so3_exp(r) -> Rotation3:
    """Exponential map: Rodrigues rotation of axis r/|r|, angle |r|."""
    r = np.asarray(r, dtype=float)
    if r.shape != (3,) or not np.all(np.isfinite(r)):
        raise ValueError("tangent must be a finite 3-vector")
    theta = math.sqrt(float(r @ r))
    half = 0.5 * theta
    if theta < SMALL_ANGLE:
        w = 1.0 - half * half / 2.0
        s = 0.5 - half * half / 12.0
    else:
        w = math.cos(half)
        s = math.sin(half) / theta
    return Rotation3(np.array([w, s * r[0], s * r[1], s * r[2]]))


def so3_log(rot: Rotation3) -> np.ndarray:
    """Principal logarithm, |result| <= pi.

    At angle pi the axis sign is ambiguous; the convention is to flip the
    axis so its largest-magnitude component is positive (deterministic).
    """
    w = rot.q[0]  # >= 0 by canonicalization
    xyz = rot.q[1:]
    s = math.sqrt(float(xyz @ xyz))
    if s < 1e-9:
        out = 2.0 * xyz / max(w, 1e-12)
    else:
        theta = 2.0 * math.atan2(s, w)
        out = (theta / s) * xyz
    if w < 1e-12:  # angle == pi: apply the axis-sign convention
        i = int(np.argmax(np.abs(out)))
        if out[i] < 0.0:
            out = -out
    return out


def a_matrix_inverse(u) -> np.ndarray:
    """Inverse of the left Jacobian of SO(3) at tangent u.

    A(u)^-1 = I - [u]x/2 + (1 - a(|u|)) [u]x^2 / |u|^2,
    a(t) = (t/2) * cot(t/2); series below the small-angle switch.
    """
    u = np.asarray(u, dtype=float)
    if u.shape != (3,) or not np.all(np.isfinite(u)):
        raise ValueError("tangent must be a finite 3-vector")
    t = math.sqrt(float(u @ u))
    s = skew(u)
    if t < SMALL_ANGLE:
        coeff = 1.0 / 12.0 + t * t / 720.0
    else:
        alpha = 0.5 * t * math.cos(0.5 * t) / math.sin(0.5 * t)
        coeff = (1.0 - alpha) / (t * t)
    return np.eye(3) - 0.5 * s + coeff * (s @ s)


Part = Union[Rotation3, np.ndarray]


def tangent_dim(x: Sequence[Part]) -> int:
    """Tangent dimension of a compound state (3 per rotation block)."""
    n = 0
    for part in x:
        n += 3 if isinstance(part, Rotation3) else np.asarray(part).size
    return n


def boxplus(x: Sequence[Part], u) -> list:
    """Blockwise retraction: rotations via R * Exp(r), vectors by addition."""
    u = np.asarray(u, dtype=float).ravel()
    if u.size != tangent_dim(x):
        raise ValueError(f"tangent dim {u.size} != state dim {tangent_dim(x)}")
    out = []
    i = 0
    for part in x:
        if isinstance(part, Rotation3):
            out.append(part @ so3_exp(u[i:i + 3]))
            i += 3
        else:
            v = np.asarray(part, dtype=float)
            out.append(v + u[i:i + v.size].reshape(v.shape))
            i += v.size
    return out


def boxminus(x: Sequence[Part], y: Sequence[Part]) -> np.ndarray:
    """Blockwise difference: Log(Ry^T Rx) for rotations, a - b for vectors."""
    if len(x) != len(y):
        raise ValueError("compound states have different block counts")
    chunks = []
    for a, b in zip(x, y):
        if isinstance(a, Rotation3) != isinstance(b, Rotation3):
            raise ValueError("compound states have mismatched block kinds")
        if isinstance(a, Rotation3):
            chunks.append(so3_log(b.inverse() @ a))
        else:
            a = np.asarray(a, dtype=float)
            b = np.asarray(b, dtype=float)
            if a.shape != b.shape:
                raise ValueError("compound states have mismatched block shapes")
            chunks.append((a - b).ravel())
    return np.concatenate(chunks) if chunks else np.zeros(0)
