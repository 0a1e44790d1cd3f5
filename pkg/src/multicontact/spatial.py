"""Minimal 3-D spatial algebra: rotations, axis-angle maps, wrenches.

Conventions used throughout the package:

* vectors are ``(3,)`` float arrays, rotations are ``(3, 3)`` orthonormal
  matrices mapping local coordinates to world coordinates,
* a :class:`Wrench` stacks force (N) on top of moment (N m); the reference
  point of the moment is implied by context and can be changed with
  :func:`shift_wrench`.

``exp_axis_angle`` and ``log_rotation`` accept leading batch dimensions
(``(..., 3)`` / ``(..., 3, 3)``) so large test sweeps stay vectorized.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ANTIPODAL_MARGIN = 1e-6  # log() is refused this close to a half turn
SMALL_ANGLE = 1e-8       # below this, series expansions replace sin/cos ratios


def skew(v: np.ndarray) -> np.ndarray:
    """Cross-product matrix: ``skew(a) @ b == cross(a, b)``."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def exp_axis_angle(a: np.ndarray) -> np.ndarray:
    """Rodrigues map from an axis-angle vector to a rotation matrix.

    ``a`` has direction = rotation axis and norm = rotation angle (rad).
    Angles below ``SMALL_ANGLE`` use the second-order series so the map is
    smooth through zero.
    """
    a = np.asarray(a, dtype=float)
    theta = np.linalg.norm(a, axis=-1)
    th = theta[..., None, None]
    K = skew(a)
    K2 = K @ K
    eye = np.broadcast_to(np.eye(3), K.shape)
    small = th < SMALL_ANGLE
    with np.errstate(invalid="ignore", divide="ignore"):
        sin_t = np.where(small, 1.0 - th**2 / 6.0, np.sin(th) / np.where(th == 0.0, 1.0, th))
        cos_t = np.where(small, 0.5 - th**2 / 24.0, (1.0 - np.cos(th)) / np.where(th == 0.0, 1.0, th**2))
    return eye + sin_t * K + cos_t * K2


def log_rotation(R: np.ndarray) -> np.ndarray:
    """Axis-angle vector of a rotation matrix, with angle in ``[0, pi)``.

    Raises ``ValueError`` for rotations within ``ANTIPODAL_MARGIN`` of a half
    turn, where the axis is ill-conditioned; callers in this package never
    legitimately see half-turn orientation errors.
    """
    R = np.asarray(R, dtype=float)
    trace = np.trace(R, axis1=-2, axis2=-1)
    cos_theta = np.clip((trace - 1.0) / 2.0, -1.0, 1.0)
    theta = np.arccos(cos_theta)
    if np.any(theta >= np.pi - ANTIPODAL_MARGIN):
        raise ValueError("near-antipodal rotation: axis-angle extraction is ill-conditioned")
    vee = np.stack(
        [
            R[..., 2, 1] - R[..., 1, 2],
            R[..., 0, 2] - R[..., 2, 0],
            R[..., 1, 0] - R[..., 0, 1],
        ],
        axis=-1,
    )
    th = theta[..., None]
    small = th < SMALL_ANGLE
    with np.errstate(invalid="ignore", divide="ignore"):
        # vee = 2 sin(theta) * axis; scale converts it to theta * axis.
        scale = np.where(small, 0.5 + th**2 / 12.0, th / np.where(th == 0.0, 1.0, 2.0 * np.sin(th)))
    return vee * scale


@dataclass(frozen=True)
class Wrench:
    """6-D force/moment pair about a reference point implied by context."""

    force: np.ndarray = field(default_factory=lambda: np.zeros(3))
    moment: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "force", np.asarray(self.force, dtype=float).reshape(3))
        object.__setattr__(self, "moment", np.asarray(self.moment, dtype=float).reshape(3))

    @staticmethod
    def from_array(w: np.ndarray) -> "Wrench":
        w = np.asarray(w, dtype=float).reshape(6)
        return Wrench(w[:3], w[3:])

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.force, self.moment])

    def __add__(self, other: "Wrench") -> "Wrench":
        return Wrench(self.force + other.force, self.moment + other.moment)

    def __neg__(self) -> "Wrench":
        return Wrench(-self.force, -self.moment)

    def rotated(self, R: np.ndarray) -> "Wrench":
        """Re-express both components in another frame (same reference point)."""
        R = np.asarray(R, dtype=float)
        return Wrench(R @ self.force, R @ self.moment)


def shift_wrench(w: Wrench, src: np.ndarray, dst: np.ndarray) -> Wrench:
    """Move the moment reference point from ``src`` to ``dst``.

    The force is unchanged; the moment picks up the lever-arm term
    ``(src - dst) x force``.
    """
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    return Wrench(w.force, w.moment + np.cross(src - dst, w.force))


@dataclass(frozen=True)
class Pose:
    """Rigid transform: ``world_point = rotation @ local_point + position``."""

    position: np.ndarray
    rotation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(3))
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=float).reshape(3, 3))

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.zeros(3), np.eye(3))

    def transform(self, local_points: np.ndarray) -> np.ndarray:
        pts = np.asarray(local_points, dtype=float)
        return pts @ self.rotation.T + self.position

    def compose(self, other: "Pose") -> "Pose":
        """``self`` after ``other``: first apply ``other``, then ``self``."""
        return Pose(self.rotation @ other.position + self.position, self.rotation @ other.rotation)

    def inverse(self) -> "Pose":
        return Pose(-(self.rotation.T @ self.position), self.rotation.T)


def interpolate_pose(a: Pose, b: Pose, s: float) -> Pose:
    """Geodesic interpolation between two poses, ``s`` in [0, 1]."""
    s = float(np.clip(s, 0.0, 1.0))
    delta = log_rotation(b.rotation @ a.rotation.T)
    return Pose(a.position + s * (b.position - a.position), exp_axis_angle(s * delta) @ a.rotation)
