"""Distributed tactile patches: intensity-to-wrench conversion and contact
region estimation.

A tactile patch is an array of cells, each measuring contact intensity along
its own normal. Cell positions and normals live in the patch local frame
(z along the sheet normal for planar sheets); the affine calibration maps
raw intensity to normal force. Summing the per-cell forces and their
moments about the patch origin yields the measured contact wrench. Because
planar sheets sense only along one direction, the tangential force and the
normal moment of that wrench are identically zero, which is why those axes
are masked out of the damping feedback.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .spatial import Pose, Wrench


@dataclass(frozen=True)
class AffineCalibration:
    """``force = slope * intensity + offset``, slope > 0."""

    slope: float
    offset: float = 0.0
    residual_rms: float = 0.0

    def __post_init__(self):
        if self.slope <= 0.0:
            raise ValueError("calibration slope must be positive")

    def force(self, intensity: np.ndarray) -> np.ndarray:
        return self.slope * np.asarray(intensity, dtype=float) + self.offset

    def intensity(self, force: np.ndarray) -> np.ndarray:
        return (np.asarray(force, dtype=float) - self.offset) / self.slope


def calibrate_f_tau(samples: list[tuple[float, float]]) -> AffineCalibration:
    """Least-squares affine fit of (intensity, force) pairs."""
    if len(samples) < 2:
        raise ValueError("calibration needs at least two samples")
    tau = np.array([s[0] for s in samples], dtype=float)
    force = np.array([s[1] for s in samples], dtype=float)
    if np.ptp(tau) == 0.0:
        raise ValueError("degenerate calibration: all intensities identical")
    A = np.vstack([tau, np.ones_like(tau)]).T
    (slope, offset), *_ = np.linalg.lstsq(A, force, rcond=None)
    rms = float(np.sqrt(np.mean((A @ [slope, offset] - force) ** 2)))
    return AffineCalibration(float(slope), float(offset), rms)


@dataclass
class TactilePatch:
    """Snapshot of one tactile sheet: cell layout, intensities, calibration.

    ``positions`` and ``normals`` are patch-local. ``planar`` marks sheets
    whose cells are coplanar with identical normals (0, 0, 1); only then do
    the zero-axis identities hold exactly.
    """

    positions: np.ndarray           # (n, 3) local
    normals: np.ndarray             # (n, 3) local unit
    intensities: np.ndarray         # (n,) raw, >= 0
    calibration: AffineCalibration
    cell_pitch: float               # m, spacing between neighbouring cells
    detect_threshold: float = 1.0   # N, calibrated force for contact detection
    release_threshold: float = 0.5  # N, hysteresis release level
    frame: Pose = field(default_factory=Pose.identity)
    planar: bool = True

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        self.normals = np.asarray(self.normals, dtype=float).reshape(-1, 3)
        self.intensities = np.asarray(self.intensities, dtype=float).reshape(-1)
        n = self.positions.shape[0]
        if n < 1:
            raise ValueError("tactile patch needs at least one cell")
        if self.normals.shape[0] != n or self.intensities.shape[0] != n:
            raise ValueError("cell arrays must have matching lengths")
        if np.any(np.abs(np.linalg.norm(self.normals, axis=1) - 1.0) > 1e-9):
            raise ValueError("cell normals must be unit vectors")
        if np.any(self.intensities < 0.0):
            raise ValueError("intensities must be nonnegative")

    @property
    def num_cells(self) -> int:
        return self.positions.shape[0]

    def forces(self) -> np.ndarray:
        return self.calibration.force(self.intensities)

    def with_intensities(self, intensities: np.ndarray) -> "TactilePatch":
        out = TactilePatch(self.positions, self.normals, intensities, self.calibration,
                           self.cell_pitch, self.detect_threshold, self.release_threshold,
                           self.frame, self.planar)
        return out


def grid_layout(nx: int, ny: int, pitch: float) -> np.ndarray:
    """Centered rectangular cell grid in the sheet plane (local z = 0)."""
    xs = (np.arange(nx) - (nx - 1) / 2.0) * pitch
    ys = (np.arange(ny) - (ny - 1) / 2.0) * pitch
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel(), np.zeros(nx * ny)])


def tactile_wrench(patch: TactilePatch) -> Wrench:
    """Measured contact wrench in the patch local frame about the patch origin.

    Sum of per-cell forces along their normals plus the induced moments. For
    planar sheets the tangential force components and the normal moment are
    exactly zero by construction (every term vanishes identically).
    """
    f = patch.forces()
    forces = f[:, None] * patch.normals
    moment = np.cross(patch.positions, forces).sum(axis=0)
    return Wrench(forces.sum(axis=0), moment)


def tactile_wrench_world(patch: TactilePatch) -> Wrench:
    """Same wrench re-expressed in world axes (still about the patch origin)."""
    return tactile_wrench(patch).rotated(patch.frame.rotation)


def detect_cells(patch: TactilePatch, previous: Optional[np.ndarray] = None) -> np.ndarray:
    """Contact detection mask with force hysteresis.

    A cell turns on at ``detect_threshold`` (N) and, once on, stays on until
    its force falls below ``release_threshold``.
    """
    f = patch.forces()
    mask = f >= patch.detect_threshold
    if previous is not None:
        previous = np.asarray(previous, dtype=bool).reshape(-1)
        if previous.shape[0] == patch.num_cells:
            mask = mask | (previous & (f >= patch.release_threshold))
    return mask


def estimate_contact_rectangle(
    patch: TactilePatch,
    mask: Optional[np.ndarray] = None,
) -> Optional[np.ndarray]:
    """Smallest axis-aligned rectangle around the detected cells, or None.

    The bounds are the min/max of the detected cell coordinates in the sheet
    frame, inflated by half the cell pitch on every side: cells sample an
    area, and without the inflation a single-cell contact would have zero
    area and could not carry a moment. Returns the 4 corners (local frame,
    counterclockwise starting at the minimum corner), on the sheet plane.
    """
    if mask is None:
        mask = detect_cells(patch)
    mask = np.asarray(mask, dtype=bool).reshape(-1)
    if not np.any(mask):
        return None
    pts = patch.positions[mask]
    half = patch.cell_pitch / 2.0
    x0, x1 = pts[:, 0].min() - half, pts[:, 0].max() + half
    y0, y1 = pts[:, 1].min() - half, pts[:, 1].max() + half
    z = float(pts[:, 2].mean())
    return np.array([[x0, y0, z], [x1, y0, z], [x1, y1, z], [x0, y1, z]])


def center_of_pressure(wrench: Wrench) -> Optional[np.ndarray]:
    """In-plane point where the normal force distribution acts (local frame).

    Defined for a patch-local wrench with positive normal force:
    ``x = -m_y / f_z``, ``y = m_x / f_z``.
    """
    fz = wrench.force[2]
    if fz <= 0.0:
        return None
    return np.array([-wrench.moment[1] / fz, wrench.moment[0] / fz])
