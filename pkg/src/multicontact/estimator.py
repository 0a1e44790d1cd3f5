"""Centroidal state estimation anchored at the loaded contacts.

A position-controlled robot knows its limb geometry precisely (encoders) but
not its absolute base pose. The estimator places the kinematic model so that
the *anchor point*, the planned-force-weighted average of the contact
points, coincides with its planned position under the measured base
orientation; the CoM then follows from the model, and the velocities from
filtered finite differences of successive estimates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .dynamics import CentroidalState, euler_from_rotation
from .spatial import log_rotation


@dataclass(frozen=True)
class AnchorContact:
    """One loaded contact: planned point (world), planned force scale (sum of
    the patch's ridge scales), and the contact origin relative to the base,
    in base coordinates (from the kinematic model)."""

    planned_point: np.ndarray
    planned_scale: float
    offset_in_base: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "planned_point", np.asarray(self.planned_point, dtype=float).reshape(3))
        object.__setattr__(self, "offset_in_base", np.asarray(self.offset_in_base, dtype=float).reshape(3))
        if self.planned_scale < 0.0:
            raise ValueError("planned force scales must be nonnegative")


@dataclass(frozen=True)
class AnchorFrameInput:
    """Everything one estimation step needs: the loaded contacts, the measured
    base orientation, and the base-to-CoM offset of the kinematic model."""

    contacts: Sequence[AnchorContact]
    base_orientation: np.ndarray
    com_offset_in_base: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "base_orientation", np.asarray(self.base_orientation, dtype=float).reshape(3, 3))
        object.__setattr__(self, "com_offset_in_base", np.asarray(self.com_offset_in_base, dtype=float).reshape(3))


def anchor_point(points: np.ndarray, scales: np.ndarray) -> np.ndarray:
    """Weighted average of contact points; weights are planned force scales."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    scales = np.asarray(scales, dtype=float).reshape(-1)
    if scales.shape[0] != points.shape[0]:
        raise ValueError("one scale per contact point required")
    if np.any(scales < 0.0):
        raise ValueError("planned force scales must be nonnegative")
    total = scales.sum()
    if total <= 0.0:
        raise ValueError("no load-bearing contact: all planned force scales are zero")
    return (scales[:, None] * points).sum(axis=0) / total


class CentroidalEstimator:
    """Stateful estimator: anchor-pinned pose plus filtered finite-difference
    velocities (first-order low-pass, configurable cutoff)."""

    def __init__(self, velocity_cutoff_hz: float = 20.0):
        self.velocity_cutoff_hz = float(velocity_cutoff_hz)
        self._prev_com: Optional[np.ndarray] = None
        self._prev_rot: Optional[np.ndarray] = None
        self._com_vel = np.zeros(3)
        self._ang_vel = np.zeros(3)

    def reset(self) -> None:
        self._prev_com = None
        self._prev_rot = None
        self._com_vel = np.zeros(3)
        self._ang_vel = np.zeros(3)

    def estimate(self, inputs: AnchorFrameInput, dt: float) -> CentroidalState:
        points = np.array([c.planned_point for c in inputs.contacts])
        scales = np.array([c.planned_scale for c in inputs.contacts])
        anchor = anchor_point(points, scales)
        R = inputs.base_orientation
        offsets = np.array([c.offset_in_base for c in inputs.contacts])
        mean_offset = (scales[:, None] * offsets).sum(axis=0) / scales.sum()
        # Base position such that the model anchor lands on the planned anchor.
        base_pos = anchor - R @ mean_offset
        com = base_pos + R @ inputs.com_offset_in_base

        if self._prev_com is not None and dt > 0.0:
            beta = 1.0 - np.exp(-2.0 * np.pi * self.velocity_cutoff_hz * dt)
            self._com_vel += beta * ((com - self._prev_com) / dt - self._com_vel)
            self._ang_vel += beta * (log_rotation(R @ self._prev_rot.T) / dt - self._ang_vel)
        self._prev_com = com.copy()
        self._prev_rot = R.copy()
        return CentroidalState(com, euler_from_rotation(R), self._com_vel.copy(), self._ang_vel.copy())
