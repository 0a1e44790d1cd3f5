"""PD feedback on the centroidal state error and desired-wrench assembly.

The planner runs open loop on its own prediction model; this module closes
the loop by turning the gap between the planned and measured centroidal
states into a resultant-wrench adjustment. The orientation error uses the
axis-angle of the relative rotation, so the rotational feedback is
frame-consistent rather than per-Euler-angle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .contact import ContactSet, resultant_wrench
from .dynamics import CentroidalState, rotation_from_euler
from .spatial import Wrench, log_rotation


@dataclass(frozen=True)
class StabilizerGains:
    """Diagonal PD gains: linear (N/m, N s/m) and angular (N m/rad, N m s/rad)."""

    p_lin: np.ndarray = field(default_factory=lambda: np.array([750.0, 750.0, 10000.0]))
    d_lin: np.ndarray = field(default_factory=lambda: np.array([150.0, 150.0, 150.0]))
    p_ang: np.ndarray = field(default_factory=lambda: np.array([750.0, 750.0, 750.0]))
    d_ang: np.ndarray = field(default_factory=lambda: np.array([150.0, 150.0, 150.0]))
    force_clamp: float = 200.0
    moment_clamp: float = 100.0

    def __post_init__(self):
        for name in ("p_lin", "d_lin", "p_ang", "d_ang"):
            v = np.asarray(getattr(self, name), dtype=float).reshape(3)
            if np.any(v < 0.0):
                raise ValueError(f"{name} entries must be nonnegative")
            object.__setattr__(self, name, v)


def feedback_delta(planned: CentroidalState, measured: CentroidalState, gains: StabilizerGains) -> Wrench:
    """Wrench adjustment from the planned-minus-measured state error.

    Force: P_L (c_d - c_a) + D_L (v_d - v_a). Moment: P_A log(R_d R_a^T) +
    D_A (w_d - w_a). Components are clamped so estimator glitches cannot
    saturate the downstream distribution.
    """
    rot_err = log_rotation(rotation_from_euler(planned.alpha) @ rotation_from_euler(measured.alpha).T)
    force = gains.p_lin * (planned.com - measured.com) + gains.d_lin * (planned.com_vel - measured.com_vel)
    moment = gains.p_ang * rot_err + gains.d_ang * (planned.ang_vel - measured.ang_vel)
    force = np.clip(force, -gains.force_clamp, gains.force_clamp)
    moment = np.clip(moment, -gains.moment_clamp, gains.moment_clamp)
    return Wrench(force, moment)


def desired_resultant_wrench(
    contacts: ContactSet,
    planned_scales: np.ndarray,
    planned_com: np.ndarray,
    delta: Wrench,
) -> Wrench:
    """Planned resultant wrench of the current optimal scales plus the
    feedback adjustment; this is the target for wrench distribution."""
    return resultant_wrench(contacts, planned_scales, planned_com) + delta
