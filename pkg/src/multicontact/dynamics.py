"""Discrete centroidal dynamics of a single rigid body under contact forces.

State: CoM position ``c``, base orientation as ZYX Euler angles
``alpha = (roll, pitch, yaw)``, CoM velocity ``v``, world angular velocity
``omega``. The translational channel follows Newton's law with the total
ridge force; the rotational channel follows the Euler equation with the
world-frame inertia recomputed from the current orientation. One step is a
single explicit Euler update, which is also the prediction model used by the
receding-horizon optimizer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .contact import ContactSet
from .spatial import skew

GRAVITY = np.array([0.0, 0.0, 9.81])
PITCH_GUARD = np.pi / 2 - 0.1  # Euler-rate map is singular at |pitch| = pi/2

_EX = np.array([1.0, 0.0, 0.0])
_EY = np.array([0.0, 1.0, 0.0])
_EZ = np.array([0.0, 0.0, 1.0])


@dataclass
class CentroidalState:
    """12-D centroidal state; ``alpha`` is (roll, pitch, yaw) in radians."""

    com: np.ndarray = field(default_factory=lambda: np.zeros(3))
    alpha: np.ndarray = field(default_factory=lambda: np.zeros(3))
    com_vel: np.ndarray = field(default_factory=lambda: np.zeros(3))
    ang_vel: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.com = np.asarray(self.com, dtype=float).reshape(3)
        self.alpha = np.asarray(self.alpha, dtype=float).reshape(3)
        self.com_vel = np.asarray(self.com_vel, dtype=float).reshape(3)
        self.ang_vel = np.asarray(self.ang_vel, dtype=float).reshape(3)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.com, self.alpha, self.com_vel, self.ang_vel])

    @staticmethod
    def from_vector(x: np.ndarray) -> "CentroidalState":
        x = np.asarray(x, dtype=float).reshape(12)
        return CentroidalState(x[0:3], x[3:6], x[6:9], x[9:12])

    def copy(self) -> "CentroidalState":
        return CentroidalState(self.com.copy(), self.alpha.copy(), self.com_vel.copy(), self.ang_vel.copy())


@dataclass(frozen=True)
class RobotInertialModel:
    """Mass, body-frame inertia about the CoM, and the gravity vector."""

    mass: float
    inertia_body: np.ndarray
    gravity: np.ndarray = field(default_factory=lambda: GRAVITY.copy())

    def __post_init__(self):
        object.__setattr__(self, "inertia_body", np.asarray(self.inertia_body, dtype=float).reshape(3, 3))
        object.__setattr__(self, "gravity", np.asarray(self.gravity, dtype=float).reshape(3))
        if self.mass <= 0.0:
            raise ValueError("mass must be positive")
        I = self.inertia_body
        if not np.allclose(I, I.T, atol=1e-9) or np.any(np.linalg.eigvalsh(I) <= 0.0):
            raise ValueError("body inertia must be symmetric positive definite")


def rotation_from_euler(alpha: np.ndarray) -> np.ndarray:
    """ZYX convention: ``R = Rz(yaw) @ Ry(pitch) @ Rx(roll)``."""
    roll, pitch, yaw = np.asarray(alpha, dtype=float).reshape(3)
    cr, sr = np.cos(roll), np.sin(roll)
    cp, sp = np.cos(pitch), np.sin(pitch)
    cy, sy = np.cos(yaw), np.sin(yaw)
    return np.array(
        [
            [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
            [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
            [-sp, cp * sr, cp * cr],
        ]
    )


def euler_from_rotation(R: np.ndarray) -> np.ndarray:
    """Inverse of :func:`rotation_from_euler` away from the pitch singularity."""
    R = np.asarray(R, dtype=float)
    pitch = np.arctan2(-R[2, 0], np.hypot(R[2, 1], R[2, 2]))
    roll = np.arctan2(R[2, 1], R[2, 2])
    yaw = np.arctan2(R[1, 0], R[0, 0])
    return np.array([roll, pitch, yaw])


def euler_rate_matrix(alpha: np.ndarray) -> np.ndarray:
    """``E(alpha)`` with ``omega_world = E(alpha) @ alpha_dot``.

    Columns are the world axes of the roll, pitch, and yaw rates; the matrix
    loses rank at |pitch| = pi/2.
    """
    _, pitch, yaw = np.asarray(alpha, dtype=float).reshape(3)
    cp, sp = np.cos(pitch), np.sin(pitch)
    cy, sy = np.cos(yaw), np.sin(yaw)
    return np.array(
        [
            [cp * cy, -sy, 0.0],
            [cp * sy, cy, 0.0],
            [-sp, 0.0, 1.0],
        ]
    )


def _euler_rate_matrix_partials(alpha: np.ndarray) -> np.ndarray:
    """``dE/dalpha_k`` stacked over k = roll, pitch, yaw."""
    _, pitch, yaw = np.asarray(alpha, dtype=float).reshape(3)
    cp, sp = np.cos(pitch), np.sin(pitch)
    cy, sy = np.cos(yaw), np.sin(yaw)
    dE = np.zeros((3, 3, 3))
    dE[1] = np.array([[-sp * cy, 0.0, 0.0], [-sp * sy, 0.0, 0.0], [-cp, 0.0, 0.0]])
    dE[2] = np.array([[-cp * sy, -cy, 0.0], [cp * cy, -sy, 0.0], [0.0, 0.0, 0.0]])
    return dE


def _rotation_partials(alpha: np.ndarray) -> np.ndarray:
    """``dR/dalpha_k`` stacked over k, for R = Rz Ry Rx."""
    roll, pitch, yaw = np.asarray(alpha, dtype=float).reshape(3)

    def rx(a):
        c, s = np.cos(a), np.sin(a)
        return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])

    def ry(a):
        c, s = np.cos(a), np.sin(a)
        return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])

    def rz(a):
        c, s = np.cos(a), np.sin(a)
        return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])

    Rx, Ry, Rz = rx(roll), ry(pitch), rz(yaw)
    dR = np.empty((3, 3, 3))
    dR[0] = Rz @ Ry @ (skew(_EX) @ Rx)
    dR[1] = Rz @ (skew(_EY) @ Ry) @ Rx
    dR[2] = skew(_EZ) @ Rz @ Ry @ Rx
    return dR


def check_pitch(alpha: np.ndarray) -> None:
    if abs(float(alpha[1])) >= PITCH_GUARD:
        raise ValueError("pitch singularity: |pitch| too close to pi/2")


def step_dynamics(
    state: CentroidalState,
    scales: np.ndarray,
    model: RobotInertialModel,
    contacts: ContactSet,
    dt: float,
) -> CentroidalState:
    """One explicit Euler step of the centroidal dynamics under ridge forces."""
    check_pitch(state.alpha)
    force, moment = contacts.force_and_moment(scales, state.com)
    R = rotation_from_euler(state.alpha)
    I_w = R @ model.inertia_body @ R.T
    E = euler_rate_matrix(state.alpha)
    com_acc = force / model.mass - model.gravity
    ang_acc = np.linalg.solve(I_w, moment - np.cross(state.ang_vel, I_w @ state.ang_vel))
    alpha_dot = np.linalg.solve(E, state.ang_vel)
    return CentroidalState(
        state.com + dt * state.com_vel,
        state.alpha + dt * alpha_dot,
        state.com_vel + dt * com_acc,
        state.ang_vel + dt * ang_acc,
    )


def step_jacobians(
    state: CentroidalState,
    scales: np.ndarray,
    model: RobotInertialModel,
    contacts: ContactSet,
    dt: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic Jacobians ``(d next / d state, d next / d scales)`` of one step.

    Matches :func:`step_dynamics` exactly; verified against central finite
    differences in the test suite.
    """
    scales = contacts.check_scales(scales)
    n = contacts.size
    R = rotation_from_euler(state.alpha)
    I_b = model.inertia_body
    I_w = R @ I_b @ R.T
    I_w_inv = np.linalg.inv(I_w)
    E = euler_rate_matrix(state.alpha)
    E_inv = np.linalg.inv(E)
    omega = state.ang_vel

    force, moment = contacts.force_and_moment(scales, state.com)
    h = moment - np.cross(omega, I_w @ omega)
    ang_acc = I_w_inv @ h

    A = np.zeros((12, 12))
    # d com_dot / d com_vel
    A[0:3, 6:9] = np.eye(3)
    # d alpha_dot / d alpha: alpha_dot = E^-1 omega
    dE = _euler_rate_matrix_partials(state.alpha)
    alpha_dot = E_inv @ omega
    for k in range(3):
        A[3:6, 3 + k] = -E_inv @ (dE[k] @ alpha_dot)
    # d alpha_dot / d omega
    A[3:6, 9:12] = E_inv
    # d ang_acc / d com: moment depends on com through the lever arms
    A[9:12, 0:3] = I_w_inv @ skew(force)
    # d ang_acc / d alpha: through I_w(alpha)
    dR = _rotation_partials(state.alpha)
    for k in range(3):
        dI = dR[k] @ I_b @ R.T + R @ I_b @ dR[k].T
        A[9:12, 3 + k] = I_w_inv @ (-dI @ ang_acc - np.cross(omega, dI @ omega))
    # d ang_acc / d omega
    A[9:12, 9:12] = -I_w_inv @ (skew(omega) @ I_w - skew(I_w @ omega))

    B = np.zeros((12, n))
    B[6:9, :] = contacts.directions.T / model.mass
    B[9:12, :] = I_w_inv @ np.cross(contacts.points - state.com, contacts.directions).T

    fx = np.eye(12) + dt * A
    fu = dt * B
    return fx, fu
