"""Per-contact damping control: admittance on the contact wrench error.

Each contact area carries a 6-D compliance offset from its desired pose,
integrated from the first-order law

    dr_dot = -(K_s / K_d) dr + (K_f / K_d) (w_meas - w_des)

with all gains diagonal and everything expressed in the patch local frame
(translation then rotation, wrench as force then moment). The translational
part integrates additively; the rotational part composes through the
axis-angle exponential so the offset always stays a valid rotation.

Gain sets differ between the contact and non-contact phases. During
non-contact the wrench gain is zero and the spring pulls the compliance back
to zero; during contact the normal axes are pure force integrators. On
planar tactile patches the axes that the sensor cannot observe (tangential
force, normal moment) have their wrench gain masked to zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .spatial import Pose, Wrench, exp_axis_angle, log_rotation

TACTILE_AXIS_MASK = np.array([0.0, 0.0, 1.0, 1.0, 1.0, 0.0])


@dataclass(frozen=True)
class DampingParams:
    """Diagonal damping / spring / wrench gains, local axes (txyz then rxyz)."""

    k_damping: np.ndarray
    k_spring: np.ndarray
    k_wrench: np.ndarray

    def __post_init__(self):
        kd = np.asarray(self.k_damping, dtype=float).reshape(6)
        ks = np.asarray(self.k_spring, dtype=float).reshape(6)
        kf = np.asarray(self.k_wrench, dtype=float).reshape(6)
        if np.any(kd <= 0.0):
            raise ValueError("damping gains must be positive")
        if np.any(ks < 0.0) or np.any(kf < 0.0):
            raise ValueError("spring and wrench gains must be nonnegative")
        object.__setattr__(self, "k_damping", kd)
        object.__setattr__(self, "k_spring", ks)
        object.__setattr__(self, "k_wrench", kf)

    def blend(self, other: "DampingParams", s: float) -> "DampingParams":
        s = float(np.clip(s, 0.0, 1.0))
        return DampingParams(
            (1.0 - s) * self.k_damping + s * other.k_damping,
            (1.0 - s) * self.k_spring + s * other.k_spring,
            (1.0 - s) * self.k_wrench + s * other.k_wrench,
        )


CONTACT_PHASE_PARAMS = DampingParams(
    k_damping=np.array([10000.0, 10000.0, 10000.0, 100.0, 100.0, 100.0]),
    k_spring=np.array([0.0, 0.0, 0.0, 0.0, 0.0, 2000.0]),
    k_wrench=np.array([1.0, 1.0, 1.0, 1.0, 1.0, 0.0]),
)

NON_CONTACT_PHASE_PARAMS = DampingParams(
    k_damping=np.array([300.0, 300.0, 300.0, 40.0, 40.0, 40.0]),
    k_spring=np.array([2250.0, 2250.0, 2250.0, 400.0, 400.0, 400.0]),
    k_wrench=np.zeros(6),
)


def select_params(
    phase: str,
    tactile_planar: bool = False,
    contact: DampingParams = CONTACT_PHASE_PARAMS,
    non_contact: DampingParams = NON_CONTACT_PHASE_PARAMS,
) -> DampingParams:
    """Gain set for the given phase ('contact' or 'non-contact').

    For contact through a planar tactile patch, the wrench gain is zeroed on
    the axes whose measurement is identically zero (tangential force and
    normal moment), leaving the spring/damper behaviour unchanged there.
    """
    if phase == "non-contact":
        return non_contact
    if phase != "contact":
        raise ValueError(f"unknown damping phase '{phase}'")
    if not tactile_planar:
        return contact
    return DampingParams(contact.k_damping, contact.k_spring, contact.k_wrench * TACTILE_AXIS_MASK)


@dataclass
class CompliancePose:
    """Offset from the desired contact pose: translation (m) and axis-angle
    rotation (rad), both in the patch local frame."""

    linear: np.ndarray = field(default_factory=lambda: np.zeros(3))
    angular: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.linear = np.asarray(self.linear, dtype=float).reshape(3)
        self.angular = np.asarray(self.angular, dtype=float).reshape(3)

    def copy(self) -> "CompliancePose":
        return CompliancePose(self.linear.copy(), self.angular.copy())

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.linear, self.angular])


def damping_step(
    state: CompliancePose,
    measured: Wrench,
    desired: Wrench,
    params: DampingParams,
    dt: float,
    linear_clamp: float = 0.05,
    angular_clamp: float = 0.3,
) -> CompliancePose:
    """One discrete update of the compliance offset.

    Wrenches must be expressed in the patch local frame about the patch
    origin. The clamps bound the excursion of the pure-integrator axes under
    a steady wrench error; they saturate, they never fail.
    """
    error = measured.as_array() - desired.as_array()
    offset = state.as_array()
    rate = -(params.k_spring / params.k_damping) * offset + (params.k_wrench / params.k_damping) * error
    linear = state.linear + dt * rate[:3]
    angular = log_rotation(exp_axis_angle(dt * rate[3:]) @ exp_axis_angle(state.angular))
    linear = np.clip(linear, -linear_clamp, linear_clamp)
    angular = np.clip(angular, -angular_clamp, angular_clamp)
    return CompliancePose(linear, angular)


def commanded_pose(desired: Pose, compliance: CompliancePose) -> Pose:
    """Compose the desired contact pose with the local compliance offset.

    The translation is mapped through the desired orientation (local to
    world); the rotational offset left-multiplies so that reading it back as
    ``log(R_cmd R_des^T)`` in local axes recovers the compliance exactly.
    """
    world_angular = desired.rotation @ compliance.angular
    return Pose(
        desired.position + desired.rotation @ compliance.linear,
        exp_axis_angle(world_angular) @ desired.rotation,
    )


def read_back_compliance(desired: Pose, commanded: Pose) -> CompliancePose:
    """Inverse of :func:`commanded_pose`, defined by the pose-offset relation."""
    return CompliancePose(
        desired.rotation.T @ (commanded.position - desired.position),
        desired.rotation.T @ log_rotation(commanded.rotation @ desired.rotation.T),
    )


class PatchDampingController:
    """Per-patch compliance state with phase switching and gain blending.

    Phase changes (contact boundaries of the plan) blend the gain set
    linearly over ``blend_duration`` seconds to avoid command steps.
    """

    def __init__(
        self,
        tactile_planar: bool = False,
        contact_params: DampingParams = CONTACT_PHASE_PARAMS,
        non_contact_params: DampingParams = NON_CONTACT_PHASE_PARAMS,
        blend_duration: float = 0.05,
        linear_clamp: float = 0.05,
        angular_clamp: float = 0.3,
    ):
        self.tactile_planar = tactile_planar
        self._by_phase = {
            "contact": select_params("contact", tactile_planar, contact_params, non_contact_params),
            "non-contact": select_params("non-contact", tactile_planar, contact_params, non_contact_params),
        }
        self.blend_duration = float(blend_duration)
        self.linear_clamp = float(linear_clamp)
        self.angular_clamp = float(angular_clamp)
        self.compliance = CompliancePose()
        self._phase = "non-contact"
        self._prev_params = self._by_phase[self._phase]
        self._blend_elapsed = np.inf

    @property
    def phase(self) -> str:
        return self._phase

    def set_phase(self, phase: str) -> None:
        if phase != self._phase:
            self._prev_params = self.current_params()
            self._phase = phase
            self._blend_elapsed = 0.0

    def current_params(self) -> DampingParams:
        target = self._by_phase[self._phase]
        if self._blend_elapsed >= self.blend_duration or self.blend_duration <= 0.0:
            return target
        return self._prev_params.blend(target, self._blend_elapsed / self.blend_duration)

    def step(self, measured: Wrench, desired: Wrench, dt: float) -> CompliancePose:
        params = self.current_params()
        self._blend_elapsed += dt
        self.compliance = damping_step(
            self.compliance, measured, desired, params, dt,
            linear_clamp=self.linear_clamp, angular_clamp=self.angular_clamp,
        )
        return self.compliance
