"""Desk-scale plant: one rigid body, massless pose-tracked contact patches,
penalty contact against planar surfaces, and simulated tactile cells.

The body carries all the mass and follows the centroidal dynamics under the
summed cell contact forces. Limbs are abstracted away: each contact patch is
a massless sheet of contact cells whose pose is commanded *relative to the
planned base pose* (that is what position-controlled joints realize) and
tracked with a first-order lag, then carried along rigidly by the actual
base. Cell forces are a normal spring-damper plus Coulomb-capped viscous
tangential friction, so per-cell normal forces are nonnegative and the
friction cone holds cell by cell.

A surface can be articulated with a one-axis rotational spring-damper joint
(a rotatable seat board): contact forces torque the board, and the board's
pose feeds back into the contact geometry.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .dynamics import (
    CentroidalState,
    PITCH_GUARD,
    RobotInertialModel,
    euler_rate_matrix,
    rotation_from_euler,
)
from .spatial import Pose, Wrench, exp_axis_angle, log_rotation
from .tactile import AffineCalibration


@dataclass(frozen=True)
class SeatJoint:
    """1-DoF rotational spring-damper joint of an articulated surface."""

    axis: np.ndarray        # world unit vector
    pivot: np.ndarray       # world point on the axis
    stiffness: float        # N m / rad
    damping: float          # N m s / rad
    inertia: float          # kg m^2

    def __post_init__(self):
        axis = np.asarray(self.axis, dtype=float).reshape(3)
        object.__setattr__(self, "axis", axis / np.linalg.norm(axis))
        object.__setattr__(self, "pivot", np.asarray(self.pivot, dtype=float).reshape(3))
        if self.stiffness < 0.0 or self.damping < 0.0 or self.inertia <= 0.0:
            raise ValueError("seat joint needs nonnegative stiffness/damping and positive inertia")


@dataclass(frozen=True)
class Surface:
    """Planar contact surface, optionally bounded and optionally articulated.

    ``error_offset`` rigidly shifts the *actual* surface relative to where
    the contact plan believes it is; it is the knob for environment-error
    experiments.
    """

    surface_id: str
    origin: np.ndarray
    normal: np.ndarray
    friction: float = 0.5
    tangent_x: Optional[np.ndarray] = None
    half_extents: Optional[tuple[float, float]] = None
    error_offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
    joint: Optional[SeatJoint] = None

    def __post_init__(self):
        origin = np.asarray(self.origin, dtype=float).reshape(3)
        normal = np.asarray(self.normal, dtype=float).reshape(3)
        n = np.linalg.norm(normal)
        if n <= 0.0:
            raise ValueError(f"surface '{self.surface_id}': normal must be nonzero")
        normal = normal / n
        if self.tangent_x is None:
            helper = np.array([1.0, 0.0, 0.0]) if abs(normal[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
            tx = np.cross(np.cross(normal, helper), normal)
        else:
            tx = np.asarray(self.tangent_x, dtype=float).reshape(3)
            tx = tx - (tx @ normal) * normal
        txn = np.linalg.norm(tx)
        if txn <= 0.0:
            raise ValueError(f"surface '{self.surface_id}': tangent axis parallel to the normal")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "normal", normal)
        object.__setattr__(self, "tangent_x", tx / txn)
        object.__setattr__(self, "error_offset", np.asarray(self.error_offset, dtype=float).reshape(3))
        if self.friction < 0.0:
            raise ValueError(f"surface '{self.surface_id}': friction must be nonnegative")


@dataclass(frozen=True)
class SurfaceMotion:
    """Scripted rigid translation of a surface: ramps linearly from zero to
    ``offset`` over [start, end], then holds."""

    surface_id: str
    start: float
    end: float
    offset: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "offset", np.asarray(self.offset, dtype=float).reshape(3))
        if self.end <= self.start:
            raise ValueError("surface motion must have positive duration")

    def value(self, t: float) -> np.ndarray:
        s = np.clip((t - self.start) / (self.end - self.start), 0.0, 1.0)
        return s * self.offset


@dataclass(frozen=True)
class DisturbancePulse:
    """External force applied at the CoM during [start, end]."""

    start: float
    end: float
    force: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "force", np.asarray(self.force, dtype=float).reshape(3))


class DisturbanceSchedule:
    def __init__(self, pulses: Sequence[DisturbancePulse] = ()):
        self.pulses = sorted(pulses, key=lambda p: p.start)

    def force_at(self, t: float) -> np.ndarray:
        total = np.zeros(3)
        for p in self.pulses:
            if p.start <= t < p.end:
                total = total + p.force
        return total


@dataclass(frozen=True)
class ContactParams:
    """Penalty-contact constants, per cell."""

    normal_stiffness: float = 1e5       # N/m
    normal_damping: float = 1e3         # N s/m
    tangential_damping: float = 3e3     # N s/m


@dataclass
class PatchSpec:
    """Static description of one contact patch shared by plant and controller."""

    patch_id: str
    polygon_local: np.ndarray             # (n, 3) assumed contact polygon, patch frame
    cells_local: np.ndarray               # (m, 3) contact/tactile cells, patch frame
    cell_pitch: float
    friction: float = 0.5
    ridges_per_vertex: int = 4
    sensor: str = "ft"                    # "ft" (force/torque) | "tactile"
    role: str = "support"                 # "support" | "track" (damping only)
    calibration: AffineCalibration = field(default_factory=lambda: AffineCalibration(50.0))
    detect_threshold: float = 1.0         # N
    release_threshold: float = 0.5        # N
    noise_sigma: float = 0.0              # raw intensity units
    damping_kd: Optional[np.ndarray] = None   # per-patch K_d override (6,)
    surfaces: Optional[list[str]] = None  # restrict contact to these surfaces

    def __post_init__(self):
        self.polygon_local = np.asarray(self.polygon_local, dtype=float).reshape(-1, 3)
        self.cells_local = np.asarray(self.cells_local, dtype=float).reshape(-1, 3)
        if self.sensor not in ("ft", "tactile"):
            raise ValueError(f"patch '{self.patch_id}': unknown sensor '{self.sensor}'")
        if self.role not in ("support", "track"):
            raise ValueError(f"patch '{self.patch_id}': unknown role '{self.role}'")
        if self.damping_kd is not None:
            self.damping_kd = np.asarray(self.damping_kd, dtype=float).reshape(6)


@dataclass
class EnvironmentModel:
    surfaces: list[Surface] = field(default_factory=list)
    contact: ContactParams = field(default_factory=ContactParams)
    motions: list[SurfaceMotion] = field(default_factory=list)

    def surface_ids(self) -> list[str]:
        return [s.surface_id for s in self.surfaces]


@dataclass
class PlantState:
    """Ground-truth view of the plant at one instant."""

    body: CentroidalState
    patch_poses: dict[str, Pose]
    penetrations: dict[str, np.ndarray]
    seat_angles: dict[str, float]
    seat_rates: dict[str, float]


@dataclass
class SensorSnapshot:
    """What the controller is allowed to see at one control tick."""

    time: float
    base_orientation: np.ndarray                  # measured (IMU-like)
    patch_offsets: dict[str, Pose]                # patch frame in base coords (encoders)
    ft_wrenches: dict[str, Wrench]                # patch-local, about patch origin
    tactile_intensities: dict[str, np.ndarray]    # raw intensities per cell
    truth: PlantState                             # logging/metrics only


class SimulationBlowup(RuntimeError):
    pass


def _track_pose(current: Pose, target: Pose, beta: float) -> Pose:
    pos = current.position + beta * (target.position - current.position)
    rot = exp_axis_angle(beta * log_rotation(target.rotation @ current.rotation.T)) @ current.rotation
    return Pose(pos, rot)


class Plant:
    """Fixed-step rigid-body plant with penalty contact.

    One instance per scenario run; stepping is single-threaded and, for a
    given seed and command sequence, bit-deterministic.
    """

    def __init__(
        self,
        model: RobotInertialModel,
        patches: Sequence[PatchSpec],
        env: EnvironmentModel,
        initial_state: CentroidalState,
        initial_patch_poses: dict[str, Pose],
        disturbances: Optional[DisturbanceSchedule] = None,
        tracking_bandwidth_hz: float = 30.0,
        orientation_noise_rad: float = 0.0,
        orientation_bias_rpy: Optional[np.ndarray] = None,
        seed: int = 0,
    ):
        self.model = model
        self.patches = {p.patch_id: p for p in patches}
        self.env = env
        self.state = initial_state.copy()
        self.disturbances = disturbances or DisturbanceSchedule()
        self.tracking_bandwidth_hz = float(tracking_bandwidth_hz)
        self.orientation_noise_rad = float(orientation_noise_rad)
        self.orientation_bias = (np.zeros(3) if orientation_bias_rpy is None
                                 else np.asarray(orientation_bias_rpy, dtype=float).reshape(3))
        self.rng = np.random.default_rng(seed)
        self.time = 0.0

        base = self.base_pose()
        base_inv = base.inverse()
        self._offsets = {pid: base_inv.compose(initial_patch_poses[pid]) for pid in self.patches}
        self._prev_cells = {pid: base.compose(self._offsets[pid]).transform(self.patches[pid].cells_local)
                            for pid in self.patches}
        self._cell_forces = {pid: np.zeros((self.patches[pid].cells_local.shape[0], 3)) for pid in self.patches}
        self._cell_normal_forces = {pid: np.zeros(self.patches[pid].cells_local.shape[0]) for pid in self.patches}
        self._penetrations = {pid: np.zeros(self.patches[pid].cells_local.shape[0]) for pid in self.patches}
        self._seat_angle = {s.surface_id: 0.0 for s in env.surfaces if s.joint is not None}
        self._seat_rate = {s.surface_id: 0.0 for s in env.surfaces if s.joint is not None}

    # -- geometry ---------------------------------------------------------

    def base_pose(self) -> Pose:
        return Pose(self.state.com, rotation_from_euler(self.state.alpha))

    def patch_pose(self, patch_id: str) -> Pose:
        return self.base_pose().compose(self._offsets[patch_id])

    def surface_frame(self, surface: Surface) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Actual (origin, normal, tangent_x) including error, motion, joint."""
        origin = surface.origin + surface.error_offset
        for m in self.env.motions:
            if m.surface_id == surface.surface_id:
                origin = origin + m.value(self.time)
        normal = surface.normal
        tx = surface.tangent_x
        if surface.joint is not None:
            R = exp_axis_angle(self._seat_angle[surface.surface_id] * surface.joint.axis)
            origin = surface.joint.pivot + R @ (origin - surface.joint.pivot)
            normal = R @ normal
            tx = R @ tx
        return origin, normal, tx

    # -- stepping ---------------------------------------------------------

    def step(self, commanded_world: dict[str, Pose], planned_base: Pose, dt: float) -> None:
        """Advance the plant by one fixed step under the given commands.

        ``commanded_world`` are the commanded patch poses in world frame;
        ``planned_base`` is the base pose those commands are relative to (the
        joint-space command a position-controlled robot would execute).
        """
        planned_inv = planned_base.inverse()
        beta = 1.0 - np.exp(-2.0 * np.pi * self.tracking_bandwidth_hz * dt)
        base = self.base_pose()
        total_force = self.disturbances.force_at(self.time).copy()
        total_moment = np.zeros(3)
        seat_torque = {sid: 0.0 for sid in self._seat_angle}

        for pid, spec in self.patches.items():
            if pid in commanded_world:
                target = planned_inv.compose(commanded_world[pid])
                self._offsets[pid] = _track_pose(self._offsets[pid], target, beta)
            pose = base.compose(self._offsets[pid])
            cells = pose.transform(spec.cells_local)
            vel = (cells - self._prev_cells[pid]) / dt
            self._prev_cells[pid] = cells

            forces = np.zeros_like(cells)
            normal_forces = np.zeros(cells.shape[0])
            depths = np.zeros(cells.shape[0])
            for surface in self.env.surfaces:
                if spec.surfaces is not None and surface.surface_id not in spec.surfaces:
                    continue
                origin, normal, tx = self.surface_frame(surface)
                phi = (cells - origin) @ normal
                mask = phi < 0.0
                if surface.half_extents is not None:
                    ty = np.cross(normal, tx)
                    u = (cells - origin) @ tx
                    v = (cells - origin) @ ty
                    hx, hy = surface.half_extents
                    mask &= (np.abs(u) <= hx) & (np.abs(v) <= hy)
                if not np.any(mask):
                    continue
                depth = -phi[mask]
                rate = vel[mask] @ normal
                fn = np.maximum(
                    self.env.contact.normal_stiffness * depth - self.env.contact.normal_damping * rate,
                    0.0,
                )
                vt = vel[mask] - np.outer(rate, normal)
                ft = -self.env.contact.tangential_damping * vt
                ft_norm = np.linalg.norm(ft, axis=1)
                cap = surface.friction * fn
                scale = np.where(ft_norm > cap, np.where(ft_norm > 0.0, cap / np.maximum(ft_norm, 1e-300), 0.0), 1.0)
                ft = ft * scale[:, None]
                f_cells = np.outer(fn, normal) + ft
                forces[mask] += f_cells
                normal_forces[mask] += fn
                depths[mask] = np.maximum(depths[mask], depth)
                if surface.joint is not None:
                    arm = cells[mask] - surface.joint.pivot
                    torque = np.cross(arm, -f_cells).sum(axis=0) @ surface.joint.axis
                    seat_torque[surface.surface_id] += float(torque)

            self._cell_forces[pid] = forces
            self._cell_normal_forces[pid] = normal_forces
            self._penetrations[pid] = depths
            total_force += forces.sum(axis=0)
            total_moment += np.cross(cells - self.state.com, forces).sum(axis=0)

        # Body integration: semi-implicit Euler (velocities first).
        R = rotation_from_euler(self.state.alpha)
        I_w = R @ self.model.inertia_body @ R.T
        com_acc = total_force / self.model.mass - self.model.gravity
        ang_acc = np.linalg.solve(I_w, total_moment - np.cross(self.state.ang_vel, I_w @ self.state.ang_vel))
        self.state.com_vel = self.state.com_vel + dt * com_acc
        self.state.ang_vel = self.state.ang_vel + dt * ang_acc
        self.state.com = self.state.com + dt * self.state.com_vel
        if abs(self.state.alpha[1]) >= PITCH_GUARD:
            raise SimulationBlowup(
                f"simulation blow-up at t={self.time:.3f}s: pitch {self.state.alpha[1]:.3f} rad "
                "reached the Euler-kinematics guard"
            )
        alpha_dot = np.linalg.solve(euler_rate_matrix(self.state.alpha), self.state.ang_vel)
        self.state.alpha = self.state.alpha + dt * alpha_dot

        for sid, torque in seat_torque.items():
            surface = next(s for s in self.env.surfaces if s.surface_id == sid)
            j = surface.joint
            acc = (torque - j.stiffness * self._seat_angle[sid] - j.damping * self._seat_rate[sid]) / j.inertia
            self._seat_rate[sid] += dt * acc
            self._seat_angle[sid] += dt * self._seat_rate[sid]

        self.time += dt
        if not np.all(np.isfinite(self.state.as_vector())) or np.linalg.norm(self.state.com) > 100.0:
            raise SimulationBlowup(f"simulation blow-up at t={self.time:.3f}s: state diverged "
                                   f"(|com| = {np.linalg.norm(self.state.com):.1f} m)")

    # -- sensing ----------------------------------------------------------

    def tip_angle(self) -> float:
        """Angle between the body z axis and world vertical."""
        R = rotation_from_euler(self.state.alpha)
        return float(np.arccos(np.clip(R[2, 2], -1.0, 1.0)))

    def measured_patch_wrench(self, patch_id: str) -> Wrench:
        """Contact wrench on the patch, local frame about the patch origin
        (what a 6-axis force/torque sensor in the limb would report)."""
        pose = self.patch_pose(patch_id)
        forces = self._cell_forces[patch_id]
        cells = pose.transform(self.patches[patch_id].cells_local)
        force = forces.sum(axis=0)
        moment = np.cross(cells - pose.position, forces).sum(axis=0)
        return Wrench(pose.rotation.T @ force, pose.rotation.T @ moment)

    def simulate_tactile(self, patch_id: str, rng: Optional[np.random.Generator] = None) -> np.ndarray:
        """Per-cell intensities: the inverse calibration of the cell normal
        forces, plus optional additive noise, clipped at zero."""
        spec = self.patches[patch_id]
        tau = spec.calibration.intensity(self._cell_normal_forces[patch_id])
        tau = np.where(self._cell_normal_forces[patch_id] > 0.0, tau, 0.0)
        if spec.noise_sigma > 0.0 and rng is not None:
            tau = tau + rng.normal(0.0, spec.noise_sigma, size=tau.shape)
        return np.maximum(tau, 0.0)

    def plant_state(self) -> PlantState:
        return PlantState(
            body=self.state.copy(),
            patch_poses={pid: self.patch_pose(pid) for pid in self.patches},
            penetrations={pid: self._penetrations[pid].copy() for pid in self.patches},
            seat_angles=dict(self._seat_angle),
            seat_rates=dict(self._seat_rate),
        )

    def snapshot(self) -> SensorSnapshot:
        """One sensor sample; draws any configured sensor noise, so call it
        exactly once per control tick to keep runs reproducible."""
        R_true = rotation_from_euler(self.state.alpha)
        R_meas = R_true
        if np.any(self.orientation_bias != 0.0):
            R_meas = exp_axis_angle(self.orientation_bias) @ R_meas
        if self.orientation_noise_rad > 0.0:
            R_meas = exp_axis_angle(self.rng.normal(0.0, self.orientation_noise_rad, size=3)) @ R_meas
        ft = {pid: self.measured_patch_wrench(pid)
              for pid, spec in sorted(self.patches.items()) if spec.sensor == "ft"}
        tactile = {pid: self.simulate_tactile(pid, self.rng)
                   for pid, spec in sorted(self.patches.items()) if spec.sensor == "tactile"}
        return SensorSnapshot(
            time=self.time,
            base_orientation=R_meas,
            patch_offsets={pid: Pose(self._offsets[pid].position.copy(), self._offsets[pid].rotation.copy())
                           for pid in self.patches},
            ft_wrenches=ft,
            tactile_intensities=tactile,
            truth=self.plant_state(),
        )


def feet_only_zmp(wrenches: Sequence[Wrench], origins: Sequence[np.ndarray],
                  min_force: float = 1.0) -> Optional[np.ndarray]:
    """CoP of the summed feet wrenches on the ground plane (z = 0).

    ``wrenches`` are world-frame wrenches about the matching ``origins``.
    Returns None when the feet carry less than ``min_force`` newtons.
    """
    force = np.zeros(3)
    moment = np.zeros(3)
    for w, o in zip(wrenches, origins):
        o = np.asarray(o, dtype=float).reshape(3)
        force += w.force
        moment += w.moment + np.cross(o, w.force)
    if force[2] <= min_force:
        return None
    return np.array([-moment[1] / force[2], moment[0] / force[2]])
