"""The fixed-period control pipeline.

Each tick runs, in order: centroidal estimation, tactile processing with the
optional contact-region update, the receding-horizon solve (warm-started,
open loop on its own prediction model), PD stabilization of the gap between
plan and estimate, wrench distribution, and per-patch damping control. The
tick's output is the set of commanded contact-area poses plus the planned
base pose they are relative to; a position-controlled robot (or the plant's
pose trackers) realizes them kinematically.

No stage consumes the output of a later stage within one tick, and one tick
never mutates the plant: the loop is a pure consumer of sensor snapshots.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .contact import ContactPatch, ContactSequence, ContactSet, update_polygon
from .damping import (
    CONTACT_PHASE_PARAMS,
    NON_CONTACT_PHASE_PARAMS,
    DampingParams,
    PatchDampingController,
    commanded_pose,
)
from .distribution import distribute, patch_wrench_local
from .dynamics import CentroidalState, RobotInertialModel, rotation_from_euler, step_dynamics
from .estimator import AnchorContact, AnchorFrameInput, CentroidalEstimator
from .mpc import CentroidalMpc
from .simulator import PatchSpec, SensorSnapshot
from .spatial import Pose, Wrench, interpolate_pose
from .stabilizer import StabilizerGains, desired_resultant_wrench, feedback_delta
from .tactile import TactilePatch, detect_cells, estimate_contact_rectangle, tactile_wrench


class DesiredPoseProvider:
    """Per-patch desired poses over time: phase targets while in contact,
    interpolated swing trajectories (with a vertical lift) in between."""

    def __init__(self, sequence: ContactSequence, swing_lift: float = 0.03):
        self.sequence = sequence
        self.swing_lift = float(swing_lift)
        self._intervals: dict[str, list[tuple[float, float, Pose]]] = {}
        for phase in sequence.phases:
            for pid, pose in phase.poses.items():
                self._intervals.setdefault(pid, []).append((phase.start, phase.end, pose))
        for spans in self._intervals.values():
            spans.sort(key=lambda s: s[0])

    def patch_ids(self) -> list[str]:
        return sorted(self._intervals.keys())

    def pose(self, patch_id: str, t: float) -> Pose:
        spans = self._intervals[patch_id]
        prev = None
        for start, end, pose in spans:
            if start - 1e-9 <= t < end:
                return pose
            if end <= t:
                prev = (start, end, pose)
            elif start > t:
                if prev is None:
                    return pose
                s = (t - prev[1]) / (start - prev[1])
                smooth = s * s * (3.0 - 2.0 * s)
                mid = interpolate_pose(prev[2], pose, smooth)
                lift = self.swing_lift * np.sin(np.pi * np.clip(s, 0.0, 1.0))
                return Pose(mid.position + np.array([0.0, 0.0, lift]), mid.rotation)
        return prev[2] if prev is not None else spans[-1][2]

    def in_contact(self, patch_id: str, t: float) -> bool:
        for start, end, _ in self._intervals.get(patch_id, []):
            if start - 1e-9 <= t < end:
                return True
        return False


class ReferenceBuilder:
    """Piecewise-linear centroidal reference through per-phase waypoints.

    Default waypoint of a phase: centroid of its active support polygons
    plus the nominal CoM height; per-phase explicit waypoints override. The
    reference is re-anchored at the current plan whenever it is rebuilt
    (controller start, contact-region updates), ramping to the next waypoint
    over ``ramp`` seconds instead of stepping.
    """

    def __init__(self, sequence: ContactSequence, com_height: float, ramp: float = 1.0):
        self.sequence = sequence
        self.com_height = float(com_height)
        self.ramp = float(ramp)
        self._knots_t: np.ndarray = np.zeros(1)
        self._knots_com: np.ndarray = np.zeros((1, 3))
        self._knots_rpy: np.ndarray = np.zeros((1, 3))

    def phase_waypoint(self, phase_idx: int, polygons: dict[str, np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
        phase = self.sequence.phases[phase_idx]
        if phase.com_waypoint is not None:
            com = np.asarray(phase.com_waypoint, dtype=float).reshape(3)
        else:
            centroids = [polygons[pid].mean(axis=0) for pid in phase.poses if pid in polygons]
            if not centroids:
                raise ValueError(f"phase {phase_idx}: no support polygon to derive a waypoint from")
            base = np.mean(centroids, axis=0)
            com = base + np.array([0.0, 0.0, self.com_height])
        rpy = (np.zeros(3) if phase.base_rpy_waypoint is None
               else np.asarray(phase.base_rpy_waypoint, dtype=float).reshape(3))
        return com, rpy

    def rebuild(self, anchor_time: float, anchor_com: np.ndarray, anchor_rpy: np.ndarray,
                polygons_by_phase: dict[int, dict[str, np.ndarray]]) -> None:
        times = [anchor_time]
        coms = [np.asarray(anchor_com, dtype=float).reshape(3)]
        rpys = [np.asarray(anchor_rpy, dtype=float).reshape(3)]
        current = self.sequence.phase_index_at(anchor_time)
        for idx in range(current, len(self.sequence.phases)):
            phase = self.sequence.phases[idx]
            com, rpy = self.phase_waypoint(idx, polygons_by_phase[idx])
            knot_t = max(phase.start, min(anchor_time + self.ramp, phase.end)) if idx == current else phase.start
            if knot_t <= times[-1] + 1e-9:
                knot_t = times[-1] + 1e-9
            times.append(knot_t)
            coms.append(com)
            rpys.append(rpy)
        end = self.sequence.end_time
        if end > times[-1] + 1e-9:
            times.append(end)
            coms.append(coms[-1])
            rpys.append(rpys[-1])
        self._knots_t = np.array(times)
        self._knots_com = np.array(coms)
        self._knots_rpy = np.array(rpys)

    def sample(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        com = np.array([np.interp(t, self._knots_t, self._knots_com[:, i]) for i in range(3)])
        rpy = np.array([np.interp(t, self._knots_t, self._knots_rpy[:, i]) for i in range(3)])
        return com, rpy

    def reference_matrix(self, t0: float, steps: int, dt: float) -> np.ndarray:
        ref = np.zeros((steps + 1, 12))
        for k in range(steps + 1):
            com, rpy = self.sample(t0 + k * dt)
            ref[k, 0:3] = com
            ref[k, 3:6] = rpy
        return ref


@dataclass
class LoopSettings:
    control_dt: float = 0.005
    mpc_interval: float = 0.005
    mpc_horizon_steps: int = 40
    mpc_horizon_dt: float = 0.05
    mpc_input_weight: float = 5e-6
    mpc_state_weights: np.ndarray = field(default_factory=lambda: np.ones(12))
    mpc_max_iterations: int = 3
    stabilizer: StabilizerGains = field(default_factory=StabilizerGains)
    contact_damping: DampingParams = CONTACT_PHASE_PARAMS
    non_contact_damping: DampingParams = NON_CONTACT_PHASE_PARAMS
    damping_blend: float = 0.05
    damping_linear_clamp: float = 0.05
    damping_angular_clamp: float = 0.3
    velocity_cutoff_hz: float = 20.0
    com_height: float = 0.75
    reference_ramp: float = 1.0
    swing_lift: float = 0.03
    tactile_feedback: bool = True
    region_update: str = "on"          # "on" | "off" | "init-only"
    region_settle: float = 0.2
    region_min_force: float = 20.0     # N of tactile load before trusting a region
    distribution_weights: Optional[np.ndarray] = None


@dataclass
class TickResult:
    commanded_poses: dict[str, Pose]
    planned_base: Pose
    planned_state: CentroidalState
    measured_state: CentroidalState
    reference_com: np.ndarray
    feedback: Wrench
    desired_wrenches: dict[str, Wrench]       # patch-local, about patch origin
    measured_wrenches: dict[str, Wrench]      # patch-local, about patch origin
    lambda_totals: dict[str, float]           # distributed scale sums per patch
    compliances: dict[str, np.ndarray]
    mpc_converged: bool
    nnls_converged: bool
    region_updated: bool


class ControllerLoop:
    """One controller instance per scenario run; single-threaded ticking."""

    def __init__(self, model: RobotInertialModel, patches: list[PatchSpec],
                 sequence: ContactSequence, settings: LoopSettings):
        self.model = model
        self.specs = {p.patch_id: p for p in patches}
        self.sequence = sequence
        self.settings = settings
        self.poses = DesiredPoseProvider(sequence, swing_lift=settings.swing_lift)
        self.reference = ReferenceBuilder(sequence, settings.com_height, settings.reference_ramp)
        self.estimator = CentroidalEstimator(settings.velocity_cutoff_hz)
        self.mpc = CentroidalMpc(
            model,
            horizon_steps=settings.mpc_horizon_steps,
            horizon_dt=settings.mpc_horizon_dt,
            input_weight=settings.mpc_input_weight,
            state_weights=settings.mpc_state_weights,
            max_iterations=settings.mpc_max_iterations,
        )
        self.damping: dict[str, PatchDampingController] = {}
        for pid, spec in self.specs.items():
            contact = settings.contact_damping
            if spec.damping_kd is not None:
                contact = DampingParams(spec.damping_kd, contact.k_spring, contact.k_wrench)
            if spec.sensor == "tactile" and not settings.tactile_feedback:
                contact = DampingParams(contact.k_damping, contact.k_spring, np.zeros(6))
            self.damping[pid] = PatchDampingController(
                tactile_planar=(spec.sensor == "tactile"),
                contact_params=contact,
                non_contact_params=settings.non_contact_damping,
                blend_duration=settings.damping_blend,
                linear_clamp=settings.damping_linear_clamp,
                angular_clamp=settings.damping_angular_clamp,
            )

        self.local_polygons = {pid: spec.polygon_local.copy() for pid, spec in self.specs.items()}
        self._contact_cache: dict[int, ContactSet] = {}
        self._detect_masks: dict[str, np.ndarray] = {}
        self._region_evaluated: set[tuple[str, int]] = set()
        self._plan: Optional[CentroidalState] = None
        self._start_time: Optional[float] = None
        self._lambda_mpc: Optional[np.ndarray] = None
        self._mpc_contacts: Optional[ContactSet] = None
        self._mpc_converged = True
        self._lambda_dist_warm: Optional[np.ndarray] = None
        self._next_mpc_time = -np.inf
        self._last_phase_idx: Optional[int] = None
        self._last_mpc_shift_time: Optional[float] = None

    # -- contact bookkeeping ------------------------------------------------

    def support_ids(self, phase_idx: int) -> list[str]:
        phase = self.sequence.phases[phase_idx]
        return [pid for pid in phase.poses if self.specs[pid].role == "support"]

    def runtime_patch(self, patch_id: str, pose: Pose) -> ContactPatch:
        spec = self.specs[patch_id]
        return ContactPatch(
            patch_id=patch_id,
            vertices=pose.transform(self.local_polygons[patch_id]),
            surface_normal=pose.rotation[:, 2],
            friction_coeff=spec.friction,
            frame=pose,
            ridges_per_vertex=spec.ridges_per_vertex,
        )

    def contact_set(self, phase_idx: int) -> ContactSet:
        cached = self._contact_cache.get(phase_idx)
        if cached is not None:
            return cached
        phase = self.sequence.phases[phase_idx]
        patches = [self.runtime_patch(pid, phase.poses[pid]) for pid in self.support_ids(phase_idx)]
        contacts = ContactSet(patches)
        self._contact_cache[phase_idx] = contacts
        return contacts

    def world_polygons(self, t: float) -> dict[str, np.ndarray]:
        """Current-phase world polygons of every patch (for references/metrics)."""
        out = {}
        for pid in self.specs:
            pose = self.poses.pose(pid, t)
            out[pid] = pose.transform(self.local_polygons[pid])
        return out

    def _reference_polygons(self, phase_idx: int) -> dict[str, np.ndarray]:
        phase = self.sequence.phases[phase_idx]
        return {pid: phase.poses[pid].transform(self.local_polygons[pid])
                for pid in self.support_ids(phase_idx)}

    def _rebuild_reference(self, t: float, com: np.ndarray, rpy: np.ndarray) -> None:
        # Waypoints need each phase's polygons under that phase's own poses.
        by_phase = {idx: self._reference_polygons(idx) for idx in range(len(self.sequence.phases))}
        self.reference.rebuild(t, com, rpy, by_phase)

    # -- the tick -----------------------------------------------------------

    def tick(self, snap: SensorSnapshot) -> TickResult:
        t = snap.time
        dt = self.settings.control_dt
        phase_idx = self.sequence.phase_index_at(t)
        phase = self.sequence.phases[phase_idx]
        support = self.support_ids(phase_idx)

        # 1. Centroidal estimation, anchored at the planned contact points.
        # The anchor deliberately uses the plan's contact points, not the
        # compliance-shifted commands: contact pins the real limb to the real
        # surface, so any environment error shows up as a bounded estimation
        # bias (the same trade the hardware pipeline makes).
        totals = self._lambda_totals_for_anchor(support)
        anchor_contacts = [
            AnchorContact(
                planned_point=self.poses.pose(pid, t).position,
                planned_scale=totals[pid],
                offset_in_base=snap.patch_offsets[pid].position,
            )
            for pid in support
        ]
        measured = self.estimator.estimate(AnchorFrameInput(anchor_contacts, snap.base_orientation), dt)

        if self._plan is None:
            self._plan = measured.copy()
            self._start_time = t
            self._rebuild_reference(t, measured.com, measured.alpha)

        # 2. Tactile wrenches and the contact-region update.
        tactile_local: dict[str, Wrench] = {}
        region_updated = False
        for pid in sorted(snap.tactile_intensities.keys()):
            spec = self.specs[pid]
            sheet = TactilePatch(
                positions=spec.cells_local,
                normals=np.tile(np.array([0.0, 0.0, 1.0]), (spec.cells_local.shape[0], 1)),
                intensities=snap.tactile_intensities[pid],
                calibration=spec.calibration,
                cell_pitch=spec.cell_pitch,
                detect_threshold=spec.detect_threshold,
                release_threshold=spec.release_threshold,
                frame=self.poses.pose(pid, t),
            )
            mask = detect_cells(sheet, self._detect_masks.get(pid))
            self._detect_masks[pid] = mask
            tactile_local[pid] = tactile_wrench(sheet)
            region_updated |= self._maybe_update_region(pid, sheet, mask, t, phase_idx, phase.start)

        if region_updated:
            self._contact_cache.clear()
            self._rebuild_reference(t, self._plan.com, self._plan.alpha)

        # 3. Receding-horizon solve on the plan clock (open loop w.r.t. the
        #    estimate; feedback enters only through the stabilizer).
        contacts_now = self.contact_set(phase_idx)
        need_solve = (
            t + 1e-9 >= self._next_mpc_time
            or self._lambda_mpc is None
            or phase_idx != self._last_phase_idx
            or region_updated
            or self._lambda_mpc.shape[0] != contacts_now.size
        )
        if need_solve:
            self._solve_mpc(t)
            self._next_mpc_time = t + self.settings.mpc_interval
            self._last_phase_idx = phase_idx

        planned = self._plan.copy()

        # 4. Stabilization feedback on the plan-vs-estimate error.
        delta = feedback_delta(planned, measured, self.settings.stabilizer)
        desired_total = desired_resultant_wrench(self._mpc_contacts, self._lambda_mpc, planned.com, delta)

        # 5. Wrench distribution over the current contact set.
        warm = self._lambda_dist_warm if (
            self._lambda_dist_warm is not None and self._lambda_dist_warm.shape[0] == contacts_now.size
        ) else None
        dist = distribute(contacts_now, desired_total, planned.com,
                          weights=self.settings.distribution_weights, x0=warm)
        self._lambda_dist_warm = dist.x

        # 6. Damping control and commanded poses.
        commanded: dict[str, Pose] = {}
        desired_wrenches: dict[str, Wrench] = {}
        measured_wrenches: dict[str, Wrench] = {}
        compliances: dict[str, np.ndarray] = {}
        for pid, spec in sorted(self.specs.items()):
            des_pose = self.poses.pose(pid, t)
            active = self.poses.in_contact(pid, t)
            ctrl = self.damping[pid]
            ctrl.set_phase("contact" if active else "non-contact")
            if active and spec.role == "support" and pid in contacts_now.slices:
                w_des = patch_wrench_local(contacts_now, dist.x, pid, planned.com)
            else:
                w_des = Wrench()
            if spec.sensor == "ft":
                w_meas = snap.ft_wrenches.get(pid, Wrench())
            else:
                w_meas = tactile_local.get(pid, Wrench())
            comp = ctrl.step(w_meas, w_des, dt)
            commanded[pid] = commanded_pose(des_pose, comp)
            desired_wrenches[pid] = w_des
            measured_wrenches[pid] = w_meas
            compliances[pid] = comp.as_array().copy()

        planned_base = Pose(planned.com, rotation_from_euler(planned.alpha))
        ref_com, _ = self.reference.sample(t)

        # 7. Advance the plan one control period with the held optimal input.
        self._plan = step_dynamics(self._plan, self._lambda_mpc, self.model, self._mpc_contacts, dt)

        return TickResult(
            commanded_poses=commanded,
            planned_base=planned_base,
            planned_state=planned,
            measured_state=measured,
            reference_com=ref_com,
            feedback=delta,
            desired_wrenches=desired_wrenches,
            measured_wrenches=measured_wrenches,
            lambda_totals=contacts_now.patch_totals(dist.x),
            compliances=compliances,
            mpc_converged=self._mpc_converged,
            nnls_converged=dist.converged,
            region_updated=region_updated,
        )

    # -- helpers ------------------------------------------------------------

    def _lambda_totals_for_anchor(self, support: list[str]) -> dict[str, float]:
        totals = {pid: 0.0 for pid in support}
        if self._lambda_mpc is not None and self._mpc_contacts is not None:
            mpc_totals = self._mpc_contacts.patch_totals(self._lambda_mpc)
            for pid in support:
                totals[pid] = mpc_totals.get(pid, 0.0)
        if sum(totals.values()) <= 0.0:
            totals = {pid: 1.0 for pid in support}
        return totals

    def _maybe_update_region(self, pid: str, sheet: TactilePatch, mask: np.ndarray,
                             t: float, phase_idx: int, phase_start: float) -> bool:
        spec = self.specs[pid]
        mode = self.settings.region_update
        if mode == "off" or spec.role != "support":
            return False
        if not self.poses.in_contact(pid, t):
            return False
        start = max(phase_start, self._start_time if self._start_time is not None else phase_start)
        if t < start + self.settings.region_settle:
            return False
        if mode == "init-only" and (pid, phase_idx) in self._region_evaluated:
            return False
        # Wait for the contact to actually carry load; a barely-touching sheet
        # would freeze a sliver of the true region.
        if float(sheet.forces().sum()) < self.settings.region_min_force:
            return False
        rect_local = estimate_contact_rectangle(sheet, mask)
        if rect_local is None:
            return False
        self._region_evaluated.add((pid, phase_idx))
        current = self.runtime_patch(pid, sheet.frame)
        updated = update_polygon(current, sheet.frame.transform(rect_local))
        if updated is current:
            return False
        inv = sheet.frame.inverse()
        self.local_polygons[pid] = inv.transform(updated.vertices)
        return True

    def _solve_mpc(self, t: float) -> None:
        N = self.settings.mpc_horizon_steps
        dtau = self.settings.mpc_horizon_dt
        if self._last_mpc_shift_time is not None:
            shifts = int(np.floor((t - self._last_mpc_shift_time) / dtau + 1e-9))
            for _ in range(max(0, shifts)):
                self.mpc.shift_warm_start()
            if shifts > 0:
                self._last_mpc_shift_time += shifts * dtau
        else:
            self._last_mpc_shift_time = t
        contacts = [self.contact_set(self.sequence.phase_index_at(t + k * dtau)) for k in range(N)]
        reference = self.reference.reference_matrix(t, N, dtau)
        result = self.mpc.solve(self._plan, contacts, reference)
        self._lambda_mpc = result.scales[0]
        self._mpc_contacts = contacts[0]
        self._mpc_converged = result.converged
