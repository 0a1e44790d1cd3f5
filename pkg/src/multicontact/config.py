"""Scenario configuration: YAML schema, validation, and override paths.

A scenario file describes one closed-loop run: the body model, contact
patches (with their sensing), environment surfaces, the contact-phase
sequence, gains, toggles, disturbances, duration, and seed. Field names
carry their units. Omitted gain sections fall back to the package defaults
(the reference controller constants baked into the stabilizer and damping
modules).

Validation collects every problem with its field path (for example
``patches[1].cells.pitch_m``) before failing, so a bad file is reported in
one pass. Overrides (``--set path=value``) use the same dotted/indexed
paths into the raw YAML tree, with YAML-parsed values.
"""

from __future__ import annotations

import copy
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from .contact import ContactPhase, ContactSequence
from .damping import CONTACT_PHASE_PARAMS, NON_CONTACT_PHASE_PARAMS, DampingParams
from .dynamics import CentroidalState, RobotInertialModel, rotation_from_euler
from .loop import LoopSettings
from .simulator import (
    ContactParams,
    DisturbancePulse,
    DisturbanceSchedule,
    EnvironmentModel,
    PatchSpec,
    SeatJoint,
    Surface,
    SurfaceMotion,
)
from .spatial import Pose
from .stabilizer import StabilizerGains
from .tactile import AffineCalibration, grid_layout


class ConfigError(Exception):
    """Validation failure; one message line per offending field path."""

    def __init__(self, errors: list[str]):
        self.errors = errors
        super().__init__("invalid scenario configuration:\n" + "\n".join(f"  {e}" for e in errors))


@dataclass
class Scenario:
    name: str
    duration: float
    seed: int
    sim_dt: float
    control_dt: float
    controller_start: float
    model: RobotInertialModel
    patches: list[PatchSpec]
    environment: EnvironmentModel
    sequence: ContactSequence
    disturbances: DisturbanceSchedule
    settings: LoopSettings
    initial_state: CentroidalState
    initial_patch_poses: dict[str, Pose]
    tracking_bandwidth_hz: float
    orientation_noise_rad: float
    orientation_bias_rpy: np.ndarray
    raw: dict = field(repr=False, default_factory=dict)


class _Reader:
    """dict reader that records missing/ill-typed fields with their paths."""

    def __init__(self, data: dict, path: str, errors: list[str]):
        if not isinstance(data, dict):
            errors.append(f"{path}: expected a mapping")
            data = {}
        self.data = data
        self.path = path
        self.errors = errors
        self._seen: set[str] = set()

    def child(self, key: str, required: bool = False) -> "_Reader":
        self._seen.add(key)
        sub = self.data.get(key)
        if sub is None:
            if required:
                self.errors.append(f"{self.path}{key}: required section missing")
            sub = {}
        return _Reader(sub, f"{self.path}{key}.", self.errors)

    def has(self, key: str) -> bool:
        return key in self.data and self.data[key] is not None

    def get(self, key: str, default: Any = None, required: bool = False) -> Any:
        self._seen.add(key)
        if key not in self.data or self.data[key] is None:
            if required:
                self.errors.append(f"{self.path}{key}: required field missing")
            return default
        return self.data[key]

    def number(self, key: str, default: Optional[float] = None, required: bool = False,
               minimum: Optional[float] = None, positive: bool = False) -> Optional[float]:
        val = self.get(key, default, required)
        if val is None:
            return None
        if isinstance(val, str):
            # YAML 1.1 reads exponents without a sign ("1.0e5") as strings.
            try:
                val = float(val)
            except ValueError:
                pass
        if not isinstance(val, (int, float)) or isinstance(val, bool):
            self.errors.append(f"{self.path}{key}: expected a number, got {val!r}")
            return default
        val = float(val)
        if positive and val <= 0.0:
            self.errors.append(f"{self.path}{key}: must be > 0")
        if minimum is not None and val < minimum:
            self.errors.append(f"{self.path}{key}: must be >= {minimum}")
        return val

    def integer(self, key: str, default: Optional[int] = None, required: bool = False,
                minimum: Optional[int] = None) -> Optional[int]:
        val = self.get(key, default, required)
        if val is None:
            return None
        if not isinstance(val, int) or isinstance(val, bool):
            self.errors.append(f"{self.path}{key}: expected an integer, got {val!r}")
            return default
        if minimum is not None and val < minimum:
            self.errors.append(f"{self.path}{key}: must be >= {minimum}")
        return val

    def boolean(self, key: str, default: bool) -> bool:
        val = self.get(key, default)
        if not isinstance(val, bool):
            self.errors.append(f"{self.path}{key}: expected true/false, got {val!r}")
            return default
        return val

    def string(self, key: str, default: Optional[str] = None, required: bool = False,
               choices: Optional[list[str]] = None) -> Optional[str]:
        val = self.get(key, default, required)
        if val is None:
            return None
        if isinstance(val, bool) and choices is not None and {"on", "off"} <= set(choices):
            val = "on" if val else "off"  # YAML 1.1 reads bare on/off as booleans
        if not isinstance(val, str):
            self.errors.append(f"{self.path}{key}: expected a string, got {val!r}")
            return default
        if choices is not None and val not in choices:
            self.errors.append(f"{self.path}{key}: must be one of {choices}, got {val!r}")
        return val

    def vector(self, key: str, size: int, default: Any = None, required: bool = False) -> Optional[np.ndarray]:
        val = self.get(key, None, required)
        if val is None:
            return None if default is None else np.asarray(default, dtype=float)
        try:
            arr = np.asarray(val, dtype=float).reshape(size)
        except (TypeError, ValueError):
            self.errors.append(f"{self.path}{key}: expected {size} numbers, got {val!r}")
            return None if default is None else np.asarray(default, dtype=float)
        return arr

    def items(self, key: str) -> list[tuple[str, "_Reader"]]:
        self._seen.add(key)
        sub = self.data.get(key) or {}
        if not isinstance(sub, dict):
            self.errors.append(f"{self.path}{key}: expected a mapping")
            return []
        return [(str(k), _Reader(v, f"{self.path}{key}.{k}.", self.errors)) for k, v in sub.items()]

    def sequence(self, key: str, required: bool = False) -> list["_Reader"]:
        self._seen.add(key)
        sub = self.data.get(key)
        if sub is None:
            if required:
                self.errors.append(f"{self.path}{key}: required list missing")
            return []
        if not isinstance(sub, list):
            self.errors.append(f"{self.path}{key}: expected a list")
            return []
        return [_Reader(v, f"{self.path}{key}[{i}].", self.errors) for i, v in enumerate(sub)]


def _parse_polygon(reader: _Reader) -> Optional[np.ndarray]:
    poly = reader.get("polygon_m", required=True)
    if poly is None:
        return None
    if isinstance(poly, dict) and "rect" in poly:
        try:
            w, h = [float(v) for v in poly["rect"]]
        except (TypeError, ValueError):
            reader.errors.append(f"{reader.path}polygon_m.rect: expected [width, height]")
            return None
        if w <= 0 or h <= 0:
            reader.errors.append(f"{reader.path}polygon_m.rect: width and height must be > 0")
            return None
        return np.array([[-w / 2, -h / 2, 0.0], [w / 2, -h / 2, 0.0],
                         [w / 2, h / 2, 0.0], [-w / 2, h / 2, 0.0]])
    if isinstance(poly, dict) and "vertices" in poly:
        try:
            verts = np.asarray(poly["vertices"], dtype=float)
            if verts.shape[1] == 2:
                verts = np.column_stack([verts, np.zeros(len(verts))])
            return verts.reshape(-1, 3)
        except (TypeError, ValueError, IndexError):
            reader.errors.append(f"{reader.path}polygon_m.vertices: expected a list of [x, y] points")
            return None
    reader.errors.append(f"{reader.path}polygon_m: expected {{rect: [w, h]}} or {{vertices: [...]}}")
    return None


def _parse_pose(reader: _Reader) -> Pose:
    pos = reader.vector("pos_m", 3, default=[0.0, 0.0, 0.0], required=True)
    rpy = reader.vector("rpy_rad", 3, default=[0.0, 0.0, 0.0])
    if pos is None:
        pos = np.zeros(3)
    if rpy is None:
        rpy = np.zeros(3)
    return Pose(pos, rotation_from_euler(rpy))


def _parse_damping_params(reader: _Reader, default: DampingParams) -> DampingParams:
    if not reader.data:
        return default
    kd = reader.vector("k_d", 6, default=default.k_damping)
    ks = reader.vector("k_s", 6, default=default.k_spring)
    kf = reader.vector("k_f", 6, default=default.k_wrench)
    try:
        return DampingParams(kd, ks, kf)
    except ValueError as exc:
        reader.errors.append(f"{reader.path.rstrip('.')}: {exc}")
        return default


def build_scenario(raw: dict, name_hint: str = "scenario") -> Scenario:
    errors: list[str] = []
    root = _Reader(raw, "", errors)

    name = root.string("name", default=name_hint)
    duration = root.number("duration_s", required=True, positive=True) or 1.0
    seed = root.integer("seed", default=0) or 0
    controller_start = root.number("controller_start_s", default=0.0, minimum=0.0)

    ts = root.child("timestep")
    sim_dt = ts.number("sim_dt_s", default=0.001, positive=True)
    control_dt = ts.number("control_dt_s", default=0.005, positive=True)
    mpc_interval = ts.number("mpc_interval_s", default=control_dt, positive=True)
    if sim_dt and control_dt:
        ratio = control_dt / sim_dt
        if abs(ratio - round(ratio)) > 1e-9:
            errors.append("timestep.control_dt_s: must be an integer multiple of sim_dt_s")

    rb = root.child("robot", required=True)
    mass = rb.number("mass_kg", default=60.0, positive=True)
    inertia = rb.vector("inertia_kgm2", 3, default=[10.0, 10.0, 5.0])
    com_height = rb.number("com_height_m", default=0.75, positive=True)

    mpc = root.child("mpc")
    horizon_steps = mpc.integer("horizon_steps", default=40, minimum=1)
    horizon_dt = mpc.number("horizon_dt_s", default=0.05, positive=True)
    input_weight = mpc.number("input_weight", default=5e-6, positive=True)
    state_weights = mpc.vector("state_weights", 12, default=np.ones(12))
    mpc_iters = mpc.integer("max_iterations", default=3, minimum=1)

    st = root.child("stabilizer")
    try:
        gains = StabilizerGains(
            p_lin=st.vector("p_lin", 3, default=[750.0, 750.0, 10000.0]),
            d_lin=st.vector("d_lin", 3, default=[150.0, 150.0, 150.0]),
            p_ang=st.vector("p_ang", 3, default=[750.0, 750.0, 750.0]),
            d_ang=st.vector("d_ang", 3, default=[150.0, 150.0, 150.0]),
            force_clamp=st.number("force_clamp_n", default=200.0, positive=True),
            moment_clamp=st.number("moment_clamp_nm", default=100.0, positive=True),
        )
    except ValueError as exc:
        errors.append(f"stabilizer: {exc}")
        gains = StabilizerGains()

    dp = root.child("damping")
    contact_damping = _parse_damping_params(dp.child("contact"), CONTACT_PHASE_PARAMS)
    non_contact_damping = _parse_damping_params(dp.child("non_contact"), NON_CONTACT_PHASE_PARAMS)
    damping_blend = dp.number("blend_s", default=0.05, minimum=0.0)
    clamp_lin = dp.number("clamp_lin_m", default=0.05, positive=True)
    clamp_ang = dp.number("clamp_ang_rad", default=0.3, positive=True)

    est = root.child("estimator")
    velocity_cutoff = est.number("velocity_cutoff_hz", default=20.0, positive=True)
    orientation_noise = est.number("orientation_noise_rad", default=0.0, minimum=0.0)
    orientation_bias = est.vector("orientation_bias_rpy", 3, default=np.zeros(3))

    tg = root.child("toggles")
    tactile_feedback = tg.boolean("tactile_feedback", default=True)
    region_update = tg.string("region_update", default="on", choices=["on", "off", "init-only"])
    region_settle = tg.number("region_settle_s", default=0.2, minimum=0.0)
    region_min_force = tg.number("region_min_force_n", default=20.0, minimum=0.0)

    ref = root.child("reference")
    ramp = ref.number("ramp_s", default=1.0, positive=True)
    swing_lift = ref.number("swing_lift_m", default=0.03, minimum=0.0)

    # Patches.
    patches: list[PatchSpec] = []
    patch_ids: set[str] = set()
    for pr in root.sequence("patches", required=True):
        pid = pr.string("id", required=True)
        if pid is None:
            continue
        if pid in patch_ids:
            errors.append(f"{pr.path}id: duplicate patch id '{pid}'")
        patch_ids.add(pid)
        polygon = _parse_polygon(pr)
        cells = pr.child("cells", required=True)
        nx = cells.integer("nx", default=3, minimum=1)
        ny = cells.integer("ny", default=3, minimum=1)
        pitch = cells.number("pitch_m", default=0.03, positive=True)
        cal = pr.child("calibration")
        slope = cal.number("slope_n_per_unit", default=50.0, positive=True)
        offset = cal.number("offset_n", default=0.0)
        sensor = pr.string("sensor", default="ft", choices=["ft", "tactile"])
        role = pr.string("role", default="support", choices=["support", "track"])
        kd_override = pr.vector("damping_kd", 6) if pr.has("damping_kd") else None
        surfaces_allowed = pr.get("surfaces")
        if surfaces_allowed is not None and not isinstance(surfaces_allowed, list):
            errors.append(f"{pr.path}surfaces: expected a list of surface ids")
            surfaces_allowed = None
        if polygon is None:
            continue
        try:
            patches.append(PatchSpec(
                patch_id=pid,
                polygon_local=polygon,
                cells_local=grid_layout(nx, ny, pitch),
                cell_pitch=pitch,
                friction=pr.number("friction", default=0.5, minimum=0.0),
                ridges_per_vertex=pr.integer("ridges_per_vertex", default=4, minimum=1),
                sensor=sensor,
                role=role,
                calibration=AffineCalibration(slope, offset),
                detect_threshold=pr.number("detect_threshold_n", default=1.0, positive=True),
                release_threshold=pr.number("release_threshold_n", default=0.5, minimum=0.0),
                noise_sigma=pr.number("noise_sigma", default=0.0, minimum=0.0),
                damping_kd=kd_override,
                surfaces=[str(s) for s in surfaces_allowed] if surfaces_allowed else None,
            ))
        except (ValueError, TypeError) as exc:
            errors.append(f"{pr.path.rstrip('.')}: {exc}")

    # Environment.
    env_r = root.child("environment", required=True)
    surfaces: list[Surface] = []
    surface_ids: set[str] = set()
    for sr in env_r.sequence("surfaces", required=True):
        sid = sr.string("id", required=True)
        if sid is None:
            continue
        if sid in surface_ids:
            errors.append(f"{sr.path}id: duplicate surface id '{sid}'")
        surface_ids.add(sid)
        joint = None
        if sr.has("joint"):
            jr = sr.child("joint")
            try:
                joint = SeatJoint(
                    axis=jr.vector("axis", 3, default=[0.0, 1.0, 0.0]),
                    pivot=jr.vector("pivot_m", 3, required=True, default=np.zeros(3)),
                    stiffness=jr.number("stiffness_nm_per_rad", default=1000.0, minimum=0.0),
                    damping=jr.number("damping_nms_per_rad", default=50.0, minimum=0.0),
                    inertia=jr.number("inertia_kgm2", default=0.5, positive=True),
                )
            except ValueError as exc:
                errors.append(f"{sr.path}joint: {exc}")
        half = None
        if sr.has("half_extents_m"):
            he = sr.vector("half_extents_m", 2)
            if he is not None:
                half = (float(he[0]), float(he[1]))
        try:
            surfaces.append(Surface(
                surface_id=sid,
                origin=sr.vector("origin_m", 3, default=np.zeros(3), required=True),
                normal=sr.vector("normal", 3, default=[0.0, 0.0, 1.0], required=True),
                friction=sr.number("friction", default=0.5, minimum=0.0),
                tangent_x=sr.vector("tangent_x", 3) if sr.has("tangent_x") else None,
                half_extents=half,
                error_offset=sr.vector("error_offset_m", 3, default=np.zeros(3)),
                joint=joint,
            ))
        except ValueError as exc:
            errors.append(f"{sr.path.rstrip('.')}: {exc}")

    cp = env_r.child("contact")
    contact_params = ContactParams(
        normal_stiffness=cp.number("cell_stiffness_n_per_m", default=1e5, positive=True),
        normal_damping=cp.number("cell_damping_ns_per_m", default=1e3, minimum=0.0),
        tangential_damping=cp.number("tangential_damping_ns_per_m", default=3e3, minimum=0.0),
    )
    motions: list[SurfaceMotion] = []
    for mr in env_r.sequence("motions"):
        msid = mr.string("surface", required=True)
        if msid is not None and msid not in surface_ids:
            errors.append(f"{mr.path}surface: unknown surface id '{msid}'")
        try:
            motions.append(SurfaceMotion(
                surface_id=msid or "",
                start=mr.number("start_s", required=True, default=0.0),
                end=mr.number("end_s", required=True, default=1.0),
                offset=mr.vector("offset_m", 3, default=np.zeros(3), required=True),
            ))
        except ValueError as exc:
            errors.append(f"{mr.path.rstrip('.')}: {exc}")

    # Contact sequence.
    phases: list[ContactPhase] = []
    for fr in root.child("sequence", required=True).sequence("phases", required=True):
        start = fr.number("start_s", required=True, default=0.0)
        end = fr.number("end_s", required=True, default=0.0)
        poses: dict[str, Pose] = {}
        for pid, cr in fr.items("contacts"):
            if pid not in patch_ids:
                errors.append(f"{cr.path.rstrip('.')}: unknown patch id '{pid}'")
                continue
            poses[pid] = _parse_pose(cr)
        if not poses:
            errors.append(f"{fr.path}contacts: at least one active patch required")
        com_wp = fr.vector("com_waypoint_m", 3) if fr.has("com_waypoint_m") else None
        rpy_wp = fr.vector("base_rpy_waypoint_rad", 3) if fr.has("base_rpy_waypoint_rad") else None
        try:
            phases.append(ContactPhase(start, end, poses, com_wp, rpy_wp))
        except ValueError as exc:
            errors.append(f"{fr.path.rstrip('.')}: {exc}")
    sequence = None
    if phases and not errors:
        try:
            sequence = ContactSequence(phases)
        except ValueError as exc:
            errors.append(f"sequence.phases: {exc}")

    # Disturbances.
    pulses: list[DisturbancePulse] = []
    for dr in root.sequence("disturbances"):
        s = dr.number("start_s", required=True, default=0.0)
        e = dr.number("end_s", required=True, default=0.0)
        f = dr.vector("force_n", 3, default=np.zeros(3), required=True)
        if e <= s:
            errors.append(f"{dr.path}end_s: must be after start_s")
        else:
            pulses.append(DisturbancePulse(s, e, f))

    plant_r = root.child("plant")
    bandwidth = plant_r.number("tracking_bandwidth_hz", default=30.0, positive=True)

    init = root.child("initial")
    init_com = init.vector("com_m", 3) if init.has("com_m") else None
    init_rpy = init.vector("rpy_rad", 3, default=np.zeros(3))

    if errors:
        raise ConfigError(errors)

    model = RobotInertialModel(mass=mass, inertia_body=np.diag(inertia))
    settings = LoopSettings(
        control_dt=control_dt,
        mpc_interval=mpc_interval,
        mpc_horizon_steps=horizon_steps,
        mpc_horizon_dt=horizon_dt,
        mpc_input_weight=input_weight,
        mpc_state_weights=state_weights,
        mpc_max_iterations=mpc_iters,
        stabilizer=gains,
        contact_damping=contact_damping,
        non_contact_damping=non_contact_damping,
        damping_blend=damping_blend,
        damping_linear_clamp=clamp_lin,
        damping_angular_clamp=clamp_ang,
        velocity_cutoff_hz=velocity_cutoff,
        com_height=com_height,
        reference_ramp=ramp,
        swing_lift=swing_lift,
        tactile_feedback=tactile_feedback,
        region_update=region_update,
        region_settle=region_settle,
        region_min_force=region_min_force,
    )

    first_phase = sequence.phases[0]
    initial_patch_poses: dict[str, Pose] = {}
    from .loop import DesiredPoseProvider

    provider = DesiredPoseProvider(sequence, swing_lift=swing_lift)
    for spec in patches:
        initial_patch_poses[spec.patch_id] = provider.pose(spec.patch_id, 0.0)
    if init_com is None:
        if first_phase.com_waypoint is not None:
            init_com = np.asarray(first_phase.com_waypoint, dtype=float)
        else:
            centroids = [initial_patch_poses[pid].transform(
                next(p.polygon_local for p in patches if p.patch_id == pid)).mean(axis=0)
                for pid in first_phase.poses]
            init_com = np.mean(centroids, axis=0) + np.array([0.0, 0.0, com_height])
    initial_state = CentroidalState(com=init_com, alpha=init_rpy)

    return Scenario(
        name=name,
        duration=duration,
        seed=seed,
        sim_dt=sim_dt,
        control_dt=control_dt,
        controller_start=controller_start,
        model=model,
        patches=patches,
        environment=EnvironmentModel(surfaces=surfaces, contact=contact_params, motions=motions),
        sequence=sequence,
        disturbances=DisturbanceSchedule(pulses),
        settings=settings,
        initial_state=initial_state,
        initial_patch_poses=initial_patch_poses,
        tracking_bandwidth_hz=bandwidth,
        orientation_noise_rad=orientation_noise,
        orientation_bias_rpy=orientation_bias,
        raw=raw,
    )


_PATH_TOKEN = re.compile(r"([A-Za-z_][A-Za-z0-9_\-]*)|\[(\d+)\]")


def apply_override(raw: dict, path: str, value: Any) -> dict:
    """Set a value in the raw config tree by dotted/indexed path.

    ``value`` may be any YAML-parseable object. Returns a new tree; the
    original is not modified. Unknown intermediate keys are created as maps,
    but list indices must already exist.
    """
    tokens: list[Any] = []
    pos = 0
    for m in _PATH_TOKEN.finditer(path):
        if m.start() > pos and path[pos:m.start()] not in (".", ""):
            raise ConfigError([f"override path '{path}': cannot parse near '{path[pos:m.start()]}'"])
        tokens.append(m.group(1) if m.group(1) is not None else int(m.group(2)))
        pos = m.end()
    if not tokens or pos != len(path):
        raise ConfigError([f"override path '{path}': cannot parse"])

    out = copy.deepcopy(raw)
    node: Any = out
    for i, tok in enumerate(tokens[:-1]):
        if isinstance(tok, int):
            if not isinstance(node, list) or tok >= len(node):
                raise ConfigError([f"override path '{path}': index [{tok}] out of range"])
            node = node[tok]
        else:
            if not isinstance(node, dict):
                raise ConfigError([f"override path '{path}': '{tok}' is not a mapping"])
            if tok not in node or node[tok] is None:
                node[tok] = {} if not isinstance(tokens[i + 1], int) else []
            node = node[tok]
    last = tokens[-1]
    if isinstance(last, int):
        if not isinstance(node, list) or last >= len(node):
            raise ConfigError([f"override path '{path}': index [{last}] out of range"])
        node[last] = value
    else:
        if not isinstance(node, dict):
            raise ConfigError([f"override path '{path}': parent is not a mapping"])
        node[last] = value
    return out


def parse_override_value(text: str) -> Any:
    return yaml.safe_load(text)


def bundled_scenario_names() -> list[str]:
    files = resources.files("multicontact").joinpath("scenarios")
    return sorted(p.name[:-5] for p in files.iterdir() if p.name.endswith(".yaml"))


def load_raw(config: str | Path) -> tuple[dict, str]:
    """Load raw YAML from a file path or a bundled scenario name."""
    path = Path(config)
    if path.exists():
        with open(path) as fh:
            return yaml.safe_load(fh) or {}, path.stem
    candidate = resources.files("multicontact").joinpath(f"scenarios/{config}.yaml")
    if candidate.is_file():
        return yaml.safe_load(candidate.read_text()) or {}, str(config)
    raise ConfigError([f"config '{config}': no such file or bundled scenario "
                       f"(bundled: {', '.join(bundled_scenario_names())})"])


def load_scenario(config: str | Path, overrides: Optional[list[tuple[str, Any]]] = None,
                  seed: Optional[int] = None) -> Scenario:
    raw, name = load_raw(config)
    for path, value in overrides or []:
        raw = apply_override(raw, path, value)
    if seed is not None:
        raw = apply_override(raw, "seed", int(seed))
    return build_scenario(raw, name_hint=name)
