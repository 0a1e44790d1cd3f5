"""Scenario runner: wire controller to plant, log, measure, sweep.

Runs are deterministic for a given config and seed: the only randomness is
sensor noise drawn from one per-run generator in a fixed order, and the CSV
log is written with fixed columns and 9-significant-digit decimal
formatting, so identical runs produce byte-identical logs.

Exit codes: 0 nominal, 2 the body fell (tip angle beyond the limit), 3 the
receding-horizon solver reported no progress for more than a second, 4
configuration error, 5 simulation blow-up.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
from shapely.geometry import MultiPoint, Point

from .config import Scenario, load_scenario
from .dynamics import rotation_from_euler
from .loop import ControllerLoop, TickResult
from .simulator import Plant, SimulationBlowup, feet_only_zmp
from .spatial import Pose

FALL_TIP_ANGLE = np.deg2rad(60.0)
EXIT_OK = 0
EXIT_FELL = 2
EXIT_NOT_CONVERGED = 3
EXIT_CONFIG = 4
EXIT_BLOWUP = 5


@dataclass
class RunMetrics:
    name: str
    seed: int
    duration: float
    completed_time: float
    fell: bool
    fall_time: Optional[float]
    blowup: bool
    com_rms: float
    zmp_margin_min: Optional[float]
    zmp_inside_fraction: float
    cop_margin_min: dict[str, float] = field(default_factory=dict)
    cop_inside_fraction: dict[str, float] = field(default_factory=dict)
    wrench_force_rms: dict[str, float] = field(default_factory=dict)
    wrench_moment_rms: dict[str, float] = field(default_factory=dict)
    mpc_nonconverged_max_streak: float = 0.0
    exit_code: int = EXIT_OK

    def to_dict(self) -> dict:
        def clean(v):
            if isinstance(v, dict):
                return {k: clean(x) for k, x in sorted(v.items())}
            if isinstance(v, float) and math.isnan(v):
                return None
            return v

        return {k: clean(v) for k, v in sorted(self.__dict__.items())}


def _fmt(x: float) -> str:
    return "%.9g" % x


def _signed_margin(polygon_2d: np.ndarray, point: np.ndarray) -> float:
    """Distance of ``point`` to the polygon boundary, positive inside."""
    poly = MultiPoint([tuple(p) for p in polygon_2d]).convex_hull
    p = Point(float(point[0]), float(point[1]))
    d = poly.exterior.distance(p)
    return d if poly.contains(p) else -d


class _CsvLog:
    def __init__(self, patch_ids: list[str]):
        self.patch_ids = patch_ids
        cols = ["t_s"]
        cols += [f"truth_{n}" for n in ("com_x", "com_y", "com_z", "roll", "pitch", "yaw",
                                        "vx", "vy", "vz", "wx", "wy", "wz")]
        cols += ["seat_angle_rad"]
        cols += [f"est_{n}" for n in ("com_x", "com_y", "com_z", "roll", "pitch", "yaw",
                                      "vx", "vy", "vz", "wx", "wy", "wz")]
        for pid in patch_ids:
            cols += [f"{pid}_wd_{a}" for a in ("fx", "fy", "fz", "mx", "my", "mz")]
            cols += [f"{pid}_wa_{a}" for a in ("fx", "fy", "fz", "mx", "my", "mz")]
            cols += [f"{pid}_lambda_sum"]
            cols += [f"{pid}_cop_x", f"{pid}_cop_y"]
            cols += [f"{pid}_comp_{a}" for a in ("tx", "ty", "tz", "rx", "ry", "rz")]
        cols += ["zmp_x", "zmp_y", "mpc_converged", "nnls_converged", "fell"]
        self.header = ",".join(cols)
        self.lines: list[str] = []

    def add(self, values: list[float]) -> None:
        self.lines.append(",".join(_fmt(v) for v in values))

    def write(self, path: Path) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            fh.write(self.header + "\n")
            for line in self.lines:
                fh.write(line + "\n")


@dataclass
class RunResult:
    metrics: RunMetrics
    log_path: Optional[Path]
    metrics_path: Optional[Path]


def run_scenario(scenario: Scenario, out_dir: Optional[str | Path] = None) -> RunResult:
    """Execute one scenario to completion (or fall/blow-up) and measure it."""
    plant = Plant(
        model=scenario.model,
        patches=scenario.patches,
        env=scenario.environment,
        initial_state=scenario.initial_state,
        initial_patch_poses=scenario.initial_patch_poses,
        disturbances=scenario.disturbances,
        tracking_bandwidth_hz=scenario.tracking_bandwidth_hz,
        orientation_noise_rad=scenario.orientation_noise_rad,
        orientation_bias_rpy=scenario.orientation_bias_rpy,
        seed=scenario.seed,
    )
    loop = ControllerLoop(scenario.model, scenario.patches, scenario.sequence, scenario.settings)
    patch_ids = sorted(p.patch_id for p in scenario.patches)
    specs = {p.patch_id: p for p in scenario.patches}
    log = _CsvLog(patch_ids)

    n_sub = round(scenario.control_dt / scenario.sim_dt)
    n_ticks = round(scenario.duration / scenario.control_dt)
    base0 = Pose(scenario.initial_state.com, rotation_from_euler(scenario.initial_state.alpha))

    fell = False
    fall_time: Optional[float] = None
    blowup = False
    com_sq_sum = 0.0
    com_n = 0
    zmp_min: Optional[float] = None
    zmp_inside = 0
    zmp_total = 0
    cop_min = {pid: np.inf for pid in patch_ids}
    cop_inside = {pid: 0 for pid in patch_ids}
    cop_total = {pid: 0 for pid in patch_ids}
    wrench_f_sq = {pid: 0.0 for pid in patch_ids}
    wrench_m_sq = {pid: 0.0 for pid in patch_ids}
    wrench_n = {pid: 0 for pid in patch_ids}
    nc_streak = 0.0
    nc_max = 0.0
    completed = 0.0

    try:
        for k in range(n_ticks):
            snap = plant.snapshot()
            t = snap.time
            out: Optional[TickResult] = None
            if t + 1e-9 >= scenario.controller_start:
                out = loop.tick(snap)
                commanded = out.commanded_poses
                base_des = out.planned_base
            else:
                commanded = {pid: loop.poses.pose(pid, t) for pid in patch_ids}
                base_des = base0

            # --- metrics -------------------------------------------------
            truth = snap.truth
            tip = plant.tip_angle()
            if out is not None:
                err = truth.body.com - out.reference_com
                com_sq_sum += float(err @ err)
                com_n += 1
                if not out.mpc_converged:
                    nc_streak += scenario.control_dt
                    nc_max = max(nc_max, nc_streak)
                else:
                    nc_streak = 0.0
            ft_ids = [pid for pid in patch_ids if specs[pid].sensor == "ft"]
            zmp = None
            if ft_ids:
                wrenches = []
                origins = []
                for pid in ft_ids:
                    w_local = plant.measured_patch_wrench(pid)
                    pose = truth.patch_poses[pid]
                    wrenches.append(w_local.rotated(pose.rotation))
                    origins.append(pose.position)
                zmp = feet_only_zmp(wrenches, origins)
                active_ft = [pid for pid in ft_ids if loop.poses.in_contact(pid, t)]
                if out is not None and zmp is not None and active_ft:
                    verts = np.vstack([loop.poses.pose(pid, t).transform(loop.local_polygons[pid])
                                       for pid in active_ft])
                    margin = _signed_margin(verts[:, :2], zmp)
                    zmp_min = margin if zmp_min is None else min(zmp_min, margin)
                    zmp_total += 1
                    zmp_inside += int(margin >= 0.0)
            cops: dict[str, np.ndarray] = {}
            for pid in patch_ids:
                w_meas = out.measured_wrenches[pid] if out is not None else plant.measured_patch_wrench(pid)
                cop = np.full(2, np.nan)
                if w_meas.force[2] > 5.0:
                    cop = np.array([-w_meas.moment[1] / w_meas.force[2],
                                    w_meas.moment[0] / w_meas.force[2]])
                    if out is not None and loop.poses.in_contact(pid, t):
                        margin = _signed_margin(loop.local_polygons[pid][:, :2], cop)
                        cop_min[pid] = min(cop_min[pid], margin)
                        cop_total[pid] += 1
                        cop_inside[pid] += int(margin >= 0.0)
                cops[pid] = cop
                if out is not None and loop.poses.in_contact(pid, t):
                    diff = out.measured_wrenches[pid].as_array() - out.desired_wrenches[pid].as_array()
                    wrench_f_sq[pid] += float(diff[:3] @ diff[:3])
                    wrench_m_sq[pid] += float(diff[3:] @ diff[3:])
                    wrench_n[pid] += 1

            if tip > FALL_TIP_ANGLE:
                fell = True
                fall_time = t
            # --- log row ---------------------------------------------------
            row = [t]
            row += list(truth.body.as_vector())
            seat = next(iter(truth.seat_angles.values()), 0.0)
            row += [seat]
            row += list(out.measured_state.as_vector()) if out is not None else [0.0] * 12
            for pid in patch_ids:
                wd = out.desired_wrenches[pid].as_array() if out is not None else np.zeros(6)
                wa = (out.measured_wrenches[pid] if out is not None
                      else plant.measured_patch_wrench(pid)).as_array()
                lam = out.lambda_totals.get(pid, 0.0) if out is not None else 0.0
                comp = out.compliances[pid] if out is not None else np.zeros(6)
                row += list(wd) + list(wa) + [lam] + list(cops[pid]) + list(comp)
            row += list(zmp) if zmp is not None else [np.nan, np.nan]
            row += [float(out.mpc_converged) if out is not None else 1.0,
                    float(out.nnls_converged) if out is not None else 1.0,
                    float(fell)]
            log.add(row)

            completed = t
            if fell:
                break
            for _ in range(n_sub):
                plant.step(commanded, base_des, scenario.sim_dt)
    except SimulationBlowup:
        blowup = True
        completed = plant.time

    exit_code = EXIT_OK
    if fell:
        exit_code = EXIT_FELL
    elif blowup:
        exit_code = EXIT_BLOWUP
    elif nc_max > 1.0:
        exit_code = EXIT_NOT_CONVERGED

    metrics = RunMetrics(
        name=scenario.name,
        seed=scenario.seed,
        duration=scenario.duration,
        completed_time=completed,
        fell=fell,
        fall_time=fall_time,
        blowup=blowup,
        com_rms=float(np.sqrt(com_sq_sum / com_n)) if com_n else float("nan"),
        zmp_margin_min=zmp_min,
        zmp_inside_fraction=(zmp_inside / zmp_total) if zmp_total else 1.0,
        cop_margin_min={pid: (float(cop_min[pid]) if cop_total[pid] else float("nan"))
                        for pid in patch_ids},
        cop_inside_fraction={pid: (cop_inside[pid] / cop_total[pid]) if cop_total[pid] else 1.0
                             for pid in patch_ids},
        wrench_force_rms={pid: (float(np.sqrt(wrench_f_sq[pid] / wrench_n[pid]))
                                if wrench_n[pid] else float("nan")) for pid in patch_ids},
        wrench_moment_rms={pid: (float(np.sqrt(wrench_m_sq[pid] / wrench_n[pid]))
                                 if wrench_n[pid] else float("nan")) for pid in patch_ids},
        mpc_nonconverged_max_streak=nc_max,
        exit_code=exit_code,
    )

    log_path = metrics_path = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        log_path = out / "log.csv"
        metrics_path = out / "metrics.json"
        log.write(log_path)
        with open(metrics_path, "w") as fh:
            json.dump(metrics.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    return RunResult(metrics, log_path, metrics_path)


def run_from_config(config: str, overrides: Optional[list[tuple[str, Any]]] = None,
                    out_dir: Optional[str] = None, seed: Optional[int] = None) -> RunResult:
    scenario = load_scenario(config, overrides=overrides, seed=seed)
    return run_scenario(scenario, out_dir=out_dir)


def _sweep_worker(args: tuple) -> dict:
    config, overrides, param, value, seed, out_dir = args
    ov = list(overrides) + [(param, value)]
    result = run_from_config(config, overrides=ov, out_dir=out_dir, seed=seed)
    return {"value": value, "metrics": result.metrics}


def sweep(config: str, param: str, values: list[Any],
          overrides: Optional[list[tuple[str, Any]]] = None,
          seed: Optional[int] = None, out_dir: Optional[str] = None,
          parallel: int = 1) -> list[dict]:
    """Run the scenario once per parameter value (shared seed) and collect
    metrics. An empty value list yields an empty table."""
    overrides = overrides or []
    jobs = []
    for i, v in enumerate(values):
        sub = str(Path(out_dir) / f"value_{i:03d}") if out_dir else None
        jobs.append((config, overrides, param, v, seed, sub))
    if not jobs:
        return []
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            return list(pool.map(_sweep_worker, jobs))
    return [_sweep_worker(j) for j in jobs]


def sweep_table(rows: list[dict]) -> str:
    lines = [f"{'value':>12}  {'fell':>5}  {'exit':>4}  {'com_rms_m':>10}  {'zmp_margin_min_m':>16}"]
    for row in rows:
        m: RunMetrics = row["metrics"]
        zmp = "-" if m.zmp_margin_min is None else f"{m.zmp_margin_min:.4f}"
        rms = "-" if math.isnan(m.com_rms) else f"{m.com_rms:.4f}"
        lines.append(f"{str(row['value']):>12}  {str(m.fell):>5}  {m.exit_code:>4}  {rms:>10}  {zmp:>16}")
    return "\n".join(lines)
