import numpy as np
import pytest

from multicontact.dynamics import CentroidalState, RobotInertialModel
from multicontact.simulator import (
    ContactParams,
    DisturbancePulse,
    DisturbanceSchedule,
    EnvironmentModel,
    PatchSpec,
    Plant,
    SeatJoint,
    Surface,
    feet_only_zmp,
    SimulationBlowup,
)
from multicontact.spatial import Pose, Wrench
from multicontact.tactile import AffineCalibration, grid_layout

MODEL = RobotInertialModel(mass=60.0, inertia_body=np.diag([10.0, 10.0, 5.0]))
MG = 60.0 * 9.81


def rect_polygon(w, h):
    return np.array([[-w / 2, -h / 2, 0.0], [w / 2, -h / 2, 0.0],
                     [w / 2, h / 2, 0.0], [-w / 2, h / 2, 0.0]])


def foot_spec(pid, sensor="ft", noise=0.0):
    return PatchSpec(
        patch_id=pid,
        polygon_local=rect_polygon(0.2, 0.1),
        cells_local=grid_layout(5, 3, 0.04),
        cell_pitch=0.04,
        friction=0.6,
        sensor=sensor,
        calibration=AffineCalibration(20.0),
        noise_sigma=noise,
    )


def ground_env(**kw):
    return EnvironmentModel(surfaces=[Surface("ground", [0, 0, 0], [0, 0, 1], friction=0.6)], **kw)


def standing_plant(seed=0, env=None, disturbances=None, com=(0.0, 0.0, 0.8)):
    env = env or ground_env()
    poses = {
        "lf": Pose([0.0, 0.11, 0.0], np.eye(3)),
        "rf": Pose([0.0, -0.11, 0.0], np.eye(3)),
    }
    plant = Plant(
        model=MODEL,
        patches=[foot_spec("lf"), foot_spec("rf")],
        env=env,
        initial_state=CentroidalState(com=np.asarray(com)),
        initial_patch_poses=poses,
        disturbances=disturbances,
        seed=seed,
    )
    return plant, poses


def settle(plant, poses, base, seconds=1.0, dt=1e-3):
    for _ in range(round(seconds / dt)):
        plant.step(poses, base, dt)


class TestPlantStatics:
    def test_rest_on_two_feet(self):
        plant, poses = standing_plant()
        base = Pose([0.0, 0.0, 0.8], np.eye(3))
        settle(plant, poses, base, seconds=1.0)
        total = sum(plant._cell_normal_forces[pid].sum() for pid in ("lf", "rf"))
        assert abs(total - MG) < 0.01 * MG
        assert np.linalg.norm(plant.state.com_vel) < 1e-3
        assert np.linalg.norm(plant.state.com[:2]) < 1e-3
        assert plant.state.com[2] < 0.8  # settled into the penalty springs
        assert plant.state.com[2] > 0.795

    def test_free_body_ballistic(self):
        env = EnvironmentModel(surfaces=[])
        poses = {"lf": Pose([0, 0.1, 0], np.eye(3)), "rf": Pose([0, -0.1, 0], np.eye(3))}
        plant = Plant(MODEL, [foot_spec("lf"), foot_spec("rf")], env,
                      CentroidalState(com=[0, 0, 1.0], com_vel=[0.5, 0.0, 1.0]),
                      poses)
        base = Pose([0, 0, 1.0], np.eye(3))
        dt = 1e-3
        steps = 400
        settle(plant, poses, base, seconds=steps * dt)
        t = steps * dt
        # Semi-implicit Euler: position uses the updated velocity each step,
        # giving z(t) = z0 + v0 t - g (t^2 + t dt)/2 exactly.
        z_exact = 1.0 + 1.0 * t - 9.81 * (t * t + t * dt) / 2.0
        x_exact = 0.5 * t
        assert abs(plant.state.com[2] - z_exact) < 1e-9
        assert abs(plant.state.com[0] - x_exact) < 1e-9

    def test_unilateral_and_friction_cone_per_cell(self):
        plant, poses = standing_plant(disturbances=DisturbanceSchedule(
            [DisturbancePulse(0.2, 0.6, [40.0, 25.0, 0.0])]))
        base = Pose([0.0, 0.0, 0.8], np.eye(3))
        dt = 1e-3
        for _ in range(800):
            plant.step(poses, base, dt)
            for pid in ("lf", "rf"):
                fn = plant._cell_normal_forces[pid]
                assert np.all(fn >= 0.0)
                ft = plant._cell_forces[pid] - fn[:, None] * np.array([0.0, 0.0, 1.0])
                assert np.all(np.linalg.norm(ft, axis=1) <= 0.6 * fn + 1e-9)

    def test_seat_deflection_matches_spring_statics(self):
        # A board on a pitch spring, loaded off-pivot: steady angle = torque/k.
        # The pad is wide so the contact itself keeps the free body upright.
        joint = SeatJoint(axis=[0, 1, 0], pivot=[0.0, 0.0, 0.4], stiffness=800.0,
                          damping=60.0, inertia=0.5)
        env = EnvironmentModel(surfaces=[
            Surface("seat", [0.0, 0.0, 0.4], [0, 0, 1], friction=0.8,
                    half_extents=(0.2, 0.3), joint=joint),
        ])
        pose = {"pad": Pose([0.03, 0.0, 0.4], np.eye(3))}
        pad = PatchSpec("pad", rect_polygon(0.25, 0.25), grid_layout(5, 5, 0.05), 0.05,
                        friction=0.8, sensor="ft")
        plant = Plant(MODEL, [pad], env, CentroidalState(com=[0.03, 0.0, 0.6]), pose)
        base = Pose([0.03, 0.0, 0.6], np.eye(3))
        settle(plant, pose, base, seconds=4.0)
        assert abs(plant._seat_rate["seat"]) < 1e-3
        # Oracle: at rest the joint balance gives angle = contact torque / k.
        cells = plant.patch_pose("pad").transform(pad.cells_local)
        forces = plant._cell_forces["pad"]
        torque = float(np.cross(cells - joint.pivot, -forces).sum(axis=0) @ joint.axis)
        angle = plant._seat_angle["seat"]
        assert abs(angle) > 5e-3  # the load does deflect the board
        assert abs(angle - torque / 800.0) < 0.01 * abs(torque / 800.0)


class TestTactileSimulation:
    def test_separated_patch_reads_zero(self):
        env = ground_env()
        pose = {"pad": Pose([0.0, 0.0, 0.5], np.eye(3))}
        pad = foot_spec("pad", sensor="tactile")
        plant = Plant(MODEL, [pad], env, CentroidalState(com=[0, 0, 1.0]), pose)
        tau = plant.simulate_tactile("pad")
        assert np.array_equal(tau, np.zeros(15))

    def test_uniform_press_equal_cells(self):
        plant, poses = standing_plant()
        base = Pose([0.0, 0.0, 0.8], np.eye(3))
        settle(plant, poses, base, seconds=1.0)
        for pid in ("lf", "rf"):
            fn = plant._cell_normal_forces[pid]
            assert fn.std() < 0.05 * fn.mean()

    def test_tactile_wrench_inverse_consistency(self):
        # Reading simulated intensities back through the calibration must
        # reproduce the plant's per-patch normal force.
        from multicontact.tactile import TactilePatch, tactile_wrench
        plant, poses = standing_plant()
        plant.patches["lf"].sensor = "tactile"
        base = Pose([0.0, 0.0, 0.8], np.eye(3))
        settle(plant, poses, base, seconds=1.0)
        spec = plant.patches["lf"]
        tau = plant.simulate_tactile("lf")
        patch = TactilePatch(
            positions=spec.cells_local,
            normals=np.tile([0.0, 0.0, 1.0], (15, 1)),
            intensities=tau,
            calibration=spec.calibration,
            cell_pitch=spec.cell_pitch,
        )
        w = tactile_wrench(patch)
        fz_truth = plant._cell_normal_forces["lf"].sum()
        assert abs(w.force[2] - fz_truth) < 0.01 * fz_truth

    def test_overhanging_patch_registers_covered_half_only(self):
        # Sheet hanging over the surface edge: only covered cells see contact.
        env = EnvironmentModel(surfaces=[
            Surface("block", [0.0, 0.0, 0.0], [0, 0, 1], friction=0.6, half_extents=(0.04, 0.2)),
        ])
        pad = foot_spec("pad", sensor="tactile")  # cells at x in {-.08,-.04,0,.04,.08}
        pose = {"pad": Pose([0.0, 0.0, 0.0], np.eye(3))}
        plant = Plant(MODEL, [pad], env, CentroidalState(com=[0, 0, 0.5]), pose)
        base = Pose([0.0, 0.0, 0.5], np.eye(3))
        settle(plant, pose, base, seconds=0.8)
        tau = plant.simulate_tactile("pad")
        cells = pad.cells_local
        covered = np.abs(cells[:, 0]) <= 0.04
        assert np.all(tau[covered] > 0.0)
        assert np.all(tau[~covered] == 0.0)


class TestDeterminismAndBlowup:
    def run_sequence(self, seed):
        plant, poses = standing_plant(
            seed=seed,
            disturbances=DisturbanceSchedule([DisturbancePulse(0.1, 0.3, [30.0, 0.0, 0.0])]),
        )
        plant.patches["lf"].noise_sigma = 0.05
        plant.patches["lf"].sensor = "tactile"
        base = Pose([0.0, 0.0, 0.8], np.eye(3))
        out = []
        for k in range(200):
            plant.step(poses, base, 1e-3)
            if k % 5 == 0:
                snap = plant.snapshot()
                out.append(np.concatenate([snap.truth.body.as_vector(),
                                           snap.tactile_intensities["lf"]]))
        return np.array(out)

    def test_identical_seeds_bitwise_identical(self):
        a = self.run_sequence(7)
        b = self.run_sequence(7)
        assert np.array_equal(a, b)

    def test_different_seeds_differ(self):
        a = self.run_sequence(7)
        b = self.run_sequence(8)
        assert not np.array_equal(a, b)

    def test_blowup_detected(self):
        env = EnvironmentModel(surfaces=[])
        poses = {"p": Pose([0, 0, 0], np.eye(3))}
        plant = Plant(MODEL, [foot_spec("p")], env,
                      CentroidalState(com=[0, 0, 1.0], com_vel=[200.0, 0, 0]), poses)
        with pytest.raises(SimulationBlowup):
            for _ in range(5000):
                plant.step(poses, Pose([0, 0, 1.0], np.eye(3)), 1e-3)


class TestFeetOnlyZmp:
    def test_single_centered_foot(self):
        w = Wrench([0.0, 0.0, MG], [0.0, 0.0, 0.0])
        zmp = feet_only_zmp([w], [np.array([0.05, 0.02, 0.0])])
        assert np.allclose(zmp, [0.05, 0.02], atol=1e-12)

    def test_two_feet_equal_load(self):
        w = Wrench([0.0, 0.0, MG / 2])
        zmp = feet_only_zmp([w, w], [np.array([0.0, 0.1, 0.0]), np.array([0.0, -0.1, 0.0])])
        assert np.allclose(zmp, [0.0, 0.0], atol=1e-12)

    def test_two_to_one_load_split(self):
        w1 = Wrench([0.0, 0.0, 200.0])
        w2 = Wrench([0.0, 0.0, 100.0])
        zmp = feet_only_zmp([w1, w2], [np.array([0.0, 0.1, 0.0]), np.array([0.0, -0.2, 0.0])])
        assert np.allclose(zmp, [0.0, 0.0], atol=1e-12)  # 2:1 split -> 1/3 point

    def test_unloaded_returns_none(self):
        assert feet_only_zmp([Wrench()], [np.zeros(3)]) is None
