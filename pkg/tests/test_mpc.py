import itertools

import numpy as np
import pytest

from multicontact.contact import ContactPatch, ContactSet
from multicontact.distribution import distribute
from multicontact.dynamics import CentroidalState, RobotInertialModel, step_dynamics
from multicontact.mpc import CentroidalMpc, MpcProblem, box_qp, cost_gradient, rollout, solve_mpc
from multicontact.spatial import Pose, Wrench

from .test_contact import rect_patch

MODEL = RobotInertialModel(mass=60.0, inertia_body=np.diag([10.0, 10.0, 5.0]))
MG = 60.0 * 9.81
STANCE_WEIGHTS = np.concatenate([np.full(3, 1e4), np.full(3, 1e3), np.full(3, 1e4), np.full(3, 1e2)])


def stance_contacts():
    return ContactSet([
        rect_patch(center=(0.0, 0.12, 0.0), patch_id="lf"),
        rect_patch(center=(0.0, -0.12, 0.0), patch_id="rf"),
    ])


def stance_problem(horizon=12, dt=0.05, weights=STANCE_WEIGHTS, com=(0.0, 0.0, 0.8)):
    contacts = stance_contacts()
    ref_state = CentroidalState(com=np.asarray(com)).as_vector()
    reference = np.tile(ref_state, (horizon + 1, 1))
    return MpcProblem(
        model=MODEL,
        horizon_dt=dt,
        contacts=[contacts] * horizon,
        reference=reference,
        input_weight=5e-6,
        state_weights=weights,
    )


def vertical_point_problem(horizon, dt, z_ref, w_input=5e-6, wz=1.0, wv=1.0):
    """Point contact directly below the CoM, one vertical ridge: the rollout
    is exactly linear in the inputs and the states move only in (z, vz)."""
    patch = ContactPatch("pt", [np.zeros(3)], np.array([0.0, 0.0, 1.0]), 0.0,
                         Pose(np.zeros(3), np.eye(3)), ridges_per_vertex=1)
    contacts = ContactSet([patch])
    weights = np.zeros(12)
    weights[2] = wz
    weights[8] = wv
    reference = np.zeros((horizon + 1, 12))
    reference[:, 2] = z_ref
    return MpcProblem(model=MODEL, horizon_dt=dt, contacts=[contacts] * horizon,
                      reference=reference, input_weight=w_input, state_weights=weights)


def exhaustive_qp_oracle(problem: MpcProblem, z0, v0):
    """Global optimum of the vertical problem by enumerating all active sets
    of the equivalent nonnegative QP (valid because the rollout is linear)."""
    N = problem.horizon_steps
    dt = problem.horizon_dt
    m = problem.model.mass
    g = 9.81
    # z_k and v_k as affine functions of u: state = S @ u + s0.
    Z = np.zeros((N + 1, N))
    V = np.zeros((N + 1, N))
    z_const = np.zeros(N + 1)
    v_const = np.zeros(N + 1)
    z_const[0], v_const[0] = z0, v0
    for k in range(N):
        Z[k + 1] = Z[k] + dt * V[k]
        z_const[k + 1] = z_const[k] + dt * v_const[k]
        V[k + 1] = V[k]
        V[k + 1, k] += dt / m
        v_const[k + 1] = v_const[k] - dt * g
    wz = problem.state_weights[2]
    wv = problem.state_weights[8]
    zr = problem.reference[:, 2]
    H = 2.0 * (wz * Z.T @ Z + wv * V.T @ V + problem.input_weight * np.eye(N))
    f = 2.0 * (wz * Z.T @ (z_const - zr) + wv * V.T @ v_const)
    const = wz * np.sum((z_const - zr) ** 2) + wv * np.sum(v_const**2)

    best_u, best_cost = None, np.inf
    for active in itertools.product([False, True], repeat=N):
        active = np.array(active)
        u = np.zeros(N)
        free = ~active
        if np.any(free):
            u[free] = np.linalg.solve(H[np.ix_(free, free)], -f[free])
        if np.any(u < -1e-12):
            continue
        cost = 0.5 * u @ H @ u + f @ u + const
        if cost < best_cost:
            best_cost, best_u = cost, u
    return best_u, best_cost


class TestBoxQp:
    def test_unconstrained_solution(self):
        H = np.array([[4.0, 1.0], [1.0, 3.0]])
        g = np.array([-1.0, -2.0])
        res = box_qp(H, g, lower=np.full(2, -np.inf))
        assert res.success
        assert np.allclose(res.x, np.linalg.solve(H, -g), atol=1e-8)

    def test_active_bound(self):
        H = np.eye(2)
        g = np.array([1.0, -1.0])  # unconstrained optimum (-1, 1)
        res = box_qp(H, g, lower=np.zeros(2))
        assert np.allclose(res.x, [0.0, 1.0], atol=1e-9)
        assert not res.free[0] and res.free[1]

    def test_random_against_enumeration(self):
        rng = np.random.default_rng(0)
        for _ in range(30):
            n = int(rng.integers(2, 6))
            M = rng.normal(size=(n, n))
            H = M @ M.T + 0.1 * np.eye(n)
            g = rng.normal(size=n)
            lower = np.zeros(n)
            res = box_qp(H, g, lower)
            best = np.inf
            for active in itertools.product([False, True], repeat=n):
                x = np.zeros(n)
                free = ~np.array(active)
                if np.any(free):
                    x[free] = np.linalg.solve(H[np.ix_(free, free)], -g[free])
                if np.any(x < -1e-12):
                    continue
                best = min(best, 0.5 * x @ H @ x + g @ x)
            val = 0.5 * res.x @ H @ res.x + g @ res.x
            assert val <= best + 1e-8


class TestSolveMpc:
    def test_static_stance_matches_nnls_oracle(self):
        problem = stance_problem()
        x0 = CentroidalState.from_vector(problem.reference[0])
        result = solve_mpc(problem, x0, max_iterations=60)
        assert result.converged
        # Independent oracle: static gravity-compensating distribution.
        oracle = distribute(problem.contacts[0], Wrench([0.0, 0.0, MG]), x0.com)
        assert np.max(np.abs(result.scales[0] - oracle.x)) < 1e-3
        assert np.max(np.abs(result.states - problem.reference)) < 1e-4

    def test_nonnegativity(self):
        problem = stance_problem(horizon=8)
        x0 = CentroidalState(com=[0.05, -0.02, 0.83], com_vel=[0.1, 0.0, -0.2])
        result = solve_mpc(problem, x0, max_iterations=40)
        for u in result.scales:
            assert np.all(u >= -1e-12)

    def test_monotone_cost_history(self):
        problem = stance_problem(horizon=10)
        x0 = CentroidalState(com=[0.06, 0.03, 0.75], alpha=[0.05, -0.04, 0.0],
                             com_vel=[0.2, -0.1, 0.1], ang_vel=[0.1, 0.2, -0.1])
        result = solve_mpc(problem, x0, max_iterations=40)
        hist = np.array(result.cost_history)
        assert np.all(np.diff(hist) <= 0.0)
        assert result.states[0] == pytest.approx(x0.as_vector())

    def test_cost_not_worse_than_warm_start(self):
        problem = stance_problem(horizon=10)
        x0 = CentroidalState(com=[0.0, 0.0, 0.8])
        rng = np.random.default_rng(1)
        warm = [rng.uniform(0, 40, size=problem.contacts[0].size) for _ in range(10)]
        _, warm_cost = rollout(problem, x0.as_vector(), warm)
        result = solve_mpc(problem, x0, warm_start=warm, max_iterations=40)
        assert result.cost <= warm_cost

    def test_vertical_problem_matches_active_set_oracle(self):
        # Reference demands a drop faster than free fall, so some inputs clamp.
        for z_ref, z0, v0 in [(0.5, 1.0, 0.0), (1.2, 1.0, -0.5), (0.9, 1.0, 0.4)]:
            problem = vertical_point_problem(horizon=5, dt=0.1, z_ref=z_ref, wz=10.0, wv=1.0)
            u_ref, cost_ref = exhaustive_qp_oracle(problem, z0, v0)
            x0 = CentroidalState(com=[0.0, 0.0, z0], com_vel=[0.0, 0.0, v0])
            result = solve_mpc(problem, x0, max_iterations=100)
            u_ddp = np.array([u[0] for u in result.scales])
            assert result.cost == pytest.approx(cost_ref, abs=1e-4, rel=1e-6)
            assert np.max(np.abs(u_ddp - u_ref)) < 1e-4 * max(1.0, np.max(np.abs(u_ref)))

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        problem = stance_problem(horizon=4, dt=0.05, weights=np.ones(12))
        x0 = CentroidalState(com=[0.01, -0.02, 0.82], alpha=[0.03, 0.02, -0.01],
                             com_vel=[0.05, 0.0, 0.1], ang_vel=[0.1, -0.05, 0.0])
        inputs = [rng.uniform(10.0, 60.0, size=problem.contacts[0].size) for _ in range(4)]
        grads = cost_gradient(problem, x0.as_vector(), inputs)
        h = 1e-5
        for k in range(4):
            for j in rng.choice(problem.contacts[0].size, size=6, replace=False):
                up = [u.copy() for u in inputs]
                dn = [u.copy() for u in inputs]
                up[k][j] += h
                dn[k][j] -= h
                _, cu = rollout(problem, x0.as_vector(), up)
                _, cd = rollout(problem, x0.as_vector(), dn)
                fd = (cu - cd) / (2 * h)
                assert abs(grads[k][j] - fd) < 1e-4 * max(1.0, abs(fd))


class TestCentroidalMpc:
    def make_controller(self, horizon=12):
        return CentroidalMpc(MODEL, horizon_steps=horizon, horizon_dt=0.05,
                             input_weight=5e-6, state_weights=STANCE_WEIGHTS,
                             max_iterations=30)

    def test_advance_equals_step_dynamics(self):
        ctrl = self.make_controller()
        contacts = stance_contacts()
        ref = np.tile(CentroidalState(com=[0, 0, 0.8]).as_vector(), (13, 1))
        x0 = CentroidalState(com=[0.0, 0.01, 0.79])
        result = ctrl.solve(x0, [contacts] * 12, ref)
        expected = step_dynamics(x0, result.scales[0], MODEL, contacts, 0.05)
        nxt = ctrl.advance()
        assert np.allclose(nxt.as_vector(), expected.as_vector(), atol=1e-12)

    def test_warm_start_shift(self):
        ctrl = self.make_controller()
        contacts = stance_contacts()
        ref = np.tile(CentroidalState(com=[0, 0, 0.8]).as_vector(), (13, 1))
        result = ctrl.solve(CentroidalState(com=[0, 0, 0.8]), [contacts] * 12, ref)
        prev = [u.copy() for u in result.scales]
        ctrl.shift_warm_start()
        for k in range(11):
            assert np.array_equal(ctrl.warm_start[k], prev[k + 1])
        assert np.array_equal(ctrl.warm_start[11], prev[11])

    def test_hundred_step_station_keeping(self):
        # Receding-horizon regression: the planned state holds the reference.
        ctrl = self.make_controller(horizon=10)
        contacts = stance_contacts()
        ref_vec = CentroidalState(com=[0, 0, 0.8]).as_vector()
        ref = np.tile(ref_vec, (11, 1))
        state = CentroidalState(com=[0, 0, 0.8])
        for _ in range(100):
            ctrl.solve(state, [contacts] * 10, ref)
            state = ctrl.advance()
            assert np.linalg.norm(state.com - np.array([0, 0, 0.8])) < 1e-3

    def test_advance_requires_solve(self):
        ctrl = self.make_controller()
        with pytest.raises(RuntimeError):
            ctrl.advance()
