"""Receding-horizon centroidal planning by control-limited DDP.

The optimizer minimizes a quadratic tracking objective over the horizon,

    sum_k ||x_k - x_k_ref||^2_W  +  w_in * sum_k ||u_k||^2,

subject to the nonlinear centroidal dynamics and elementwise ``u >= 0``
(ridge force scales can only push). The bound constraint is handled exactly
in the backward pass by a projected-Newton box QP per step; feedback gains
are computed on the free subspace only, and the forward rollout clamps the
inputs. Regularization is Levenberg-style on the value Hessian, doubled on
failure, and the backtracking line search accepts any cost decrease, so the
reported cost sequence is non-increasing by construction.

The per-step contact structure (and hence the input dimension) may change
along the horizon as contact phases switch.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .contact import ContactSet
from .dynamics import CentroidalState, RobotInertialModel, step_dynamics, step_jacobians

LINE_SEARCH_STEPS = [1.0 / 2**i for i in range(7)]  # 1 .. 1/64
REG_MIN = 1e-6
REG_MAX = 1e6


@dataclass
class BoxQpResult:
    x: np.ndarray
    free: np.ndarray
    success: bool


def box_qp(
    H: np.ndarray,
    g: np.ndarray,
    lower: np.ndarray,
    x0: Optional[np.ndarray] = None,
    max_iterations: int = 100,
    tol: float = 1e-10,
) -> BoxQpResult:
    """Minimize ``0.5 x^T H x + g^T x`` subject to ``x >= lower``.

    Projected Newton: clamp the coordinates pinned at their bound by a
    positive gradient, take a Newton step on the free block, and backtrack
    with projection. ``H`` must be positive definite on every free block
    encountered; failure is reported rather than repaired.
    """
    n = g.shape[0]
    x = np.maximum(x0 if x0 is not None else np.zeros(n), lower)
    value = 0.5 * x @ H @ x + g @ x
    free = np.ones(n, dtype=bool)
    for _ in range(max_iterations):
        grad = g + H @ x
        clamped = (x <= lower + 1e-12) & (grad > 0.0)
        free = ~clamped
        if not np.any(free) or np.linalg.norm(grad[free], ord=np.inf) < tol:
            return BoxQpResult(x, free, True)
        Hff = H[np.ix_(free, free)]
        try:
            L = np.linalg.cholesky(Hff)
        except np.linalg.LinAlgError:
            return BoxQpResult(x, free, False)
        rhs = g[free] + H[np.ix_(free, ~free)] @ x[~free] if np.any(~free) else g[free]
        x_target = -np.linalg.solve(L.T, np.linalg.solve(L, rhs))
        direction = np.zeros(n)
        direction[free] = x_target - x[free]
        step = 1.0
        improved = False
        for _ in range(20):
            x_new = np.maximum(x + step * direction, lower)
            value_new = 0.5 * x_new @ H @ x_new + g @ x_new
            if value_new < value - 1e-16:
                x, value, improved = x_new, value_new, True
                break
            step *= 0.5
        if not improved:
            return BoxQpResult(x, free, True)
    return BoxQpResult(x, free, True)


@dataclass
class MpcProblem:
    """One receding-horizon optimization: dynamics model, horizon, weights,
    per-step contact structure, and the state reference over the horizon."""

    model: RobotInertialModel
    horizon_dt: float
    contacts: Sequence[ContactSet]        # one per horizon step (input stage)
    reference: np.ndarray                 # (N+1, 12)
    input_weight: float = 5e-6
    state_weights: np.ndarray = field(default_factory=lambda: np.ones(12))

    def __post_init__(self):
        self.reference = np.asarray(self.reference, dtype=float)
        self.state_weights = np.asarray(self.state_weights, dtype=float).reshape(12)
        if self.horizon_dt <= 0.0:
            raise ValueError("horizon discretization must be positive")
        if self.input_weight <= 0.0:
            raise ValueError("input weight must be positive")
        if len(self.contacts) < 1:
            raise ValueError("horizon must contain at least one step")
        if self.reference.shape != (len(self.contacts) + 1, 12):
            raise ValueError("reference must have horizon_steps + 1 states")

    @property
    def horizon_steps(self) -> int:
        return len(self.contacts)


@dataclass
class DdpResult:
    scales: list[np.ndarray]      # optimal ridge scales per step, all >= 0
    states: np.ndarray            # (N+1, 12) rollout, states[0] == x0
    cost: float
    converged: bool
    iterations: int
    cost_history: list[float]     # cost after every accepted iteration


def rollout(problem: MpcProblem, x0: np.ndarray, inputs: list[np.ndarray]) -> tuple[np.ndarray, float]:
    """Integrate the horizon and return (states, cost); infeasible rollouts
    (pitch singularity, non-finite states) report infinite cost."""
    N = problem.horizon_steps
    xs = np.zeros((N + 1, 12))
    xs[0] = x0
    W = problem.state_weights
    err = xs[0] - problem.reference[0]
    cost = float(err @ (W * err))
    state = CentroidalState.from_vector(x0)
    for k in range(N):
        u = inputs[k]
        cost += problem.input_weight * float(u @ u)
        try:
            state = step_dynamics(state, u, problem.model, problem.contacts[k], problem.horizon_dt)
        except ValueError:
            return xs, np.inf
        xs[k + 1] = state.as_vector()
        if not np.all(np.isfinite(xs[k + 1])):
            return xs, np.inf
        err = xs[k + 1] - problem.reference[k + 1]
        cost += float(err @ (W * err))
    return xs, cost


def cost_gradient(problem: MpcProblem, x0: np.ndarray, inputs: list[np.ndarray]) -> list[np.ndarray]:
    """Adjoint gradient of the rollout cost with respect to each input.

    Shares the analytic stage derivatives with the DDP backward pass; used by
    the finite-difference consistency checks.
    """
    N = problem.horizon_steps
    xs, _ = rollout(problem, x0, inputs)
    W = problem.state_weights
    lam = 2.0 * W * (xs[N] - problem.reference[N])
    grads: list[np.ndarray] = [np.zeros(0)] * N
    for k in range(N - 1, -1, -1):
        state = CentroidalState.from_vector(xs[k])
        fx, fu = step_jacobians(state, inputs[k], problem.model, problem.contacts[k], problem.horizon_dt)
        grads[k] = 2.0 * problem.input_weight * inputs[k] + fu.T @ lam
        lam = 2.0 * W * (xs[k] - problem.reference[k]) + fx.T @ lam
    return grads


def _backward_pass(
    problem: MpcProblem,
    xs: np.ndarray,
    inputs: list[np.ndarray],
    jacobians: list[tuple[np.ndarray, np.ndarray]],
    reg: float,
) -> Optional[tuple[list[np.ndarray], list[np.ndarray], float]]:
    """One regularized backward sweep.

    Returns (feedforward, feedback, expected full-step improvement) or None
    when a free-block factorization fails at this regularization.
    """
    N = problem.horizon_steps
    W = problem.state_weights
    Vx = 2.0 * W * (xs[N] - problem.reference[N])
    Vxx = 2.0 * np.diag(W)
    k_ff: list[np.ndarray] = [np.zeros(0)] * N
    K_fb: list[np.ndarray] = [np.zeros((0, 12))] * N
    expected = 0.0
    for k in range(N - 1, -1, -1):
        u = inputs[k]
        m = u.shape[0]
        fx, fu = jacobians[k]
        Qx = 2.0 * W * (xs[k] - problem.reference[k]) + fx.T @ Vx
        Qu = 2.0 * problem.input_weight * u + fu.T @ Vx
        Qxx = 2.0 * np.diag(W) + fx.T @ Vxx @ fx
        Quu = 2.0 * problem.input_weight * np.eye(m) + fu.T @ Vxx @ fu
        Qux = fu.T @ Vxx @ fx
        Vxx_reg = Vxx + reg * np.eye(12)
        Quu_reg = 2.0 * problem.input_weight * np.eye(m) + fu.T @ Vxx_reg @ fu
        Qux_reg = fu.T @ Vxx_reg @ fx

        qp = box_qp(Quu_reg, Qu, lower=-u)
        if not qp.success:
            return None
        k_ff[k] = qp.x
        K = np.zeros((m, 12))
        free = qp.free
        if np.any(free):
            Hff = Quu_reg[np.ix_(free, free)]
            try:
                L = np.linalg.cholesky(Hff)
            except np.linalg.LinAlgError:
                return None
            K[free] = -np.linalg.solve(L.T, np.linalg.solve(L, Qux_reg[free]))
        K_fb[k] = K
        expected -= float(qp.x @ Qu + 0.5 * qp.x @ (Quu @ qp.x))

        Vx = Qx + K.T @ (Quu @ qp.x + Qu) + Qux.T @ qp.x
        Vxx = Qxx + K.T @ Quu @ K + K.T @ Qux + Qux.T @ K
        Vxx = 0.5 * (Vxx + Vxx.T)
    return k_ff, K_fb, expected


def solve_mpc(
    problem: MpcProblem,
    x0: CentroidalState,
    warm_start: Optional[Sequence[np.ndarray]] = None,
    max_iterations: int = 30,
    cost_tolerance: float = 1e-9,
) -> DdpResult:
    """Solve the horizon problem; always returns scales >= 0 and their rollout.

    The warm start (clamped to the bounds) is the baseline iterate, so the
    returned cost never exceeds the warm start's cost. If DDP stops making
    progress at maximum regularization before ``max_iterations``, the best
    iterate is returned flagged ``converged=False``.
    """
    N = problem.horizon_steps
    inputs = []
    for k in range(N):
        m = problem.contacts[k].size
        if warm_start is not None and k < len(warm_start) and np.shape(warm_start[k]) == (m,):
            inputs.append(np.maximum(np.asarray(warm_start[k], dtype=float), 0.0))
        else:
            inputs.append(np.zeros(m))
    x0_vec = x0.as_vector()
    xs, cost = rollout(problem, x0_vec, inputs)
    if not np.isfinite(cost):
        inputs = [np.zeros(problem.contacts[k].size) for k in range(N)]
        xs, cost = rollout(problem, x0_vec, inputs)
    cost_history = [cost]
    reg = REG_MIN
    converged = False
    failed_at_max_reg = False
    iterations = 0
    jacobians: Optional[list[tuple[np.ndarray, np.ndarray]]] = None
    while iterations < max_iterations:
        iterations += 1
        if jacobians is None:
            jacobians = [
                step_jacobians(CentroidalState.from_vector(xs[k]), inputs[k], problem.model,
                               problem.contacts[k], problem.horizon_dt)
                for k in range(N)
            ]
        bp = _backward_pass(problem, xs, inputs, jacobians, reg)
        if bp is None:
            if reg >= REG_MAX:
                failed_at_max_reg = True
                break
            reg = min(2.0 * reg, REG_MAX)
            continue
        k_ff, K_fb, expected = bp
        if expected < cost_tolerance * (1.0 + abs(cost)):
            converged = True
            break
        accepted = False
        for step in LINE_SEARCH_STEPS:
            trial = []
            x = x0_vec
            trial_states = [x]
            feasible = True
            state = CentroidalState.from_vector(x0_vec)
            trial_cost = float((x - problem.reference[0]) @ (problem.state_weights * (x - problem.reference[0])))
            for k in range(N):
                u = np.maximum(inputs[k] + step * k_ff[k] + K_fb[k] @ (x - xs[k]), 0.0)
                trial.append(u)
                trial_cost += problem.input_weight * float(u @ u)
                try:
                    state = step_dynamics(state, u, problem.model, problem.contacts[k], problem.horizon_dt)
                except ValueError:
                    feasible = False
                    break
                x = state.as_vector()
                if not np.all(np.isfinite(x)):
                    feasible = False
                    break
                trial_states.append(x)
                err = x - problem.reference[k + 1]
                trial_cost += float(err @ (problem.state_weights * err))
            if feasible and trial_cost < cost:
                improvement = cost - trial_cost
                inputs = trial
                xs = np.array(trial_states)
                jacobians = None
                cost = trial_cost
                cost_history.append(cost)
                accepted = True
                reg = max(reg / 2.0, REG_MIN)
                if improvement < cost_tolerance * (1.0 + abs(cost)):
                    converged = True
                break
        if accepted:
            if converged:
                break
        else:
            if reg >= REG_MAX:
                failed_at_max_reg = True
                break
            reg = min(2.0 * reg, REG_MAX)
    if not converged and not failed_at_max_reg:
        # Iteration budget spent while still improving: usable in a receding
        # horizon, and distinct from the stalled-at-max-regularization case.
        converged = len(cost_history) > 1
    return DdpResult([u.copy() for u in inputs], xs.copy(), cost, converged, iterations, cost_history)


class CentroidalMpc:
    """Stateful receding-horizon controller wrapper around :func:`solve_mpc`.

    Keeps the warm start between solves; :meth:`advance` applies the first
    optimal input to the prediction model and shifts the warm start by one
    step (last step duplicated), which is how the plan rolls forward in time.
    """

    def __init__(
        self,
        model: RobotInertialModel,
        horizon_steps: int = 40,
        horizon_dt: float = 0.05,
        input_weight: float = 5e-6,
        state_weights: Optional[np.ndarray] = None,
        max_iterations: int = 30,
    ):
        self.model = model
        self.horizon_steps = int(horizon_steps)
        self.horizon_dt = float(horizon_dt)
        self.input_weight = float(input_weight)
        self.state_weights = np.ones(12) if state_weights is None else np.asarray(state_weights, dtype=float).reshape(12)
        self.max_iterations = int(max_iterations)
        self.warm_start: Optional[list[np.ndarray]] = None
        self.last_result: Optional[DdpResult] = None
        self.last_problem: Optional[MpcProblem] = None
        self.last_x0: Optional[CentroidalState] = None

    def solve(self, x0: CentroidalState, contacts: Sequence[ContactSet], reference: np.ndarray) -> DdpResult:
        problem = MpcProblem(
            model=self.model,
            horizon_dt=self.horizon_dt,
            contacts=contacts,
            reference=reference,
            input_weight=self.input_weight,
            state_weights=self.state_weights,
        )
        result = solve_mpc(problem, x0, warm_start=self.warm_start, max_iterations=self.max_iterations)
        self.warm_start = [u.copy() for u in result.scales]
        self.last_result = result
        self.last_problem = problem
        self.last_x0 = x0.copy()
        return result

    def advance(self) -> CentroidalState:
        """Plug the first optimal input into the dynamics, shift the warm start."""
        if self.last_result is None or self.last_problem is None or self.last_x0 is None:
            raise RuntimeError("advance() requires a previous solve")
        nxt = step_dynamics(
            self.last_x0,
            self.last_result.scales[0],
            self.model,
            self.last_problem.contacts[0],
            self.horizon_dt,
        )
        self.shift_warm_start()
        return nxt

    def shift_warm_start(self) -> None:
        if self.warm_start:
            self.warm_start = self.warm_start[1:] + [self.warm_start[-1].copy()]
