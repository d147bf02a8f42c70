"""Linear time-varying kinematic MPC raceline tracker.

Each control step: sample a speed-proportional reference horizon from the
raceline, linearize the kinematic bicycle about it (forward Euler, with
curvature-feedforward reference steering), stack the tracking/effort/rate
objective into one sparse QP with actuator and rate constraints, and solve
it with the internal ADMM solver. The first optimized control is applied;
if the solver fails to converge the previous command is held.

MPC state order is (x, y, v, psi) and control order is (a, delta).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import raceline as rl
from .qp import QPProblem, admm_solve
from .vehicle import Command, VehicleState, wrap_angle

NX = 4
NU = 2


@dataclass(frozen=True)
class MPCConfig:
    horizon: int = 8
    dt: float = 0.1
    state_weights: tuple = (13.5, 13.5, 5.5, 13.0)
    terminal_weights: tuple = (13.5, 13.5, 5.5, 13.0)
    control_weights: tuple = (0.01, 5.0)
    control_rate_weights: tuple = (0.01, 5.0)
    delta_max: float = 0.4189
    a_max: float = 3.0
    delta_rate_max: float = math.pi  # 180 deg/s
    wheelbase: float = 0.33
    v_floor: float = 0.5
    rho: float = 0.1
    tol: float = 1e-6
    max_iter: int = 4000

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.dt <= 0.0:
            raise ValueError("dt must be > 0")
        for w in (*self.state_weights, *self.terminal_weights,
                  *self.control_weights, *self.control_rate_weights):
            if w < 0.0:
                raise ValueError("weights must be >= 0")


@dataclass
class HorizonReference:
    """Reference (x, y, v, psi) tuples, one per horizon knot, psi unwrapped."""

    states: np.ndarray  # (horizon+1, 4)
    indices: np.ndarray  # raceline waypoint index per knot

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float)
        self.indices = np.asarray(self.indices, dtype=int)


def path_heading(raceline: rl.Raceline, i: int) -> float:
    """Tangent direction of the raceline segment leaving waypoint ``i``."""
    j = (i + 1) % raceline.n
    return math.atan2(raceline.y[j] - raceline.y[i], raceline.x[j] - raceline.x[i])


def build_reference(raceline: rl.Raceline, state: VehicleState,
                    config: MPCConfig) -> HorizonReference:
    """Sample the horizon by advancing waypoints proportional to speed."""
    i0 = rl.nearest_index(raceline, state.position)
    v_ref = max(state.v, config.v_floor)
    advance = max(int(round(v_ref * config.dt / raceline.mean_spacing)), 1)
    indices = (i0 + advance * np.arange(config.horizon + 1)) % raceline.n

    headings = np.array([path_heading(raceline, int(i)) for i in indices])
    psi = np.unwrap(headings)
    states = np.column_stack([
        raceline.x[indices],
        raceline.y[indices],
        raceline.v_max[indices],
        psi,
    ])
    return HorizonReference(states, indices)


def linearize(ref_state, ref_control, wheelbase: float, dt: float):
    """Discrete affine model about a reference point (forward Euler).

    Returns (A, B, c) with x_{t+1} = A x_t + B u_t + c exact at the
    reference: A ref_x + B ref_u + c = ref_x + dt f(ref).
    """
    _, _, v, psi = ref_state
    a_ref, delta_ref = ref_control
    if abs(delta_ref) >= math.pi / 2.0:
        raise ValueError("reference steering must satisfy |delta| < pi/2")

    cos_psi = math.cos(psi)
    sin_psi = math.sin(psi)
    tan_delta = math.tan(delta_ref)

    jac_x = np.zeros((NX, NX))
    jac_x[0, 2] = cos_psi
    jac_x[0, 3] = -v * sin_psi
    jac_x[1, 2] = sin_psi
    jac_x[1, 3] = v * cos_psi
    jac_x[3, 2] = tan_delta / wheelbase

    jac_u = np.zeros((NX, NU))
    jac_u[2, 0] = 1.0
    jac_u[3, 1] = v / (wheelbase * math.cos(delta_ref) ** 2)

    f_ref = np.array([
        v * cos_psi,
        v * sin_psi,
        a_ref,
        v / wheelbase * tan_delta,
    ])

    a_mat = np.eye(NX) + dt * jac_x
    b_mat = dt * jac_u
    c_vec = dt * (f_ref - jac_x @ np.asarray(ref_state, dtype=float)
                  - jac_u @ np.asarray(ref_control, dtype=float))
    return a_mat, b_mat, c_vec


def reference_controls(raceline: rl.Raceline, reference: HorizonReference,
                       config: MPCConfig) -> np.ndarray:
    """Zero acceleration plus curvature-feedforward steering per knot."""
    kappa = raceline.kappa[reference.indices[:-1]]
    delta_ff = np.arctan(config.wheelbase * kappa)
    controls = np.zeros((config.horizon, NU))
    controls[:, 1] = delta_ff
    return controls


def assemble_qp(reference: HorizonReference, linearizations, state: VehicleState,
                config: MPCConfig) -> QPProblem:
    """Stack states and controls into one sparse box-constrained QP.

    Decision vector: [x_0 .. x_T, u_0 .. u_{T-1}]. Equality rows (l == u)
    pin x_0 to the current state and encode the affine dynamics; inequality
    rows bound each control and each consecutive steering difference (two
    one-sided rows per pair).
    """
    horizon = config.horizon
    if len(linearizations) != horizon:
        raise ValueError("need one linearization per horizon step")
    if reference.states.shape != (horizon + 1, NX):
        raise ValueError("reference length must be horizon + 1")

    n_states = NX * (horizon + 1)
    n = n_states + NU * horizon

    def u_index(t):
        return n_states + NU * t

    # Cost: 0.5 z' P z + q' z  matching the sum of squared weighted errors.
    q_diag = np.asarray(config.state_weights, dtype=float)
    qf_diag = np.asarray(config.terminal_weights, dtype=float)
    r_diag = np.asarray(config.control_weights, dtype=float)
    rd_diag = np.asarray(config.control_rate_weights, dtype=float)

    p_rows, p_cols, p_vals = [], [], []
    q_vec = np.zeros(n)
    for t in range(horizon + 1):
        w = qf_diag if t == horizon else q_diag
        idx = NX * t + np.arange(NX)
        p_rows.extend(idx)
        p_cols.extend(idx)
        p_vals.extend(2.0 * w)
        q_vec[idx] = -2.0 * w * reference.states[t]
    for t in range(horizon):
        idx = u_index(t) + np.arange(NU)
        p_rows.extend(idx)
        p_cols.extend(idx)
        p_vals.extend(2.0 * r_diag)
    for t in range(horizon - 1):
        a_idx = u_index(t) + np.arange(NU)
        b_idx = u_index(t + 1) + np.arange(NU)
        for rows, cols, sign in ((a_idx, a_idx, 1.0), (b_idx, b_idx, 1.0),
                                 (a_idx, b_idx, -1.0), (b_idx, a_idx, -1.0)):
            p_rows.extend(rows)
            p_cols.extend(cols)
            p_vals.extend(sign * 2.0 * rd_diag)
    p_mat = sp.coo_matrix((p_vals, (p_rows, p_cols)), shape=(n, n)).tocsc()

    # Current-state psi expressed in the reference's unwrap branch.
    psi0 = reference.states[0, 3] + wrap_angle(state.theta - reference.states[0, 3])
    x_init = np.array([state.x, state.y, state.v, psi0])

    m_eq = NX * (horizon + 1)
    m_box = NU * horizon
    m_rate = 2 * (horizon - 1)
    m = m_eq + m_box + m_rate
    a_rows, a_cols, a_vals = [], [], []
    lower = np.empty(m)
    upper = np.empty(m)

    def put_block(row0, col0, block):
        r, c = np.nonzero(block)
        a_rows.extend(row0 + r)
        a_cols.extend(col0 + c)
        a_vals.extend(block[r, c])

    row = 0
    put_block(row, 0, np.eye(NX))
    lower[row:row + NX] = x_init
    upper[row:row + NX] = x_init
    row += NX
    for t in range(horizon):
        a_t, b_t, c_t = linearizations[t]
        put_block(row, NX * (t + 1), np.eye(NX))
        put_block(row, NX * t, -a_t)
        put_block(row, u_index(t), -b_t)
        lower[row:row + NX] = c_t
        upper[row:row + NX] = c_t
        row += NX

    for t in range(horizon):
        put_block(row, u_index(t), np.eye(NU))
        lower[row:row + NU] = (-config.a_max, -config.delta_max)
        upper[row:row + NU] = (config.a_max, config.delta_max)
        row += NU

    rate_bound = config.delta_rate_max * config.dt
    for t in range(horizon - 1):
        delta_t = u_index(t) + 1
        delta_next = u_index(t + 1) + 1
        a_rows.extend((row, row, row + 1, row + 1))
        a_cols.extend((delta_next, delta_t, delta_next, delta_t))
        a_vals.extend((1.0, -1.0, -1.0, 1.0))
        lower[row:row + 2] = -np.inf
        upper[row:row + 2] = rate_bound
        row += 2

    a_mat = sp.coo_matrix((a_vals, (a_rows, a_cols)), shape=(m, n)).tocsc()
    return QPProblem(p_mat, q_vec, a_mat, lower, upper)


@dataclass
class MPCStepInfo:
    iterations: int = 0
    primal_residual: float = float("nan")
    dual_residual: float = float("nan")
    converged: bool = False
    reference_head: tuple = (float("nan"),) * NX


class MPCTracker:
    """Stateful wrapper: warm starts between steps and holds on failure.

    ``log_path`` optionally streams one CSV row per step (reference head,
    applied control, solver iterations and residuals) for debugging.
    """

    def __init__(self, raceline: rl.Raceline, config: MPCConfig = MPCConfig(),
                 dt_control: float = 0.05, log_path=None):
        self.raceline = raceline
        self.config = config
        self.dt_control = dt_control
        self._log_file = None
        self._log_writer = None
        if log_path is not None:
            import csv
            self._log_file = open(log_path, "w", newline="")
            self._log_writer = csv.writer(self._log_file)
            self._log_writer.writerow(
                ["time", "ref_x", "ref_y", "ref_v", "ref_psi", "accel",
                 "delta", "iterations", "primal_residual", "dual_residual",
                 "converged"])
        self.reset()

    def reset(self):
        self.prev_command = Command(0.0, 0.0)
        self._warm_x = None
        self._warm_y = None
        self.last_info = MPCStepInfo()

    def close(self):
        if self._log_file is not None:
            self._log_file.flush()
            self._log_file.close()
            self._log_file = None
            self._log_writer = None

    def step(self, state: VehicleState, now: float = 0.0) -> Command:
        cmd, info = mpc_step(self.raceline, state, self.prev_command, self.config,
                             dt_control=self.dt_control,
                             warm=(self._warm_x, self._warm_y))
        self.last_info = info
        if info.converged:
            self._warm_x = info._solution_x
            self._warm_y = info._solution_y
        self.prev_command = cmd
        if self._log_writer is not None:
            accel = (cmd.v_cmd - state.v) / self.dt_control
            self._log_writer.writerow(
                [f"{now:.6f}", *(f"{r:.6f}" for r in info.reference_head),
                 f"{accel:.6f}", f"{cmd.delta:.6f}", info.iterations,
                 f"{info.primal_residual:.3e}", f"{info.dual_residual:.3e}",
                 int(info.converged)])
        return cmd


def mpc_step(raceline: rl.Raceline, state: VehicleState, prev_command: Command,
             config: MPCConfig, dt_control: float = 0.05, warm=(None, None)):
    """One MPC solve; returns (Command, MPCStepInfo).

    The first optimized control (a0, delta0) becomes a Command with
    ``v_cmd = v + a0 * dt_control``. On non-convergence the previous
    command is returned unchanged.
    """
    reference = build_reference(raceline, state, config)
    controls = reference_controls(raceline, reference, config)
    linearizations = [
        linearize(reference.states[t], controls[t], config.wheelbase, config.dt)
        for t in range(config.horizon)
    ]
    qp = assemble_qp(reference, linearizations, state, config)
    result = admm_solve(qp, tol_primal=config.tol, tol_dual=config.tol,
                        max_iter=config.max_iter, rho=config.rho,
                        x0=warm[0], y0=warm[1])

    info = MPCStepInfo(result.iterations, result.primal_residual,
                       result.dual_residual, result.converged,
                       tuple(reference.states[0]))
    info._solution_x = result.x
    info._solution_y = result.y
    if not result.converged:
        return prev_command, info

    u0 = result.x[NX * (config.horizon + 1): NX * (config.horizon + 1) + NU]
    a0, delta0 = float(u0[0]), float(u0[1])
    return Command(delta0, state.v + a0 * dt_control), info
