"""Episodic environment: (lookahead, gain) actions drive Pure Pursuit.

Each step clips the raw 2-D action to its bounds, publishes it to the
controller's external slot (always fresh during training), lets the
controller smooth it and compute steering, advances the simulator one
control period, and scores the transition with the shaped reward.
Episodes end on collision, on completing the configured lap count, or at
the step cap.

Environment instances are single-threaded and own their simulator state;
run several independent instances for parallel collection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import raceline as rl
from .pure_pursuit import (ExternalSource, GAIN_BOUNDS, LOOKAHEAD_BOUNDS,
                           PPParams, PurePursuitController, TEACHER_L_BASE,
                           TEACHER_L_SPEED, teacher_gain, teacher_lookahead)
from .vehicle import SimConfig, VehicleState, collision_check, control_step, wrap_angle

OBS_DIM = 5


@dataclass(frozen=True)
class RewardWeights:
    """Shaped-reward weights plus the indicator thresholds and clip range."""

    speed: float = 1.8
    lookahead_tracking: float = 3.0
    gain_tracking: float = 0.0
    lookahead_jerk: float = 0.4
    gain_jerk: float = 0.0
    curvature: float = 1.5
    lookahead_curvature: float = 2.0
    preshorten_bonus: float = 1.5
    collision: float = 10.0
    slow: float = 0.5
    progress: float = 1.0
    clip_lo: float = -30.0
    clip_hi: float = 100.0
    kappa_bend: float = 0.3
    v_slow: float = 0.5

    def __post_init__(self):
        for name in ("speed", "lookahead_tracking", "gain_tracking",
                     "lookahead_jerk", "gain_jerk", "curvature",
                     "lookahead_curvature", "preshorten_bonus", "collision",
                     "slow", "progress"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0")
        if self.clip_lo >= self.clip_hi:
            raise ValueError("clip_lo must be < clip_hi")


@dataclass
class RewardContext:
    """Everything one reward evaluation needs, already extracted."""

    v: float
    lookahead: float
    gain: float
    prev_lookahead: float
    prev_gain: float
    kappa_max: float
    kappa_local: float
    progress: int
    collision: bool
    slow: bool
    teacher_lookahead: float
    teacher_gain: float


def preshorten_ceiling(v: float) -> float:
    """Lookahead ceiling under which the pre-shortening bonus can fire."""
    return TEACHER_L_BASE + TEACHER_L_SPEED * v


def compute_reward(ctx: RewardContext, weights: RewardWeights) -> float:
    """Shaped scalar reward, clipped to the configured range."""
    r = weights.speed * ctx.v
    r -= weights.lookahead_tracking * abs(ctx.lookahead - ctx.teacher_lookahead)
    r -= weights.gain_tracking * abs(ctx.gain - ctx.teacher_gain)
    r -= weights.lookahead_jerk * abs(ctx.lookahead - ctx.prev_lookahead)
    r -= weights.gain_jerk * abs(ctx.gain - ctx.prev_gain)
    r -= weights.curvature * abs(ctx.kappa_local)
    r -= weights.lookahead_curvature * (ctx.lookahead * ctx.kappa_max)
    if ctx.kappa_max > weights.kappa_bend and ctx.lookahead <= preshorten_ceiling(ctx.v):
        r += weights.preshorten_bonus
    if ctx.collision:
        r -= weights.collision
    if ctx.slow:
        r -= weights.slow
    r += weights.progress * ctx.progress
    return max(weights.clip_lo, min(weights.clip_hi, r))


def observe(state: VehicleState, raceline: rl.Raceline) -> np.ndarray:
    """Observation vector [v, kappa0, kappa1, kappa2, dkappa]."""
    i = rl.nearest_index(raceline, state.position)
    t = rl.taps(raceline, i)
    return np.array([state.v, t.kappa0, t.kappa1, t.kappa2, t.dkappa])


@dataclass
class EnvConfig:
    # Long horizon: with a 5-feature observation the critic cannot see
    # episode phase, so frequent lap-count terminations put an invisible
    # sawtooth in the returns and stall learning. The step cap binds.
    laps: int = 50
    max_steps: int = 6000
    spawn_lateral_jitter: float = 0.1
    spawn_heading_jitter: float = 0.05
    spawn_speed_fraction: float = 0.5
    action_mode: str = "joint"  # joint | ld_only
    fixed_gain: float = 0.9     # gain pinned in ld_only mode

    def __post_init__(self):
        if self.action_mode not in ("joint", "ld_only"):
            raise ValueError("action_mode must be 'joint' or 'ld_only'")
        if self.laps < 1 or self.max_steps < 1:
            raise ValueError("laps and max_steps must be >= 1")

    @property
    def action_dim(self) -> int:
        return 2 if self.action_mode == "joint" else 1


class RacingEnv:
    """Gym-style episodic wrapper around raceline + Pure Pursuit + simulator.

    ``trace_path`` optionally streams one CSV row per step (observation,
    raw and smoothed action, reward terms, flags) for reward debugging.
    """

    def __init__(self, raceline: rl.Raceline, sim_config: SimConfig = SimConfig(),
                 weights: RewardWeights = RewardWeights(),
                 env_config: EnvConfig = EnvConfig(), seed: int = 0,
                 trace_path=None):
        self.raceline = raceline
        self.sim_config = sim_config
        self.weights = weights
        self.config = env_config
        self.rng = np.random.default_rng(seed)
        self.controller = PurePursuitController(raceline, ExternalSource())
        self._trace_file = None
        self._trace_writer = None
        if trace_path is not None:
            import csv
            self._trace_file = open(trace_path, "w", newline="")
            self._trace_writer = csv.writer(self._trace_file)
            self._trace_writer.writerow(
                ["step", "v", "kappa0", "kappa1", "kappa2", "dkappa",
                 "raw_lookahead", "raw_gain", "lookahead", "gain", "reward",
                 "speed_term", "lookahead_teacher_gap", "lookahead_jerk",
                 "curvature_term", "cross_term", "preshorten", "progress",
                 "collision", "slow", "mode"])
        self._done = True

    def close(self):
        if self._trace_file is not None:
            self._trace_file.flush()
            self._trace_file.close()
            self._trace_file = None
            self._trace_writer = None

    @property
    def observation_dim(self) -> int:
        return OBS_DIM

    @property
    def action_dim(self) -> int:
        return self.config.action_dim

    def reset(self, seed: int | None = None, spawn_index: int | None = None) -> np.ndarray:
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        track = self.raceline
        if spawn_index is None:
            spawn_index = int(self.rng.integers(track.n))
        lat = float(self.rng.uniform(-1.0, 1.0)) * self.config.spawn_lateral_jitter
        dtheta = float(self.rng.uniform(-1.0, 1.0)) * self.config.spawn_heading_jitter

        heading = self._tangent(spawn_index)
        nx, ny = -math.sin(heading), math.cos(heading)  # unit left normal
        self.state = VehicleState(
            float(track.x[spawn_index]) + lat * nx,
            float(track.y[spawn_index]) + lat * ny,
            wrap_angle(heading + dtheta),
            float(track.v_max[spawn_index]) * self.config.spawn_speed_fraction,
        )
        self.prev_delta = 0.0
        self.step_count = 0
        self.total_progress = 0
        self.prev_index = rl.nearest_index(track, self.state.position)
        if self.config.action_mode == "ld_only":
            self.controller.reset(PPParams(1.0, self.config.fixed_gain))
        else:
            self.controller.reset()
        self.prev_params = self.controller.smoother.state()
        self._done = False
        return observe(self.state, track)

    def _tangent(self, i: int) -> float:
        track = self.raceline
        j = (i + 1) % track.n
        return math.atan2(track.y[j] - track.y[i], track.x[j] - track.x[i])

    def _clip_action(self, action) -> PPParams:
        action = np.asarray(action, dtype=float).ravel()
        if action.shape[0] != self.config.action_dim:
            raise ValueError(f"expected {self.config.action_dim}-D action, got {action.shape[0]}")
        lookahead = min(max(float(action[0]), LOOKAHEAD_BOUNDS[0]), LOOKAHEAD_BOUNDS[1])
        if self.config.action_mode == "joint":
            gain = min(max(float(action[1]), GAIN_BOUNDS[0]), GAIN_BOUNDS[1])
        else:
            gain = self.config.fixed_gain
        return PPParams(lookahead, gain)

    def step(self, action):
        """Returns (observation, reward, done, info)."""
        if self._done:
            raise RuntimeError("step() called on a finished episode; call reset()")
        track = self.raceline
        now = self.step_count * self.sim_config.dt_control

        raw = self._clip_action(action)
        self.controller.source.publish(raw, now)
        result = self.controller.step(self.state, now)
        self.state, self.prev_delta = control_step(
            self.state, result.command, self.prev_delta, self.sim_config)
        self.step_count += 1

        index = rl.nearest_index(track, self.state.position)
        progress = rl.progress_count(self.prev_index, index, track.n)
        self.prev_index = index
        self.total_progress += progress

        collided = collision_check(track, self.state)
        slow = self.state.v < self.weights.v_slow
        preview = rl.taps(track, index)
        ctx = RewardContext(
            v=self.state.v,
            lookahead=result.params.lookahead,
            gain=result.params.gain,
            prev_lookahead=self.prev_params.lookahead,
            prev_gain=self.prev_params.gain,
            kappa_max=preview.kappa_max,
            kappa_local=rl.local_curvature(track, index),
            progress=progress,
            collision=collided,
            slow=slow,
            teacher_lookahead=teacher_lookahead(self.state.v, preview.kappa_max),
            teacher_gain=teacher_gain(self.state.v),
        )
        reward = compute_reward(ctx, self.weights)
        if self._trace_writer is not None:
            obs_now = observe(self.state, track)
            bend = ctx.kappa_max > self.weights.kappa_bend \
                and ctx.lookahead <= preshorten_ceiling(ctx.v)
            self._trace_writer.writerow([
                self.step_count, *(f"{x:.6f}" for x in obs_now),
                f"{raw.lookahead:.6f}", f"{raw.gain:.6f}",
                f"{result.params.lookahead:.6f}", f"{result.params.gain:.6f}",
                f"{reward:.6f}",
                f"{self.weights.speed * ctx.v:.6f}",
                f"{abs(ctx.lookahead - ctx.teacher_lookahead):.6f}",
                f"{abs(ctx.lookahead - ctx.prev_lookahead):.6f}",
                f"{abs(ctx.kappa_local):.6f}",
                f"{ctx.lookahead * ctx.kappa_max:.6f}",
                int(bend), progress, int(collided), int(slow), result.mode])
        self.prev_params = result.params

        laps_complete = self.total_progress >= self.config.laps * track.n
        timeout = self.step_count >= self.config.max_steps
        self._done = collided or laps_complete or timeout

        info = {
            "collision": collided,
            "timeout": timeout,
            "laps_complete": laps_complete,
            "params": result.params,
            "raw_params": raw,
            "mode": result.mode,
            "lateral_error": rl.lateral_error(track, self.state.position),
            "progress": progress,
            "reward_context": ctx,
        }
        return observe(self.state, track), reward, self._done, info
