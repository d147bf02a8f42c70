"""Pure Pursuit steering with online-selectable lookahead and gain.

The steering law itself is fixed; what varies is where the (lookahead,
gain) pair comes from: a constant, a velocity-linear schedule, a
hand-designed teacher, or an external (learned) source with a staleness
fallback to the teacher. Externally and teacher-sourced parameters pass
through a first-order exponential smoother before reaching the law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from . import raceline as rl
from .vehicle import Command, VehicleState

LOOKAHEAD_BOUNDS = (0.35, 4.0)
GAIN_BOUNDS = (0.45, 1.15)
STEER_CLIP = 0.35
ADAPTIVE_LOOKAHEAD_BOUNDS = (1.0, 2.5)
SMOOTHING_BETA = 0.2

# Teacher schedule coefficients: lookahead grows with speed and shrinks
# with previewed curvature; gain falls linearly from 0.9 at 3 m/s to
# 0.65 at 18 m/s.
TEACHER_L_BASE = 0.50
TEACHER_L_SPEED = 0.28
TEACHER_L_CURVATURE = 3.5
TEACHER_G_SLOPE = (0.65 - 0.9) / (18.0 - 3.0)
TEACHER_G_INTERCEPT = 0.9 - TEACHER_G_SLOPE * 3.0

SMOOTHER_INIT = (1.0, 0.9)


def _clip(value, lo, hi):
    return max(lo, min(hi, value))


@dataclass(frozen=True)
class PPParams:
    """Lookahead distance [m] and steering gain pair."""

    lookahead: float
    gain: float

    def clipped(self) -> "PPParams":
        return PPParams(_clip(self.lookahead, *LOOKAHEAD_BOUNDS),
                        _clip(self.gain, *GAIN_BOUNDS))


class ParamSmoother:
    """Per-component first-order exponential smoother for (lookahead, gain)."""

    def __init__(self, beta_lookahead: float = SMOOTHING_BETA,
                 beta_gain: float = SMOOTHING_BETA):
        self.beta_lookahead = beta_lookahead
        self.beta_gain = beta_gain
        self.reset()

    def reset(self, lookahead: float = SMOOTHER_INIT[0],
              gain: float = SMOOTHER_INIT[1]):
        self.lookahead = lookahead
        self.gain = gain

    def smooth(self, raw: PPParams) -> PPParams:
        self.lookahead = self.beta_lookahead * raw.lookahead \
            + (1.0 - self.beta_lookahead) * self.lookahead
        self.gain = self.beta_gain * raw.gain \
            + (1.0 - self.beta_gain) * self.gain
        return PPParams(self.lookahead, self.gain)

    def state(self) -> PPParams:
        return PPParams(self.lookahead, self.gain)


def to_vehicle_frame(pose: VehicleState, point):
    """Map a world point into the vehicle frame (x' forward, y' left)."""
    dx = point[0] - pose.x
    dy = point[1] - pose.y
    c = math.cos(pose.theta)
    s = math.sin(pose.theta)
    return (c * dx + s * dy, -s * dx + c * dy)


def pp_steering(y_prime: float, lookahead: float, gain: float) -> float:
    """Pure Pursuit steering: gain-scaled lookahead-circle curvature, clipped."""
    if lookahead <= 0.0:
        raise ValueError("lookahead must be > 0")
    return _clip(gain * 2.0 * y_prime / (lookahead * lookahead),
                 -STEER_CLIP, STEER_CLIP)


def teacher_lookahead(v: float, kappa_max: float) -> float:
    """Hand-designed lookahead target, clipped to the action bounds."""
    raw = TEACHER_L_BASE + TEACHER_L_SPEED * v - TEACHER_L_CURVATURE * kappa_max
    return _clip(raw, *LOOKAHEAD_BOUNDS)


def teacher_gain(v: float) -> float:
    """Hand-designed gain target, clipped to the action bounds."""
    return _clip(TEACHER_G_SLOPE * v + TEACHER_G_INTERCEPT, *GAIN_BOUNDS)


def adaptive_lookahead(v: float, v_lo: float, v_hi: float) -> float:
    """Velocity-linear lookahead mapping [v_lo, v_hi] onto [1.0, 2.5] m."""
    if v_lo >= v_hi:
        raise ValueError("v_lo must be < v_hi")
    lo, hi = ADAPTIVE_LOOKAHEAD_BOUNDS
    raw = lo + (v - v_lo) * (hi - lo) / (v_hi - v_lo)
    return _clip(raw, lo, hi)


@dataclass
class FixedSource:
    """Constant (lookahead, gain)."""

    lookahead: float
    gain: float


@dataclass
class AdaptiveLinearSource:
    """Velocity-linear lookahead with a constant gain."""

    v_lo: float
    v_hi: float
    gain: float

    def __post_init__(self):
        if self.v_lo >= self.v_hi:
            raise ValueError("v_lo must be < v_hi")


@dataclass
class TeacherSource:
    """Hand-designed speed/curvature schedules for both parameters."""


@dataclass
class ExternalSource:
    """Learned-parameter slot with a staleness fallback to the teacher.

    A single writer publishes the latest action with a receipt timestamp;
    the controller reads it back (last value wins). If the newest receipt
    is older than ``timeout`` at query time, the teacher takes over until
    fresh actions resume.
    """

    timeout: float = 0.2
    last_params: PPParams | None = field(default=None, repr=False)
    last_receipt: float = field(default=-math.inf, repr=False)

    def __post_init__(self):
        if self.timeout <= 0.0:
            raise ValueError("timeout must be > 0")

    def publish(self, params: PPParams, now: float):
        self.last_params = params
        self.last_receipt = now

    def fresh(self, now: float) -> bool:
        return self.last_params is not None and (now - self.last_receipt) <= self.timeout


@dataclass(frozen=True)
class PPStepResult:
    command: Command
    params: PPParams
    mode: str  # rl | teacher | fixed | adaptive


class PurePursuitController:
    """Tracks a raceline with Pure Pursuit under one parameter source.

    Owns the smoother (applied in external and teacher modes only) so the
    same path runs during training and deployment. The returned mode flag
    feeds the teacher-activation-rate accounting.
    """

    def __init__(self, raceline: rl.Raceline, source):
        self.raceline = raceline
        self.source = source
        self.smoother = ParamSmoother()

    def reset(self, smoother_init: PPParams | None = None):
        if smoother_init is None:
            self.smoother.reset()
        else:
            self.smoother.reset(smoother_init.lookahead, smoother_init.gain)

    def _select_params(self, state: VehicleState, index: int, now: float):
        source = self.source
        if isinstance(source, FixedSource):
            return PPParams(source.lookahead, source.gain).clipped(), "fixed", False
        if isinstance(source, AdaptiveLinearSource):
            lookahead = adaptive_lookahead(state.v, source.v_lo, source.v_hi)
            return PPParams(lookahead, source.gain).clipped(), "adaptive", False
        if isinstance(source, ExternalSource) and source.fresh(now):
            return source.last_params.clipped(), "rl", True
        if isinstance(source, (TeacherSource, ExternalSource)):
            preview = rl.taps(self.raceline, index)
            return PPParams(teacher_lookahead(state.v, preview.kappa_max),
                            teacher_gain(state.v)), "teacher", True
        raise TypeError(f"unknown parameter source {type(source).__name__}")

    def step(self, state: VehicleState, now: float = 0.0) -> PPStepResult:
        index = rl.nearest_index(self.raceline, state.position)
        params, mode, smoothed = self._select_params(state, index, now)
        if smoothed:
            params = self.smoother.smooth(params)
        target = rl.lookahead_target(self.raceline, state.position, params.lookahead)
        _, y_prime = to_vehicle_frame(state, target)
        gamma = pp_steering(y_prime, params.lookahead, params.gain)
        v_cmd = float(self.raceline.v_max[index])
        return PPStepResult(Command(gamma, v_cmd), params, mode)
