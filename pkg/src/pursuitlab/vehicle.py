"""Kinematic bicycle simulator with actuator and rate limits.

Stepping is pure: every function maps (state, command, config) to a new
state without touching shared mutable data, so identical inputs produce
bit-identical outputs and independent simulations can run concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .raceline import Raceline, lateral_error


def wrap_angle(angle: float) -> float:
    """Wrap to (-pi, pi]."""
    a = (angle + math.pi) % (2.0 * math.pi) - math.pi
    if a <= -math.pi:
        a += 2.0 * math.pi
    return a


@dataclass(frozen=True)
class VehicleState:
    """Planar pose plus longitudinal speed."""

    x: float
    y: float
    theta: float
    v: float

    @property
    def position(self):
        return (self.x, self.y)


@dataclass(frozen=True)
class Command:
    """Steering angle [rad] and commanded speed [m/s]."""

    delta: float
    v_cmd: float


@dataclass(frozen=True)
class SimConfig:
    wheelbase: float = 0.33
    dt_physics: float = 0.01
    dt_control: float = 0.05
    delta_max: float = 0.4189
    delta_rate_max: float = math.pi  # 180 deg/s
    a_max: float = 3.0
    speed_gain: float = 2.0
    half_width: float = 1.1

    def __post_init__(self):
        for name in ("wheelbase", "dt_physics", "dt_control", "delta_max",
                     "delta_rate_max", "a_max", "speed_gain", "half_width"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be > 0")
        if abs(self.substeps * self.dt_physics - self.dt_control) > 1e-9:
            raise ValueError("dt_control must be an integer multiple of dt_physics")

    @property
    def substeps(self) -> int:
        return int(round(self.dt_control / self.dt_physics))


def derivatives(state: VehicleState, a: float, delta: float, wheelbase: float):
    """Kinematic bicycle time-derivative (dx, dy, dtheta, dv)."""
    return (
        state.v * math.cos(state.theta),
        state.v * math.sin(state.theta),
        state.v / wheelbase * math.tan(delta),
        a,
    )


def rk4_step(state: VehicleState, a: float, delta: float, dt: float,
             wheelbase: float) -> VehicleState:
    """Classic fourth-order Runge-Kutta advance with constant (a, delta)."""
    if dt <= 0.0:
        raise ValueError("dt must be > 0")

    def f(x, y, theta, v):
        return (v * math.cos(theta), v * math.sin(theta),
                v / wheelbase * math.tan(delta), a)

    k1 = f(state.x, state.y, state.theta, state.v)
    k2 = f(state.x + 0.5 * dt * k1[0], state.y + 0.5 * dt * k1[1],
           state.theta + 0.5 * dt * k1[2], state.v + 0.5 * dt * k1[3])
    k3 = f(state.x + 0.5 * dt * k2[0], state.y + 0.5 * dt * k2[1],
           state.theta + 0.5 * dt * k2[2], state.v + 0.5 * dt * k2[3])
    k4 = f(state.x + dt * k3[0], state.y + dt * k3[1],
           state.theta + dt * k3[2], state.v + dt * k3[3])

    sixth = dt / 6.0
    return VehicleState(
        state.x + sixth * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        state.y + sixth * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        wrap_angle(state.theta + sixth * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])),
        state.v + sixth * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3]),
    )


def speed_controller(v: float, v_cmd: float, config: SimConfig) -> float:
    """Proportional speed tracking clamped to the acceleration limit."""
    a = config.speed_gain * (v_cmd - v)
    return max(-config.a_max, min(config.a_max, a))


def control_step(state: VehicleState, cmd: Command, prev_delta: float,
                 config: SimConfig):
    """Advance one control period (several physics substeps).

    The commanded steering is clamped to the actuator bound, then moved
    toward per substep no faster than the steering rate limit. The speed
    controller is re-evaluated each substep. Returns the final state and
    the last applied steering angle.
    """
    target = max(-config.delta_max, min(config.delta_max, cmd.delta))
    max_change = config.delta_rate_max * config.dt_physics
    delta = prev_delta
    for _ in range(config.substeps):
        step = max(-max_change, min(max_change, target - delta))
        delta = delta + step
        a = speed_controller(state.v, cmd.v_cmd, config)
        state = rk4_step(state, a, delta, config.dt_physics, config.wheelbase)
    return state, delta


def collision_check(raceline: Raceline, state: VehicleState,
                    half_width: float | None = None) -> bool:
    """True iff the vehicle left the lateral corridor (strict inequality)."""
    if half_width is None:
        half_width = raceline.half_width
    return abs(lateral_error(raceline, state.position)) > half_width
