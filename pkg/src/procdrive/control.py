"""Bridge from commanded accelerations to vehicle actuation.

The actor emits local-frame accelerations. This module converts them into a
target point one control period ahead, a two-wheel-model steering angle
toward that point, and a speed-tracking PID pedal command. The simulator's
point-mass plant consumes accelerations directly, so in the training loop
these outputs serve as an actuation view (and are what a steering/pedal
vehicle interface would consume); their consistency with the commanded
acceleration is covered by the closed-loop tests.
"""
from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class ControlConfig:
    wheelbase: float = 2.7
    horizon: float = 0.1   # seconds ahead for the target point and speed target
    kp: float = 0.8
    ki: float = 0.1
    kd: float = 0.05
    pedal_limit: float = 1.0

    def __post_init__(self):
        if self.wheelbase <= 0.0 or self.horizon <= 0.0:
            raise ValueError("wheelbase and horizon must be > 0")
        if self.pedal_limit <= 0.0:
            raise ValueError("pedal_limit must be > 0")


def target_point(v_local: tuple[float, float], accel: tuple[float, float],
                 horizon: float) -> tuple[float, float]:
    """Point the vehicle should occupy after `horizon` seconds.

    Constant-acceleration extrapolation in the vehicle frame:
    (vx*T + ax*T^2/2, vy*T + ay*T^2/2).
    """
    if horizon <= 0.0:
        raise ValueError(f"horizon must be > 0, got {horizon!r}")
    t2 = 0.5 * horizon * horizon
    return (v_local[0] * horizon + accel[0] * t2,
            v_local[1] * horizon + accel[1] * t2)


def steering_command(target: tuple[float, float], wheelbase: float) -> float:
    """Two-wheel-model steering angle that arcs through the target point.

    delta = atan(2 * L * y / (x^2 + y^2)); the arc through the origin
    (heading +x) and the target has curvature 2y / (x^2 + y^2).

    Raises:
        ValueError: target at the origin, where the geometry is undefined.
    """
    x, y = target
    d2 = x * x + y * y
    if d2 < 1e-18:
        raise ValueError("steering target at the origin has no defined angle")
    return math.atan(2.0 * wheelbase * y / d2)


class PIDSpeedControl:
    """Speed-error PID with output clamping and conditional anti-windup."""

    def __init__(self, kp: float, ki: float, kd: float, out_limit: float = 1.0):
        self.kp = kp
        self.ki = ki
        self.kd = kd
        self.out_limit = out_limit
        self.integral = 0.0
        self.prev_error: float | None = None

    def reset(self) -> None:
        self.integral = 0.0
        self.prev_error = None

    def update(self, error: float, dt: float) -> float:
        if dt <= 0.0:
            raise ValueError(f"dt must be > 0, got {dt!r}")
        deriv = 0.0 if self.prev_error is None else (error - self.prev_error) / dt
        out = self.kp * error + self.ki * (self.integral + error * dt) + self.kd * deriv
        lim = self.out_limit
        if out > lim:
            out = lim
            if error < 0.0:  # only integrate when it unwinds the saturation
                self.integral += error * dt
        elif out < -lim:
            out = -lim
            if error > 0.0:
                self.integral += error * dt
        else:
            self.integral += error * dt
        self.prev_error = error
        return out


def pedal_command(pid: PIDSpeedControl, v_target: float, v_now: float,
                  dt: float) -> float:
    """Pedal in [-limit, limit] tracking v_target; positive is throttle."""
    return pid.update(v_target - v_now, dt)


@dataclass(frozen=True)
class ControlPlan:
    target: tuple[float, float]
    steering: float
    pedal: float
    v_target: float


class VehicleController:
    """Per-worker controller state: owns one PID, produces ControlPlans.

    The pedal tracks the speed reference set one period earlier (the target
    advances by a_x * horizon each call). Comparing last period's target
    against the speed actually reached makes the error vanish when the
    realized acceleration matches the command; feeding back a target rebuilt
    from the current speed would leave a constant error and wind the
    integrator up instead.
    """

    def __init__(self, cfg: ControlConfig):
        self.cfg = cfg
        self.pid = PIDSpeedControl(cfg.kp, cfg.ki, cfg.kd, cfg.pedal_limit)
        self._v_ref: float | None = None

    def reset(self) -> None:
        self.pid.reset()
        self._v_ref = None

    def plan(self, v_local: tuple[float, float], accel: tuple[float, float],
             dt: float) -> ControlPlan:
        tgt = target_point(v_local, accel, self.cfg.horizon)
        if tgt[0] * tgt[0] + tgt[1] * tgt[1] < 1e-18:
            steer = 0.0  # stationary with no command: hold the wheel
        else:
            steer = steering_command(tgt, self.cfg.wheelbase)
        v_now = v_local[0]
        ref = self._v_ref if self._v_ref is not None else v_now
        pedal = pedal_command(self.pid, ref, v_now, dt)
        v_target = v_now + accel[0] * self.cfg.horizon
        self._v_ref = v_target
        return ControlPlan(tgt, steer, pedal, v_target)
