"""Longitudinal kinematics of identical platoon vehicles.

Each vehicle is described by its headway to the predecessor, its velocity
and its acceleration.  One simulation step advances a vehicle against the
known motion of its predecessor under piecewise-constant accelerations,
which makes the headway integral exact rather than a quadrature choice.
"""

import math
from dataclasses import dataclass

from .errors import ValidationError


@dataclass(frozen=True)
class DynamicsConfig:
    """Vehicle limits and step size, shared by every vehicle in the platoon."""

    dt: float = 0.1          # s
    h_min: float = 1.0       # m, minimum safe headway
    v_max: float = 30.0      # m/s
    u_min: float = -2.0      # m/s^2
    u_max: float = 2.0       # m/s^2
    h_stop: float = 5.0      # m, headway at/below which the desired speed is 0
    h_go: float = 35.0       # m, headway at/above which the desired speed is v_max

    def validate(self) -> None:
        if not self.dt > 0:
            raise ValidationError(f"dt must be positive, got {self.dt}")
        if not self.h_stop < self.h_go:
            raise ValidationError(f"h_stop must be below h_go, got {self.h_stop} >= {self.h_go}")
        if not (self.u_min < 0 < self.u_max):
            raise ValidationError(f"need u_min < 0 < u_max, got [{self.u_min}, {self.u_max}]")
        if not self.v_max > 0:
            raise ValidationError(f"v_max must be positive, got {self.v_max}")


@dataclass(frozen=True)
class VehicleState:
    """Headway (m), velocity (m/s) and acceleration (m/s^2) of one vehicle."""

    h: float
    v: float
    u: float

    def is_finite(self) -> bool:
        return math.isfinite(self.h) and math.isfinite(self.v) and math.isfinite(self.u)


def clamp(x: float, lo: float, hi: float) -> float:
    return lo if x < lo else hi if x > hi else x


def step_vehicle(state: VehicleState, v_pred: float, u_pred: float,
                 u_cmd: float, cfg: DynamicsConfig) -> VehicleState:
    """Advance one vehicle by dt against its predecessor.

    ``v_pred``/``u_pred`` are the predecessor's velocity at the start of the
    step and its (constant) acceleration during the step.  The commanded
    acceleration is clamped to the actuator limits before it influences any
    motion; velocity is clamped to [0, v_max] after the headway integral so
    the within-step kinematics stay exact.
    """
    if not state.is_finite():
        raise ValidationError(f"non-finite vehicle state {state}")
    if not (math.isfinite(v_pred) and math.isfinite(u_pred) and math.isfinite(u_cmd)):
        raise ValidationError("non-finite step input")

    u_new = clamp(u_cmd, cfg.u_min, cfg.u_max)
    dt = cfg.dt
    h_new = state.h + (v_pred - state.v) * dt + 0.5 * (u_pred - u_new) * dt * dt
    v_new = clamp(state.v + u_new * dt, 0.0, cfg.v_max)
    return VehicleState(h=h_new, v=v_new, u=u_new)


def ovm_velocity(h: float, cfg: DynamicsConfig) -> float:
    """Desired speed for a given headway (optimal-velocity relation).

    Zero below the stopped headway, v_max above the full-speed headway and a
    raised cosine in between; continuous and non-decreasing everywhere.
    """
    if not math.isfinite(h):
        raise ValidationError(f"non-finite headway {h}")
    if h < cfg.h_stop:
        return 0.0
    if h > cfg.h_go:
        return cfg.v_max
    return 0.5 * cfg.v_max * (1.0 - math.cos(math.pi * (h - cfg.h_stop) / (cfg.h_go - cfg.h_stop)))


def ideal_acceleration(alpha: float, beta: float, state: VehicleState,
                       v_pred: float, cfg: DynamicsConfig) -> float:
    """Model-based acceleration from headway and relative-speed gains.

    ``alpha`` weighs the gap between the optimal velocity and the own speed,
    ``beta`` the speed difference to the predecessor.  The result is clamped
    to the actuator limits.
    """
    u = alpha * (ovm_velocity(state.h, cfg) - state.v) + beta * (v_pred - state.v)
    return clamp(u, cfg.u_min, cfg.u_max)


def check_constraints(state: VehicleState, cfg: DynamicsConfig) -> set:
    """Return the subset of {'headway', 'velocity', 'acceleration'} violated."""
    violations = set()
    if state.h < cfg.h_min:
        violations.add("headway")
    if not (0.0 <= state.v <= cfg.v_max):
        violations.add("velocity")
    if not (cfg.u_min <= state.u <= cfg.u_max):
        violations.add("acceleration")
    return violations
