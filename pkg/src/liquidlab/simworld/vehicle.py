"""Kinematic bicycle vehicle and the curvature <-> steering conversion."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError

STEER_LIMIT = np.pi / 2 - 1e-3  # road-wheel angle saturation


@dataclass(frozen=True)
class VehicleConfig:
    steering_ratio: float = 14.0  # steering-wheel angle per road-wheel angle
    wheelbase: float = 2.7        # m
    speed: float = 10.0           # m/s, constant
    frame_dt: float = 1.0 / 30.0  # s per camera frame

    def validate(self):
        vals = (self.steering_ratio, self.wheelbase, self.speed, self.frame_dt)
        if any(v <= 0 for v in vals):
            raise ConfigError(f"vehicle parameters must be positive, got {vals}")


@dataclass
class VehicleState:
    x: float
    y: float
    heading: float
    s: float   # arc-length progress along the track centerline
    d: float   # signed lateral offset, positive left of the centerline

    def position(self):
        return np.array([self.x, self.y])


def curvature_to_steering(curvature, config: VehicleConfig):
    """Steering-wheel angle for a commanded path curvature."""
    return config.steering_ratio * np.arctan(config.wheelbase * curvature)


def vehicle_step(state: VehicleState, steering: float, config: VehicleConfig,
                 track) -> VehicleState:
    """One frame of bicycle kinematics, then re-anchor (s, d) on the track.

    The road-wheel angle is the steering-wheel angle divided by the
    steering ratio, saturated just below +-pi/2.
    """
    delta = steering / config.steering_ratio
    delta = float(np.clip(delta, -STEER_LIMIT, STEER_LIMIT))
    heading = state.heading + (config.speed / config.wheelbase) \
        * np.tan(delta) * config.frame_dt
    step_len = config.speed * config.frame_dt
    x = state.x + step_len * np.cos(heading)
    y = state.y + step_len * np.sin(heading)
    s, d = track.project(np.array([x, y]), s_hint=state.s)
    return VehicleState(x=float(x), y=float(y), heading=float(heading),
                        s=s, d=d)


def place_on_track(track, s0: float, d0: float = 0.0,
                   heading_error: float = 0.0) -> VehicleState:
    """A vehicle at arc length s0, offset d0 (left positive), heading offset."""
    base = track.point_at(s0)
    pos = base + d0 * track.left_normal_at(s0)
    heading = float(track.heading_at(s0) + heading_error)
    s, d = track.project(pos, s_hint=s0)
    return VehicleState(x=float(pos[0]), y=float(pos[1]), heading=heading,
                        s=s, d=d)
