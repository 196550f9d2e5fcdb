"""Ground-user mobility, UAV relocation and coverage geometry.

Everything here is a pure function over value inputs, so it can be called
from parallel workers without coordination.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .config import GroundUser, ScenarioConfig, UavState


@dataclass(frozen=True)
class RelocationCommand:
    """Per-slot movement order for one UAV, as (elevation, azimuth, distance).

    Elevation is the polar angle measured from the +z axis, so 0 points
    straight up and pi/2 is horizontal flight.
    """

    elevation: float   # rad, in [0, pi]
    azimuth: float     # rad, in [0, 2*pi)
    distance: float    # m, >= 0

    def direction(self) -> np.ndarray:
        se = math.sin(self.elevation)
        return np.array([
            se * math.cos(self.azimuth),
            se * math.sin(self.azimuth),
            math.cos(self.elevation),
        ])


def step_gu(gu: GroundUser, tau: float, area_half_width: float,
            gu_speed_range: tuple[float, float], rng: np.random.Generator) -> GroundUser:
    """Advance one ground user by a slot of the random-waypoint walk.

    The user travels at its current speed toward its waypoint; reaching the
    waypoint draws a fresh one (uniform over the area) plus a fresh speed
    that takes effect at the next slot boundary, keeping speed constant
    within a slot. Waypoints are interior points of a convex area, so the
    walk can never leave it.
    """
    pos = gu.position.astype(float).copy()
    waypoint = gu.waypoint.astype(float).copy()
    heading = gu.heading
    pending = gu.pending_speed
    budget = gu.speed * tau

    while budget > 1e-12:
        delta = waypoint[:2] - pos[:2]
        dist = float(np.hypot(delta[0], delta[1]))
        if dist <= budget:
            pos[:2] = waypoint[:2]
            budget -= dist
            waypoint = draw_waypoint(area_half_width, rng)
            pending = float(rng.uniform(*gu_speed_range))
            delta = waypoint[:2] - pos[:2]
            dist = float(np.hypot(delta[0], delta[1]))
            if dist > 0:
                heading = math.atan2(delta[1], delta[0])
        else:
            if dist > 0:
                heading = math.atan2(delta[1], delta[0])
                pos[:2] += delta / dist * budget
            budget = 0.0

    new_speed = gu.speed
    new_pending = pending
    if pending is not None:
        new_speed = pending
        new_pending = None
    return dataclasses.replace(
        gu, position=pos, waypoint=waypoint, heading=heading,
        speed=new_speed, pending_speed=new_pending,
    )


def draw_waypoint(area_half_width: float, rng: np.random.Generator) -> np.ndarray:
    xy = rng.uniform(-area_half_width, area_half_width, size=2)
    return np.array([xy[0], xy[1], 0.0])


def relocate_uav(uav: UavState, cmd: RelocationCommand,
                 cfg: ScenarioConfig) -> tuple[UavState, float]:
    """Execute one relocation command and return (new state, time spent moving).

    Travel is capped at what max speed allows within the slot; if the path
    would leave the altitude band the UAV stops at the band boundary and
    the traveled distance (hence the relocation time) shrinks accordingly.
    UAVs fly at maximum speed, which minimizes the time lost to relocation.
    """
    tau = cfg.slot_duration
    z_min, z_max = cfg.uav_altitude_range
    reachable = min(max(cmd.distance, 0.0), cfg.uav_speed_max * tau)

    direction = cmd.direction()
    travel = reachable
    if direction[2] > 0 and z_max < uav.position[2] + travel * direction[2]:
        travel = (z_max - uav.position[2]) / direction[2]
    elif direction[2] < 0 and z_min > uav.position[2] + travel * direction[2]:
        travel = (z_min - uav.position[2]) / direction[2]
    travel = max(travel, 0.0)

    new_pos = uav.position + travel * direction
    # Guard against roundoff drifting past the band edge.
    new_pos[2] = min(max(new_pos[2], z_min), z_max)
    tau_move = min(travel / cfg.uav_speed_max, tau)
    return dataclasses.replace(uav, position=new_pos, relocation_time=tau_move), tau_move


def coverage_radius(uav: UavState, coverage_angle: float) -> float:
    """Horizontal radius of the UAV's data-receiving disk: z * tan(angle)."""
    return float(uav.position[2] * math.tan(coverage_angle))


def is_served(gu: GroundUser, uav: UavState, tau: float, coverage_angle: float) -> bool:
    """True when the user's reachable disk lies inside the UAV's receive disk.

    The user disk has radius speed*tau around its slot-start position, so
    containment means the user stays in coverage for the whole slot. The
    boundary case counts as served (closed inequality).
    """
    dx = gu.position[0] - uav.position[0]
    dy = gu.position[1] - uav.position[1]
    horizontal = math.hypot(dx, dy)
    return horizontal + gu.speed * tau <= coverage_radius(uav, coverage_angle)
