"""Scenario configuration and shared world-state value types.

All physical quantities are SI unless a field name says otherwise
(bandwidth in Hz, powers in W, noise powers in W, angles in radians).
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# Speed of light as used by every link-budget formula in this package (m/s).
SPEED_OF_LIGHT = 2.999e8

VALID_MODULATION_ORDERS = (4, 16, 64, 256)


@dataclass(frozen=True)
class ScenarioConfig:
    """Immutable bundle of every physical, protocol and reward constant.

    Defaults describe the reference scenario: a 2x2 km area, 20 ground
    users relayed by 2 UAVs to a central server at the origin, 5 s slots
    over a 1000 s mission.
    """

    area_half_width: float = 1000.0          # m, operating area is [-A, A]^2
    num_gus: int = 20
    num_uavs: int = 2
    uav_altitude_range: tuple[float, float] = (100.0, 150.0)   # m
    gu_speed_range: tuple[float, float] = (0.3, 1.5)           # m/s
    uav_speed_max: float = 15.0                                # m/s
    arrival_rate_range: tuple[float, float] = (0.05, 0.2)      # images/s
    compression_range: tuple[int, int] = (1, 4)
    mission_duration: float = 1000.0         # s
    slot_duration: float = 5.0               # s
    hover_power: float = 120.0               # W
    nakagami_shape: float = 2.0
    nakagami_spread: float = 1.0             # mean channel power E[|h|^2]
    carrier_freq: float = 2.4e9              # Hz
    path_loss_exp: float = 2.7
    uav_tx_power: float = 0.2                # W (23 dBm)
    noise_power_uav: float = 10.0 ** -13.5   # W (-105 dBm)
    noise_power_cs: float = 10.0 ** -13.5    # W (-105 dBm)
    uplink_bandwidth: float = 1.0e7          # Hz per UAV
    image_dims: tuple[int, int, int] = (3, 375, 1242)          # (C, H, W)
    coverage_angle: float = math.pi / 3.0    # rad, half-angle of the receive cone
    min_separation: float = 10.0             # m, UAV anti-collision distance
    energy_budget: float = 2.0e5             # J per UAV per mission
    sss_weight: float = 0.5                  # blend between CosSim and MS-SSIM
    objective_weight: float = 5.0            # weight of min-SSS in the objective
    penalties: tuple[float, float, float] = (10.0, 10.0, 1.0)  # collision, energy, backlog
    rotor_constants: tuple[float, float, float, float, float] = (
        70.0,    # c1: blade profile power at hover, W
        50.0,    # c2: induced power at hover, W
        0.009,   # c3: parasite drag coefficient, kg/m
        120.0,   # rotor tip speed, m/s
        4.03,    # mean induced velocity at hover, m/s
    )
    modulation_order: int = 4
    rng_seed: int = 0

    # Protocol knobs (not in the physical parameter table).
    reward_mode: str = "dense"               # "dense" | "sparse"
    ready_time_fraction: float = 0.2         # encoding finishes in the first 20% of a slot
    drop_aoi_substitute: float | None = None  # None -> slot_duration
    per_gu_compression: bool = False         # single shared d per slot when False
    rate_model: str = "shannon"              # "shannon" | "modulation"
    feature_len_override: int | None = None  # truncate payload to this many features

    @property
    def num_slots(self) -> int:
        return int(round(self.mission_duration / self.slot_duration))

    @property
    def original_data_bits(self) -> int:
        c, h, w = self.image_dims
        return 8 * c * h * w

    @property
    def aoi_drop_substitute(self) -> float:
        return self.slot_duration if self.drop_aoi_substitute is None else self.drop_aoi_substitute

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)


@dataclass
class GroundUser:
    """One mobile image source. Positions are 3-vectors with z = 0."""

    id: int
    position: np.ndarray
    speed: float                 # m/s, constant within a slot
    heading: float               # rad, direction of travel in the xy plane
    arrival_rate: float          # images/s
    waypoint: np.ndarray = field(default_factory=lambda: np.zeros(3))
    pending_speed: float | None = None   # takes effect at the next slot boundary
    ready_time: float = 0.0      # s, when the current image finishes encoding
    data_size: float = 0.0       # bits pending at the last applied compression
    last_completion: float = 0.0  # s


@dataclass
class UavState:
    """One relay UAV. Negative remaining energy flags a budget violation
    downstream; it is never silently clamped."""

    id: int
    position: np.ndarray
    energy_remaining: float      # J
    relocation_time: float = 0.0  # s spent moving in the current slot


def validate_config(cfg: ScenarioConfig) -> list[str]:
    """Check every scenario invariant; violations are returned, not raised.

    Total over finite numeric inputs: no arithmetic here can fault.
    """
    bad: list[str] = []

    z_min, z_max = cfg.uav_altitude_range
    if z_min > z_max:
        bad.append("uav_altitude_range: z_min exceeds z_max")
    v_lo, v_hi = cfg.gu_speed_range
    if v_lo > v_hi or v_lo < 0:
        bad.append("gu_speed_range: must satisfy 0 <= min <= max")
    lam_lo, lam_hi = cfg.arrival_rate_range
    if lam_lo > lam_hi or lam_lo <= 0:
        bad.append("arrival_rate_range: must satisfy 0 < min <= max")
    elif cfg.slot_duration > 1.0 / lam_hi:
        bad.append("slot_duration: slot exceeds min inter-arrival time 1/max(arrival_rate)")

    d_min, d_max = cfg.compression_range
    if d_min < 1:
        bad.append("compression_range: d_min must be >= 1")
    if d_min > d_max:
        bad.append("compression_range: d_min exceeds d_max")

    for name in ("area_half_width", "uav_speed_max", "mission_duration", "slot_duration",
                 "hover_power", "carrier_freq", "uav_tx_power", "noise_power_uav",
                 "noise_power_cs", "uplink_bandwidth", "energy_budget"):
        if getattr(cfg, name) <= 0:
            bad.append(f"{name}: must be strictly positive")

    if cfg.nakagami_shape < 0.5:
        bad.append("nakagami_shape: must be >= 0.5")
    if cfg.nakagami_spread <= 0:
        bad.append("nakagami_spread: must be strictly positive")
    if not (0 < cfg.coverage_angle < math.pi / 2):
        bad.append("coverage_angle: must lie in (0, pi/2)")
    if cfg.min_separation < 0:
        bad.append("min_separation: must be nonnegative")
    if not (0 <= cfg.sss_weight <= 1):
        bad.append("sss_weight: must lie in [0, 1]")
    if cfg.objective_weight <= 0:
        bad.append("objective_weight: must be strictly positive")
    if any(p < 0 for p in cfg.penalties):
        bad.append("penalties: must be nonnegative")

    c1, c2, c3, v_tip, v0 = cfg.rotor_constants
    if abs(c1 + c2 - cfg.hover_power) > 1e-9:
        bad.append("rotor_constants: c1 + c2 must equal hover_power")
    if c3 < 0 or v_tip <= 0 or v0 <= 0:
        bad.append("rotor_constants: c3 >= 0 and v_tip, v0 > 0 required")

    if cfg.modulation_order not in VALID_MODULATION_ORDERS:
        bad.append(f"modulation_order: must be one of {VALID_MODULATION_ORDERS}")
    if any(n < 1 for n in cfg.image_dims):
        bad.append("image_dims: all dimensions must be >= 1")
    if cfg.num_gus < 1 or cfg.num_uavs < 1:
        bad.append("num_gus/num_uavs: must be >= 1")
    if cfg.reward_mode not in ("dense", "sparse"):
        bad.append("reward_mode: must be 'dense' or 'sparse'")
    if cfg.rate_model not in ("shannon", "modulation"):
        bad.append("rate_model: must be 'shannon' or 'modulation'")
    if not (0 <= cfg.ready_time_fraction <= 1):
        bad.append("ready_time_fraction: must lie in [0, 1]")
    if cfg.feature_len_override is not None and cfg.feature_len_override < 1:
        bad.append("feature_len_override: must be >= 1 when set")

    return bad


_TUPLE_FIELDS = {
    "uav_altitude_range": float,
    "gu_speed_range": float,
    "arrival_rate_range": float,
    "compression_range": int,
    "image_dims": int,
    "penalties": float,
    "rotor_constants": float,
}


def config_to_dict(cfg: ScenarioConfig) -> dict:
    out = {}
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        out[f.name] = list(value) if isinstance(value, tuple) else value
    return out


def config_from_dict(data: dict) -> ScenarioConfig:
    known = {f.name for f in dataclasses.fields(ScenarioConfig)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown configuration keys: {sorted(unknown)}")
    kwargs = {}
    for key, value in data.items():
        cast = _TUPLE_FIELDS.get(key)
        kwargs[key] = tuple(cast(v) for v in value) if cast is not None else value
    return ScenarioConfig(**kwargs)


def save_config(cfg: ScenarioConfig, path: str | Path) -> None:
    """Write the scenario as a human-editable JSON key/value file."""
    Path(path).write_text(json.dumps(config_to_dict(cfg), indent=2) + "\n")


def load_config(path: str | Path) -> ScenarioConfig:
    return config_from_dict(json.loads(Path(path).read_text()))
