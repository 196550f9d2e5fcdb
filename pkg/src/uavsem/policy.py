"""Scripted and learned policies over the flat environment action space.

The scripted hover-over-centroid policy keeps sweeps and CI runs
independent of any training artifact: UAVs park on a small ring around
the ground-user centroid, payload shares follow predicted link rates and
the compression factor either stays fixed or adapts to what fits in the
remaining slot time.
"""

from __future__ import annotations

import math

import numpy as np

from . import channel, semantics
from .config import ScenarioConfig
from .env import split_observation
from .nn import DenseNet


class HoverCentroidPolicy:
    """Deterministic scripted controller.

    d_mode "fixed" always emits ``fixed_d``; "adaptive" picks the smallest
    compression factor whose worst-case predicted completion still fits in
    the slot with the given safety margin.
    """

    def __init__(self, cfg: ScenarioConfig, d_mode: str = "adaptive",
                 fixed_d: int | None = None, margin: float = 0.8):
        if d_mode not in ("fixed", "adaptive"):
            raise ValueError("d_mode must be 'fixed' or 'adaptive'")
        if d_mode == "fixed" and fixed_d is None:
            raise ValueError("fixed_d required when d_mode='fixed'")
        self.cfg = cfg
        self.d_mode = d_mode
        self.fixed_d = fixed_d
        self.margin = margin

    def act(self, obs: np.ndarray) -> np.ndarray:
        cfg = self.cfg
        view = split_observation(obs, cfg)
        n, m = cfg.num_uavs, cfg.num_gus
        tau = cfg.slot_duration
        max_leg = cfg.uav_speed_max * tau

        targets = self._ring_targets(view["gu_pos"])
        commands = np.zeros((n, 3))
        predicted = np.empty((n, 3))
        move_times = np.empty(n)
        for i in range(n):
            delta = targets[i] - view["uav_pos"][i]
            dist = float(np.linalg.norm(delta))
            leg = min(dist, max_leg)
            if dist > 1e-9:
                commands[i] = (math.acos(np.clip(delta[2] / dist, -1.0, 1.0)),
                               math.atan2(delta[1], delta[0]) % (2.0 * math.pi),
                               leg)
                predicted[i] = view["uav_pos"][i] + delta / dist * leg
            else:
                predicted[i] = view["uav_pos"][i]
            move_times[i] = leg / cfg.uav_speed_max

        rates, covered = self._predict_rates(view, predicted)
        rho = self._share_logits(rates, covered)
        d = self.fixed_d if self.d_mode == "fixed" else \
            self._fit_compression(rates, covered, float(move_times.max()))
        d_min, d_max = cfg.compression_range
        d_raw = 0.0 if d_max == d_min else (d - d_min) / (d_max - d_min)
        tail = np.full(m if cfg.per_gu_compression else 1, d_raw)

        return np.concatenate([commands.ravel(), rho.ravel(), tail])

    # -- internals ------------------------------------------------------------

    def _ring_targets(self, gu_pos: np.ndarray) -> np.ndarray:
        """Park spots on a ring around the user centroid, with staggered
        altitudes so 3-D separation stays above the collision limit even
        when approach paths cross in the horizontal plane."""
        cfg = self.cfg
        center = gu_pos.mean(axis=0)
        z_min, z_max = cfg.uav_altitude_range
        n = cfg.num_uavs
        if n == 1:
            return np.array([[center[0], center[1], z_max]])
        radius = 0.75 * cfg.min_separation / math.sin(math.pi / n)
        angles = 2.0 * math.pi * np.arange(n) / n
        stagger = min(1.2 * cfg.min_separation, (z_max - z_min) / max(n - 1, 1))
        alts = np.clip(z_max - stagger * np.arange(n), z_min, z_max)
        return np.stack([center[0] + radius * np.cos(angles),
                         center[1] + radius * np.sin(angles),
                         alts], axis=1)

    def _predict_rates(self, view: dict, uav_pos: np.ndarray):
        """Per-link Shannon rate estimates at the predicted positions."""
        cfg = self.cfg
        n, m = cfg.num_uavs, cfg.num_gus
        covered = np.zeros((n, m), dtype=bool)
        for i in range(n):
            reach = uav_pos[i, 2] * math.tan(cfg.coverage_angle)
            horiz = np.hypot(view["gu_pos"][:, 0] - uav_pos[i, 0],
                             view["gu_pos"][:, 1] - uav_pos[i, 1])
            covered[i] = horiz + view["gu_speed"] * cfg.slot_duration <= reach
        streams = np.maximum(covered.sum(axis=1), 1)

        rates = np.zeros((n, m))
        for i in range(n):
            for j in range(m):
                dist = math.sqrt((view["gu_pos"][j, 0] - uav_pos[i, 0]) ** 2
                                 + (view["gu_pos"][j, 1] - uav_pos[i, 1]) ** 2
                                 + uav_pos[i, 2] ** 2)
                h_gu = complex(view["h_gu_mag"][i, j])
                gain = channel.af_gain(h_gu, dist, cfg.path_loss_exp, cfg.uav_tx_power,
                                       int(streams[i]), cfg.noise_power_uav)
                rates[i, j] = channel.link_rate(
                    h_gu, complex(view["h_cs_mag"][i]), gain, dist, cfg.path_loss_exp,
                    cfg.uplink_bandwidth, int(streams[i]), cfg.noise_power_uav,
                    cfg.noise_power_cs)
        return rates, covered

    def _share_logits(self, rates: np.ndarray, covered: np.ndarray) -> np.ndarray:
        """Rate-proportional split so a faded link carries little traffic."""
        masked = np.where(covered, rates, 0.0)
        totals = masked.sum(axis=0, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            rho = np.where(totals > 0, masked / totals, 0.0)
        return np.clip(rho, 0.0, 1.0)

    def _fit_compression(self, rates: np.ndarray, covered: np.ndarray,
                         fleet_move: float) -> int:
        cfg = self.cfg
        tau = cfg.slot_duration
        available = tau - max(fleet_move, cfg.ready_time_fraction * tau)
        if available <= 0:
            return cfg.compression_range[1]
        pooled = np.where(covered, rates, 0.0).sum(axis=0)
        pooled = pooled[covered.any(axis=0)]
        if pooled.size == 0 or pooled.min() <= 0:
            return cfg.compression_range[1]
        d_min, d_max = cfg.compression_range
        for d in range(d_min, d_max + 1):
            worst = semantics.data_size(*cfg.image_dims, d) / pooled.min()
            if worst <= self.margin * available:
                return d
        return d_max


class ActorPolicy:
    """Deterministic policy from a trained actor checkpoint: the squashed
    mean action, mapped into the environment's action box."""

    def __init__(self, net: DenseNet, action_low: np.ndarray, action_high: np.ndarray):
        self.net = net
        self.low = np.asarray(action_low, dtype=float)
        self.high = np.asarray(action_high, dtype=float)
        self.act_dim = self.low.size

    @classmethod
    def from_checkpoint(cls, path, action_low, action_high) -> "ActorPolicy":
        return cls(DenseNet.load(path), action_low, action_high)

    def act(self, obs: np.ndarray) -> np.ndarray:
        out = self.net.forward(np.asarray(obs, dtype=float))
        mu = out[:self.act_dim]
        center = (self.high + self.low) / 2.0
        half = (self.high - self.low) / 2.0
        return center + half * np.tanh(mu)
