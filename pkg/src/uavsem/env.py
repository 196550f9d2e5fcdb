"""Slot-stepped MDP environment for the UAV relay network.

Each step runs one full protocol slot: users report state and encoding
ready times, UAVs relocate, serving sets are derived from coverage
geometry, payload shares are normalized over the serving UAVs,
transmissions are timed against the slot deadline, fidelity and energy
are booked, and a shaped reward is emitted.

A single environment instance is strictly sequential; run several
instances with independent seeds for parallel experience collection.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from . import semantics
from .channel import FadingDraw, LinkBudget, link_budget, doppler_shift
from .config import GroundUser, ScenarioConfig, UavState
from .energy import EnergyLedger, comm_energy, slot_state_energy
from .mobility import RelocationCommand, draw_waypoint, is_served, relocate_uav, step_gu
from .objective import AoiTracker, check_constraints, objective_value
from .semantics import DistortionSurrogate


@dataclass(frozen=True)
class JointAction:
    """Structured view of one flat action vector.

    Layout: for each UAV (elevation, azimuth, distance), then the
    (num_uavs x num_gus) payload-share logits in UAV-major order, then the
    raw compression knob in [0, 1] (one shared entry by default, or one
    per user when the scenario enables per-user compression).
    """

    commands: tuple[RelocationCommand, ...]
    rho_logits: np.ndarray      # shape (num_uavs, num_gus), entries in [0, 1]
    compression_raw: np.ndarray  # shape (1,) shared, or (num_gus,) per user

    @staticmethod
    def dimension(num_uavs: int, num_gus: int, per_gu_compression: bool = False) -> int:
        return 3 * num_uavs + num_uavs * num_gus + (num_gus if per_gu_compression else 1)

    @classmethod
    def from_flat(cls, vec: np.ndarray, num_uavs: int, num_gus: int,
                  cfg: ScenarioConfig) -> "JointAction":
        expected = cls.dimension(num_uavs, num_gus, cfg.per_gu_compression)
        vec = np.asarray(vec, dtype=float).ravel()
        if vec.shape != (expected,):
            raise ValueError(f"action has length {vec.size}, expected {expected}")
        max_leg = cfg.uav_speed_max * cfg.slot_duration
        commands = []
        for n in range(num_uavs):
            el, az, dist = vec[3 * n:3 * n + 3]
            commands.append(RelocationCommand(
                elevation=float(np.clip(el, 0.0, math.pi)),
                azimuth=float(az % (2.0 * math.pi)),
                distance=float(np.clip(dist, 0.0, max_leg)),
            ))
        rho = vec[3 * num_uavs:3 * num_uavs + num_uavs * num_gus]
        rho = np.clip(rho, 0.0, 1.0).reshape(num_uavs, num_gus)
        tail = num_gus if cfg.per_gu_compression else 1
        d_raw = np.clip(vec[-tail:], 0.0, 1.0)
        return cls(commands=tuple(commands), rho_logits=rho, compression_raw=d_raw)


@dataclass(frozen=True)
class GuSlotResult:
    gu: int
    served_by: tuple[int, ...]
    rho: tuple[float, ...]
    ready_time: float
    start_time: float | None
    completion_time: float | None
    dropped: bool
    aoi: float | None
    sss: float | None
    min_link_snr_db: float | None
    compression: int


@dataclass(frozen=True)
class UavSlotResult:
    uav: int
    tau_move: float
    energy_state: float
    energy_comm: float
    energy_remaining: float
    position: tuple[float, float, float]


@dataclass(frozen=True)
class SlotOutcome:
    slot: int
    gu_results: tuple[GuSlotResult, ...]
    uav_results: tuple[UavSlotResult, ...]
    collision: bool
    energy_violation: bool
    aoi_violations: tuple[int, ...]       # GU ids violating the backlog limit
    reward: float
    reward_components: dict = field(default_factory=dict)


class UavRelayEnv:
    """Gym-style environment over :class:`ScenarioConfig`.

    Observation (all entries O(1) after normalization):
      - UAV positions, x/A, y/A, z/z_max                  (3N)
      - GU positions, x/A, y/A                            (2M)
      - GU speeds / max GU speed                          (M)
      - GU pending payload at the last applied
        compression / original image bits                 (M)
      - GU arrival rates / max arrival rate               (M)
      - UAV remaining energy fraction                     (N)
      - |h| of every GU-UAV link, UAV-major               (N*M)
      - |h| of every UAV-server link                      (N)
    """

    def __init__(self, cfg: ScenarioConfig, surrogate: DistortionSurrogate | None = None):
        self.cfg = cfg
        self.surrogate = surrogate or DistortionSurrogate()
        self._rng = np.random.default_rng(cfg.rng_seed)
        self._gus: list[GroundUser] = []
        self._uavs: list[UavState] = []
        self._fading: FadingDraw | None = None
        self._k = 0
        self._last_d = cfg.compression_range[0]
        self.tracker = AoiTracker()
        self.ledger = EnergyLedger(cfg.num_uavs, cfg.energy_budget)
        self._sss_values: list[float] = []
        self._collision_slots = 0
        self._energy_violation_slots = 0

    # -- dimensions ---------------------------------------------------------

    @property
    def observation_dim(self) -> int:
        m, n = self.cfg.num_gus, self.cfg.num_uavs
        return 3 * n + 5 * m + n + n * m + n

    @property
    def action_dim(self) -> int:
        return JointAction.dimension(self.cfg.num_uavs, self.cfg.num_gus,
                                     self.cfg.per_gu_compression)

    @property
    def action_low(self) -> np.ndarray:
        return np.zeros(self.action_dim)

    @property
    def action_high(self) -> np.ndarray:
        n = self.cfg.num_uavs
        high = np.ones(self.action_dim)
        for i in range(n):
            high[3 * i:3 * i + 3] = (math.pi, 2.0 * math.pi,
                                     self.cfg.uav_speed_max * self.cfg.slot_duration)
        return high

    # -- lifecycle ----------------------------------------------------------

    def reset(self, seed: int | None = None) -> np.ndarray:
        cfg = self.cfg
        self._rng = np.random.default_rng(cfg.rng_seed if seed is None else seed)
        area = cfg.area_half_width
        z_min, z_max = cfg.uav_altitude_range

        self._gus = []
        initial_bits = semantics.data_size(*cfg.image_dims, cfg.compression_range[0])
        for m in range(cfg.num_gus):
            xy = self._rng.uniform(-area, area, size=2)
            speed = float(self._rng.uniform(*cfg.gu_speed_range))
            rate = float(self._rng.uniform(*cfg.arrival_rate_range))
            waypoint = draw_waypoint(area, self._rng)
            delta = waypoint[:2] - xy
            heading = math.atan2(delta[1], delta[0]) if np.any(delta) else 0.0
            self._gus.append(GroundUser(
                id=m, position=np.array([xy[0], xy[1], 0.0]), speed=speed,
                heading=heading, arrival_rate=rate, waypoint=waypoint,
                data_size=float(initial_bits),
            ))

        self._uavs = []
        for n in range(cfg.num_uavs):
            xy = self._rng.uniform(-area, area, size=2)
            z = float(self._rng.uniform(z_min, z_max))
            self._uavs.append(UavState(
                id=n, position=np.array([xy[0], xy[1], z]),
                energy_remaining=cfg.energy_budget,
            ))

        self._fading = FadingDraw.draw(cfg.nakagami_shape, cfg.nakagami_spread,
                                       cfg.num_uavs, cfg.num_gus, self._rng)
        self._k = 0
        self._last_d = cfg.compression_range[0]
        self.tracker = AoiTracker()
        self.ledger = EnergyLedger(cfg.num_uavs, cfg.energy_budget)
        self._sss_values = []
        self._collision_slots = 0
        self._energy_violation_slots = 0
        return self._observe()

    def step(self, action) -> tuple[np.ndarray, float, bool, SlotOutcome]:
        cfg = self.cfg
        if self._k >= cfg.num_slots:
            raise RuntimeError("episode finished; call reset()")
        joint = action if isinstance(action, JointAction) else \
            JointAction.from_flat(action, cfg.num_uavs, cfg.num_gus, cfg)

        k = self._k + 1
        tau = cfg.slot_duration
        slot_start = (k - 1) * tau
        n_uav, n_gu = cfg.num_uavs, cfg.num_gus

        # 1. Users report; encoding finishes early in the slot.
        ready = slot_start + self._rng.uniform(0.0, cfg.ready_time_fraction * tau, size=n_gu)

        # 2. Relocation; transmissions wait for the slowest UAV.
        pos_before = np.stack([u.position for u in self._uavs])
        tau_moves = np.empty(n_uav)
        for n, cmd in enumerate(joint.commands):
            self._uavs[n], tau_moves[n] = relocate_uav(self._uavs[n], cmd, cfg)
        pos_after = np.stack([u.position for u in self._uavs])
        pos_mid = 0.5 * (pos_before + pos_after)
        fleet_move = float(tau_moves.max())

        # 3. Coverage-based serving sets.
        served = np.zeros((n_uav, n_gu), dtype=bool)
        for n, uav in enumerate(self._uavs):
            for m, gu in enumerate(self._gus):
                served[n, m] = is_served(gu, uav, tau, cfg.coverage_angle)
        streams = served.sum(axis=1)

        # 5. Compression for the slot: one shared factor by default, one per
        # user when the scenario enables the per-user variant.
        d_min, d_max = cfg.compression_range
        raw = joint.compression_raw
        if raw.size == 1:
            raw = np.full(n_gu, raw[0])
        d_values = np.clip(np.floor(d_min + raw * (d_max - d_min) + 0.5),
                           d_min, d_max).astype(int)
        if cfg.feature_len_override is not None:
            feat_lens = np.full(n_gu, float(cfg.feature_len_override))
            payloads = 8.0 * feat_lens
        else:
            feat_lens = np.array([semantics.feature_length(*cfg.image_dims, int(d))
                                  for d in d_values])
            payloads = np.array([float(semantics.data_size(*cfg.image_dims, int(d)))
                                 for d in d_values])
        self._last_d = int(d_values[0])

        # 4, 6, 7. Per-user share normalization, timing, AoI and fidelity.
        gu_rows: list[GuSlotResult] = []
        link_budgets: dict[tuple[int, int], LinkBudget] = {}
        rho_map: dict[tuple[int, int], float] = {}
        start_times = np.full(n_gu, np.nan)
        for m, gu in enumerate(self._gus):
            serving = tuple(int(n) for n in np.nonzero(served[:, m])[0])
            if not serving:
                self.tracker.record_drop(m, k, float(ready[m]))
                gu_rows.append(GuSlotResult(
                    gu=m, served_by=(), rho=(), ready_time=float(ready[m]),
                    start_time=None, completion_time=None, dropped=True,
                    aoi=None, sss=None, min_link_snr_db=None,
                    compression=int(d_values[m])))
                continue

            weights = joint.rho_logits[list(serving), m]
            total = float(weights.sum())
            if total > 1e-12:
                rho = weights / total
            else:
                rho = np.full(len(serving), 1.0 / len(serving))

            t_start = max(slot_start + fleet_move, float(ready[m]))
            start_times[m] = t_start
            budgets = []
            for n in serving:
                budgets.append(self._budget_for_link(n, m, streams[n]))
                link_budgets[(n, m)] = budgets[-1]
            if cfg.rate_model == "modulation":
                rates = np.array([cfg.uplink_bandwidth / streams[n]
                                  * math.log2(cfg.modulation_order) for n in serving])
            else:
                rates = np.array([b.rate for b in budgets])
            with np.errstate(divide="ignore"):
                t_links = np.where(rates > 0, rho * payloads[m] / rates, np.inf)
            t_done = t_start + float(t_links.max())
            aoi = self.tracker.record_completion(m, k, float(ready[m]), t_done, tau)

            min_snr = min(b.end_to_end_snr for b in budgets)
            snr_db = 10.0 * math.log10(min_snr) if min_snr > 0 else -math.inf
            sss_val = None
            if aoi is not None:
                cos_sim, ms_ssim = self.surrogate.predict(int(d_values[m]), snr_db,
                                                          cfg.modulation_order,
                                                          float(feat_lens[m]))
                sss_val = semantics.sss(cos_sim, ms_ssim, cfg.sss_weight)
                self._sss_values.append(sss_val)
            for n, share in zip(serving, rho):
                rho_map[(n, m)] = float(share)
            gu_rows.append(GuSlotResult(
                gu=m, served_by=serving, rho=tuple(float(r) for r in rho),
                ready_time=float(ready[m]), start_time=t_start,
                completion_time=None if aoi is None else t_done,
                dropped=aoi is None, aoi=aoi, sss=sss_val,
                min_link_snr_db=snr_db, compression=int(d_values[m])))

        # 8. Energy: propulsion for the whole slot plus relaying charges,
        # capped at the time remaining after the transmission start.
        c1, c2, c3, v_tip, v0 = cfg.rotor_constants
        uav_rows: list[UavSlotResult] = []
        for n, uav in enumerate(self._uavs):
            e_state = slot_state_energy(float(tau_moves[n]), tau, cfg.uav_speed_max,
                                        c1, c2, c3, v_tip, v0)
            e_comm = 0.0
            for m in range(n_gu):
                key = (n, m)
                if key not in rho_map:
                    continue
                window = max(0.0, k * tau - start_times[m])
                e_rx, e_tx = comm_energy(
                    self._fading.gu_uav[n, m], link_budgets[key].distance,
                    cfg.path_loss_exp, rho_map[key], payloads[m], int(streams[n]),
                    cfg.uav_tx_power, cfg.uplink_bandwidth, cfg.noise_power_uav,
                    max_duration=window)
                e_comm += e_rx + e_tx
            self.ledger.charge(n, e_state, e_comm)
            self._uavs[n] = dataclasses.replace(
                uav, energy_remaining=uav.energy_remaining - e_state - e_comm)
            uav_rows.append(UavSlotResult(
                uav=n, tau_move=float(tau_moves[n]), energy_state=e_state,
                energy_comm=e_comm,
                energy_remaining=self._uavs[n].energy_remaining,
                position=tuple(float(x) for x in self._uavs[n].position)))

        # Constraint audit and reward.
        rates_arr = np.array([gu.arrival_rate for gu in self._gus])
        report = check_constraints([pos_before, pos_mid, pos_after], self.ledger,
                                   self.tracker, cfg, rates_arr, slot=k)
        collision = bool(report.c1_violations)
        energy_violation = bool(report.c2_violations)
        aoi_violations = tuple(sorted(m for m, _ in report.c3_violations))
        self._collision_slots += int(collision)
        self._energy_violation_slots += int(energy_violation)

        done = k == cfg.num_slots
        reward, components = self._reward(gu_rows, collision, energy_violation,
                                          aoi_violations, rates_arr, done)

        outcome = SlotOutcome(
            slot=k, gu_results=tuple(gu_rows), uav_results=tuple(uav_rows),
            collision=collision, energy_violation=energy_violation,
            aoi_violations=aoi_violations, reward=reward,
            reward_components=components)

        # 9, 10. Mobility advances and fresh fading for the next slot.
        self._gus = [step_gu(gu, tau, cfg.area_half_width, cfg.gu_speed_range, self._rng)
                     for gu in self._gus]
        for m, gu in enumerate(self._gus):
            row = gu_rows[m]
            gu.data_size = float(payloads[m])
            gu.ready_time = row.ready_time
            if row.completion_time is not None:
                gu.last_completion = row.completion_time
        self._fading = FadingDraw.draw(cfg.nakagami_shape, cfg.nakagami_spread,
                                       n_uav, n_gu, self._rng)
        self._k = k
        return self._observe(), reward, done, outcome

    # -- internals ----------------------------------------------------------

    def _budget_for_link(self, n: int, m: int, stream_count: int) -> LinkBudget:
        cfg = self.cfg
        gu, uav = self._gus[m], self._uavs[n]
        delta = uav.position - gu.position
        distance = float(np.linalg.norm(delta))
        heading_vec = np.array([math.cos(gu.heading), math.sin(gu.heading), 0.0])
        cos_theta = float(heading_vec @ delta) / distance if distance > 0 else 0.0
        doppler = doppler_shift(gu.speed, cfg.carrier_freq, math.acos(np.clip(cos_theta, -1, 1)))
        return link_budget(
            self._fading.gu_uav[n, m], self._fading.uav_cs[n], distance, doppler,
            cfg.path_loss_exp, cfg.uav_tx_power, cfg.uplink_bandwidth,
            stream_count, cfg.noise_power_uav, cfg.noise_power_cs)

    def _reward(self, gu_rows: list[GuSlotResult], collision: bool,
                energy_violation: bool, aoi_violations: tuple[int, ...],
                arrival_rates: np.ndarray, done: bool) -> tuple[float, dict]:
        cfg = self.cfg
        eta1, eta2, eta3 = cfg.penalties
        substitute = cfg.aoi_drop_substitute
        aoi_values = [substitute if row.dropped else row.aoi for row in gu_rows]
        slot_sss = [row.sss for row in gu_rows if row.sss is not None]

        dense = cfg.reward_mode == "dense"
        sss_term = cfg.objective_weight * min(slot_sss) if dense and slot_sss else 0.0
        aoi_term = (sum(aoi_values) / len(aoi_values)) / cfg.slot_duration if dense else 0.0
        collision_penalty = eta1 if collision else 0.0
        energy_penalty = eta2 if energy_violation else 0.0
        backlog_penalty = eta3 * sum(1.0 / arrival_rates[m] for m in aoi_violations)
        terminal_bonus = 0.0
        if done:
            metrics = self.mission_metrics()
            terminal_bonus = (cfg.objective_weight * metrics["min_sss"]
                              - metrics["avg_aoi"])

        components = {
            "sss_term": sss_term,
            "aoi_term": aoi_term,
            "collision_penalty": collision_penalty,
            "energy_penalty": energy_penalty,
            "backlog_penalty": backlog_penalty,
            "terminal_bonus": terminal_bonus,
        }
        reward = (sss_term - aoi_term - collision_penalty - energy_penalty
                  - backlog_penalty + terminal_bonus)
        return reward, components

    def _observe(self) -> np.ndarray:
        cfg = self.cfg
        area = cfg.area_half_width
        z_max = cfg.uav_altitude_range[1]
        v_max = cfg.gu_speed_range[1]
        lam_max = cfg.arrival_rate_range[1]
        d_orig = float(cfg.original_data_bits)

        parts = []
        for uav in self._uavs:
            parts.extend([uav.position[0] / area, uav.position[1] / area,
                          uav.position[2] / z_max])
        for gu in self._gus:
            parts.extend([gu.position[0] / area, gu.position[1] / area])
        parts.extend(gu.speed / v_max for gu in self._gus)
        parts.extend(gu.data_size / d_orig for gu in self._gus)
        parts.extend(gu.arrival_rate / lam_max for gu in self._gus)
        parts.extend(uav.energy_remaining / cfg.energy_budget for uav in self._uavs)
        parts.extend(np.abs(self._fading.gu_uav).ravel())
        parts.extend(np.abs(self._fading.uav_cs))
        return np.asarray(parts, dtype=np.float64)

    def mission_metrics(self) -> dict:
        """Aggregates over every slot stepped so far."""
        avg_aoi = self.tracker.mission_average(self.cfg.aoi_drop_substitute)
        min_sss = min(self._sss_values) if self._sss_values else 0.0
        return {
            "avg_aoi": avg_aoi,
            "min_sss": min_sss,
            "drops": self.tracker.drop_count(),
            "collisions": self._collision_slots,
            "energy_violations": self._energy_violation_slots,
            "objective": objective_value(avg_aoi, min_sss, self.cfg.objective_weight),
        }

    @property
    def ground_users(self) -> list[GroundUser]:
        return self._gus

    @property
    def uavs(self) -> list[UavState]:
        return self._uavs

    @property
    def fading(self) -> FadingDraw:
        return self._fading


def split_observation(obs: np.ndarray, cfg: ScenarioConfig) -> dict:
    """Undo the observation normalization into named physical arrays."""
    m, n = cfg.num_gus, cfg.num_uavs
    area = cfg.area_half_width
    z_max = cfg.uav_altitude_range[1]
    obs = np.asarray(obs, dtype=float)
    if obs.shape != (3 * n + 5 * m + n + n * m + n,):
        raise ValueError("observation length does not match the scenario")
    i = 0
    uav_pos = obs[i:i + 3 * n].reshape(n, 3) * np.array([area, area, z_max])
    i += 3 * n
    gu_pos = obs[i:i + 2 * m].reshape(m, 2) * area
    i += 2 * m
    gu_speed = obs[i:i + m] * cfg.gu_speed_range[1]
    i += m
    gu_bits = obs[i:i + m] * cfg.original_data_bits
    i += m
    gu_rate = obs[i:i + m] * cfg.arrival_rate_range[1]
    i += m
    energy_frac = obs[i:i + n]
    i += n
    h_gu = obs[i:i + n * m].reshape(n, m)
    i += n * m
    h_cs = obs[i:i + n]
    return {
        "uav_pos": uav_pos, "gu_pos": gu_pos, "gu_speed": gu_speed,
        "gu_bits": gu_bits, "gu_arrival_rate": gu_rate,
        "energy_fraction": energy_frac, "h_gu_mag": h_gu, "h_cs_mag": h_cs,
    }
