"""Experiment runner: scenario evaluation, parameter sweeps and table export.

Every emitted table is comma-separated with a header row, preceded by
``#``-prefixed metadata lines carrying the scenario hash and the seed
list, so reruns are byte-identical and self-describing. Figures are
rendered next to each table unless disabled.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ScenarioConfig, config_to_dict
from .env import SlotOutcome, UavRelayEnv
from .policy import ActorPolicy, HoverCentroidPolicy
from .semantics import CalibrationTable, DistortionSurrogate

log = logging.getLogger(__name__)

GU_TRACE_HEADER = ["slot", "gu", "served_by", "rho", "ready_time", "start_time",
                   "completion_time", "dropped", "aoi", "sss", "min_link_snr_db",
                   "compression"]
UAV_TRACE_HEADER = ["slot", "uav", "tau_move", "energy_state", "energy_comm",
                    "energy_remaining", "x", "y", "z"]
EVAL_HEADER = ["seed", "avg_aoi", "min_sss", "drops", "collisions",
               "energy_violations", "objective"]
TAU_HEADER = ["tau", "seed", "avg_aoi", "min_sss", "drops", "objective"]
SNR_HEADER = ["snr_db", "seed", "avg_aoi", "min_sss", "drops"]
HEATMAP_HEADER = ["feature_len", "mod_order", "seed", "avg_aoi", "min_sss"]


@dataclass
class ExperimentSpec:
    """One experiment request: scenario, policy, grids, seeds, output."""

    cfg: ScenarioConfig
    out_dir: Path
    seeds: tuple[int, ...] = (0, 1)
    policy: str = "heuristic"            # "heuristic" or an actor checkpoint path
    policy_d_mode: str = "adaptive"
    policy_fixed_d: int = 2
    tau_grid: tuple[float, ...] = (2.0, 5.0, 10.0, 15.0)
    snr_offsets_db: tuple[float, ...] = (0.0, 5.0, 10.0, 15.0, 20.0)
    feature_len_grid: tuple[int, ...] = (4096, 16384, 65536, 262144)
    mod_order_grid: tuple[int, ...] = (4, 16, 64, 256)
    calibration_path: Path | None = None
    render_figures: bool = True

    def __post_init__(self):
        self.out_dir = Path(self.out_dir)
        if not self.seeds:
            raise ValueError("need at least one seed")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be distinct per repetition")
        for name in ("tau_grid", "snr_offsets_db", "feature_len_grid", "mod_order_grid"):
            if not getattr(self, name):
                raise ValueError(f"{name} must be nonempty")

    def surrogate(self) -> DistortionSurrogate:
        table = None
        if self.calibration_path is not None:
            table = CalibrationTable.from_csv(self.calibration_path)
        return DistortionSurrogate(table)


def sweep_scenario(**overrides) -> ScenarioConfig:
    """Compact default scenario for the sweep harness: small enough to run
    in CI, arrival rates slow enough that the whole default tau grid stays
    feasible."""
    base = dict(
        area_half_width=250.0,
        num_gus=8,
        num_uavs=2,
        mission_duration=300.0,
        arrival_rate_range=(0.03, 0.0625),
    )
    base.update(overrides)
    return ScenarioConfig(**base)


def config_hash(cfg: ScenarioConfig) -> str:
    payload = json.dumps(config_to_dict(cfg), sort_keys=True).encode()
    return hashlib.sha256(payload).hexdigest()[:16]


def make_policy(spec: ExperimentSpec, cfg: ScenarioConfig):
    if spec.policy == "heuristic":
        fixed = spec.policy_fixed_d if spec.policy_d_mode == "fixed" else None
        return HoverCentroidPolicy(cfg, d_mode=spec.policy_d_mode, fixed_d=fixed)
    env = UavRelayEnv(cfg)
    return ActorPolicy.from_checkpoint(spec.policy, env.action_low, env.action_high)


def run_episode(cfg: ScenarioConfig, policy, seed: int,
                surrogate: DistortionSurrogate | None = None,
                collect: bool = False) -> tuple[dict, list[SlotOutcome]]:
    """Roll one full mission under a policy; returns mission metrics and,
    when requested, every slot outcome for trace export."""
    env = UavRelayEnv(cfg, surrogate=surrogate)
    obs = env.reset(seed=seed)
    outcomes: list[SlotOutcome] = []
    done = False
    while not done:
        obs, _, done, outcome = env.step(policy.act(obs))
        if collect:
            outcomes.append(outcome)
    return env.mission_metrics(), outcomes


# -- tables -------------------------------------------------------------------

def write_table(path: Path, header: list[str], rows: list[list],
                meta: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        for key, value in meta.items():
            fh.write(f"# {key}={value}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def read_table(path: Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    return header, list(reader)


def _meta(spec: ExperimentSpec, cfg: ScenarioConfig) -> dict:
    return {"config_hash": config_hash(cfg),
            "seeds": ",".join(str(s) for s in spec.seeds),
            "policy": spec.policy}


def write_traces(out_dir: Path, seed: int, outcomes: list[SlotOutcome]) -> None:
    """One row per (slot, GU) and per (slot, UAV) for a single episode."""
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / f"trace_gu_seed{seed}.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(GU_TRACE_HEADER)
        for outcome in outcomes:
            for r in outcome.gu_results:
                writer.writerow([
                    outcome.slot, r.gu, "|".join(map(str, r.served_by)),
                    "|".join(f"{x:.9f}" for x in r.rho), r.ready_time,
                    _opt(r.start_time), _opt(r.completion_time), int(r.dropped),
                    _opt(r.aoi), _opt(r.sss), _opt(r.min_link_snr_db), r.compression])
    with open(out_dir / f"trace_uav_seed{seed}.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(UAV_TRACE_HEADER)
        for outcome in outcomes:
            for r in outcome.uav_results:
                writer.writerow([outcome.slot, r.uav, r.tau_move, r.energy_state,
                                 r.energy_comm, r.energy_remaining,
                                 r.position[0], r.position[1], r.position[2]])


def _opt(value) -> str:
    return "" if value is None else repr(value)


# -- experiment verbs -----------------------------------------------------------

def run_eval(spec: ExperimentSpec) -> list[list]:
    """Evaluate the selected policy over every seed; exports metrics plus
    per-episode traces."""
    policy = make_policy(spec, spec.cfg)
    surrogate = spec.surrogate()
    rows = []
    for seed in spec.seeds:
        metrics, outcomes = run_episode(spec.cfg, policy, seed, surrogate, collect=True)
        rows.append([seed, metrics["avg_aoi"], metrics["min_sss"], metrics["drops"],
                     metrics["collisions"], metrics["energy_violations"],
                     metrics["objective"]])
        write_traces(spec.out_dir, seed, outcomes)
    write_table(spec.out_dir / "eval_metrics.csv", EVAL_HEADER, rows,
                _meta(spec, spec.cfg))
    return rows


def run_tau_sweep(spec: ExperimentSpec) -> list[list]:
    """Evaluate each slot duration with matched seeds. Slot durations that
    violate the inter-arrival bound are skipped with a notice, not a fault.

    Unless the scenario pins its own dropped-task AoI substitute, the sweep
    fixes it to the backlog bound 1/lambda_max for every grid point: the
    staleness cost of a missed update must not shrink with the very slot
    length under comparison.
    """
    rows = []
    lam_max = spec.cfg.arrival_rate_range[1]
    substitute = spec.cfg.drop_aoi_substitute
    if substitute is None:
        substitute = 1.0 / lam_max
    for tau in spec.tau_grid:
        if tau > 1.0 / lam_max:
            log.warning("skipping infeasible tau=%s s (exceeds 1/lambda_max=%.3f s)",
                        tau, 1.0 / lam_max)
            continue
        cfg = spec.cfg.replace(slot_duration=float(tau), drop_aoi_substitute=substitute)
        policy = make_policy(spec, cfg)
        surrogate = spec.surrogate()
        for seed in spec.seeds:
            metrics, _ = run_episode(cfg, policy, seed, surrogate)
            rows.append([tau, seed, metrics["avg_aoi"], metrics["min_sss"],
                         metrics["drops"], metrics["objective"]])
    write_table(spec.out_dir / "tau_sweep.csv", TAU_HEADER, rows,
                _meta(spec, spec.cfg))
    if spec.render_figures:
        from . import plots
        plots.tau_figure(rows, spec.out_dir / "tau_sweep.png")
    return rows


def run_snr_sweep(spec: ExperimentSpec) -> list[list]:
    """Sweep a nominal SNR offset by scaling both receiver noise powers
    down by 10^(offset/10), with matched seeds across offsets."""
    rows = []
    for offset in spec.snr_offsets_db:
        scale = 10.0 ** (-offset / 10.0)
        cfg = spec.cfg.replace(
            noise_power_uav=spec.cfg.noise_power_uav * scale,
            noise_power_cs=spec.cfg.noise_power_cs * scale)
        policy = make_policy(spec, cfg)
        surrogate = spec.surrogate()
        for seed in spec.seeds:
            metrics, _ = run_episode(cfg, policy, seed, surrogate)
            rows.append([offset, seed, metrics["avg_aoi"], metrics["min_sss"],
                         metrics["drops"]])
    write_table(spec.out_dir / "snr_sweep.csv", SNR_HEADER, rows,
                _meta(spec, spec.cfg))
    if spec.render_figures:
        from . import plots
        plots.snr_figure(rows, spec.out_dir / "snr_sweep.png")
    return rows


def run_heatmap(spec: ExperimentSpec) -> list[list]:
    """Grid evaluation over (semantic feature length, modulation order).

    Payload is truncated to the requested feature length and the link rate
    switches to the modulation-limited model, so the grid isolates the
    length/order trade instead of the Shannon bound.
    """
    rows = []
    for feat_len in spec.feature_len_grid:
        for order in spec.mod_order_grid:
            cfg = spec.cfg.replace(feature_len_override=int(feat_len),
                                   modulation_order=int(order),
                                   rate_model="modulation")
            policy = make_policy(spec, cfg)
            surrogate = spec.surrogate()
            for seed in spec.seeds:
                metrics, _ = run_episode(cfg, policy, seed, surrogate)
                rows.append([feat_len, order, seed, metrics["avg_aoi"],
                             metrics["min_sss"]])
    write_table(spec.out_dir / "heatmap.csv", HEATMAP_HEADER, rows,
                _meta(spec, spec.cfg))
    if spec.render_figures:
        from . import plots
        plots.heatmap_figure(rows, spec.out_dir / "heatmap.png")
    return rows


def aggregate(rows: list[list], key_cols: tuple[int, ...],
              value_cols: tuple[int, ...]) -> dict[tuple, list[float]]:
    """Group rows by key columns and average the value columns (used by
    trend checks and the figure renderers)."""
    groups: dict[tuple, list[list[float]]] = {}
    for row in rows:
        key = tuple(row[c] for c in key_cols)
        groups.setdefault(key, []).append([float(row[c]) for c in value_cols])
    return {key: list(np.mean(vals, axis=0)) for key, vals in sorted(groups.items())}
