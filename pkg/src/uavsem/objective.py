"""Age-of-information accounting and the scalarized mission objective."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .config import ScenarioConfig
from .energy import EnergyLedger


@dataclass(frozen=True)
class TaskRecord:
    gu: int
    slot: int
    ready_time: float
    completion_time: float | None   # None when dropped
    aoi: float | None               # None when dropped, never fabricated
    dropped: bool


@dataclass
class ConstraintReport:
    """Violations of the separation (c1), energy (c2) and backlog (c3)
    constraints found at the end of a slot."""

    c1_violations: list[tuple[int, int]] = field(default_factory=list)   # UAV pairs
    c2_violations: list[int] = field(default_factory=list)               # UAV ids
    c3_violations: list[tuple[int, int]] = field(default_factory=list)   # (gu, slot)

    def any(self) -> bool:
        return bool(self.c1_violations or self.c2_violations or self.c3_violations)


class AoiTracker:
    """Per-(GU, slot) freshness records for one mission."""

    def __init__(self):
        self.records: dict[tuple[int, int], TaskRecord] = {}

    def record_completion(self, gu: int, slot: int, t_ready: float, t_done: float,
                          tau: float) -> float | None:
        """Record a finished transfer; returns its AoI, or None if the slot
        deadline slot*tau was missed and the task is dropped. Completion
        exactly at the deadline counts as a drop (strict inequality)."""
        if t_done < t_ready:
            raise ValueError(f"completion {t_done} precedes ready time {t_ready}")
        if t_done < slot * tau:
            aoi = t_done - t_ready
            rec = TaskRecord(gu, slot, t_ready, t_done, aoi, dropped=False)
        else:
            aoi = None
            rec = TaskRecord(gu, slot, t_ready, None, None, dropped=True)
        self.records[(gu, slot)] = rec
        return aoi

    def record_drop(self, gu: int, slot: int, t_ready: float) -> None:
        """A task that never got a transmission opportunity."""
        self.records[(gu, slot)] = TaskRecord(gu, slot, t_ready, None, None, dropped=True)

    def mission_average(self, drop_substitute: float) -> float:
        """Mean AoI over GUs then slots, with dropped entries contributing
        drop_substitute seconds (a pure average, order-independent)."""
        if not self.records:
            return 0.0
        per_slot: dict[int, list[float]] = {}
        for rec in self.records.values():
            value = drop_substitute if rec.dropped else rec.aoi
            per_slot.setdefault(rec.slot, []).append(value)
        slot_means = [sum(v) / len(v) for v in per_slot.values()]
        return sum(slot_means) / len(slot_means)

    def drop_count(self) -> int:
        return sum(1 for rec in self.records.values() if rec.dropped)

    def slot_records(self, slot: int) -> list[TaskRecord]:
        return [rec for rec in self.records.values() if rec.slot == slot]


def objective_value(avg_aoi: float, min_sss: float, beta: float) -> float:
    """Scalar mission objective to minimize: average AoI minus beta times
    the worst semantic-structural similarity."""
    return avg_aoi - beta * min_sss


def check_constraints(position_samples: list[np.ndarray], ledger: EnergyLedger,
                      tracker: AoiTracker, cfg: ScenarioConfig,
                      arrival_rates: np.ndarray, slot: int | None = None) -> ConstraintReport:
    """End-of-slot constraint audit.

    c1 compares every UAV pair at each sampled position set (slot start,
    relocation midpoint, slot end); separation exactly at the minimum is
    compliant. c2 flags UAVs whose cumulative energy strictly exceeds the
    budget. c3 flags tasks whose AoI exceeds the user's mean inter-arrival
    time 1/lambda; dropped tasks count as backlog violations because their
    update never arrived.
    """
    report = ConstraintReport()
    seen = set()
    for sample in position_samples:
        for i, j in itertools.combinations(range(sample.shape[0]), 2):
            if (i, j) in seen:
                continue
            if float(np.linalg.norm(sample[i] - sample[j])) < cfg.min_separation:
                report.c1_violations.append((i, j))
                seen.add((i, j))

    report.c2_violations = [int(i) for i in np.nonzero(ledger.exceeded())[0]]

    records = tracker.slot_records(slot) if slot is not None else tracker.records.values()
    for rec in records:
        limit = 1.0 / arrival_rates[rec.gu]
        if rec.dropped or rec.aoi > limit:
            report.c3_violations.append((rec.gu, rec.slot))
    return report
