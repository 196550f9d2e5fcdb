"""Propulsion and communication energy accounting per UAV per slot."""

from __future__ import annotations

import math

import numpy as np


def propulsion_power(v: float, c1: float, c2: float, c3: float,
                     v_tip: float, v0: float) -> float:
    """Rotary-wing propulsion power (W) at forward speed v.

    Blade profile term c1*(1 + 3v^2/v_tip^2), induced term
    c2*sqrt(sqrt(1 + v^4/4v0^4) - v^2/2v0^2) with the nested root that
    keeps the radicand nonnegative at every speed, and parasite term
    c3*v^3/2. At v=0 this reduces to the hover power c1 + c2.
    """
    profile = c1 * (1.0 + 3.0 * v * v / (v_tip * v_tip))
    induced = c2 * math.sqrt(math.sqrt(1.0 + v ** 4 / (4.0 * v0 ** 4)) - v * v / (2.0 * v0 * v0))
    parasite = 0.5 * c3 * v ** 3
    return profile + induced + parasite


def slot_state_energy(tau_move: float, tau: float, v_move: float,
                      c1: float, c2: float, c3: float, v_tip: float, v0: float) -> float:
    """Flight-state energy (J) for one slot: tau_move seconds of moving at
    v_move followed by hovering for the remainder."""
    return (propulsion_power(v_move, c1, c2, c3, v_tip, v0) * tau_move
            + propulsion_power(0.0, c1, c2, c3, v_tip, v0) * (tau - tau_move))


def comm_energy(h_gu: complex, distance: float, path_loss_exp: float,
                rho: float, data_bits: float, served_count: int,
                p_uav: float, bandwidth: float, noise_uav: float,
                max_duration: float | None = None) -> tuple[float, float]:
    """Relay-side energy (E_rx, E_tx) in joules for one GU's data share.

    E_rx charges the power captured by the receive front end for the time
    the ground-to-air hop needs at its single-hop Shannon rate; E_tx
    charges the per-stream transmit power for the time the air-to-ground
    hop needs at its nominal Shannon rate. Both durations can be capped at
    max_duration (the time left in the slot) so an aborted transfer cannot
    book unbounded energy.
    """
    if not (0.0 <= rho <= 1.0):
        raise ValueError(f"rho must lie in [0, 1], got {rho}")
    if data_bits < 0:
        raise ValueError("data_bits must be nonnegative")
    share = rho * data_bits
    if share == 0:
        return 0.0, 0.0

    rx_power = abs(h_gu) ** 2 * distance ** (-2.0 * path_loss_exp)
    per_stream = bandwidth / served_count
    rate_g2a = per_stream * math.log2(1.0 + rx_power / noise_uav)
    rate_a2g = per_stream * math.log2(1.0 + p_uav / (noise_uav * served_count))
    if (rate_g2a <= 0 or rate_a2g <= 0) and max_duration is None:
        raise ZeroRateError("zero link rate with positive data: task cannot complete")

    t_rx = share / rate_g2a if rate_g2a > 0 else math.inf
    t_tx = share / rate_a2g if rate_a2g > 0 else math.inf
    if max_duration is not None:
        t_rx = min(t_rx, max_duration)
        t_tx = min(t_tx, max_duration)
    return rx_power * t_rx, (p_uav / served_count) * t_tx


class ZeroRateError(RuntimeError):
    """A transfer was scheduled on a link that cannot carry data."""


class EnergyLedger:
    """Cumulative per-UAV energy books for one mission."""

    def __init__(self, num_uavs: int, budget: float):
        self.budget = budget
        self.state = np.zeros(num_uavs)   # propulsion, J
        self.comm = np.zeros(num_uavs)    # relaying, J
        self._history: list[tuple[int, float, float]] = []

    def charge(self, uav: int, e_state: float, e_comm: float) -> None:
        if e_state < 0 or e_comm < 0:
            raise ValueError("energy charges must be nonnegative")
        self.state[uav] += e_state
        self.comm[uav] += e_comm
        self._history.append((uav, e_state, e_comm))

    def total(self, uav: int) -> float:
        return float(self.state[uav] + self.comm[uav])

    def totals(self) -> np.ndarray:
        return self.state + self.comm

    def remaining(self, uav: int) -> float:
        return self.budget - self.total(uav)

    def exceeded(self) -> np.ndarray:
        """Boolean per-UAV flags; the budget boundary itself is compliant."""
        return self.totals() > self.budget

    def resummed_totals(self) -> np.ndarray:
        """Recompute totals from the raw charge history (conservation check).

        Accumulation mirrors the live books (per-kind running sums added at
        the end) so the comparison is exact in floating point.
        """
        state = np.zeros_like(self.state)
        comm = np.zeros_like(self.comm)
        for uav, e_state, e_comm in self._history:
            state[uav] += e_state
            comm[uav] += e_comm
        return state + comm
