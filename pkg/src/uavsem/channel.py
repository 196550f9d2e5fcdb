"""Ground-to-air / air-to-ground signal chain.

Models each link as one flat-fading complex coefficient per slot:
Nakagami-m small-scale fading, distance path loss, a per-slot Doppler
phase, an amplify-and-forward relay gain and the resulting end-to-end
SNR and Shannon rate. A symbol-level pipeline (QAM, relay, MMSE
equalizer) is provided for fidelity experiments.

Convention: amplitude-domain quantities attenuate as d^-p, power-domain
quantities as d^-2p. Configured noise values are powers (W); square roots
are taken exactly once where a formula uses the noise standard deviation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import SPEED_OF_LIGHT


@dataclass(frozen=True)
class FadingDraw:
    """Per-slot small-scale fading state: one coefficient per GU-UAV pair
    and one per UAV-server link."""

    gu_uav: np.ndarray   # complex, shape (num_uavs, num_gus)
    uav_cs: np.ndarray   # complex, shape (num_uavs,)

    @classmethod
    def draw(cls, shape_m: float, spread: float, num_uavs: int, num_gus: int,
             rng: np.random.Generator) -> "FadingDraw":
        gu_uav = sample_nakagami(shape_m, spread, rng, size=(num_uavs, num_gus))
        uav_cs = sample_nakagami(shape_m, spread, rng, size=(num_uavs,))
        return cls(gu_uav=gu_uav, uav_cs=uav_cs)


@dataclass(frozen=True)
class LinkBudget:
    """Resolved per-link figures for one slot."""

    distance: float          # m, 3-D GU-UAV separation
    doppler: float           # Hz
    af_gain: float
    end_to_end_snr: float    # linear
    rate: float              # bits/s


def sample_nakagami(shape_m: float, spread: float, rng: np.random.Generator,
                    size=None) -> np.ndarray | complex:
    """Draw complex coefficients whose magnitude is Nakagami-m distributed.

    |h|^2 ~ Gamma(shape=m, scale=spread/m), so E[|h|^2] = spread; the phase
    is uniform on [0, 2*pi).
    """
    if shape_m < 0.5:
        raise ValueError(f"Nakagami shape must be >= 0.5, got {shape_m}")
    if spread <= 0:
        raise ValueError(f"Nakagami spread must be positive, got {spread}")
    power = rng.gamma(shape=shape_m, scale=spread / shape_m, size=size)
    phase = rng.uniform(0.0, 2.0 * math.pi, size=size)
    h = np.sqrt(power) * np.exp(1j * phase)
    if size is None:
        return complex(h)
    return h


def doppler_shift(v_gu: float, carrier_freq: float, theta: float) -> float:
    """Doppler frequency (Hz) for a user moving at angle theta to the link."""
    return v_gu * carrier_freq * math.cos(theta) / SPEED_OF_LIGHT


def af_gain(h_gu: complex, distance: float, path_loss_exp: float, p_uav: float,
            served_count: int, noise_uav: float) -> float:
    """Amplify-and-forward gain meeting the per-stream transmit power budget.

    The relay normalizes its received signal-plus-noise power to
    p_uav / served_count, so G = sqrt((P/M) / (|h|^2 d^-2p + sigma^2)).
    """
    if distance <= 0:
        raise ValueError("GU-UAV distance must be positive")
    if served_count < 1:
        raise ValueError("served_count must be >= 1")
    rx_power = abs(h_gu) ** 2 * distance ** (-2.0 * path_loss_exp)
    return math.sqrt((p_uav / served_count) / (rx_power + noise_uav))


def end_to_end_snr(h_gu: complex, h_cs: complex, gain: float, distance: float,
                   path_loss_exp: float, noise_uav: float, noise_cs: float) -> float:
    """Composite SNR of the two-hop relayed link (linear).

    Numerator: server-side signal power |h_cs|^2 |h_gu G|^2 d^-2p.
    Denominator: relay noise amplified through the second hop plus server
    noise, (G |h_cs|)^2 sigma_uav^2 + sigma_cs^2.
    """
    signal = (abs(h_cs) ** 2) * (abs(h_gu) * gain) ** 2 * distance ** (-2.0 * path_loss_exp)
    noise = (gain * abs(h_cs)) ** 2 * noise_uav + noise_cs
    return signal / noise


def link_rate(h_gu: complex, h_cs: complex, gain: float, distance: float,
              path_loss_exp: float, bandwidth: float, served_count: int,
              noise_uav: float, noise_cs: float) -> float:
    """End-to-end Shannon rate in bits/s with the bandwidth split evenly
    across the streams the UAV is relaying."""
    if served_count < 1:
        raise ValueError("served_count must be >= 1")
    snr = end_to_end_snr(h_gu, h_cs, gain, distance, path_loss_exp, noise_uav, noise_cs)
    return bandwidth / served_count * math.log2(1.0 + snr)


def link_budget(h_gu: complex, h_cs: complex, distance: float, doppler: float,
                path_loss_exp: float, p_uav: float, bandwidth: float,
                served_count: int, noise_uav: float, noise_cs: float) -> LinkBudget:
    gain = af_gain(h_gu, distance, path_loss_exp, p_uav, served_count, noise_uav)
    snr = end_to_end_snr(h_gu, h_cs, gain, distance, path_loss_exp, noise_uav, noise_cs)
    rate = bandwidth / served_count * math.log2(1.0 + snr)
    return LinkBudget(distance=distance, doppler=doppler, af_gain=gain,
                      end_to_end_snr=snr, rate=rate)


def symbol_pipeline(symbols: np.ndarray, h_gu: complex, h_cs: complex, gain: float,
                    distance: float, path_loss_exp: float, doppler: float, tau: float,
                    noise_uav: float, noise_cs: float,
                    rng: np.random.Generator | None = None) -> np.ndarray:
    """Push unit-power symbols through GU -> UAV -> server and equalize.

    The first hop applies fading, amplitude path loss d^-p and the per-slot
    Doppler phase rotation; the relay rescales by the AF gain; the second
    hop applies the server-side fading. Equalization is MMSE with perfect
    knowledge of the composite coefficient (genie-aided): with zero noise
    it reduces to zero-forcing and returns the input exactly.

    Pass rng=None for the noiseless pipeline.
    """
    symbols = np.asarray(symbols, dtype=complex)
    phase = np.exp(1j * 2.0 * math.pi * doppler * tau)
    first_hop = h_gu * distance ** (-path_loss_exp) * phase

    n_uav = _awgn(symbols.shape, noise_uav, rng)
    y_uav = first_hop * symbols + n_uav
    n_cs = _awgn(symbols.shape, noise_cs, rng)
    y_cs = h_cs * gain * y_uav + n_cs

    composite = h_cs * gain * first_hop
    noise_eff = abs(h_cs * gain) ** 2 * noise_uav + noise_cs
    return np.conj(composite) * y_cs / (abs(composite) ** 2 + noise_eff)


def _awgn(shape, power: float, rng: np.random.Generator | None) -> np.ndarray:
    if rng is None or power == 0:
        return np.zeros(shape, dtype=complex)
    scale = math.sqrt(power / 2.0)
    return rng.normal(0.0, scale, shape) + 1j * rng.normal(0.0, scale, shape)


# --- Gray-mapped square QAM ------------------------------------------------

def _gray_to_binary(g: np.ndarray) -> np.ndarray:
    b = g.copy()
    shift = g >> 1
    while np.any(shift):
        b ^= shift
        shift >>= 1
    return b


def _binary_to_gray(b: np.ndarray) -> np.ndarray:
    return b ^ (b >> 1)


def _qam_geometry(order: int) -> tuple[int, float]:
    if order not in (4, 16, 64, 256):
        raise ValueError(f"unsupported modulation order {order}")
    side = int(round(math.sqrt(order)))
    # Unit average symbol energy for levels {+-1, +-3, ...} on both axes.
    norm = math.sqrt(3.0 / (2.0 * (order - 1)))
    return side, norm


def qam_modulate(bits: np.ndarray, order: int) -> np.ndarray:
    """Map a 0/1 bit array onto Gray-coded square QAM with unit average energy.

    The first half of each symbol's bits selects the in-phase level, the
    second half the quadrature level, each through a Gray code.
    """
    side, norm = _qam_geometry(order)
    k = int(round(math.log2(order)))
    bits = np.asarray(bits, dtype=np.int64).ravel()
    if bits.size % k != 0:
        raise ValueError(f"bit count {bits.size} not divisible by {k} bits/symbol")
    groups = bits.reshape(-1, k)
    half = k // 2
    gray_i = _pack_bits(groups[:, :half])
    gray_q = _pack_bits(groups[:, half:])
    level_i = 2 * _gray_to_binary(gray_i) - (side - 1)
    level_q = 2 * _gray_to_binary(gray_q) - (side - 1)
    return norm * (level_i + 1j * level_q)


def qam_demodulate(symbols: np.ndarray, order: int) -> np.ndarray:
    """Hard-decision nearest-neighbor demodulation back to a 0/1 bit array.

    For square QAM the nearest constellation point factorizes per axis, so
    each axis is quantized to its closest level independently.
    """
    side, norm = _qam_geometry(order)
    k = int(round(math.log2(order)))
    half = k // 2
    symbols = np.asarray(symbols, dtype=complex).ravel()
    idx_i = _nearest_level(symbols.real / norm, side)
    idx_q = _nearest_level(symbols.imag / norm, side)
    bits_i = _unpack_bits(_binary_to_gray(idx_i), half)
    bits_q = _unpack_bits(_binary_to_gray(idx_q), half)
    return np.concatenate([bits_i, bits_q], axis=1).reshape(-1)


def _nearest_level(coords: np.ndarray, side: int) -> np.ndarray:
    idx = np.round((coords + (side - 1)) / 2.0).astype(np.int64)
    return np.clip(idx, 0, side - 1)


def _pack_bits(bits: np.ndarray) -> np.ndarray:
    out = np.zeros(bits.shape[0], dtype=np.int64)
    for col in range(bits.shape[1]):
        out = (out << 1) | bits[:, col]
    return out


def _unpack_bits(values: np.ndarray, width: int) -> np.ndarray:
    out = np.empty((values.shape[0], width), dtype=np.int64)
    for col in range(width):
        out[:, col] = (values >> (width - 1 - col)) & 1
    return out
