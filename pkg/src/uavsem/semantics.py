"""Semantic-codec abstraction at the fidelity level.

The simulator never touches image tensors. Payload sizing, the blended
semantic-structural similarity score and a distortion surrogate mapping
(compression, channel condition, modulation, feature length) to predicted
cosine similarity and MS-SSIM live here. The surrogate can run standalone
from a fixed analytic model, or interpolate a calibration table measured
by an external codec implementation.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path

log = logging.getLogger(__name__)

# Analytic surrogate constants, versioned so that runs without a
# calibration table stay reproducible across releases.
SURROGATE_VERSION = 1
COS_SNR_MIDPOINT_DB = 0.0
MSSSIM_SNR_MIDPOINT_DB = 3.0
SNR_SLOPE_DB = 2.5
QUANT_CEILING_COEFF = 0.12
RICHNESS_EXPONENT = 0.3
RICHNESS_SCALE = 1.4

CALIBRATION_HEADER = ["d", "snr_db", "mod_order", "feature_len", "cos_sim", "ms_ssim"]


def data_size(channels: int, height: int, width: int, d: int) -> int:
    """Payload bits for one image at compression factor d: ceil(8CHW / 2^2d).

    d = 0 is the identity (uncompressed) case; scenarios restrict d >= 1.
    """
    if d < 0 or int(d) != d:
        raise ValueError(f"compression factor must be a nonnegative integer, got {d}")
    return math.ceil(8 * channels * height * width / 2 ** (2 * d))


def feature_length(channels: int, height: int, width: int, d: int) -> float:
    """Number of complex semantic features at compression d (may be
    fractional when 2^2d does not divide the pixel count)."""
    return channels * height * width / 2 ** (2 * d)


def sss(cos_sim: float, ms_ssim: float, alpha_s: float) -> float:
    """Semantic-structural similarity: alpha_s-weighted blend of feature
    cosine similarity and MS-SSIM."""
    return alpha_s * cos_sim + (1.0 - alpha_s) * ms_ssim


@dataclass(frozen=True)
class CalibrationRow:
    d: int
    snr_db: float
    mod_order: int
    feature_len: float
    cos_sim: float
    ms_ssim: float


class CalibrationTable:
    """Measured (d, snr, order, feature length) -> fidelity grid.

    Rows are keyed uniquely by (d, snr_db, mod_order, feature_len); values
    must be in range. Non-monotone behavior along the SNR axis is reported
    as a warning, not an error, because measured tables are noisy.
    """

    def __init__(self, rows: list[CalibrationRow]):
        keys = set()
        for row in rows:
            key = (row.d, row.snr_db, row.mod_order, row.feature_len)
            if key in keys:
                raise ValueError(f"duplicate calibration key {key}")
            keys.add(key)
            if not (-1.0 <= row.cos_sim <= 1.0):
                raise ValueError(f"cos_sim out of range in row {key}")
            if not (0.0 <= row.ms_ssim <= 1.0):
                raise ValueError(f"ms_ssim out of range in row {key}")
        self.rows = sorted(rows, key=lambda r: (r.d, r.mod_order, r.feature_len, r.snr_db))
        self._warn_if_not_monotone()

    def _warn_if_not_monotone(self) -> None:
        by_group: dict[tuple, list[CalibrationRow]] = {}
        for row in self.rows:
            by_group.setdefault((row.d, row.mod_order, row.feature_len), []).append(row)
        for key, group in by_group.items():
            cos = [r.cos_sim for r in group]
            ms = [r.ms_ssim for r in group]
            if any(b < a - 1e-9 for a, b in zip(cos, cos[1:])) or \
               any(b < a - 1e-9 for a, b in zip(ms, ms[1:])):
                log.warning("calibration table not monotone in snr_db for %s", key)

    @classmethod
    def from_csv(cls, path: str | Path) -> "CalibrationTable":
        rows = []
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            missing = set(CALIBRATION_HEADER) - set(reader.fieldnames or [])
            if missing:
                raise ValueError(f"calibration file missing columns {sorted(missing)}")
            for rec in reader:
                rows.append(CalibrationRow(
                    d=int(rec["d"]), snr_db=float(rec["snr_db"]),
                    mod_order=int(rec["mod_order"]), feature_len=float(rec["feature_len"]),
                    cos_sim=float(rec["cos_sim"]), ms_ssim=float(rec["ms_ssim"]),
                ))
        return cls(rows)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CALIBRATION_HEADER)
            for r in self.rows:
                writer.writerow([r.d, r.snr_db, r.mod_order, r.feature_len,
                                 r.cos_sim, r.ms_ssim])

    def interpolate(self, d: int, snr_db: float, mod_order: int,
                    feature_len: float) -> tuple[float, float] | None:
        """Bilinear interpolation over (snr_db, feature_len) at exact
        (d, mod_order) keys; None when the query leaves the table hull."""
        group = [r for r in self.rows if r.d == d and r.mod_order == mod_order]
        if not group:
            return None
        snrs = sorted({r.snr_db for r in group})
        lens = sorted({r.feature_len for r in group})
        if not (snrs[0] <= snr_db <= snrs[-1] and lens[0] <= feature_len <= lens[-1]):
            return None
        cell = {(r.snr_db, r.feature_len): (r.cos_sim, r.ms_ssim) for r in group}
        if len(cell) != len(snrs) * len(lens):
            return None  # ragged grid, cannot interpolate safely

        s0, s1 = _bracket(snrs, snr_db)
        l0, l1 = _bracket(lens, feature_len)
        ws = 0.0 if s1 == s0 else (snr_db - s0) / (s1 - s0)
        wl = 0.0 if l1 == l0 else (feature_len - l0) / (l1 - l0)
        out = []
        for idx in range(2):
            v00 = cell[(s0, l0)][idx]
            v01 = cell[(s0, l1)][idx]
            v10 = cell[(s1, l0)][idx]
            v11 = cell[(s1, l1)][idx]
            out.append((1 - ws) * ((1 - wl) * v00 + wl * v01)
                       + ws * ((1 - wl) * v10 + wl * v11))
        return out[0], out[1]


def _bracket(grid: list[float], x: float) -> tuple[float, float]:
    for lo, hi in zip(grid, grid[1:]):
        if lo <= x <= hi:
            return lo, hi
    return grid[-1], grid[-1]


class DistortionSurrogate:
    """Predicts (cos_sim, ms_ssim) for a transmitted image.

    With a calibration table loaded, queries are interpolated from measured
    points; otherwise (or outside the table hull, with a logged notice) an
    analytic model is used: a logistic curve in the effective per-bit SNR
    snr_db - 10*log10(log2(order)), scaled by a quantization ceiling
    1 - a*2^-2d and a feature-richness factor that saturates in the
    feature length.
    """

    def __init__(self, table: CalibrationTable | None = None):
        self.table = table

    def predict(self, d: int, snr_db: float, mod_order: int,
                feature_len: float) -> tuple[float, float]:
        if self.table is not None:
            hit = self.table.interpolate(d, snr_db, mod_order, feature_len)
            if hit is not None:
                return hit
            log.info("calibration miss for (d=%s, snr=%.2f dB, order=%s, len=%.0f); "
                     "using analytic surrogate", d, snr_db, mod_order, feature_len)
        return analytic_fidelity(d, snr_db, mod_order, feature_len)


def analytic_fidelity(d: int, snr_db: float, mod_order: int,
                      feature_len: float) -> tuple[float, float]:
    """Fixed analytic fidelity model (surrogate version 1)."""
    per_bit_snr = snr_db - 10.0 * math.log10(math.log2(mod_order))
    ceiling = (1.0 - QUANT_CEILING_COEFF * 2.0 ** (-2.0 * d)) * _richness(feature_len)
    cos_sim = ceiling * _logistic(per_bit_snr, COS_SNR_MIDPOINT_DB)
    ms_ssim = ceiling * _logistic(per_bit_snr, MSSSIM_SNR_MIDPOINT_DB)
    return cos_sim, ms_ssim


def _logistic(x_db: float, midpoint_db: float) -> float:
    z = (x_db - midpoint_db) / SNR_SLOPE_DB
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def _richness(feature_len: float) -> float:
    if feature_len <= 0:
        return 0.0
    powered = feature_len ** RICHNESS_EXPONENT
    return powered / (powered + RICHNESS_SCALE)
