import itertools
import logging
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uavsem.semantics import (CalibrationRow, CalibrationTable, DistortionSurrogate,
                              analytic_fidelity, data_size, feature_length, sss)


class TestDataSize:
    def test_reference_dims_d1(self):
        assert data_size(3, 375, 1242, 1) == 2_794_500

    def test_reference_dims_d4_rounds_up(self):
        assert data_size(3, 375, 1242, 4) == 43_665

    def test_identity_compression(self):
        # 2^(2d) = 1 leaves the original 8*C*H*W bits untouched.
        assert data_size(3, 375, 1242, 0) == 8 * 3 * 375 * 1242

    def test_strictly_decreasing_in_d(self):
        sizes = [data_size(3, 375, 1242, d) for d in range(1, 5)]
        assert all(b < a for a, b in zip(sizes, sizes[1:]))

    def test_fractional_d_rejected(self):
        with pytest.raises(ValueError):
            data_size(3, 32, 32, 1.5)

    def test_feature_length_matches_payload(self):
        # 8 bits per complex feature.
        assert 8 * feature_length(3, 32, 32, 2) == pytest.approx(
            data_size(3, 32, 32, 2), abs=8)


class TestSss:
    def test_equal_blend(self):
        assert sss(0.9, 0.9, 0.5) == pytest.approx(0.9)

    def test_pure_cosine(self):
        assert sss(0.77, 0.2, 1.0) == 0.77

    def test_blend_matches_reported_operating_point(self):
        assert sss(1.0, 0.82, 0.5) == pytest.approx(0.91)

    @given(cos=st.floats(-1, 1), ms=st.floats(0, 1), a=st.floats(0, 1))
    def test_bounded(self, cos, ms, a):
        value = sss(cos, ms, a)
        assert -a <= value <= 1.0 + 1e-12

    def test_affine_in_each_argument(self):
        a = 0.3
        assert sss(0.5, 0.2, a) - sss(0.1, 0.2, a) == pytest.approx(a * 0.4)
        assert sss(0.5, 0.6, a) - sss(0.5, 0.2, a) == pytest.approx((1 - a) * 0.4)


class TestAnalyticSurrogate:
    def test_saturates_below_one(self):
        cos_hi, ms_hi = analytic_fidelity(1, 200.0, 4, 349_312.5)
        cos_vhi, ms_vhi = analytic_fidelity(1, 400.0, 4, 349_312.5)
        assert cos_hi <= 1.0 and ms_hi <= 1.0
        assert cos_vhi >= cos_hi and ms_vhi >= ms_hi

    def test_monotone_nonincreasing_in_order(self):
        for snr in (-5.0, 0.0, 10.0, 25.0):
            values = [analytic_fidelity(2, snr, order, 5e4) for order in (4, 16, 64, 256)]
            for (c1, m1), (c2, m2) in zip(values, values[1:]):
                assert c2 <= c1 and m2 <= m1

    def test_msssim_nondecreasing_in_feature_len_at_low_order(self):
        values = [analytic_fidelity(2, 8.0, 4, fl)[1]
                  for fl in (1e3, 1e4, 1e5, 3e5)]
        assert all(b >= a for a, b in zip(values, values[1:]))

    def test_monotone_nondecreasing_in_snr(self):
        values = [analytic_fidelity(3, snr, 16, 2e4) for snr in range(-20, 40, 2)]
        for (c1, m1), (c2, m2) in zip(values, values[1:]):
            assert c2 >= c1 and m2 >= m1

    @settings(max_examples=10_000, deadline=None)
    @given(d=st.integers(1, 4), snr=st.floats(-60, 60),
           order=st.sampled_from([4, 16, 64, 256]),
           feat=st.floats(1.0, 4e5))
    def test_outputs_always_in_range(self, d, snr, order, feat):
        cos, ms = analytic_fidelity(d, snr, order, feat)
        assert -1.0 <= cos <= 1.0
        assert 0.0 <= ms <= 1.0


def grid_table() -> CalibrationTable:
    rows = []
    for d, order in itertools.product((1, 2), (4, 16)):
        for snr in (0.0, 10.0, 20.0):
            for feat in (1000.0, 4000.0):
                base = 0.2 + 0.03 * snr + (0.05 if order == 4 else 0.0)
                rows.append(CalibrationRow(d, snr, order, feat,
                                           min(base, 1.0), min(base * 0.9, 1.0)))
    return CalibrationTable(rows)


class TestCalibrationTable:
    def test_round_trip(self, tmp_path):
        table = grid_table()
        path = tmp_path / "cal.csv"
        table.to_csv(path)
        back = CalibrationTable.from_csv(path)
        assert back.rows == table.rows

    def test_duplicate_key_rejected(self):
        row = CalibrationRow(1, 0.0, 4, 100.0, 0.5, 0.5)
        with pytest.raises(ValueError, match="duplicate"):
            CalibrationTable([row, row])

    def test_out_of_range_value_rejected(self):
        with pytest.raises(ValueError, match="ms_ssim"):
            CalibrationTable([CalibrationRow(1, 0.0, 4, 100.0, 0.5, 1.5)])

    def test_non_monotone_warns_not_faults(self, caplog):
        rows = [CalibrationRow(1, 0.0, 4, 100.0, 0.9, 0.9),
                CalibrationRow(1, 10.0, 4, 100.0, 0.2, 0.2)]
        with caplog.at_level(logging.WARNING):
            CalibrationTable(rows)
        assert any("not monotone" in rec.message for rec in caplog.records)

    def test_bilinear_interpolation_exact_at_nodes(self):
        table = grid_table()
        got = table.interpolate(1, 10.0, 4, 1000.0)
        assert got == pytest.approx((0.55, 0.495))

    def test_bilinear_interpolation_midpoint(self):
        table = grid_table()
        got = table.interpolate(1, 5.0, 4, 2500.0)
        lo = table.interpolate(1, 0.0, 4, 1000.0)
        hi = table.interpolate(1, 10.0, 4, 1000.0)
        # Feature length does not change the synthetic values; snr midpoint
        # must land halfway between the bracketing nodes.
        assert got[0] == pytest.approx((lo[0] + hi[0]) / 2)

    def test_query_outside_hull_falls_back_with_notice(self, caplog):
        surrogate = DistortionSurrogate(grid_table())
        with caplog.at_level(logging.INFO):
            got = surrogate.predict(1, 35.0, 4, 1000.0)
        assert got == analytic_fidelity(1, 35.0, 4, 1000.0)
        assert any("analytic surrogate" in rec.message for rec in caplog.records)

    def test_missing_columns_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("d,snr_db\n1,0\n")
        with pytest.raises(ValueError, match="missing columns"):
            CalibrationTable.from_csv(path)

    def test_surrogate_uses_table_inside_hull(self):
        surrogate = DistortionSurrogate(grid_table())
        assert surrogate.predict(1, 10.0, 4, 1000.0) == pytest.approx((0.55, 0.495))
