import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from uavsem.channel import (FadingDraw, af_gain, doppler_shift, end_to_end_snr,
                            link_budget, link_rate, qam_demodulate, qam_modulate,
                            sample_nakagami, symbol_pipeline)


class TestNakagami:
    def test_moments_match_gamma_law(self):
        rng = np.random.default_rng(42)
        h = sample_nakagami(2.0, 1.0, rng, size=100_000)
        power = np.abs(h) ** 2
        assert 0.98 <= power.mean() <= 1.02          # E = spread
        assert abs(power.var() - 0.5) <= 0.05 * 0.5  # Var = spread^2 / m

    def test_ks_against_gamma(self):
        rng = np.random.default_rng(7)
        power = np.abs(sample_nakagami(2.0, 1.0, rng, size=100_000)) ** 2
        result = stats.kstest(power, "gamma", args=(2.0, 0.0, 0.5))
        assert result.pvalue > 0.01

    def test_invalid_parameters_fault(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError):
            sample_nakagami(2.0, 0.0, rng)
        with pytest.raises(ValueError):
            sample_nakagami(0.2, 1.0, rng)

    def test_phase_uniform(self):
        rng = np.random.default_rng(3)
        h = sample_nakagami(2.0, 1.0, rng, size=50_000)
        phase = np.angle(h) % (2 * math.pi)
        assert stats.kstest(phase / (2 * math.pi), "uniform").pvalue > 0.01


class TestDoppler:
    def test_head_on_value(self):
        assert doppler_shift(1.5, 2.4e9, 0.0) == pytest.approx(12.004, abs=1e-3)

    def test_perpendicular_motion(self):
        assert doppler_shift(1.5, 2.4e9, math.pi / 2) == pytest.approx(0.0, abs=1e-9)

    def test_static_user(self):
        assert doppler_shift(0.0, 2.4e9, 0.3) == 0.0


class TestAfGain:
    def test_unity_when_rx_power_matches_budget(self):
        # |h|^2 d^-2p = sigma^2 = 0.5 * (P / streams)  ->  G = 1
        p_uav, streams = 0.2, 1
        noise = 0.1
        # choose h so the received power equals noise: |h|^2 * 1 = 0.1 at d=1
        h = complex(math.sqrt(0.1))
        assert af_gain(h, 1.0, 2.7, p_uav, streams, noise) == pytest.approx(1.0)

    def test_direct_evaluation(self):
        got = af_gain(1.0 + 0.0j, 100.0, 2.7, 0.2, 1, 10 ** -13.5)
        want = math.sqrt(0.2 / (100.0 ** -5.4 + 10 ** -13.5))
        assert got == pytest.approx(want, rel=1e-12)

    def test_stream_split_follows_formula(self):
        h = 0.8 + 0.1j
        g1 = af_gain(h, 50.0, 2.7, 0.2, 1, 1e-13)
        g2 = af_gain(h, 50.0, 2.7, 0.2, 2, 1e-13)
        rx = abs(h) ** 2 * 50.0 ** -5.4
        assert g2 == pytest.approx(math.sqrt(0.1 / (rx + 1e-13)), rel=1e-12)
        assert g2 == pytest.approx(g1 / math.sqrt(2.0), rel=1e-12)

    def test_zero_distance_faults(self):
        with pytest.raises(ValueError):
            af_gain(1.0, 0.0, 2.7, 0.2, 1, 1e-13)


class TestLinkRate:
    def test_ten_db_reference_rate(self):
        # SNR exactly 10: |h_cs|^2 = 10, everything else unity, no relay noise.
        rate = link_rate(1.0, complex(math.sqrt(10.0)), 1.0, 1.0, 2.7,
                         1e7, 1, 0.0, 1.0)
        assert rate == pytest.approx(34.594e6, abs=1e3)

    def test_zero_snr_zero_rate(self):
        assert link_rate(0.0, 1.0, 1.0, 10.0, 2.7, 1e7, 1, 1e-13, 1e-13) == 0.0

    def test_bandwidth_split_halves_rate(self):
        kw = dict(h_gu=1.0, h_cs=complex(math.sqrt(10.0)), gain=1.0, distance=1.0,
                  path_loss_exp=2.7, bandwidth=1e7, noise_uav=0.0, noise_cs=1.0)
        assert link_rate(served_count=2, **kw) == pytest.approx(
            link_rate(served_count=1, **kw) / 2.0, rel=1e-12)

    @settings(max_examples=150, deadline=None)
    @given(
        h_gu=st.floats(0.1, 3.0), h_cs=st.floats(0.1, 3.0),
        d=st.floats(10.0, 500.0), p_uav=st.floats(0.01, 1.0),
        noise=st.floats(1e-15, 1e-12), bump=st.floats(1.01, 3.0),
    )
    def test_rate_monotonicity(self, h_gu, h_cs, d, p_uav, noise, bump):
        def rate(hg, hc, dist, power, n):
            g = af_gain(complex(hg), dist, 2.7, power, 1, n)
            return link_rate(complex(hg), complex(hc), g, dist, 2.7, 1e7, 1, n, n)

        base = rate(h_gu, h_cs, d, p_uav, noise)
        assert rate(h_gu * bump, h_cs, d, p_uav, noise) >= base
        assert rate(h_gu, h_cs * bump, d, p_uav, noise) >= base
        assert rate(h_gu, h_cs, d * bump, p_uav, noise) <= base
        assert rate(h_gu, h_cs, d, p_uav * bump, noise) >= base
        assert rate(h_gu, h_cs, d, p_uav, noise * bump) <= base


class TestSymbolPipeline:
    def test_noiseless_is_identity(self):
        rng = np.random.default_rng(0)
        bits = rng.integers(0, 2, 400)
        x = qam_modulate(bits, 4)
        y = symbol_pipeline(x, 0.9 - 0.2j, 1.1 + 0.4j, 2.0, 120.0, 2.7,
                            12.0, 5.0, 0.0, 0.0, rng=None)
        assert np.max(np.abs(y - x)) < 1e-12

    def test_half_cycle_doppler_flips_sign(self):
        x = np.array([1.0 + 0.0j])
        # f_D * tau = 0.5 -> rotation by pi before the relay.
        y = symbol_pipeline(x, 1.0, 1.0, 1.0, 1.0, 2.7, 0.1, 5.0, 0.0, 0.0)
        # MMSE with known composite coefficient undoes the rotation exactly.
        assert np.allclose(y, x)
        # The pre-equalization server-side signal really is flipped.
        composite = 1.0 * 1.0 * 1.0 * np.exp(1j * 2 * math.pi * 0.1 * 5.0)
        assert composite == pytest.approx(-1.0)

    def test_doppler_preserves_magnitude(self):
        rng = np.random.default_rng(1)
        x = qam_modulate(rng.integers(0, 2, 200), 4)
        y = symbol_pipeline(x, 1.0, 1.0, 1.0, 1.0, 2.7, 123.4, 5.0, 0.0, 0.0)
        assert np.allclose(np.abs(y), np.abs(x))

    def test_qpsk_symbol_errors_rare_at_20db(self):
        """Monte-Carlo SER at composite 20 dB SNR vs the Q-function bound."""
        rng = np.random.default_rng(2024)
        n_sym = 100_000
        bits = rng.integers(0, 2, 2 * n_sym)
        x = qam_modulate(bits, 4)
        # Unity channel, noise only at the server: SNR = 1 / noise_cs.
        y = symbol_pipeline(x, 1.0, 1.0, 1.0, 1.0, 2.7, 0.0, 5.0, 0.0, 0.01, rng=rng)
        decoded = qam_demodulate(y, 4).reshape(-1, 2)
        errors = np.count_nonzero(np.any(decoded != bits.reshape(-1, 2), axis=1))
        q = 0.5 * math.erfc(math.sqrt(100.0 / 2.0) / math.sqrt(2.0))
        ser_bound = 2 * q  # union bound per QPSK symbol
        assert errors / n_sym < 1e-3
        assert errors / n_sym <= ser_bound * 3 + 1e-4


class TestQam:
    def test_qpsk_points_have_unit_magnitude(self):
        bits = np.array([0, 0, 0, 1, 1, 1, 1, 0])
        symbols = qam_modulate(bits, 4)
        assert np.allclose(np.abs(symbols), 1.0)
        assert len({(round(s.real, 9), round(s.imag, 9)) for s in symbols}) == 4

    @pytest.mark.parametrize("order", [4, 16, 64, 256])
    def test_roundtrip_all_orders(self, order):
        rng = np.random.default_rng(order)
        bits = rng.integers(0, 2, 1200 * int(math.log2(order)) // 12 * 12)
        k = int(math.log2(order))
        bits = bits[:len(bits) - len(bits) % k]
        assert np.array_equal(qam_demodulate(qam_modulate(bits, order), order), bits)

    @pytest.mark.parametrize("order", [4, 16, 64, 256])
    def test_unit_average_energy(self, order):
        k = int(math.log2(order))
        idx = np.arange(order)
        bits = ((idx[:, None] >> np.arange(k - 1, -1, -1)) & 1).ravel()
        symbols = qam_modulate(bits, order)
        assert np.mean(np.abs(symbols) ** 2) == pytest.approx(1.0, abs=1e-12)

    def test_indivisible_bit_count_faults(self):
        with pytest.raises(ValueError):
            qam_modulate(np.array([0, 1, 1]), 4)

    def test_gray_neighbors_differ_by_one_bit(self):
        # Adjacent levels on one axis must differ in exactly one bit.
        levels = np.array([-3, -1, 1, 3]) * math.sqrt(3.0 / 30.0)
        codes = [qam_demodulate(np.array([complex(l, levels[0])]), 16)[:2] for l in levels]
        for a, b in zip(codes, codes[1:]):
            assert np.sum(a != b) == 1


class TestFadingDraw:
    def test_shapes_and_mean_power(self):
        rng = np.random.default_rng(0)
        draws = [FadingDraw.draw(2.0, 1.0, 2, 20, rng) for _ in range(200)]
        assert draws[0].gu_uav.shape == (2, 20)
        assert draws[0].uav_cs.shape == (2,)
        power = np.mean([np.abs(d.gu_uav) ** 2 for d in draws])
        assert power == pytest.approx(1.0, abs=0.05)


def test_link_budget_bundles_consistently():
    budget = link_budget(1.0 + 0j, 1.0 + 0j, 150.0, 8.0, 2.7, 0.2, 1e7, 2,
                         10 ** -13.5, 10 ** -13.5)
    gain = af_gain(1.0 + 0j, 150.0, 2.7, 0.2, 2, 10 ** -13.5)
    assert budget.af_gain == pytest.approx(gain)
    snr = end_to_end_snr(1.0 + 0j, 1.0 + 0j, gain, 150.0, 2.7, 10 ** -13.5, 10 ** -13.5)
    assert budget.end_to_end_snr == pytest.approx(snr)
    assert budget.rate == pytest.approx(1e7 / 2 * math.log2(1 + snr))
    assert budget.doppler == 8.0
