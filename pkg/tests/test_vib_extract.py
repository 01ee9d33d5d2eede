import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import signal as sps
from scipy.interpolate import CubicSpline

from mmvoice.errors import InvalidInputError, OutOfDomainError
from mmvoice.synth import (C_LIGHT, DisplacementTrace, RadarConfig, Reflector,
                           ReflectorSet, simulate_if)
from mmvoice.vib_extract import (RefineConfig, composite_phase,
                                 composite_phase_batch, design_band_pass,
                                 displacement_delta, extract_vibration,
                                 fuse_phase, idle_interpolate,
                                 phase_from_delay, range_doppler_select,
                                 refine_vibration, unwrap_triplet, wrap_phase,
                                 _fast_time_fft, _bin_freq_hz)

CFG = RadarConfig()
SLOW = CFG.slow_rate_hz


def vibrating_capture(a=20e-6, f=150.0, dur=0.4, snr=50.0, seed=1, r=0.25,
                      static=0.3):
    t = np.arange(int(dur * SLOW)) / SLOW
    trace = DisplacementTrace(a * np.sin(2 * np.pi * f * t), SLOW)
    scene = ReflectorSet([Reflector(r, 1.0, trace)], static_gain=static,
                         noise_snr_db=snr)
    return simulate_if(scene, CFG, dur, seed=seed), trace


def brute_force_unwrap(phases):
    """Oracle: pick phi_i + 2*pi*k, k in [-3, 3], closest to the previous
    unwrapped value."""
    out = [float(phases[0])]
    for p in phases[1:]:
        cands = [p + 2 * math.pi * k for k in range(-3, 4)]
        out.append(min(cands, key=lambda c: abs(c - out[-1])))
    return np.array(out)


class TestRangeDopplerSelect:
    def test_selected_bin_matches_fft_oracle(self):
        cap, _ = vibrating_capture()
        rd = range_doppler_select(cap)
        spec = np.fft.fft(cap.frames.reshape(-1, 64), n=256, axis=1)
        mean_mag = np.abs(spec).mean(axis=0)
        mean_mag[0] = 0.0          # static leakage sits at DC
        assert rd.selected_bin == int(np.argmax(mean_mag))
        f_if = 2 * CFG.slope_k * 0.25 / C_LIGHT
        assert rd.selected_bin == int(round(f_if / _bin_freq_hz(CFG)))
        assert rd.confidence > 0.2
        assert not rd.modality_absent

    def test_pure_noise_flags_modality_absence(self):
        cap = simulate_if(ReflectorSet([], static_gain=0.0), CFG, 0.1, seed=9)
        rd = range_doppler_select(cap)
        assert rd.confidence < 0.2
        assert rd.modality_absent

    def test_vocal_band_reflector_wins_over_out_of_band(self):
        dur = 0.4
        t = np.arange(int(dur * SLOW)) / SLOW
        slow_tr = DisplacementTrace(20e-6 * np.sin(2 * np.pi * 50.0 * t), SLOW)
        cap_slow = simulate_if(ReflectorSet([Reflector(0.20, 1.0, slow_tr)],
                                            static_gain=0.0, noise_snr_db=60.0),
                               CFG, dur, seed=3)
        cap_vocal, _ = vibrating_capture(f=150.0, r=0.40, dur=dur, snr=60.0,
                                         static=0.0, seed=4)
        # merge the two single-reflector captures: superposition holds
        merged = cap_slow
        merged.frames = cap_slow.frames + cap_vocal.frames
        rd = range_doppler_select(merged)
        f_if = 2 * CFG.slope_k * 0.40 / C_LIGHT
        assert rd.selected_bin == int(round(f_if / _bin_freq_hz(CFG)))

    def test_single_frame_rejected(self):
        cap = simulate_if(ReflectorSet([Reflector(0.3, 1.0)]), CFG, 0.001, seed=0)
        with pytest.raises(InvalidInputError):
            range_doppler_select(cap)


class TestUnwrapTriplet:
    def test_no_wrap_unchanged(self):
        assert np.allclose(unwrap_triplet(np.array([0.1, 0.2, 0.3])),
                           [0.1, 0.2, 0.3])

    def test_single_wrap(self):
        out = unwrap_triplet(np.array([3.0, -3.0]))
        assert np.allclose(out, [3.0, -3.0 + 2 * np.pi])

    def test_matches_brute_force_on_random_sequences(self):
        rng = np.random.default_rng(12)
        for _ in range(1000):
            seq = rng.uniform(-np.pi, np.pi, size=rng.integers(2, 12))
            assert np.allclose(unwrap_triplet(seq), brute_force_unwrap(seq),
                               atol=1e-12)

    @given(st.lists(st.floats(-math.pi, math.pi, allow_nan=False), min_size=2,
                    max_size=16))
    @settings(max_examples=200, deadline=None)
    def test_differences_in_half_open_interval(self, seq):
        out = unwrap_triplet(np.array(seq, dtype=np.float64))
        d = np.diff(out)
        assert np.all(d > -np.pi - 1e-12)
        assert np.all(d <= np.pi + 1e-12)

    def test_wrap_phase_boundary(self):
        # boundary maps to +pi, keeping differences in (-pi, pi]
        assert wrap_phase(np.pi) == pytest.approx(np.pi)
        assert wrap_phase(-np.pi) == pytest.approx(np.pi)


class TestCompositePhase:
    def test_fusion_identity_cases(self):
        pm = 1.234
        assert fuse_phase(pm, pm) == pytest.approx(pm)              # residual 0
        assert fuse_phase(pm + 2 * math.pi, pm) == pytest.approx(pm + 2 * math.pi)

    def test_fusion_equals_refined_below_one_wrap(self):
        rng = np.random.default_rng(5)
        pm = rng.uniform(-200, 200, size=500)
        pf = pm + rng.uniform(-np.pi + 1e-9, np.pi - 1e-9, size=500)
        assert np.array_equal(fuse_phase(pf, pm), pm)

    def test_fusion_recovers_wrap_count(self):
        rng = np.random.default_rng(6)
        pm = rng.uniform(-np.pi, np.pi, size=300)
        n = rng.integers(-40, 40, size=300)
        pf = pm + 2 * np.pi * n + rng.uniform(-2.5, 2.5, size=300)
        fused = fuse_phase(pf, pm)
        # residual below one wrap: the absolute phase is exactly recovered
        ok = np.abs(pf - pm - 2 * np.pi * n) < np.pi
        assert np.allclose(fused[ok], (pm + 2 * np.pi * n)[ok])

    def test_spline_matches_scipy_cubic_on_triplet(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            phases = rng.uniform(-1.0, 1.0, 3)
            delta = rng.uniform(-0.5, 0.5)
            mine = (phases[1] + 0.5 * delta * (phases[2] - phases[0])
                    + 0.5 * delta**2 * (phases[2] - 2 * phases[1] + phases[0]))
            cs = CubicSpline([-1.0, 0.0, 1.0], phases)
            assert mine == pytest.approx(float(cs(delta)), abs=1e-12)

    def test_noisy_chirps_fused_beats_coarse(self):
        rng = np.random.default_rng(8)
        wins = 0
        trials = 200
        for _ in range(trials):
            r = rng.uniform(0.15, 0.45)
            cap = simulate_if(ReflectorSet([Reflector(r, 1.0)], static_gain=0.0,
                                           noise_snr_db=20.0),
                              CFG, 1.0 / CFG.frame_rate_hz,
                              seed=int(rng.integers(2**31)))
            spec = _fast_time_fft(cap)[0]
            cp = composite_phase(spec, CFG)
            truth = phase_from_delay(2 * r / C_LIGHT, CFG)
            if abs(cp.phi_fused - truth) < abs(cp.phi_f - truth):
                wins += 1
        assert wins / trials >= 0.9

    def test_edge_peak_degraded_fallback(self):
        spec = np.zeros(32, dtype=complex)
        spec[0] = 10.0 * np.exp(1j * 0.3)
        cp = composite_phase(spec, CFG)
        assert cp.degraded
        assert cp.phi_m == pytest.approx(0.3)

    def test_batch_matches_scalar_path(self):
        cap, _ = vibrating_capture(dur=0.05)
        spec = _fast_time_fft(cap)
        series = composite_phase_batch(spec[:4], CFG)
        for i in range(4):
            cp = composite_phase(spec[i], CFG)
            assert cp.phi_fused == pytest.approx(float(series.phi_fused[i]))


class TestDisplacementDelta:
    def test_equal_phases_zero_delta(self):
        phi = phase_from_delay(2 * 0.25 / C_LIGHT, CFG)
        assert displacement_delta(phi, phi, CFG) == 0.0

    def test_ten_micron_round_trip(self):
        d1 = 0.25
        for delta in (10e-6, -10e-6):
            p1 = phase_from_delay(2 * d1 / C_LIGHT, CFG)
            p2 = phase_from_delay(2 * (d1 + delta) / C_LIGHT, CFG)
            rec = displacement_delta(p1, p2, CFG)
            assert abs(abs(rec) - abs(delta)) < 1e-9
            # chosen orientation: increasing distance gives positive delta
            assert math.copysign(1.0, rec) == math.copysign(1.0, delta)

    def test_hundred_random_round_trips(self):
        rng = np.random.default_rng(9)
        for _ in range(100):
            d = rng.uniform(0.1, 1.0)
            step = rng.uniform(-50e-6, 50e-6)
            p1 = phase_from_delay(2 * d / C_LIGHT, CFG)
            p2 = phase_from_delay(2 * (d + step) / C_LIGHT, CFG)
            rec = displacement_delta(p1, p2, CFG)
            assert abs(abs(rec) - abs(step)) <= 1e-3 * abs(step)

    def test_negative_radicand_rejected(self):
        bad = (CFG.f0_hz**2 / (CFG.slope_k / math.pi)) * 1.01
        with pytest.raises(OutOfDomainError):
            displacement_delta(bad, bad, CFG)


class TestIdleInterpolate:
    def test_single_frame_example(self):
        out = idle_interpolate(np.array([1.0, 2.0, 3.0]), 3)
        assert np.array_equal(out, [1.0, 2.0, 3.0, 3.0])

    def test_length_formula(self):
        out = idle_interpolate(np.arange(5 * 4, dtype=float), 4)
        assert out.size == 5 * 5

    @given(st.integers(1, 6), st.integers(1, 8))
    @settings(max_examples=80, deadline=None)
    def test_originals_preserved_bit_exactly(self, n_frames, n_chirp):
        rng = np.random.default_rng(n_frames * 31 + n_chirp)
        vals = rng.standard_normal((n_frames, n_chirp))
        out = idle_interpolate(vals, n_chirp).reshape(n_frames, n_chirp + 1)
        assert np.array_equal(out[:, :n_chirp], vals)
        assert np.array_equal(out[:, n_chirp], vals[:, -1])

    def test_ragged_rejected(self):
        with pytest.raises(InvalidInputError):
            idle_interpolate(np.arange(7, dtype=float), 3)
        with pytest.raises(InvalidInputError):
            idle_interpolate([[1.0, 2.0], [3.0]], 2)

    def test_spectral_gain_over_naive_concatenation(self):
        # a 150 Hz tone sampled on the gapped chirp grid: filling the idle
        # slot restores a uniform grid and sharpens the spectral peak
        n_frames, n_chirp = 64, CFG.chirps_per_frame
        slot_dt = 1.0 / SLOW
        k = np.arange(n_chirp)
        t = (np.arange(n_frames)[:, None] * (n_chirp + 1) + k[None, :]) * slot_dt
        vals = np.sin(2 * np.pi * 150.0 * t)

        def peak_snr(x, rate):
            f = np.fft.rfftfreq(x.size, 1.0 / rate)
            p = np.abs(np.fft.rfft(x * np.hanning(x.size))) ** 2
            peak = np.argmax(p[1:]) + 1
            mask = np.abs(f - f[peak]) > 30.0
            return p[peak] / np.median(p[mask])

        filled = idle_interpolate(vals, n_chirp)
        naive = vals.ravel()
        snr_filled = peak_snr(filled, SLOW)
        snr_naive = peak_snr(naive, SLOW * n_chirp / (n_chirp + 1))
        assert snr_filled > snr_naive


class TestRefineVibration:
    def test_clip_threshold_is_25_micron(self):
        assert RefineConfig().clip_m == 25e-6
        x = np.zeros(4000)
        x[2000:] = 1e-3            # 1 mm step: the difference spikes hard
        tr = refine_vibration(x, SLOW)
        assert tr.pre_norm_peak_m <= 25e-6 + 1e-12

    def test_nonzero_input_normalized_to_unit_peak(self):
        t = np.arange(8000) / SLOW
        tr = refine_vibration(20e-6 * np.sin(2 * np.pi * 150 * t), SLOW)
        assert np.max(np.abs(tr.samples)) == pytest.approx(1.0)

    def test_all_zero_input_gives_zero_trace(self):
        tr = refine_vibration(np.zeros(4000), SLOW)
        assert tr.pre_norm_peak_m == 0.0
        assert np.all(tr.samples == 0.0)

    def test_band_pass_rejects_40hz_by_40db(self):
        taps = design_band_pass(SLOW, RefineConfig())
        w, h = sps.freqz(taps, worN=[40.0, 150.0], fs=SLOW)
        rejection_db = 20 * np.log10(np.abs(h[0]) / np.abs(h[1]))
        assert rejection_db <= -40.0

    def test_linear_below_clip(self):
        rng = np.random.default_rng(11)
        x = rng.standard_normal(6000) * 1e-6
        t1 = refine_vibration(x, SLOW)
        t2 = refine_vibration(0.5 * x, SLOW)
        y1 = t1.samples * t1.pre_norm_peak_m
        y2 = t2.samples * t2.pre_norm_peak_m
        assert np.allclose(y2, 0.5 * y1, atol=1e-9)


class TestExtractVibration:
    def test_genuine_capture_round_trip(self):
        cap, trace = vibrating_capture(dur=0.5, snr=50.0)
        res = extract_vibration(cap)
        assert not res.modality_absent
        truth = refine_vibration(trace.samples[:res.displacement_m.size], SLOW)
        sos = sps.butter(4, [100, 200], btype="bandpass", fs=SLOW, output="sos")
        x1 = sps.sosfiltfilt(sos, res.trace.samples * res.trace.pre_norm_peak_m)
        x2 = sps.sosfiltfilt(sos, truth.samples * truth.pre_norm_peak_m)
        m = slice(500, -500)
        r = np.corrcoef(x1[m], x2[m])[0, 1]
        assert r >= 0.95

    def test_noise_only_capture_returns_absence(self):
        cap = simulate_if(ReflectorSet([], static_gain=0.0), CFG, 0.1, seed=21)
        res = extract_vibration(cap)
        assert res.modality_absent
        assert res.trace is None
