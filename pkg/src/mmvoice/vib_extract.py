"""Throat micro-vibration recovery from IF captures.

Pipeline: range-Doppler bin selection -> per-chirp composite phase
(coarse frequency-inferred phase fused with spline-refined spectral phase)
-> inter-chirp displacement deltas -> cumulative displacement -> idle-gap
zero-order-hold interpolation -> band-pass/difference/clip/normalize.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps

from .errors import InvalidConfigError, InvalidInputError, OutOfDomainError
from .synth import C_LIGHT, IFCapture, RadarConfig

TWO_PI = 2.0 * math.pi

# Doppler band where vocal-fold vibration concentrates.
VOCAL_BAND_HZ = (100.0, 200.0)
CONFIDENCE_THRESHOLD = 0.2
FAST_FFT_PAD = 4          # fast-time FFT zero-padding factor
DOPPLER_WINDOW_CHIRPS = 256


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------

@dataclass
class RangeDopplerMap:
    magnitude: np.ndarray            # [range_bins][doppler_bins], >= 0
    range_axis_m: np.ndarray
    doppler_axis_hz: np.ndarray
    selected_bin: int
    confidence: float

    @property
    def modality_absent(self) -> bool:
        return self.confidence < CONFIDENCE_THRESHOLD


@dataclass
class PhaseSeries:
    """Per-chirp phase estimates around the selected range bin."""

    phi_f: np.ndarray        # coarse, from the distance estimate
    phi_m: np.ndarray        # spline-refined spectral phase
    phi_fused: np.ndarray    # composite-corrected phase
    peak_bin_phases: np.ndarray  # wrapped (phi_{i-1}, phi_i, phi_{i+1}) per chirp
    degraded: np.ndarray     # bool per chirp: peak at spectrum edge


@dataclass
class VibrationTrace:
    """Uniform-rate vibration signal, peak-normalized to [-1, 1]."""

    samples: np.ndarray
    rate_hz: float
    pre_norm_peak_m: float

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)


@dataclass
class RefineConfig:
    """Band-pass/difference/clip stage parameters.

    numtaps=None sizes the Kaiser FIR from the stopband spec (attenuation
    reached one transition width below/above the passband edges); an explicit
    value overrides it.
    """

    band_hz: tuple[float, float] = (80.0, 8000.0)
    numtaps: int | None = None
    stop_atten_db: float = 45.0
    transition_hz: float = 80.0
    clip_m: float = 25e-6


@dataclass
class ExtractionResult:
    trace: VibrationTrace | None
    confidence: float
    modality_absent: bool
    selected_bin: int
    degraded_fraction: float
    displacement_m: np.ndarray | None = None   # uniform-rate, pre-filter


# ---------------------------------------------------------------------------
# Range-Doppler bin selection
# ---------------------------------------------------------------------------

def _fast_time_fft(cap: IFCapture) -> np.ndarray:
    """Zero-padded fast-time FFT of every chirp, [n_chirps_total][bins]."""
    cfg = cap.config
    flat = cap.frames.reshape(-1, cfg.samples_per_chirp)
    return np.fft.fft(flat, n=FAST_FFT_PAD * cfg.samples_per_chirp, axis=1)


def _bin_freq_hz(cfg: RadarConfig) -> float:
    """IF frequency per padded FFT bin."""
    return cfg.adc_rate_hz / (FAST_FFT_PAD * cfg.samples_per_chirp)


def range_doppler_select(cap: IFCapture,
                         band_hz: tuple[float, float] = VOCAL_BAND_HZ,
                         window_chirps: int = DOPPLER_WINDOW_CHIRPS,
                         spectra: np.ndarray | None = None) -> RangeDopplerMap:
    """Pick the range bin whose Doppler spectrum has the most energy in the
    vocal band; confidence is that bin's in-band / total energy ratio.

    Slow-time series are mean-removed per window (kills the static return)
    and zero-order-hold filled across the idle gap so the Doppler axis is
    uniform at the slot rate. A precomputed fast-time FFT can be passed in.
    """
    cap.validate()
    cfg = cap.config
    if cap.n_frames < 2:
        raise InvalidInputError("range-Doppler selection needs at least 2 frames")

    if spectra is None:
        spectra = _fast_time_fft(cap)                   # [C, B]
    n_chirp = cfg.chirps_per_frame
    frames_per_win = max(1, min(cap.n_frames, window_chirps // n_chirp))
    win_chirps = frames_per_win * n_chirp
    n_bins = spectra.shape[1]

    slot_rate = cfg.slow_rate_hz
    win_slots = frames_per_win * (n_chirp + 1)
    freqs = np.fft.fftfreq(win_slots, d=1.0 / slot_rate)
    in_band = (np.abs(freqs) >= band_hz[0]) & (np.abs(freqs) <= band_hz[1])

    n_windows = cap.n_frames // frames_per_win
    acc = np.zeros((n_bins, win_slots))
    for w in range(n_windows):
        seg = spectra[w * win_chirps:(w + 1) * win_chirps].T     # [B, win_chirps]
        seg = seg - seg.mean(axis=1, keepdims=True)
        filled = idle_interpolate(
            seg.reshape(n_bins, frames_per_win, n_chirp), n_chirp)
        acc += np.abs(np.fft.fft(filled, axis=1)) ** 2
    acc /= max(1, n_windows)

    band_energy = acc[:, in_band].sum(axis=1)
    total_energy = acc.sum(axis=1)
    sel = int(np.argmax(band_energy))
    conf = float(band_energy[sel] / total_energy[sel]) if total_energy[sel] > 0 else 0.0

    range_axis = np.arange(n_bins) * _bin_freq_hz(cfg) * C_LIGHT / (2.0 * cfg.slope_k)
    return RangeDopplerMap(acc, range_axis, freqs, sel, conf)


# ---------------------------------------------------------------------------
# Phase processing
# ---------------------------------------------------------------------------

def wrap_phase(x: np.ndarray | float) -> np.ndarray | float:
    """Wrap into (-pi, pi]."""
    return math.pi - np.mod(math.pi - np.asarray(x, dtype=np.float64), TWO_PI)


def unwrap_triplet(phases: np.ndarray) -> np.ndarray:
    """Left-to-right unwrap: each value shifted by the 2*pi multiple that
    keeps successive differences inside (-pi, pi]."""
    p = np.asarray(phases, dtype=np.float64)
    if p.ndim == 1:
        p = p[None, :]
        squeeze = True
    else:
        squeeze = False
    deltas = wrap_phase(np.diff(p, axis=-1))
    out = np.concatenate([p[..., :1], p[..., :1] + np.cumsum(deltas, axis=-1)], axis=-1)
    return out[0] if squeeze else out


def _parabolic_refine(mag3: np.ndarray) -> np.ndarray:
    """Fractional peak offset in bins from a magnitude triplet, clipped to
    [-0.5, 0.5]."""
    a, b, c = mag3[..., 0], mag3[..., 1], mag3[..., 2]
    denom = a - 2.0 * b + c
    delta = np.where(np.abs(denom) > 1e-300, 0.5 * (a - c) / denom, 0.0)
    return np.clip(delta, -0.5, 0.5)


def phase_from_delay(tau: np.ndarray | float, cfg: RadarConfig) -> np.ndarray | float:
    """IF phase at chirp start for round-trip delay tau (the quadratic
    residual term is retained even though it is tiny at ns delays)."""
    return TWO_PI * (cfg.f0_hz * tau - 0.5 * cfg.slope_k * tau**2)


@dataclass
class CompositePhase:
    phi_fused: float
    phi_f: float
    phi_m: float
    peak_bin: int
    refined_freq_hz: float
    degraded: bool


def composite_phase_batch(spectra: np.ndarray, cfg: RadarConfig,
                          peak_bin: int | np.ndarray | None = None,
                          f_ref_hz: float | None = None) -> PhaseSeries:
    """Composite phase correction for a batch of fast-time spectra.

    Stage 1 refines the wrapped spectral phase: the (i-1, i, i+1) bin phases
    are unwrapped and interpolated at the refined peak frequency with the
    3-point cubic spline (equivalently, the interpolating parabola).
    Stage 2 lifts the refined phase by the whole-wrap count of the residual
    against the coarse frequency-inferred phase, so the output carries the
    coarse estimate's absolute wrap count at the spectral phase's precision.
    """
    spectra = np.atleast_2d(spectra)
    n, n_bins = spectra.shape
    mag = np.abs(spectra)
    if peak_bin is None:
        peaks = np.argmax(mag, axis=1)
    else:
        peaks = np.broadcast_to(np.asarray(peak_bin, dtype=np.int64), (n,)).copy()

    degraded = (peaks <= 0) | (peaks >= n_bins - 1)
    safe = np.clip(peaks, 1, n_bins - 2)
    idx = safe[:, None] + np.array([-1, 0, 1])[None, :]
    triplet = np.take_along_axis(spectra, idx, axis=1)
    tri_mag = np.abs(triplet)
    tri_phase = np.angle(triplet)
    peak_phase = np.angle(np.take_along_axis(spectra, peaks[:, None], axis=1))[:, 0]

    bin_hz = _bin_freq_hz(cfg)
    if f_ref_hz is None:
        delta = _parabolic_refine(tri_mag)
    else:
        delta = np.full(n, f_ref_hz / bin_hz) - safe
    f_hat = (safe + delta) * bin_hz

    unwrapped = unwrap_triplet(tri_phase)
    # quadratic (3-point not-a-knot spline) interpolation at the refined bin
    pm = (unwrapped[:, 1]
          + 0.5 * delta * (unwrapped[:, 2] - unwrapped[:, 0])
          + 0.5 * delta**2 * (unwrapped[:, 2] - 2.0 * unwrapped[:, 1] + unwrapped[:, 0]))
    pm = np.where(degraded, peak_phase, pm)   # edge peak: raw bin phase

    d_hat = f_hat * C_LIGHT / (2.0 * cfg.slope_k)
    pf = phase_from_delay(2.0 * d_hat / C_LIGHT, cfg)
    fused = fuse_phase(pf, pm)

    return PhaseSeries(phi_f=pf, phi_m=pm, phi_fused=fused,
                       peak_bin_phases=tri_phase, degraded=degraded)


def fuse_phase(phi_f: np.ndarray | float, phi_m: np.ndarray | float):
    """Residual fusion: lift the refined phase by the residual's whole-wrap
    count, so the coarse estimate contributes only its absolute wrap count
    while the refined phase keeps its precision. Equal to phi_m whenever the
    residual is below one wrap (|phi_f - phi_m| < pi)."""
    dphi = np.asarray(phi_f, dtype=np.float64) - phi_m
    n_wrap = np.floor((dphi + math.pi) / TWO_PI)
    return phi_m + TWO_PI * n_wrap


def composite_phase(spectrum: np.ndarray, cfg: RadarConfig,
                    peak_bin: int | None = None) -> CompositePhase:
    """Single-spectrum convenience wrapper around composite_phase_batch."""
    series = composite_phase_batch(spectrum[None, :], cfg, peak_bin=peak_bin)
    mag = np.abs(spectrum)
    pk = int(np.argmax(mag)) if peak_bin is None else int(peak_bin)
    safe = min(max(pk, 1), spectrum.size - 2)
    delta = float(_parabolic_refine(mag[safe - 1:safe + 2][None, :])[0])
    return CompositePhase(
        phi_fused=float(series.phi_fused[0]),
        phi_f=float(series.phi_f[0]),
        phi_m=float(series.phi_m[0]),
        peak_bin=pk,
        refined_freq_hz=(safe + delta) * _bin_freq_hz(cfg),
        degraded=bool(series.degraded[0]),
    )


def displacement_delta(phi_n: np.ndarray | float, phi_n1: np.ndarray | float,
                       cfg: RadarConfig) -> np.ndarray | float:
    """Inter-chirp displacement from two absolute chirp-start phases.

    Operand order is fixed so that increasing distance yields positive
    delta (direct inversion of the delay-phase relation).
    """
    k = cfg.slope_k
    rad_n = cfg.f0_hz**2 - (k / math.pi) * np.asarray(phi_n, dtype=np.float64)
    rad_n1 = cfg.f0_hz**2 - (k / math.pi) * np.asarray(phi_n1, dtype=np.float64)
    if np.any(rad_n < 0) or np.any(rad_n1 < 0):
        raise OutOfDomainError("negative radicand: phase inconsistent with the chirp model")
    out = (C_LIGHT / (2.0 * k)) * (np.sqrt(rad_n) - np.sqrt(rad_n1))
    return float(out) if np.isscalar(phi_n) and np.isscalar(phi_n1) else out


def idle_interpolate(per_chirp: np.ndarray, n_chirp: int) -> np.ndarray:
    """Zero-order-hold across the per-frame idle slot.

    Input [..., n_frames, n_chirp] (or a flat [n_frames * n_chirp] vector);
    output length n_frames * (n_chirp + 1) on the last axis, with each
    frame's final value repeated into its idle slot.
    """
    try:
        arr = np.asarray(per_chirp)
    except ValueError:
        raise InvalidInputError("ragged frames: every frame must hold n_chirp values")
    if arr.dtype == object:
        raise InvalidInputError("ragged frames: every frame must hold n_chirp values")
    if arr.ndim == 1:
        if arr.size % n_chirp != 0:
            raise InvalidInputError("ragged frames: length not divisible by n_chirp")
        arr = arr.reshape(-1, n_chirp)
    elif arr.shape[-1] != n_chirp:
        raise InvalidInputError("last axis must hold exactly n_chirp values")
    filled = np.concatenate([arr, arr[..., -1:]], axis=-1)
    return filled.reshape(*filled.shape[:-2], -1)


def design_band_pass(rate_hz: float, cfg: RefineConfig) -> np.ndarray:
    """Kaiser-windowed linear-phase FIR band-pass taps."""
    lo, hi = cfg.band_hz
    nyq = rate_hz / 2.0
    if not (0 < lo < hi < nyq):
        raise InvalidConfigError("band edges must satisfy 0 < lo < hi < Nyquist")
    if cfg.numtaps is None:
        numtaps, beta = sps.kaiserord(cfg.stop_atten_db, cfg.transition_hz / nyq)
        numtaps |= 1
    else:
        numtaps = cfg.numtaps | 1
        beta = sps.kaiser_beta(cfg.stop_atten_db)
    return sps.firwin(numtaps, [lo, hi], window=("kaiser", beta),
                      pass_zero=False, fs=rate_hz)


def refine_vibration(raw: np.ndarray, rate_hz: float,
                     cfg: RefineConfig | None = None) -> VibrationTrace:
    """Band-pass, first-difference, clip impulsive spikes, peak-normalize.

    The FIR is applied centered (group delay compensated). Spikes beyond
    clip_m suppress residual phase wraps and range-bin switches. An all-zero
    input returns a zero trace with pre_norm_peak 0.
    """
    cfg = cfg or RefineConfig()
    x = np.asarray(raw, dtype=np.float64)
    taps = design_band_pass(rate_hz, cfg)
    y = sps.fftconvolve(x, taps, mode="same")
    y = np.diff(y, prepend=y[:1] if y.size else 0.0)
    y = np.clip(y, -cfg.clip_m, cfg.clip_m)
    peak = float(np.max(np.abs(y))) if y.size else 0.0
    if peak > 0:
        return VibrationTrace(y / peak, rate_hz, peak)
    return VibrationTrace(y, rate_hz, 0.0)


# ---------------------------------------------------------------------------
# End-to-end extraction
# ---------------------------------------------------------------------------

def extract_vibration(cap: IFCapture, refine_cfg: RefineConfig | None = None,
                      confidence_threshold: float = CONFIDENCE_THRESHOLD
                      ) -> ExtractionResult:
    """Full capture -> VibrationTrace pipeline.

    An all-noise capture (below the bin-selection confidence threshold)
    yields a modality-absence result instead of a trace.
    """
    cfg = cap.config
    spectra = _fast_time_fft(cap)
    rd = range_doppler_select(cap, spectra=spectra)
    if rd.confidence < confidence_threshold:
        return ExtractionResult(None, rd.confidence, True, rd.selected_bin, 0.0)
    # one shared refined frequency: the throat stays in its bin, so averaging
    # magnitudes across chirps removes per-chirp frequency jitter
    sel = rd.selected_bin
    mean_mag = np.abs(spectra[:, max(sel - 1, 0):sel + 2]).mean(axis=0)
    if sel == 0 or sel >= spectra.shape[1] - 1:
        f_ref = sel * _bin_freq_hz(cfg)
    else:
        f_ref = (sel + float(_parabolic_refine(mean_mag[None, :])[0])) * _bin_freq_hz(cfg)

    series = composite_phase_batch(spectra, cfg, peak_bin=sel, f_ref_hz=f_ref)
    deltas = displacement_delta(series.phi_fused[:-1], series.phi_fused[1:], cfg)
    disp = np.concatenate([[0.0], np.cumsum(deltas)])

    per_frame = disp.reshape(cap.n_frames, cfg.chirps_per_frame)
    uniform = idle_interpolate(per_frame, cfg.chirps_per_frame)
    trace = refine_vibration(uniform, cfg.slow_rate_hz, refine_cfg)
    return ExtractionResult(
        trace=trace,
        confidence=rd.confidence,
        modality_absent=False,
        selected_bin=sel,
        degraded_fraction=float(np.mean(series.degraded)),
        displacement_m=uniform,
    )
