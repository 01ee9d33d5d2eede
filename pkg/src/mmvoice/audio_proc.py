"""Audio conditioning for cross-modal analysis.

DC removal, zero-phase Butterworth band-pass, pre-emphasis, and peak
normalization. Pre-emphasis is audio-only by construction: the mmWave
vibration path never routes through this module.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from .errors import InvalidConfigError, InvalidInputError


@dataclass
class AudioClip:
    """Mono PCM waveform; processed clips are peak-normalized to [-1, 1]."""

    samples: np.ndarray
    rate_hz: float
    processed: bool = False

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.rate_hz


@dataclass
class PreprocessConfig:
    band_hz: tuple[float, float] = (80.0, 8000.0)
    butter_order: int = 4
    pre_emphasis_beta: float = 0.97


def pre_emphasis(x: AudioClip, beta: float) -> AudioClip:
    """First-order high-frequency boost: y[n] = x[n] - beta * x[n-1]."""
    if not (0.0 <= beta < 1.0):
        raise InvalidConfigError("pre-emphasis beta must be in [0, 1)")
    y = x.samples.copy()
    y[1:] -= beta * x.samples[:-1]
    return AudioClip(y, x.rate_hz, processed=x.processed)


def _band_filter(x: np.ndarray, rate_hz: float, band: tuple[float, float],
                 order: int) -> np.ndarray:
    lo, hi = band
    nyq = rate_hz / 2.0
    if lo <= 0 or lo >= nyq:
        raise InvalidConfigError("band low edge must lie inside (0, Nyquist)")
    if hi >= nyq:
        # band-pass degenerates to a high-pass when the upper edge hits Nyquist
        sos = sps.butter(order, lo, btype="highpass", fs=rate_hz, output="sos")
    else:
        sos = sps.butter(order, [lo, hi], btype="bandpass", fs=rate_hz, output="sos")
    return sps.sosfiltfilt(sos, x)


def preprocess(raw: AudioClip, cfg: PreprocessConfig | None = None) -> AudioClip:
    """Clean a raw clip: DC removal, forward-backward band-pass (zero phase),
    pre-emphasis, peak normalization."""
    if raw.samples.size == 0:
        raise InvalidInputError("cannot preprocess an empty clip")
    if raw.rate_hz < 16000.0:
        raise InvalidInputError("preprocess expects a sample rate >= 16 kHz")
    cfg = cfg or PreprocessConfig()
    y = raw.samples - np.mean(raw.samples)
    y = _band_filter(y, raw.rate_hz, cfg.band_hz, cfg.butter_order)
    clip = pre_emphasis(AudioClip(y, raw.rate_hz), cfg.pre_emphasis_beta)
    y = clip.samples
    peak = np.max(np.abs(y)) if y.size else 0.0
    if peak > 0:
        y = y / peak
    return AudioClip(y, raw.rate_hz, processed=True)
