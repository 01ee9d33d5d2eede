"""Physically coupled synthetic data generation.

One shared throat-displacement trace drives both modalities: a source-filter
speech synthesizer (glottal source -> vocal tract resonators -> lip
radiation -> air propagation) and an FMCW radar simulator producing complex
IF captures. Attack variants (replay, digital injection) and whole corpora
with ground-truth word boundaries are built on top.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import signal as sps

from .audio_proc import AudioClip
from .errors import InvalidConfigError, InvalidInputError

C_LIGHT = 299_792_458.0

# Small vocabulary for ground-truth word labels; labels are cosmetic, the
# timing intervals are what downstream tampering consumes.
WORD_VOCAB = (
    "time", "water", "stone", "light", "river", "mountain", "paper", "cloud",
    "bird", "grass", "metal", "fire", "wind", "road", "tree", "voice",
)


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass
class DisplacementTrace:
    """Uniformly sampled throat displacement in meters."""

    samples: np.ndarray
    rate_hz: float

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)

    def validate(self):
        if not np.all(np.isfinite(self.samples)):
            raise InvalidInputError("displacement trace contains non-finite values")
        if self.samples.size and np.max(np.abs(self.samples)) >= 1e-3:
            raise InvalidInputError("displacement exceeds 1 mm")

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.rate_hz


@dataclass
class Signal:
    """Plain uniformly sampled real signal."""

    samples: np.ndarray
    rate_hz: float

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)


@dataclass
class GlottalConfig:
    """Vocal-fold excitation parameters.

    A0 is the resting glottal area (m^2), l the effective fold width (m).
    pitch_hz and voicing are per-sample traces describing the utterance.
    """

    A0: float = 2e-5
    l: float = 1.4e-2
    pitch_hz: np.ndarray | None = None
    vib_amp_m: float = 20e-6
    voicing: np.ndarray | None = None

    def validate(self):
        if self.A0 <= 0 or self.l <= 0:
            raise InvalidConfigError("A0 and l must be positive")
        if not (0 < self.vib_amp_m <= 1e-3):
            raise InvalidConfigError("vib_amp_m must be in (0, 1e-3] m")
        if self.pitch_hz is not None and self.voicing is not None:
            voiced = np.asarray(self.voicing, dtype=bool)
            pitch = np.asarray(self.pitch_hz, dtype=np.float64)[voiced]
            if pitch.size and (pitch.min() < 60.0 or pitch.max() > 400.0):
                raise InvalidConfigError("voiced pitch must stay within [60, 400] Hz")


@dataclass
class VocalTractConfig:
    """Cascade of two-pole resonators plus optional lip radiation."""

    formants: list[tuple[float, float]] = field(
        default_factory=lambda: [(700.0, 90.0), (1200.0, 110.0), (2600.0, 140.0)]
    )
    lip_radiation: bool = True

    def validate(self, rate_hz: float):
        if not (1 <= len(self.formants) <= 5):
            raise InvalidConfigError("need between 1 and 5 formants")
        for f, bw in self.formants:
            if f >= rate_hz / 2:
                raise InvalidConfigError(
                    f"formant center {f} Hz is at or above Nyquist ({rate_hz / 2} Hz)"
                )
            if f <= 0 or bw <= 0:
                raise InvalidConfigError("formant center and bandwidth must be positive")


@dataclass
class PropagationConfig:
    """Mouth-to-microphone acoustic propagation."""

    r_m: float = 0.25
    v_mps: float = 343.0
    Z0: float = 413.0

    def validate(self):
        if self.r_m <= 0:
            raise InvalidConfigError("propagation distance must be positive")
        if not (323.0 <= self.v_mps <= 363.0):
            raise InvalidConfigError("speed of sound should be ~343 m/s")


@dataclass
class RadarConfig:
    """FMCW chirp and frame timing.

    Chirp start times lie on a uniform grid of (chirps_per_frame + 1) slots
    per frame; the final slot of every frame is idle (no data). slope_k is
    derived, never stored, so it exactly equals bandwidth/chirp duration.
    """

    f0_hz: float = 77e9
    bandwidth_hz: float = 4e9
    chirp_dur_s: float = 60e-6
    samples_per_chirp: int = 64
    chirps_per_frame: int = 16
    frame_rate_hz: float = 1000.0

    @property
    def slope_k(self) -> float:
        return self.bandwidth_hz / self.chirp_dur_s

    @property
    def wavelength_m(self) -> float:
        return C_LIGHT / self.f0_hz

    @property
    def slow_rate_hz(self) -> float:
        """Uniform slow-time slot rate, idle slot included."""
        return self.frame_rate_hz * (self.chirps_per_frame + 1)

    @property
    def adc_rate_hz(self) -> float:
        return self.samples_per_chirp / self.chirp_dur_s

    @property
    def range_resolution_m(self) -> float:
        return C_LIGHT / (2.0 * self.bandwidth_hz)

    @property
    def max_unambiguous_range_m(self) -> float:
        # Complex IF sampling: beat frequencies up to the full ADC rate.
        return self.adc_rate_hz * C_LIGHT / (2.0 * self.slope_k)

    def validate(self):
        if min(self.f0_hz, self.bandwidth_hz, self.chirp_dur_s, self.frame_rate_hz) <= 0:
            raise InvalidConfigError("radar frequencies and durations must be positive")
        if self.samples_per_chirp < 4 or self.chirps_per_frame < 1:
            raise InvalidConfigError("need >= 4 samples per chirp and >= 1 chirp per frame")
        if self.slow_rate_hz < 2.0 * 8000.0:
            raise InvalidConfigError(
                "frame_rate * (chirps_per_frame + 1) must cover the 8 kHz passband"
            )


@dataclass
class Reflector:
    range_m: float
    amplitude: float
    displacement: DisplacementTrace | None = None


@dataclass
class ReflectorSet:
    """Scene description for the radar simulator."""

    reflectors: list[Reflector] = field(default_factory=list)
    static_gain: float = 0.3
    noise_snr_db: float = 20.0
    noise_floor: float = 0.05  # absolute noise sigma when the scene is empty

    def validate(self):
        moving = 0
        for r in self.reflectors:
            if not (0.05 < r.range_m < 2.0):
                raise InvalidConfigError(f"reflector range {r.range_m} m outside (0.05, 2.0)")
            if r.displacement is not None:
                moving += 1
        if moving > 1:
            raise InvalidConfigError("at most one reflector may carry the throat displacement")


@dataclass
class IFCapture:
    """Complex IF samples, frames x chirps x fast-time."""

    frames: np.ndarray
    config: RadarConfig

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.complex128)

    def validate(self):
        f = self.frames
        if f.ndim != 3 or f.shape[1] != self.config.chirps_per_frame \
                or f.shape[2] != self.config.samples_per_chirp:
            raise InvalidInputError("IF tensor shape does not match the radar config")
        if not np.all(np.isfinite(f.view(np.float64))):
            raise InvalidInputError("IF capture contains non-finite samples")

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


@dataclass
class Word:
    label: str
    start_s: float
    end_s: float


@dataclass
class Utterance:
    audio: AudioClip
    if_capture: IFCapture
    truth_displacement: DisplacementTrace
    words: list[Word]
    speaker_id: int
    seed: int
    utt_id: str = ""

    def validate(self):
        dur = self.audio.samples.size / self.audio.rate_hz
        prev_end = 0.0
        for w in self.words:
            if not (prev_end <= w.start_s < w.end_s <= dur + 1e-9):
                raise InvalidInputError("word intervals must be increasing and inside the clip")
            prev_end = w.end_s


# ---------------------------------------------------------------------------
# Source-filter speech synthesis
# ---------------------------------------------------------------------------

def glottal_source(d: DisplacementTrace, g: GlottalConfig) -> Signal:
    """Glottal flow from fold displacement: l*d'(t)^2 + (A0 + l*d(t))*d''(t).

    Derivatives use central differences; the two endpoint samples fall back
    to one-sided differences.
    """
    x = d.samples
    if x.size < 3:
        raise InvalidInputError("displacement trace must have at least 3 samples")
    g.validate()
    dt = 1.0 / d.rate_hz
    d1 = np.gradient(x, dt, edge_order=1)
    d2 = np.empty_like(x)
    d2[1:-1] = (x[2:] - 2.0 * x[1:-1] + x[:-2]) / dt**2
    d2[0] = d2[1]
    d2[-1] = d2[-2]
    s = g.l * d1**2 + (g.A0 + g.l * x) * d2
    return Signal(s, d.rate_hz)


def resonator_coeffs(center_hz: float, bw_hz: float, rate_hz: float):
    """Two-pole resonator coefficients, unit gain at the center frequency."""
    r = math.exp(-math.pi * bw_hz / rate_hz)
    theta = 2.0 * math.pi * center_hz / rate_hz
    a = np.array([1.0, -2.0 * r * math.cos(theta), r * r])
    # normalize: |H(e^{j theta})| = 1
    z = np.exp(-1j * theta)
    b0 = abs(a[0] + a[1] * z + a[2] * z * z)
    return np.array([b0]), a


def apply_vocal_tract(x: np.ndarray, vt: VocalTractConfig, rate_hz: float) -> np.ndarray:
    vt.validate(rate_hz)
    y = x
    for f, bw in vt.formants:
        b, a = resonator_coeffs(f, bw, rate_hz)
        y = sps.lfilter(b, a, y)
    if vt.lip_radiation:
        y = np.diff(y, prepend=0.0)
    return y


def propagate(x: np.ndarray, prop: PropagationConfig, rate_hz: float) -> np.ndarray:
    """Spherical propagation to the mic: r/v delay (nearest sample),
    time derivative, and Z0/(4*pi*r) spreading loss."""
    prop.validate()
    n_delay = int(round(prop.r_m / prop.v_mps * rate_hz))
    y = x
    if n_delay > 0:
        y = np.concatenate([np.zeros(n_delay), y[:-n_delay] if n_delay < y.size else y[:0]])
    y = np.gradient(y, 1.0 / rate_hz, edge_order=1)
    return y * (prop.Z0 / (4.0 * math.pi * prop.r_m))


def synth_speech(source: Signal, vt: VocalTractConfig,
                 prop: PropagationConfig) -> AudioClip:
    """Vocal tract + lip radiation + acoustic propagation to the mic."""
    y = apply_vocal_tract(source.samples, vt, source.rate_hz)
    y = propagate(y, prop, source.rate_hz)
    return AudioClip(y, source.rate_hz, processed=False)


# ---------------------------------------------------------------------------
# FMCW IF simulation
# ---------------------------------------------------------------------------

def _chirp_start_times(cfg: RadarConfig, n_frames: int) -> np.ndarray:
    """Start time of every recorded chirp, [n_frames * chirps_per_frame]."""
    slot_dt = 1.0 / cfg.slow_rate_hz
    frame_idx = np.arange(n_frames)[:, None]
    chirp_idx = np.arange(cfg.chirps_per_frame)[None, :]
    t = (frame_idx * (cfg.chirps_per_frame + 1) + chirp_idx) * slot_dt
    return t.ravel()


def _sample_displacement(trace: DisplacementTrace | None, times: np.ndarray) -> np.ndarray:
    if trace is None or trace.samples.size == 0:
        return np.zeros_like(times)
    idx = np.clip(np.round(times * trace.rate_hz).astype(np.int64), 0, trace.samples.size - 1)
    return trace.samples[idx]


def simulate_if(reflectors: ReflectorSet, cfg: RadarConfig, duration_s: float,
                seed: int | None = None) -> IFCapture:
    """Simulate a dechirped IF capture of the scene.

    Each reflector contributes A * exp(j*2*pi*(f0*tau + k*t*tau - k*tau^2/2))
    per fast-time sample t, with tau the round-trip delay at the chirp start
    (stop-and-go approximation). Complex Gaussian noise is added at
    noise_snr_db relative to the reflector-sum RMS.
    """
    cfg.validate()
    reflectors.validate()
    n_frames = int(math.floor(duration_s * cfg.frame_rate_hz))
    if n_frames < 1:
        raise InvalidInputError("duration must cover at least one frame")
    for r in reflectors.reflectors:
        if r.range_m >= cfg.max_unambiguous_range_m:
            raise InvalidConfigError(
                f"reflector at {r.range_m} m beyond unambiguous range "
                f"{cfg.max_unambiguous_range_m:.3f} m"
            )

    k = cfg.slope_k
    t_fast = (np.arange(cfg.samples_per_chirp) / cfg.adc_rate_hz)[None, :]
    t_chirp = _chirp_start_times(cfg, n_frames)

    total = np.full((t_chirp.size, cfg.samples_per_chirp),
                    reflectors.static_gain, dtype=np.complex128)
    sig_power = 0.0
    for refl in reflectors.reflectors:
        d = _sample_displacement(refl.displacement, t_chirp)
        tau = (2.0 * (refl.range_m + d) / C_LIGHT)[:, None]
        phase = 2.0 * math.pi * (cfg.f0_hz * tau + k * tau * t_fast - 0.5 * k * tau**2)
        total += refl.amplitude * np.exp(1j * phase)
        sig_power += refl.amplitude**2

    rng = np.random.default_rng(seed)
    if sig_power > 0:
        sigma = math.sqrt(sig_power) * 10.0 ** (-reflectors.noise_snr_db / 20.0)
    else:
        sigma = reflectors.noise_floor
    if sigma > 0:
        noise = rng.standard_normal(total.shape) + 1j * rng.standard_normal(total.shape)
        total = total + (sigma / math.sqrt(2.0)) * noise

    frames = total.reshape(n_frames, cfg.chirps_per_frame, cfg.samples_per_chirp)
    return IFCapture(frames, cfg)


def simulate_replay(audio: AudioClip, cfg: RadarConfig, gain: float = 20e-6,
                    range_m: float = 0.25, noise_snr_db: float = 50.0,
                    seed: int | None = None) -> IFCapture:
    """Loudspeaker replay: a rigid diaphragm at range_m whose displacement is
    proportional to the full-band audio waveform.

    Unlike a throat return, the resulting capture carries the audio's
    high-frequency content into the radar channel.
    """
    if not audio.processed:
        raise InvalidInputError("replay simulation expects preprocessed, normalized audio")
    slow_rate = cfg.slow_rate_hz
    up = int(round(slow_rate))
    down = int(round(audio.rate_hz))
    g = math.gcd(up, down)
    disp = sps.resample_poly(audio.samples, up // g, down // g) * gain
    trace = DisplacementTrace(disp, slow_rate)
    scene = ReflectorSet(
        reflectors=[Reflector(range_m, 1.0, trace)] if gain != 0.0
        else [Reflector(range_m, 1.0, None)],
        static_gain=0.3, noise_snr_db=noise_snr_db,
    )
    duration = audio.samples.size / audio.rate_hz
    return simulate_if(scene, cfg, duration, seed=seed)


# ---------------------------------------------------------------------------
# Corpus generation
# ---------------------------------------------------------------------------

@dataclass
class SpeakerProfile:
    speaker_id: int
    glottal: GlottalConfig
    vowels: list[VocalTractConfig]
    base_pitch_hz: float


@dataclass
class DatasetSpec:
    """Parameters for a synthetic corpus."""

    n_utterances: int = 20
    n_speakers: int = 4
    words_min: int = 5
    words_max: int = 8
    audio_rate_hz: float = 16000.0
    radar: RadarConfig = field(default_factory=RadarConfig)
    prop: PropagationConfig = field(default_factory=PropagationConfig)
    throat_range_m: float = 0.25
    # Close-range throat returns are strong; radar phase noise must stay well
    # below the micrometre vibration floor for the trace to be usable.
    radar_snr_db: float = 50.0
    # white mic noise passes pre-emphasis at full tilt while speech does not;
    # a close-talking clip-on mic is comfortably cleaner than this
    audio_snr_db: float = 30.0
    word_dur_s: tuple[float, float] = (0.18, 0.32)
    gap_dur_s: tuple[float, float] = (0.06, 0.14)
    lead_silence_s: float = 0.12
    tail_silence_s: float = 0.12
    unvoiced_prob: float = 0.35
    n_clutter: int = 2

    def validate(self):
        if self.n_utterances < 1:
            raise InvalidConfigError("n_utterances must be >= 1")
        if self.n_speakers < 1:
            raise InvalidConfigError("n_speakers must be >= 1")
        if not (1 <= self.words_min <= self.words_max):
            raise InvalidConfigError("need 1 <= words_min <= words_max")
        self.radar.validate()
        self.prop.validate()


def _speaker_profile(speaker_id: int, ss: np.random.SeedSequence) -> SpeakerProfile:
    rng = np.random.default_rng(ss)
    # fundamentals stay inside the 100-200 Hz vocal band the range-Doppler
    # selector keys on
    base_pitch = rng.uniform(115.0, 175.0)
    vib_amp = rng.uniform(14e-6, 22e-6)
    vowels = []
    for _ in range(3):
        f1 = rng.uniform(300.0, 800.0)
        f2 = rng.uniform(max(900.0, f1 + 250.0), 2200.0)
        f3 = rng.uniform(2300.0, 3000.0)
        bws = rng.uniform(60.0, 130.0, size=3)
        vowels.append(VocalTractConfig(
            formants=[(f1, bws[0]), (f2, bws[1]), (f3, bws[2])],
            lip_radiation=True,
        ))
    glottal = GlottalConfig(A0=2e-5, l=1.4e-2, vib_amp_m=vib_amp)
    return SpeakerProfile(speaker_id, glottal, vowels, base_pitch)


@dataclass
class _WordPlan:
    label: str
    start_s: float
    voiced_start_s: float
    end_s: float
    pitch_a: float
    pitch_b: float
    amp_m: float
    vowel_idx: int


def _plan_words(spec: DatasetSpec, speaker: SpeakerProfile,
                rng: np.random.Generator) -> list[_WordPlan]:
    n_words = int(rng.integers(spec.words_min, spec.words_max + 1))
    t = spec.lead_silence_s
    plans = []
    for w in range(n_words):
        dur = rng.uniform(*spec.word_dur_s)
        # first word starts voiced so both modalities share one onset
        unvoiced = 0.0
        if w > 0 and rng.random() < spec.unvoiced_prob:
            unvoiced = rng.uniform(0.03, 0.06)
        base = speaker.base_pitch_hz * rng.uniform(0.92, 1.08)
        glide = rng.uniform(-0.08, 0.08)
        plans.append(_WordPlan(
            label=str(rng.choice(WORD_VOCAB)),
            start_s=t,
            voiced_start_s=t + unvoiced,
            end_s=t + dur,
            pitch_a=base,
            pitch_b=base * (1.0 + glide),
            amp_m=speaker.glottal.vib_amp_m * rng.uniform(0.85, 1.1),
            vowel_idx=int(rng.integers(0, len(speaker.vowels))),
        ))
        t += dur + rng.uniform(*spec.gap_dur_s)
    return plans


_RAMP_S = 0.012
_PULSE_WIDTH = 0.08   # fraction of the glottal cycle
_PULSE_MIX = 0.45     # pulse share; the rest is the smooth fundamental


def _glottal_cycle(phase: np.ndarray) -> np.ndarray:
    """Zero-mean, peak-one periodic fold-displacement shape.

    A smooth fundamental plus one narrow closure pulse per cycle: the
    fundamental keeps the displacement envelope continuous (what the radar
    tracks), the pulse supplies the harmonic series that excites the vocal
    tract through the second derivative.
    """
    x = np.mod(phase, 1.0)
    pulse = np.exp(-(((x - 0.5) / _PULSE_WIDTH) ** 2))
    pulse = pulse - _PULSE_WIDTH * math.sqrt(math.pi)   # zero mean over a cycle
    g = (1.0 - _PULSE_MIX) * np.sin(2.0 * math.pi * x) + _PULSE_MIX * pulse
    return g / _GLOTTAL_PEAK


def _glottal_peak() -> float:
    x = np.linspace(0.0, 1.0, 20001)
    pulse = np.exp(-(((x - 0.5) / _PULSE_WIDTH) ** 2)) - _PULSE_WIDTH * math.sqrt(math.pi)
    g = (1.0 - _PULSE_MIX) * np.sin(2.0 * math.pi * x) + _PULSE_MIX * pulse
    return float(np.max(np.abs(g)))


_GLOTTAL_PEAK = _glottal_peak()


def _displacement_on_grid(plans: list[_WordPlan], rate_hz: float,
                          n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Evaluate the closed-form fold displacement on a uniform grid.

    Returns (displacement, pitch trace, voicing mask). The same closed form
    is sampled at the audio and radar slow rates so the two modalities stay
    physically coupled.
    """
    d = np.zeros(n)
    pitch = np.zeros(n)
    voiced = np.zeros(n, dtype=bool)
    t = np.arange(n) / rate_hz
    for p in plans:
        i0 = int(np.searchsorted(t, p.voiced_start_s))
        i1 = min(int(np.searchsorted(t, p.end_s)), n)
        if i1 <= i0 + 2:
            continue
        u = t[i0:i1] - p.voiced_start_s
        span = p.end_s - p.voiced_start_s
        f = p.pitch_a + (p.pitch_b - p.pitch_a) * (u / span)
        phase = p.pitch_a * u + 0.5 * (p.pitch_b - p.pitch_a) * u**2 / span
        env = np.minimum(1.0, u / _RAMP_S)
        env = np.minimum(env, np.maximum(0.0, (span - u) / _RAMP_S))
        env = 0.5 * (1.0 - np.cos(np.pi * np.clip(env, 0.0, 1.0)))
        d[i0:i1] = p.amp_m * env * _glottal_cycle(phase)
        pitch[i0:i1] = f
        voiced[i0:i1] = True
    return d, pitch, voiced


def _unvoiced_source(plans: list[_WordPlan], rate_hz: float, n: int,
                     level: float, rng: np.random.Generator) -> np.ndarray:
    out = np.zeros(n)
    for p in plans:
        if p.voiced_start_s <= p.start_s:
            continue
        i0 = int(round(p.start_s * rate_hz))
        i1 = min(int(round(p.voiced_start_s * rate_hz)), n)
        if i1 <= i0:
            continue
        burst = rng.standard_normal(i1 - i0) * level
        ramp = np.minimum(1.0, np.arange(i1 - i0) / max(1, int(0.005 * rate_hz)))
        out[i0:i1] = burst * ramp
    return out


def make_utterance(spec: DatasetSpec, speaker: SpeakerProfile, seed: int,
                   utt_id: str = "") -> Utterance:
    rng = np.random.default_rng(seed)
    plans = _plan_words(spec, speaker, rng)
    duration = plans[-1].end_s + spec.tail_silence_s
    # radar frames are whole; extend duration to the frame boundary
    n_frames = int(math.ceil(duration * spec.radar.frame_rate_hz))
    duration = n_frames / spec.radar.frame_rate_hz

    slow_rate = spec.radar.slow_rate_hz
    n_slow = int(round(duration * slow_rate))
    d_slow, _, _ = _displacement_on_grid(plans, slow_rate, n_slow)
    truth = DisplacementTrace(d_slow, slow_rate)

    n_audio = int(round(duration * spec.audio_rate_hz))
    d_audio, pitch, voiced = _displacement_on_grid(plans, spec.audio_rate_hz, n_audio)
    glottal = replace(speaker.glottal, pitch_hz=pitch, voicing=voiced)
    source = glottal_source(DisplacementTrace(d_audio, spec.audio_rate_hz), glottal)

    voiced_rms = float(np.sqrt(np.mean(source.samples[voiced] ** 2))) if voiced.any() else 1.0
    source.samples += _unvoiced_source(plans, spec.audio_rate_hz, n_audio,
                                       0.3 * voiced_rms, rng)

    # per-word vocal tract: each word's span is filtered with its own vowel
    # and summed; a 60 ms tail lets resonances ring out. Word loudness is
    # equalized (with +-1 dB jitter) like natural speech, otherwise random
    # resonator gains leave some words inaudible to onset detection.
    audio = np.zeros(n_audio)
    tail = int(0.06 * spec.audio_rate_hz)
    for p in plans:
        i0 = int(round(p.start_s * spec.audio_rate_hz))
        i1 = min(int(round(p.end_s * spec.audio_rate_hz)) + tail, n_audio)
        seg = np.zeros(i1 - i0)
        n_word = min(int(round(p.end_s * spec.audio_rate_hz)), n_audio) - i0
        seg[:n_word] = source.samples[i0:i0 + n_word]
        filt = apply_vocal_tract(seg, speaker.vowels[p.vowel_idx],
                                 spec.audio_rate_hz)
        # equalize what the mic chain will hear: propagation differentiates
        # and preprocessing pre-emphasizes, so level words on a double
        # difference rather than on raw RMS
        proxy = np.diff(filt[:n_word], n=2)
        word_rms = float(np.sqrt(np.mean(proxy**2))) if proxy.size else 0.0
        if word_rms > 0:
            filt *= 10.0 ** (rng.uniform(-0.5, 0.5) / 20.0) / word_rms
        audio[i0:i1] += filt

    # tract filtering and lip radiation already ran per word; propagate to mic
    y = propagate(audio, spec.prop, spec.audio_rate_hz)
    rms = float(np.sqrt(np.mean(y**2))) or 1.0
    y = y + rng.standard_normal(n_audio) * rms * 10.0 ** (-spec.audio_snr_db / 20.0)
    clip = AudioClip(y, spec.audio_rate_hz, processed=False)

    scene_reflectors = [Reflector(spec.throat_range_m, 1.0, truth)]
    for _ in range(spec.n_clutter):
        r = float(rng.uniform(0.12, 0.45))
        # keep clutter out of the throat's range bin
        if abs(r - spec.throat_range_m) < 2.5 * spec.radar.range_resolution_m:
            r = spec.throat_range_m + 3.0 * spec.radar.range_resolution_m
        scene_reflectors.append(Reflector(r, float(rng.uniform(0.2, 0.5)), None))
    scene = ReflectorSet(scene_reflectors, static_gain=0.3,
                         noise_snr_db=spec.radar_snr_db)
    cap = simulate_if(scene, spec.radar, duration,
                      seed=int(rng.integers(0, 2**63 - 1)))

    words = [Word(p.label, p.start_s, p.end_s) for p in plans]
    utt = Utterance(clip, cap, truth, words, speaker.speaker_id, seed, utt_id)
    utt.validate()
    return utt


def make_dataset(spec: DatasetSpec, seed: int) -> list[Utterance]:
    """Generate a corpus; fully deterministic given the seed."""
    spec.validate()
    root = np.random.SeedSequence(seed)
    speaker_ss, utt_ss = root.spawn(2)
    speakers = [_speaker_profile(i, s)
                for i, s in enumerate(speaker_ss.spawn(spec.n_speakers))]
    utts = []
    for i, ss in enumerate(utt_ss.spawn(spec.n_utterances)):
        speaker = speakers[i % spec.n_speakers]
        utt_seed = int(ss.generate_state(1)[0])
        utts.append(make_utterance(spec, speaker, utt_seed, utt_id=f"utt{i:04d}"))
    return utts
