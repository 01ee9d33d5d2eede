"""Glue: turn an utterance (or tampered variant) into scored segment pairs.

Chains audio preprocessing, vibration extraction, per-modality speech
bounds, shared-config Mel spectrograms, and 300 ms segment pairing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import align_spec, audio_proc, vib_extract
from .align_spec import (AUDIO_ONSET, MMWAVE_ONSET, MelConfig, MelSegmentPair,
                         OnsetConfig, SegmentConfig)
from .audio_proc import AudioClip
from .errors import NoSpeechError
from .synth import Signal, Utterance
from .vib_extract import ExtractionResult, RefineConfig


@dataclass
class PipelineConfig:
    mel: MelConfig = field(default_factory=MelConfig)
    seg: SegmentConfig = field(default_factory=SegmentConfig)
    audio_onset: OnsetConfig = field(default_factory=lambda: AUDIO_ONSET)
    mmw_onset: OnsetConfig = field(default_factory=lambda: MMWAVE_ONSET)
    refine: RefineConfig = field(default_factory=RefineConfig)


@dataclass
class UtterancePairs:
    pairs: list[MelSegmentPair]
    modality_absent: bool
    no_speech: bool
    confidence: float
    bounds_audio: align_spec.SpeechBounds | None = None
    bounds_mmw: align_spec.SpeechBounds | None = None


def extraction_of(utt: Utterance, cfg: PipelineConfig) -> ExtractionResult:
    return vib_extract.extract_vibration(utt.if_capture, cfg.refine)


def pairs_from_parts(audio: AudioClip, extraction: ExtractionResult,
                     cfg: PipelineConfig, utterance_id: str = "") -> UtterancePairs:
    """Build aligned segment pairs from a preprocessed-or-raw clip plus an
    extraction result (lets callers reuse cached extractions)."""
    if extraction.modality_absent or extraction.trace is None:
        return UtterancePairs([], True, False, extraction.confidence)
    processed = audio if audio.processed else audio_proc.preprocess(audio)
    trace = extraction.trace
    try:
        bounds_a = align_spec.detect_speech_bounds(
            Signal(processed.samples, processed.rate_hz), cfg.audio_onset)
        bounds_m = align_spec.detect_speech_bounds(
            Signal(trace.samples, trace.rate_hz), cfg.mmw_onset)
    except NoSpeechError:
        return UtterancePairs([], False, True, extraction.confidence)

    spec_a = align_spec.mel_spectrogram(Signal(processed.samples, processed.rate_hz),
                                        cfg.mel)
    spec_m = align_spec.mel_spectrogram(Signal(trace.samples, trace.rate_hz), cfg.mel)
    pairs = align_spec.segment_pairs(spec_a, spec_m, bounds_a, bounds_m,
                                     cfg.mel, cfg.seg, utterance_id)
    return UtterancePairs(pairs, False, False, extraction.confidence,
                          bounds_a, bounds_m)


def utterance_pairs(utt: Utterance, cfg: PipelineConfig | None = None,
                    extraction: ExtractionResult | None = None) -> UtterancePairs:
    cfg = cfg or PipelineConfig()
    if extraction is None:
        extraction = extraction_of(utt, cfg)
    return pairs_from_parts(utt.audio, extraction, cfg, utt.utt_id)


def high_band_energy_fraction(extraction: ExtractionResult, cfg: PipelineConfig,
                              split_hz: float = 2000.0) -> float:
    """Fraction of the extracted-vibration Mel energy at or above split_hz;
    genuine throat returns concentrate below it, replay traces do not."""
    trace = extraction.trace
    spec = align_spec.mel_spectrogram(Signal(trace.samples, trace.rate_hz), cfg.mel)
    power = np.exp(spec)
    centers = align_spec.mel_band_centers_hz(cfg.mel)
    hi = power[centers >= split_hz].sum()
    return float(hi / power.sum())
