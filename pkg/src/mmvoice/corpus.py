"""On-disk corpus formats.

One directory per utterance: audio.wav (16-bit PCM mono), if.bin
(little-endian interleaved float32 re/im, frame-major), truth.f32
(little-endian float32 displacement), meta.json. Extraction and alignment
artifacts (vib.f32/vib.json, segs.bin/segs.json) use sibling directories
with matching utterance names.
"""

from __future__ import annotations

import json
import wave
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .align_spec import MelSegmentPair
from .audio_proc import AudioClip
from .errors import InvalidInputError
from .synth import (DisplacementTrace, IFCapture, RadarConfig, Utterance, Word)
from .vib_extract import ExtractionResult, VibrationTrace

WAV_PEAK = 0.9


# ---------------------------------------------------------------------------
# Utterances
# ---------------------------------------------------------------------------

def write_wav(path: Path, clip: AudioClip):
    x = clip.samples
    peak = np.max(np.abs(x)) if x.size else 0.0
    scaled = x / peak * WAV_PEAK if peak > 0 else x
    pcm = np.clip(np.round(scaled * 32767.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(int(round(clip.rate_hz)))
        w.writeframes(pcm.tobytes())


def read_wav(path: Path) -> AudioClip:
    with wave.open(str(path), "rb") as w:
        if w.getnchannels() != 1 or w.getsampwidth() != 2:
            raise InvalidInputError(f"{path} is not 16-bit mono PCM")
        rate = w.getframerate()
        pcm = np.frombuffer(w.readframes(w.getnframes()), dtype="<i2")
    return AudioClip(pcm.astype(np.float64) / 32767.0, float(rate), processed=False)


def write_utterance(root: Path, utt: Utterance) -> Path:
    d = root / utt.utt_id
    d.mkdir(parents=True, exist_ok=True)
    write_wav(d / "audio.wav", utt.audio)

    cap = utt.if_capture
    inter = np.empty(cap.frames.size * 2, dtype="<f4")
    inter[0::2] = cap.frames.real.ravel().astype("<f4")
    inter[1::2] = cap.frames.imag.ravel().astype("<f4")
    inter.tofile(d / "if.bin")

    utt.truth_displacement.samples.astype("<f4").tofile(d / "truth.f32")

    meta = {
        "utt_id": utt.utt_id,
        "speaker_id": utt.speaker_id,
        "seed": utt.seed,
        "audio_rate_hz": utt.audio.rate_hz,
        "truth_rate_hz": utt.truth_displacement.rate_hz,
        "n_frames": cap.n_frames,
        "radar": asdict(cap.config),
        "words": [asdict(w) for w in utt.words],
    }
    (d / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    return d


def read_utterance(d: Path, load_capture: bool = True) -> Utterance:
    meta = json.loads((d / "meta.json").read_text())
    cfg = RadarConfig(**meta["radar"])
    audio = read_wav(d / "audio.wav")
    truth = DisplacementTrace(
        np.fromfile(d / "truth.f32", dtype="<f4").astype(np.float64),
        meta["truth_rate_hz"])
    if load_capture:
        raw = np.fromfile(d / "if.bin", dtype="<f4").astype(np.float64)
        cplx = raw[0::2] + 1j * raw[1::2]
        frames = cplx.reshape(meta["n_frames"], cfg.chirps_per_frame,
                              cfg.samples_per_chirp)
    else:
        frames = np.zeros((meta["n_frames"], cfg.chirps_per_frame,
                           cfg.samples_per_chirp), dtype=np.complex128)
    cap = IFCapture(frames, cfg)
    words = [Word(**w) for w in meta["words"]]
    return Utterance(audio, cap, truth, words, meta["speaker_id"], meta["seed"],
                     meta["utt_id"])


def list_utterances(root: Path) -> list[Path]:
    return sorted(p for p in Path(root).iterdir()
                  if p.is_dir() and (p / "meta.json").exists())


# ---------------------------------------------------------------------------
# Extraction results
# ---------------------------------------------------------------------------

def write_extraction(d: Path, res: ExtractionResult) -> Path:
    d.mkdir(parents=True, exist_ok=True)
    info = {
        "confidence": res.confidence,
        "modality_absent": res.modality_absent,
        "selected_bin": res.selected_bin,
        "degraded_fraction": res.degraded_fraction,
    }
    if res.trace is not None:
        res.trace.samples.astype("<f4").tofile(d / "vib.f32")
        info["rate_hz"] = res.trace.rate_hz
        info["pre_norm_peak_m"] = res.trace.pre_norm_peak_m
    (d / "vib.json").write_text(json.dumps(info, indent=2, sort_keys=True))
    return d


def read_extraction(d: Path) -> ExtractionResult:
    info = json.loads((d / "vib.json").read_text())
    trace = None
    if not info["modality_absent"]:
        samples = np.fromfile(d / "vib.f32", dtype="<f4").astype(np.float64)
        trace = VibrationTrace(samples, info["rate_hz"], info["pre_norm_peak_m"])
    return ExtractionResult(trace, info["confidence"], info["modality_absent"],
                            info["selected_bin"], info["degraded_fraction"])


# ---------------------------------------------------------------------------
# Segment pairs
# ---------------------------------------------------------------------------

def write_segments(d: Path, pairs: list[MelSegmentPair]) -> Path:
    d.mkdir(parents=True, exist_ok=True)
    if pairs:
        stacked = np.stack([np.stack([p.audio_spec, p.mmw_spec]) for p in pairs])
    else:
        stacked = np.zeros((0, 2, 0, 0))
    stacked.astype("<f4").tofile(d / "segs.bin")
    meta = {
        "n_pairs": len(pairs),
        "n_mels": int(stacked.shape[2]) if pairs else 0,
        "frames_per_seg": int(stacked.shape[3]) if pairs else 0,
        "utterance_id": pairs[0].utterance_id if pairs else "",
        "seg_indices": [p.seg_index for p in pairs],
        "start_s": [p.start_s for p in pairs],
    }
    (d / "segs.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    return d


def read_segments(d: Path) -> list[MelSegmentPair]:
    meta = json.loads((d / "segs.json").read_text())
    if meta["n_pairs"] == 0:
        return []
    raw = np.fromfile(d / "segs.bin", dtype="<f4").astype(np.float64)
    stacked = raw.reshape(meta["n_pairs"], 2, meta["n_mels"], meta["frames_per_seg"])
    return [
        MelSegmentPair(stacked[i, 0], stacked[i, 1], meta["utterance_id"],
                       meta["seg_indices"][i], meta["start_s"][i])
        for i in range(meta["n_pairs"])
    ]
