"""Tampered-dataset construction, verdict aggregation, and ROC/EER metrics.

Attack kinds: word/sentence deletion and replacement (same- and cross-
speaker, duration-matched donors), loudspeaker replay, and digital
injection (audio with a noise-only radar channel).
"""

from __future__ import annotations

import copy
import json
import math
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import audio_proc, coherence_net, pipeline, synth
from .align_spec import MelSegmentPair
from .audio_proc import AudioClip
from .coherence_net import CoherenceNet
from .errors import (InvalidConfigError, InvalidInputError,
                     TamperConstructionError)
from .pipeline import PipelineConfig
from .synth import ReflectorSet, Utterance, Word

WORD_KINDS = ("word_delete", "word_replace_same_speaker",
              "word_replace_cross_speaker")
SENTENCE_KINDS = ("sentence_delete", "sentence_replace_same",
                  "sentence_replace_cross")
ALL_KINDS = WORD_KINDS + SENTENCE_KINDS + ("replay", "digital_injection")

SENTENCE_WORDS = 3          # contiguous word-group size treated as a sentence
DURATION_TOL = 0.20         # donor duration tolerance, fraction of target
CROSSFADE_S = 0.005


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------

@dataclass
class TamperSpec:
    kind: str
    target: int = 0
    donor: tuple[str, int] | None = None   # (utterance id, word/sentence index)

    def validate(self):
        if self.kind not in ALL_KINDS + ("none",):
            raise InvalidConfigError(f"unknown tamper kind {self.kind!r}")
        if "replace" in self.kind and self.donor is None:
            raise InvalidConfigError("replacement tampering requires a donor")


@dataclass
class ScoreSet:
    genuine: np.ndarray
    forged: np.ndarray


@dataclass
class DetectionReport:
    roc: list[tuple[float, float, float]]    # (threshold, tar, far)
    eer: float
    auc: float
    eer_threshold: float
    degenerate: bool = False
    per_attack: dict = field(default_factory=dict)
    per_window_scores: list = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "roc": [[t, tar, far] for t, tar, far in self.roc],
            "eer": self.eer,
            "auc": self.auc,
            "eer_threshold": self.eer_threshold,
            "degenerate": self.degenerate,
            "per_attack": self.per_attack,
            "per_window_scores": self.per_window_scores,
        }


# ---------------------------------------------------------------------------
# Audio editing
# ---------------------------------------------------------------------------

def _sentences(words: list[Word]) -> list[list[int]]:
    """Word indices grouped into fixed-size contiguous 'sentences'; the
    remainder joins the final group."""
    groups = [list(range(i, min(i + SENTENCE_WORDS, len(words))))
              for i in range(0, len(words), SENTENCE_WORDS)]
    if len(groups) > 1 and len(groups[-1]) < 2:
        groups[-2].extend(groups.pop())
    return groups


def _splice(samples: np.ndarray, i0: int, i1: int, insert: np.ndarray,
            rate: float) -> np.ndarray:
    """Replace samples[i0:i1] with `insert`, crossfading at both seams."""
    out = np.concatenate([samples[:i0], insert, samples[i1:]])
    n_f = int(CROSSFADE_S * rate)
    for seam in (i0, i0 + insert.size):
        a, b = max(0, seam - n_f), min(out.size, seam + n_f)
        if b - a >= 4:
            seg = out[a:b]
            ramp = np.linspace(0.8, 1.0, seg.size)
            out[a:b] = seg * np.minimum(ramp, ramp[::-1]) / 0.9
    return out


def _delete_span(utt: Utterance, start_s: float, end_s: float,
                 word_lo: int, word_hi: int) -> Utterance:
    rate = utt.audio.rate_hz
    i0, i1 = int(round(start_s * rate)), int(round(end_s * rate))
    samples = _splice(utt.audio.samples, i0, i1, np.zeros(0), rate)
    shift = end_s - start_s
    words = []
    for i, w in enumerate(utt.words):
        if word_lo <= i < word_hi:
            continue
        if i >= word_hi:
            words.append(Word(w.label, w.start_s - shift, w.end_s - shift))
        else:
            words.append(Word(w.label, w.start_s, w.end_s))
    out = copy.copy(utt)
    out.audio = AudioClip(samples, rate, processed=False)
    out.words = words
    return out


def _replace_span(utt: Utterance, start_s: float, end_s: float,
                  word_lo: int, word_hi: int, donor_audio: np.ndarray,
                  donor_words: list[Word], donor_start_s: float) -> Utterance:
    rate = utt.audio.rate_hz
    i0, i1 = int(round(start_s * rate)), int(round(end_s * rate))
    samples = _splice(utt.audio.samples, i0, i1, donor_audio, rate)
    inserted_dur = donor_audio.size / rate
    shift = inserted_dur - (end_s - start_s)
    words = []
    for i, w in enumerate(utt.words):
        if i < word_lo:
            words.append(Word(w.label, w.start_s, w.end_s))
        elif i >= word_hi:
            words.append(Word(w.label, w.start_s + shift, w.end_s + shift))
    insert_words = [
        Word(w.label, start_s + (w.start_s - donor_start_s),
             start_s + (w.end_s - donor_start_s))
        for w in donor_words
    ]
    words[word_lo:word_lo] = insert_words
    out = copy.copy(utt)
    out.audio = AudioClip(samples, rate, processed=False)
    out.words = sorted(words, key=lambda w: w.start_s)
    return out


# ---------------------------------------------------------------------------
# Tamper application
# ---------------------------------------------------------------------------

def _duration_matched(target_dur: float, cand_dur: float) -> bool:
    return abs(cand_dur - target_dur) <= DURATION_TOL * target_dur


def find_word_donor(corpus: list[Utterance], target: Utterance, word_idx: int,
                    same_speaker: bool, rng: np.random.Generator) -> tuple[str, int]:
    """Duration-matched donor word from another utterance."""
    dur = target.words[word_idx].end_s - target.words[word_idx].start_s
    cands = []
    for u in corpus:
        if u.utt_id == target.utt_id:
            continue
        if same_speaker != (u.speaker_id == target.speaker_id):
            continue
        for i, w in enumerate(u.words):
            if _duration_matched(dur, w.end_s - w.start_s):
                cands.append((u.utt_id, i))
    if not cands:
        raise TamperConstructionError(
            f"no duration-matched donor word for {target.utt_id}[{word_idx}]")
    return cands[int(rng.integers(len(cands)))]


def find_sentence_donor(corpus: list[Utterance], target: Utterance,
                        sent_idx: int, same_speaker: bool,
                        rng: np.random.Generator) -> tuple[str, int]:
    groups = _sentences(target.words)
    g = groups[sent_idx]
    dur = target.words[g[-1]].end_s - target.words[g[0]].start_s
    cands = []
    for u in corpus:
        if u.utt_id == target.utt_id:
            continue
        if same_speaker != (u.speaker_id == target.speaker_id):
            continue
        for i, grp in enumerate(_sentences(u.words)):
            cand_dur = u.words[grp[-1]].end_s - u.words[grp[0]].start_s
            if _duration_matched(dur, cand_dur):
                cands.append((u.utt_id, i))
    if not cands:
        raise TamperConstructionError(
            f"no duration-matched donor sentence for {target.utt_id}[{sent_idx}]")
    return cands[int(rng.integers(len(cands)))]


def apply_tamper(utt: Utterance, spec: TamperSpec, corpus: list[Utterance],
                 replay_seed: int | None = None) -> Utterance:
    """Build a tampered copy; the input utterance is never mutated.

    Audio-side edits use ground-truth word boundaries and leave the radar
    capture untouched; replay swaps in a loudspeaker-driven capture; digital
    injection swaps in a noise-only capture.
    """
    spec.validate()
    by_id = {u.utt_id: u for u in corpus}
    if spec.kind == "none":
        return copy.copy(utt)

    if spec.kind == "word_delete":
        w = utt.words[spec.target]
        return _delete_span(utt, w.start_s, w.end_s, spec.target, spec.target + 1)

    if spec.kind in ("word_replace_same_speaker", "word_replace_cross_speaker"):
        donor_utt = by_id[spec.donor[0]]
        dw = donor_utt.words[spec.donor[1]]
        target_w = utt.words[spec.target]
        if not _duration_matched(target_w.end_s - target_w.start_s,
                                 dw.end_s - dw.start_s):
            raise TamperConstructionError("donor violates the duration-match bound")
        rate = utt.audio.rate_hz
        seg = donor_utt.audio.samples[int(dw.start_s * rate):int(dw.end_s * rate)]
        return _replace_span(utt, target_w.start_s, target_w.end_s,
                             spec.target, spec.target + 1, seg, [dw], dw.start_s)

    if spec.kind == "sentence_delete":
        g = _sentences(utt.words)[spec.target]
        return _delete_span(utt, utt.words[g[0]].start_s, utt.words[g[-1]].end_s,
                            g[0], g[-1] + 1)

    if spec.kind in ("sentence_replace_same", "sentence_replace_cross"):
        donor_utt = by_id[spec.donor[0]]
        dg = _sentences(donor_utt.words)[spec.donor[1]]
        g = _sentences(utt.words)[spec.target]
        start_s = utt.words[g[0]].start_s
        end_s = utt.words[g[-1]].end_s
        d_start = donor_utt.words[dg[0]].start_s
        d_end = donor_utt.words[dg[-1]].end_s
        if not _duration_matched(end_s - start_s, d_end - d_start):
            raise TamperConstructionError("donor violates the duration-match bound")
        rate = utt.audio.rate_hz
        seg = donor_utt.audio.samples[int(d_start * rate):int(d_end * rate)]
        dwords = [donor_utt.words[i] for i in dg]
        return _replace_span(utt, start_s, end_s, g[0], g[-1] + 1,
                             seg, dwords, d_start)

    if spec.kind == "replay":
        out = copy.copy(utt)
        processed = audio_proc.preprocess(utt.audio)
        out.if_capture = synth.simulate_replay(processed, utt.if_capture.config,
                                               seed=replay_seed)
        return out

    if spec.kind == "digital_injection":
        out = copy.copy(utt)
        scene = ReflectorSet(reflectors=[], static_gain=0.0)
        out.if_capture = synth.simulate_if(
            scene, utt.if_capture.config,
            utt.if_capture.n_frames / utt.if_capture.config.frame_rate_hz,
            seed=replay_seed)
        return out

    raise InvalidConfigError(f"unhandled tamper kind {spec.kind!r}")


# ---------------------------------------------------------------------------
# Verdicts and metrics
# ---------------------------------------------------------------------------

def verdict(pair_scores: np.ndarray, threshold: float, mode: str = "majority") -> bool:
    """True = genuine. Majority mode flags tampering when a strict majority
    of windows score below threshold (ties resolve to genuine); any mode
    flags on a single low window."""
    scores = np.asarray(pair_scores, dtype=np.float64)
    if scores.size < 1:
        raise InvalidInputError("verdict needs at least one window score")
    below = int(np.sum(scores < threshold))
    if mode == "majority":
        return not below > scores.size / 2
    if mode == "any":
        return below == 0
    raise InvalidConfigError(f"unknown verdict mode {mode!r}")


def _sweep_thresholds(pooled: np.ndarray) -> np.ndarray:
    distinct = np.unique(pooled)
    mids = (distinct[:-1] + distinct[1:]) / 2.0
    return np.concatenate([[-np.inf], mids, [np.inf]])


def roc_eer(scores: ScoreSet) -> DetectionReport:
    """Threshold sweep at midpoints between adjacent distinct scores plus
    +-inf; TAR/FAR by >= threshold; EER linearly interpolated where FAR
    crosses FRR; AUC by the trapezoidal rule over (FAR, TAR)."""
    g = np.asarray(scores.genuine, dtype=np.float64)
    f = np.asarray(scores.forged, dtype=np.float64)
    if g.size == 0 or f.size == 0:
        raise InvalidInputError("both score classes must be nonempty")

    thresholds = _sweep_thresholds(np.concatenate([g, f]))
    g_sorted = np.sort(g)
    f_sorted = np.sort(f)
    tar = 1.0 - np.searchsorted(g_sorted, thresholds, side="left") / g.size
    far = 1.0 - np.searchsorted(f_sorted, thresholds, side="left") / f.size
    frr = 1.0 - tar

    degenerate = np.unique(np.concatenate([g, f])).size == 1
    diff = far - frr            # non-increasing in threshold
    k = int(np.searchsorted(-diff, 0.0, side="right")) - 1
    k = min(max(k, 0), diff.size - 2)
    if diff[k] == 0.0:
        eer = float(far[k])
        eer_thr = float(thresholds[k])
    else:
        denom = diff[k] - diff[k + 1]
        alpha = diff[k] / denom if denom != 0 else 0.5
        eer = float(far[k] + alpha * (far[k + 1] - far[k]))
        t0, t1 = thresholds[k], thresholds[k + 1]
        if math.isinf(t0):
            eer_thr = float(t1)
        elif math.isinf(t1):
            eer_thr = float(t0)
        else:
            eer_thr = float(t0 + alpha * (t1 - t0))

    auc = float(np.trapezoid(tar[::-1], far[::-1]))
    roc = [(float(t), float(a), float(b)) for t, a, b in zip(thresholds, tar, far)]
    return DetectionReport(roc, eer, auc, eer_thr, degenerate)


# ---------------------------------------------------------------------------
# Suite
# ---------------------------------------------------------------------------

@dataclass
class SuiteConfig:
    n_per_attack: int = 50
    kinds: tuple[str, ...] = ALL_KINDS
    holdout_fraction: float = 0.2
    seed: int = 0
    word_mode: str = "any"
    sentence_mode: str = "majority"


def split_corpus(utts: list[Utterance], holdout_fraction: float,
                 seed: int) -> tuple[list[Utterance], list[Utterance]]:
    """Deterministic utterance-level train/test split."""
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(utts))
    n_test = max(1, int(round(holdout_fraction * len(utts))))
    test_ids = set(order[:n_test])
    train = [u for i, u in enumerate(utts) if i not in test_ids]
    test = [u for i, u in enumerate(utts) if i in test_ids]
    return train, test


def _mode_for(kind: str, cfg: SuiteConfig) -> str:
    return cfg.word_mode if kind in WORD_KINDS else cfg.sentence_mode


@dataclass
class _ScoredSample:
    sample_id: str
    kind: str
    scores: np.ndarray
    modality_absent: bool


def _score_sample(utt: Utterance, kind: str, model: CoherenceNet,
                  pcfg: PipelineConfig,
                  extraction=None) -> _ScoredSample:
    up = pipeline.utterance_pairs(utt, pcfg, extraction=extraction)
    if up.modality_absent or up.no_speech or not up.pairs:
        return _ScoredSample(utt.utt_id, kind, np.zeros(0), up.modality_absent)
    a, m = coherence_net.pairs_to_tensors(up.pairs)
    scores = coherence_net.score_batch(a, m, model)
    return _ScoredSample(utt.utt_id, kind, scores, False)


def run_suite(corpus: list[Utterance], model: CoherenceNet,
              cfg: SuiteConfig | None = None,
              pcfg: PipelineConfig | None = None,
              out_dir: str | Path | None = None) -> DetectionReport:
    """Score held-out genuine utterances, build N tampered samples per attack
    kind, and report ROC/EER/AUC plus per-attack TAR/FAR at the EER
    threshold. Deterministic under the suite seed."""
    cfg = cfg or SuiteConfig()
    pcfg = pcfg or PipelineConfig()
    coherence_net.require_trained(model)
    if not corpus:
        raise InvalidInputError("empty corpus")

    _, test = split_corpus(corpus, cfg.holdout_fraction, cfg.seed)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(1)[0])

    # genuine windows, with cached extractions for audio-side tampers
    extractions = {u.utt_id: pipeline.extraction_of(u, pcfg) for u in test}
    genuine_samples = [
        _score_sample(u, "none", model, pcfg, extraction=extractions[u.utt_id])
        for u in test
    ]
    genuine_windows = np.concatenate(
        [s.scores for s in genuine_samples if s.scores.size]
        or [np.zeros(0)])

    # mismatched windows: audio of one utterance against mmWave of another
    per_utt_pairs = {}
    for u in test:
        up = pipeline.utterance_pairs(u, pcfg, extraction=extractions[u.utt_id])
        if up.pairs:
            per_utt_pairs[u.utt_id] = up.pairs
    ids = sorted(per_utt_pairs)
    mism_scores = []
    for i, uid in enumerate(ids):
        other = ids[(i + 1 + int(rng.integers(len(ids) - 1))) % len(ids)] \
            if len(ids) > 1 else uid
        pa = per_utt_pairs[uid]
        pm = per_utt_pairs[other]
        n = min(len(pa), len(pm))
        if other == uid or n == 0:
            continue
        mixed = [MelSegmentPair(pa[j].audio_spec, pm[j].mmw_spec, uid, j,
                                pa[j].start_s) for j in range(n)]
        a, m = coherence_net.pairs_to_tensors(mixed)
        mism_scores.append(coherence_net.score_batch(a, m, model))
    mismatched_windows = np.concatenate(mism_scores) if mism_scores else np.zeros(0)

    report = roc_eer(ScoreSet(genuine_windows, mismatched_windows))
    thr = report.eer_threshold

    rows = [{"sample_id": s.sample_id, "kind": "none", "window": j,
             "score": float(v)}
            for s in genuine_samples for j, v in enumerate(s.scores)]

    per_attack = {}
    for kind in cfg.kinds:
        kind_rng = np.random.default_rng(
            np.random.SeedSequence((cfg.seed, zlib.crc32(kind.encode()))))
        mode = _mode_for(kind, cfg)
        samples = []
        attempts = 0
        while len(samples) < cfg.n_per_attack and attempts < cfg.n_per_attack * 4:
            attempts += 1
            target = test[int(kind_rng.integers(len(test)))]
            try:
                spec = _draw_spec(kind, target, corpus, kind_rng)
                tampered = apply_tamper(target, spec, corpus,
                                        replay_seed=int(kind_rng.integers(2**31)))
            except TamperConstructionError:
                continue
            cached = extractions[target.utt_id] \
                if kind not in ("replay", "digital_injection") else None
            s = _score_sample(tampered, kind, model, pcfg, extraction=cached)
            s = _ScoredSample(f"{target.utt_id}:{kind}:{len(samples)}", kind,
                              s.scores, s.modality_absent)
            samples.append(s)
        accepted = []
        for s in samples:
            if s.modality_absent or s.scores.size == 0:
                accepted.append(False)       # absence gate fires before scoring
            else:
                accepted.append(verdict(s.scores, thr, mode))
            rows.extend({"sample_id": s.sample_id, "kind": kind, "window": j,
                         "score": float(v)} for j, v in enumerate(s.scores))
        genuine_ok = [verdict(s.scores, thr, mode)
                      for s in genuine_samples if s.scores.size]
        per_attack[kind] = {
            "far": float(np.mean(accepted)) if accepted else math.nan,
            "tar": float(np.mean(genuine_ok)) if genuine_ok else math.nan,
            "n": len(samples),
            "mode": mode,
            "mean_score": float(np.concatenate(
                [s.scores for s in samples if s.scores.size]).mean())
            if any(s.scores.size for s in samples) else math.nan,
            "absence_flagged": float(np.mean([s.modality_absent for s in samples]))
            if samples else math.nan,
        }

    report.per_attack = per_attack
    report.per_window_scores = rows
    report.per_attack["_genuine"] = {
        "mean_score": float(genuine_windows.mean()) if genuine_windows.size else math.nan,
        "n_windows": int(genuine_windows.size),
    }

    if out_dir is not None:
        write_report(Path(out_dir), report)
    return report


def _draw_spec(kind: str, target: Utterance, corpus: list[Utterance],
               rng: np.random.Generator) -> TamperSpec:
    if kind == "word_delete":
        return TamperSpec(kind, int(rng.integers(len(target.words))))
    if kind in ("word_replace_same_speaker", "word_replace_cross_speaker"):
        idx = int(rng.integers(len(target.words)))
        donor = find_word_donor(corpus, target, idx,
                                kind.endswith("same_speaker"), rng)
        return TamperSpec(kind, idx, donor)
    if kind == "sentence_delete":
        return TamperSpec(kind, int(rng.integers(len(_sentences(target.words)))))
    if kind in ("sentence_replace_same", "sentence_replace_cross"):
        idx = int(rng.integers(len(_sentences(target.words))))
        donor = find_sentence_donor(corpus, target, idx, kind.endswith("same"), rng)
        return TamperSpec(kind, idx, donor)
    return TamperSpec(kind)


def write_report(out_dir: Path, report: DetectionReport):
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(
        json.dumps(report.to_json_dict(), indent=2, sort_keys=True))
    with open(out_dir / "roc.csv", "w") as fh:
        fh.write("threshold,tar,far\n")
        for t, tar, far in report.roc:
            fh.write(f"{t},{tar},{far}\n")
    with open(out_dir / "scores.csv", "w") as fh:
        fh.write("sample_id,kind,window,score\n")
        for row in report.per_window_scores:
            fh.write(f"{row['sample_id']},{row['kind']},{row['window']},{row['score']}\n")
