"""Radar-audio cross-modal speech integrity toolkit.

Simulates physically coupled throat vibration and speech, extracts the
vibration from synthetic FMCW radar captures, aligns both modalities into
paired log-Mel segments, trains a toy contrastive coherence network, and
benchmarks forgery detection.
"""

__version__ = "0.1.0"
