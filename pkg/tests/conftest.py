import numpy as np
import pytest
import torch

from mmvoice.coherence_net import (CoherenceNet, ModelConfig, TrainConfig,
                                   pairs_to_tensors, train_model)
from mmvoice.pipeline import PipelineConfig, extraction_of, pairs_from_parts
from mmvoice.synth import DatasetSpec, make_dataset

torch.set_num_threads(1)


@pytest.fixture(scope="session")
def small_corpus():
    spec = DatasetSpec(n_utterances=12, n_speakers=4)
    return make_dataset(spec, seed=101)


@pytest.fixture(scope="session")
def pcfg():
    return PipelineConfig()


@pytest.fixture(scope="session")
def small_extractions(small_corpus, pcfg):
    return {u.utt_id: extraction_of(u, pcfg) for u in small_corpus}


@pytest.fixture(scope="session")
def small_pairs(small_corpus, small_extractions, pcfg):
    per_utt = {}
    for u in small_corpus:
        up = pairs_from_parts(u.audio, small_extractions[u.utt_id], pcfg, u.utt_id)
        per_utt[u.utt_id] = up.pairs
    return per_utt


@pytest.fixture(scope="session")
def mini_model(small_pairs):
    """Barely trained model: enough to satisfy trained-params contracts in
    structural tests; quality is asserted only in the acceptance suite."""
    pairs = [p for ps in small_pairs.values() for p in ps]
    a, m = pairs_to_tensors(pairs)
    model = CoherenceNet(ModelConfig(), seed=3)
    train_model(model, a, m, TrainConfig(steps=6, batch_size=16, seed=3))
    return model
