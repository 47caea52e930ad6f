"""Session fixtures shared by the acceptance suite: the desk corpus
and a model trained through the full three-stage schedule."""

import time

import pytest

from parastream import data, training
from parastream.channel import ChannelConfig
from parastream.pipeline import ModelConfig, PipelineConfig, SemanticModel

DESK_SCHEDULE = ((1, 500, 1e-3), (2, 150, 1e-3), (3, 400, 3e-4))
DESK_LAMBDA1 = 0.02


@pytest.fixture(scope="session")
def desk_corpus():
    return data.make_corpus(count=32, size=16, seed=1000)


@pytest.fixture(scope="session")
def trained_desk_model(desk_corpus):
    """Run all three stages at desk scale once per session.

    Returns (model, {stage: loss history}, wall seconds). Training is
    fully seeded, so every session sees the same model.
    """
    model = SemanticModel(ModelConfig())
    pcfg = PipelineConfig(
        channel=ChannelConfig(kind="awgn", snr_db=10.0), lambda1=DESK_LAMBDA1
    )
    histories = {}
    start = time.perf_counter()
    for stage, steps, lr in DESK_SCHEDULE:
        cfg = training.TrainConfig(
            stage=stage, steps=steps, lr=lr, batch_size=4, seed=0
        )
        model, histories[stage] = training.train(cfg, desk_corpus, model, pcfg)
    wall = time.perf_counter() - start
    return model, histories, wall
