"""Shared fixtures: a small dataset on disk and a trained checkpoint.

Both are session-scoped because several test modules exercise the same
pipeline surface and training even a tiny model is the slowest step.
"""

from __future__ import annotations

import pathlib

import pytest

from posereid.config import (
    DatasetConfig,
    ModelConfig,
    OcclusionConfig,
    RunConfig,
    TrainConfig,
)
from posereid.data import build_dataset, save_manifest
from posereid.pipeline import train


def small_run_config(seed: int = 11) -> RunConfig:
    cfg = RunConfig()
    cfg.seed = seed
    cfg.data = DatasetConfig(
        num_identities=4,
        samples_per_identity=8,
        num_cameras=2,
        occlusion=OcclusionConfig(probability=0.6),
        seed=seed,
    )
    cfg.model = ModelConfig(
        embed_dim=32,
        num_heads=4,
        encoder_layers=1,
        decoder_layers=1,
    )
    cfg.train = TrainConfig(epochs=2, batch_identities=2, batch_instances=2)
    cfg.train.augment.enabled = False
    cfg.validate()
    return cfg


@pytest.fixture(scope="session")
def tiny_config() -> RunConfig:
    return small_run_config()


@pytest.fixture(scope="session")
def tiny_manifest(tiny_config):
    return build_dataset(tiny_config.data)


@pytest.fixture(scope="session")
def tiny_data_dir(tiny_manifest, tmp_path_factory) -> pathlib.Path:
    out = tmp_path_factory.mktemp("dataset")
    save_manifest(tiny_manifest, out)
    return out


@pytest.fixture(scope="session")
def tiny_run(tiny_config, tiny_manifest, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    result = train(tiny_config, tiny_manifest, out)
    return result
