"""Shared fixtures: tiny corpora and cheap trained artifacts, built once per session."""

from __future__ import annotations

import numpy as np
import pytest
import torch

from glyphdiff.config import TrainConfig
from glyphdiff.glyphdata import GlyphCorpus, build_dataset
from glyphdiff.metrics import train_classifier
from glyphdiff.pipeline import DiffusionPipeline, train_base


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory) -> GlyphCorpus:
    """8 chars x 4 styles at 32 px; smallest corpus with every split non-empty."""
    root = tmp_path_factory.mktemp("corpus")
    build_dataset(root, num_chars=8, num_styles=4, size=32, seed=0)
    return GlyphCorpus.load(root)


@pytest.fixture(scope="session")
def tiny_config() -> TrainConfig:
    return TrainConfig(
        image_size=32,
        timesteps=50,
        codec_mode="identity",
        base_width=8,
        style_dim=32,
        epochs=2,
        codec_epochs=1,
        n_refs=2,
        batch_size=8,
        classifier_epochs=30,
        bnr_epochs=1,
        bnr_base_width=8,
        finetune_epochs=2,
    )


@pytest.fixture(scope="session")
def tiny_pipeline(tiny_corpus, tiny_config) -> DiffusionPipeline:
    """A briefly trained pipeline; weights are plausible, not converged."""
    pipeline, _history = train_base(tiny_corpus, tiny_config)
    return pipeline


@pytest.fixture(scope="session")
def tiny_classifier(tiny_corpus):
    return train_classifier(tiny_corpus, epochs=30, seed=0)


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture()
def torch_gen() -> torch.Generator:
    return torch.Generator().manual_seed(12345)
