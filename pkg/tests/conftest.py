"""Shared fixtures: bundled data, small models, a memorized inference module."""

from __future__ import annotations

import logging

import pytest

from coep.corpus.synth import make_data
from coep.im import finetune_im
from coep.numerics import Rng
from coep.pipeline import build_model, load_corpora
from coep.runconfig import RunConfig
from coep.training import TrainConfig

logging.getLogger("coep").setLevel(logging.ERROR)


@pytest.fixture(scope="session")
def data_dir(tmp_path_factory):
    path = tmp_path_factory.mktemp("data")
    make_data(path, seed=7)
    return path


@pytest.fixture(scope="session")
def corpora(data_dir):
    return load_corpora(data_dir)


@pytest.fixture(scope="session")
def vocab(corpora):
    return corpora["vocab"]


@pytest.fixture(scope="session")
def run_config():
    return RunConfig(seed=7, dropout=0.0)


def fresh_model(vocab, seed_key: int = 1, dropout: float = 0.0, **overrides):
    cfg = RunConfig(seed=7, dropout=dropout, **overrides)
    return build_model(cfg, vocab, seed_key)


@pytest.fixture()
def im_model(vocab):
    return fresh_model(vocab, seed_key=1)


@pytest.fixture()
def gm_model(vocab):
    return fresh_model(vocab, seed_key=2)


def diverse_triples(corpora, n: int):
    """A spread of triples with varied heads and relations."""
    triples = corpora["triples"]
    stride = max(1, len(triples) // n)
    return [triples[i * stride] for i in range(n)]


@pytest.fixture(scope="session")
def memorized_im(corpora):
    """An inference module overfit on a tiny diverse corpus (shared, read-only)."""
    vocab = corpora["vocab"]
    model = fresh_model(vocab, seed_key=1)
    triples = diverse_triples(corpora, 8)
    finetune_im(
        model, triples, vocab,
        TrainConfig(epochs=10_000, max_steps=260, batch_size=16, lr=1.5e-3),
        Rng(5),
    )
    model.eval()
    return model, triples
