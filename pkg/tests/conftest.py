"""Shared fixtures: a small corpus and a head trained on it, built once per session."""

import pytest

from logicdiff.backends import TrapConfig
from logicdiff.corpus import CorpusConfig, default_vocab, generate_corpus
from logicdiff.rolehead import TrainConfig, collect_hidden_dataset, train_role_head


@pytest.fixture(scope="session")
def vocab():
    return default_vocab()


@pytest.fixture(scope="session")
def small_problems():
    return generate_corpus(CorpusConfig(n_problems=40, rng_seed=11))


@pytest.fixture(scope="session")
def trained_head(small_problems):
    x, y = collect_hidden_dataset(small_problems, TrapConfig(), seed=5, min_examples=12000)
    params, metrics = train_role_head((x, y), TrainConfig(rng_seed=3))
    assert metrics.val_accuracy > 0.95, "session head failed to train; downstream tests unreliable"
    return params
