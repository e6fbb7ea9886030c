import dataclasses

import numpy as np
import pytest

from mixkd import synthetic
from mixkd.model import ModelConfig, init_random


@pytest.fixture(scope="session")
def tiny_config():
    return ModelConfig(num_layers=2, hidden_dim=8, num_heads=2, ffn_dim=16,
                       vocab_size=20, max_seq_len=6, num_classes=2)


@pytest.fixture(scope="session")
def tiny_params(tiny_config):
    return init_random(tiny_config, seed=0)


@pytest.fixture(scope="session")
def small_task():
    # 120 train / 60 dev examples keeps unit-test training loops fast
    return synthetic.make_task(n_train=120, n_dev=60, seed=3, signal_rate=0.3)


@pytest.fixture(scope="session")
def small_model_config(small_task):
    return ModelConfig(num_layers=2, hidden_dim=16, num_heads=2, ffn_dim=32,
                       vocab_size=small_task.vocab.size,
                       max_seq_len=small_task.max_len, num_classes=2)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
