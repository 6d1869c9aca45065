"""Shared fixtures. Importing mlpmoe before numpy pins BLAS threads."""

import numpy as np
import pytest

import mlpmoe as m

TOY_CONFIG = m.ToyModelConfig()  # 2 layers, d_model 64, d_inter 256, 4 heads, vocab 256


@pytest.fixture(scope="session")
def toy_checkpoint():
    return m.build_toy_model(TOY_CONFIG)


@pytest.fixture(scope="session")
def converted_16(toy_checkpoint):
    return m.convert_checkpoint(toy_checkpoint, 16)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def make_mlp(rng):
    """Factory for random dense MLPs at toy scale."""

    def build(d_model=64, d_inter=256, activation="silu", std=0.02):
        return m.DenseMlp(
            w_gate=rng.normal(0.0, std, size=(d_inter, d_model)).astype(np.float32),
            w_up=rng.normal(0.0, std, size=(d_inter, d_model)).astype(np.float32),
            w_down=rng.normal(0.0, std, size=(d_model, d_inter)).astype(np.float32),
            activation=activation,
        )

    return build
