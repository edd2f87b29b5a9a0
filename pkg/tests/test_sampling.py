import asyncio

import numpy as np
import pytest

from emotune.errors import ConfigError
from emotune.model import SamplerConfig, build_model, generate, generate_many, model_config, nucleus, sample_top_p
from emotune.score import BOS, EOS, PAD

PROBABILITIES = np.array([0.5, 0.3, 0.15, 0.05])

def test_nucleus_keeps_the_smallest_sufficient_set():
    np.testing.assert_allclose(nucleus(PROBABILITIES, 0.9), [0.5 / 0.95, 0.3 / 0.95, 0.15 / 0.95, 0.0])
    np.testing.assert_allclose(nucleus(PROBABILITIES, 0.5), [1.0, 0.0, 0.0, 0.0])
    np.testing.assert_allclose(nucleus(PROBABILITIES, 1.0), PROBABILITIES)

def test_nucleus_boundary_mass_is_enough():
    np.testing.assert_allclose(nucleus(np.array([0.1, 0.5, 0.4]), 0.9), [0.0, 0.5 / 0.9, 0.4 / 0.9])

def test_sampling_never_leaves_the_nucleus():
    rng = np.random.default_rng(0)
    config = SamplerConfig(p=0.9)

    draws = np.array([sample_top_p(PROBABILITIES, config, rng) for _ in range(10_000)])
    frequencies = np.bincount(draws, minlength=4) / draws.size

    assert frequencies[3] == 0
    np.testing.assert_allclose(frequencies[:3], PROBABILITIES[:3] / 0.95, atol=0.02)

def test_low_temperature_is_greedy():
    rng = np.random.default_rng(1)
    config = SamplerConfig(p=1.0, temperature=0.02)

    draws = [sample_top_p(PROBABILITIES, config, rng) for _ in range(200)]
    assert set(draws) == {0}

def test_sampler_config_is_validated():
    with pytest.raises(ConfigError):
        SamplerConfig(p=0.0)

    with pytest.raises(ConfigError):
        SamplerConfig(temperature=0.0)

    with pytest.raises(ConfigError):
        SamplerConfig(max_tokens=0)

@pytest.fixture
def model():
    return build_model(model_config('desk-tiny', 3), seed=2).eval()

def test_generate(model):
    medians = np.zeros(3)
    tokens = generate(model, np.array([1.0, -1.0, 1.0]), medians, SamplerConfig(max_tokens=12, seed=4)).tokens

    assert tokens[0] == BOS
    assert len(tokens) <= 12
    assert PAD not in tokens
    assert BOS not in tokens[1:]
    assert EOS not in tokens[:-1]

def test_generate_is_seeded(model):
    vector, medians = np.array([1.0, 0.0, 2.0]), np.ones(3)

    first = generate(model, vector, medians, SamplerConfig(seed=9))
    second = generate(model, vector, medians, SamplerConfig(seed=9))

    assert first == second
    assert len(first) <= model.config.max_len

def test_generate_many_does_not_depend_on_workers(model):
    vectors = [np.array([value, 0.0, -value]) for value in (-1.0, 0.5, 2.0, 3.0)]
    config = SamplerConfig(seed=11)

    serial = asyncio.run(generate_many(model, vectors, np.zeros(3), config, workers=1))
    threaded = asyncio.run(generate_many(model, vectors, np.zeros(3), config, workers=3))

    assert serial == threaded
    assert len(serial) == 4
