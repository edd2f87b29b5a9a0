from __future__ import annotations

from typing import List, Sequence

import logging

import numpy as np
import torch

from emotune.mapping import binarize
from emotune.score import BOS, EOS, PAD, TokenSequence
from emotune.utils import map_in_threads

from .config import SamplerConfig, with_max_tokens
from .transformer import EmotionTransformer

logger = logging.getLogger('emotune.model')

__all__ = ('nucleus', 'sample_top_p', 'generate', 'generate_many')

def nucleus(probabilities: np.ndarray, p: float) -> np.ndarray:
    """
    Keeps the smallest set of most likely tokens whose mass reaches ``p`` and
    renormalizes over it. Everything else gets probability 0.
    """
    probabilities = np.asarray(probabilities, dtype=np.float64)

    order = np.argsort(-probabilities, kind='stable')
    cumulative = np.cumsum(probabilities[order])

    size = min(int(np.searchsorted(cumulative, p - 1e-12)) + 1, probabilities.size)

    kept = np.zeros_like(probabilities)
    kept[order[:size]] = probabilities[order[:size]]

    return kept / kept.sum()

def sample_top_p(probabilities: np.ndarray, config: SamplerConfig, rng: np.random.Generator) -> int:
    """
    Draws one token. The temperature rescales the log-probabilities before the
    nucleus is taken.

    Parameters
    ----------
    probabilities: :class:`numpy.ndarray`
        A probability vector.
    config: :class:`SamplerConfig`
        ``p`` and ``temperature`` are used.
    rng: :class:`numpy.random.Generator`
        The generator owned by this generation.
    """
    probabilities = np.asarray(probabilities, dtype=np.float64)

    if config.temperature != 1.0:
        with np.errstate(divide='ignore'):
            logits = np.log(probabilities) / config.temperature

        probabilities = np.exp(logits - logits.max())
        probabilities /= probabilities.sum()

    return int(rng.choice(probabilities.size, p=nucleus(probabilities, config.p)))

@torch.no_grad()
def generate(
    model: EmotionTransformer,
    attr_values: np.ndarray,
    medians: np.ndarray,
    config: SamplerConfig = SamplerConfig()
) -> TokenSequence:
    """
    Samples a token sequence conditioned on attribute values.

    The values are binarized against ``medians``; generation starts at BOS and stops
    after EOS or ``config.max_tokens`` tokens. PAD and BOS are never sampled.

    Parameters
    ----------
    model: :class:`EmotionTransformer`
        The trained model.
    attr_values: :class:`numpy.ndarray`
        Raw attribute values over the selected indices.
    medians: :class:`numpy.ndarray`
        The training corpus medians over the same indices.
    config: :class:`SamplerConfig`
        Sampling settings; ``seed`` makes the output reproducible.
    """
    config = with_max_tokens(config, model.config)
    rng = np.random.default_rng(config.seed)

    dtype = next(model.parameters()).dtype
    bits = torch.tensor(binarize(attr_values, medians), dtype=dtype)

    model.eval()
    tokens = [BOS]

    while len(tokens) < config.max_tokens:
        logits = model(torch.tensor(tokens, dtype=torch.long), bits)[-1].double()
        logits[PAD] = float('-inf')
        logits[BOS] = float('-inf')

        token = sample_top_p(torch.softmax(logits, dim=-1).numpy(), config, rng)
        tokens.append(token)

        if token == EOS:
            break

    return TokenSequence(tokens)

async def generate_many(
    model: EmotionTransformer,
    vectors: Sequence[np.ndarray],
    medians: np.ndarray,
    config: SamplerConfig = SamplerConfig(),
    *,
    workers: int = 1
) -> List[TokenSequence]:
    """
    Generates one sequence per attribute vector. Each generation gets its own seed
    derived from ``config.seed`` so the results do not depend on ``workers``.
    """
    seeds = np.random.SeedSequence(config.seed).generate_state(len(vectors))
    jobs = [(vector, SamplerConfig(config.p, config.temperature, config.max_tokens, int(seed))) for vector, seed in zip(vectors, seeds)]

    return await map_in_threads(lambda job: generate(model, job[0], medians, job[1]), jobs, workers=workers)
