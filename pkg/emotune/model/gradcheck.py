from __future__ import annotations

from typing import List, NamedTuple

import logging

import numpy as np
import torch

from .training import loss
from .transformer import EmotionTransformer

logger = logging.getLogger('emotune.model')

__all__ = ('GradientCheck', 'gradient_check')

class GradientCheck(NamedTuple):
    name: str
    checked: int
    max_error: float
    ok: bool

def gradient_check(
    model: EmotionTransformer,
    tokens: torch.Tensor,
    bits: torch.Tensor,
    *,
    coordinates: int = 8,
    eps: float = 1e-6,
    rtol: float = 1e-3,
    atol: float = 1e-7,
    seed: int = 0
) -> List[GradientCheck]:
    """
    Compares the autograd gradient of the training loss with central finite
    differences, for a random sample of ``coordinates`` entries of every parameter
    tensor. The model is moved to float64 and put in eval mode.

    An entry passes when ``|analytic - numeric| <= rtol * max(|analytic|, |numeric|) + atol``.
    """
    model.double().eval()
    bits = bits.double()
    rng = np.random.default_rng(seed)

    def objective() -> torch.Tensor:
        return loss(model(tokens, bits), tokens).value

    model.zero_grad()
    objective().backward()

    results: List[GradientCheck] = []
    for name, parameter in model.named_parameters():
        analytic = parameter.grad.detach().clone().reshape(-1)
        flat = parameter.data.reshape(-1)

        picked = rng.permutation(flat.numel())[:coordinates]
        worst = 0.0
        ok = True

        with torch.no_grad():
            for index in picked.tolist():
                original = flat[index].item()

                flat[index] = original + eps
                upper = objective().item()
                flat[index] = original - eps
                lower = objective().item()
                flat[index] = original

                numeric = (upper - lower) / (2 * eps)
                expected = analytic[index].item()

                error = abs(expected - numeric)
                worst = max(worst, error)
                ok = ok and error <= rtol * max(abs(expected), abs(numeric)) + atol

        results.append(GradientCheck(name, len(picked), worst, ok))
        if not ok:
            logger.warning('gradient mismatch in %s (max abs error %.3g)', name, worst)

    return results
