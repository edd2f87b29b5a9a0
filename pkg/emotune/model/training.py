from __future__ import annotations

from typing import List, NamedTuple, Sequence, Tuple

from dataclasses import dataclass
import logging
import math
import pathlib

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from emotune.errors import DegenerateCorpus, NonFiniteLoss
from emotune.score import PAD

from .config import TrainConfig

logger = logging.getLogger('emotune.model')

__all__ = (
    'LossResult',
    'LossRecord',
    'TrainingSample',
    'TrainResult',
    'loss',
    'lr_schedule',
    'collate',
    'train',
    'save_loss_log',
)

class LossResult(NamedTuple):
    value: torch.Tensor
    n_targets: int
    empty: bool

class LossRecord(NamedTuple):
    step: int
    loss: float
    lr: float

@dataclass
class TrainingSample:
    """A token sequence with the binarized attributes of its own score."""

    tokens: List[int]
    bits: np.ndarray

@dataclass
class TrainResult:
    model: nn.Module
    log: List[LossRecord]

    @property
    def final_loss(self) -> float:
        return self.log[-1].loss if self.log else math.nan

def loss(logits: torch.Tensor, tokens: torch.Tensor) -> LossResult:
    """
    Mean cross entropy of every position's logits against the next token. Positions
    whose target is PAD are left out; if nothing is left the loss is 0 and ``empty`` is set.

    Parameters
    ----------
    logits: :class:`torch.Tensor`
        ``(batch, length, vocab)`` or ``(length, vocab)``.
    tokens: :class:`torch.Tensor`
        The input tokens, same leading shape as ``logits``.
    """
    if logits.dim() == 2:
        logits, tokens = logits[None], tokens[None]

    predicted = logits[:, :-1].reshape(-1, logits.size(-1))
    targets = tokens[:, 1:].reshape(-1)

    n_targets = int((targets != PAD).sum())
    if n_targets == 0:
        return LossResult(logits.sum() * 0.0, 0, True)

    total = F.cross_entropy(predicted, targets, ignore_index=PAD, reduction='sum')
    return LossResult(total / n_targets, n_targets, False)

def lr_schedule(step: int, config: TrainConfig) -> float:
    """``base_lr * min(step / warmup, sqrt(warmup / step))``."""
    step = max(step, 1)
    return config.base_lr * min(step / config.warmup_steps, math.sqrt(config.warmup_steps / step))

def collate(samples: Sequence[TrainingSample], max_len: int) -> Tuple[torch.Tensor, torch.Tensor]:
    """Crops every sequence to ``max_len`` and right-pads the batch with PAD."""
    cropped = [sample.tokens[:max_len] for sample in samples]
    length = max(len(tokens) for tokens in cropped)

    tokens = torch.full((len(samples), length), PAD, dtype=torch.long)
    for row, sequence in enumerate(cropped):
        tokens[row, :len(sequence)] = torch.tensor(sequence, dtype=torch.long)

    bits = torch.tensor(np.stack([sample.bits for sample in samples]), dtype=torch.float32)
    return tokens, bits

def _batches(n: int, config: TrainConfig, rng: np.random.Generator):
    size = min(config.batch_size, n)
    while True:
        order = rng.permutation(n)
        for start in range(0, n - size + 1, size):
            yield order[start:start + size]

def train(model: nn.Module, samples: Sequence[TrainingSample], config: TrainConfig) -> TrainResult:
    """
    Trains ``model`` on next-token prediction with Adam and the warmup/inverse square
    root schedule.

    Parameters
    ----------
    model: :class:`torch.nn.Module`
        An :class:`EmotionTransformer`. Its ``config.max_len`` crops the samples.
    samples: Sequence[:class:`TrainingSample`]
        The training data.
    config: :class:`TrainConfig`
        The optimizer settings.

    Raises
    ------
    NonFiniteLoss
        The loss became NaN or infinite.
    """
    if not samples:
        raise DegenerateCorpus('no training samples')

    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)

    dtype = next(model.parameters()).dtype
    optimizer = torch.optim.Adam(model.parameters(), lr=0.0, betas=config.betas, eps=config.eps)
    batches = _batches(len(samples), config, rng)

    log: List[LossRecord] = []
    model.train()

    for step in range(1, config.max_steps + 1):
        lr = lr_schedule(step, config)
        for group in optimizer.param_groups:
            group['lr'] = lr

        tokens, bits = collate([samples[index] for index in next(batches)], model.config.max_len)
        result = loss(model(tokens, bits.to(dtype)), tokens)

        value = float(result.value.detach())
        if not math.isfinite(value):
            raise NonFiniteLoss(step, value)

        optimizer.zero_grad()
        result.value.backward()

        if config.clip_norm is not None:
            nn.utils.clip_grad_norm_(model.parameters(), config.clip_norm)

        optimizer.step()
        log.append(LossRecord(step, value, lr))

        if step % config.log_every == 0 or step == config.max_steps:
            logger.info('step %d/%d: loss %.4f, lr %.3g', step, config.max_steps, value, lr)

    model.eval()
    return TrainResult(model, log)

def save_loss_log(path: pathlib.Path, log: Sequence[LossRecord]) -> None:
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    with path.open('w') as file:
        file.write('step,loss,lr\n')
        for record in log:
            file.write(f'{record.step},{record.loss!r},{record.lr!r}\n')
