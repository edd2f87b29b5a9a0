from __future__ import annotations

from typing import List, Sequence

from dataclasses import replace
import logging
import math

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from emotune.errors import DegenerateCorpus, NonFiniteLoss
from emotune.labels import EmotionQuadrant
from emotune.score import PAD

from .config import ModelConfig, TrainConfig
from .training import LossRecord, lr_schedule
from .transformer import EmotionTransformer

logger = logging.getLogger('emotune.model')

__all__ = ('SequenceClassifier', 'train_classifier')

class SequenceClassifier(nn.Module):
    """The unconditioned transformer backbone, mean-pooled over non-PAD positions, with a linear head over the quadrants."""

    def __init__(self, config: ModelConfig) -> None:
        super().__init__()

        self.config = replace(config, attr_dim=0)
        self.backbone = EmotionTransformer(self.config)
        self.head = nn.Linear(self.config.d_model, len(EmotionQuadrant))

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        hidden = self.backbone.hidden(tokens)
        mask = (tokens != PAD).unsqueeze(-1).to(hidden.dtype)

        pooled = (hidden * mask).sum(dim=1) / mask.sum(dim=1).clamp(min=1.0)
        return self.head(pooled)

    @torch.no_grad()
    def predict(self, sequences: Sequence[Sequence[int]]) -> np.ndarray:
        self.eval()
        return self(_pad(sequences, self.config.max_len)).argmax(dim=-1).numpy()

def _pad(sequences: Sequence[Sequence[int]], max_len: int) -> torch.Tensor:
    cropped = [list(sequence)[:max_len] for sequence in sequences]
    tokens = torch.full((len(cropped), max(len(sequence) for sequence in cropped)), PAD, dtype=torch.long)

    for row, sequence in enumerate(cropped):
        tokens[row, :len(sequence)] = torch.tensor(sequence, dtype=torch.long)

    return tokens

def train_classifier(
    sequences: Sequence[Sequence[int]],
    labels: Sequence[int],
    model_config: ModelConfig,
    config: TrainConfig
) -> SequenceClassifier:
    """
    Trains a :class:`SequenceClassifier` with cross entropy on labeled token sequences.

    Parameters
    ----------
    sequences: Sequence[Sequence[:class:`int`]]
        Token sequences of held-out labeled pieces.
    labels: Sequence[:class:`int`]
        Quadrant class indices.
    model_config: :class:`ModelConfig`
        The backbone shape; ``attr_dim`` is ignored.
    config: :class:`TrainConfig`
        Optimizer settings.
    """
    if len(set(int(label) for label in labels)) < 2:
        raise DegenerateCorpus('the classifier needs at least two classes')

    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)

    model = SequenceClassifier(model_config)
    optimizer = torch.optim.Adam(model.parameters(), lr=0.0, betas=config.betas, eps=config.eps)

    targets = torch.tensor([int(label) for label in labels], dtype=torch.long)
    size = min(config.batch_size, len(sequences))

    log: List[LossRecord] = []
    model.train()

    for step in range(1, config.max_steps + 1):
        lr = lr_schedule(step, config)
        for group in optimizer.param_groups:
            group['lr'] = lr

        batch = rng.choice(len(sequences), size=size, replace=False)
        value = F.cross_entropy(model(_pad([sequences[index] for index in batch], model.config.max_len)), targets[batch])

        if not math.isfinite(value.item()):
            raise NonFiniteLoss(step, value.item())

        optimizer.zero_grad()
        value.backward()

        if config.clip_norm is not None:
            nn.utils.clip_grad_norm_(model.parameters(), config.clip_norm)

        optimizer.step()
        log.append(LossRecord(step, value.item(), lr))

    if log:
        logger.info('classifier trained for %d steps, final loss %.4f', len(log), log[-1].loss)

    model.eval()
    return model
