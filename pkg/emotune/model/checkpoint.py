from __future__ import annotations

from typing import List

from dataclasses import asdict, dataclass
import io
import pathlib

import numpy as np
import torch

from emotune.errors import ShapeMismatch
from emotune.utils import read_json, write_atomic, write_json

from .config import ModelConfig
from .transformer import EmotionTransformer

__all__ = ('Checkpoint', 'save_checkpoint', 'load_checkpoint')

WEIGHTS = 'model.pt'
MANIFEST = 'manifest.json'

@dataclass
class Checkpoint:
    model: EmotionTransformer
    catalog_version: str
    indices: List[int]
    medians: np.ndarray
    step: int = 0

    @property
    def config(self) -> ModelConfig:
        return self.model.config

def save_checkpoint(directory: pathlib.Path, checkpoint: Checkpoint) -> None:
    """
    Writes ``model.pt`` (the state dict) and ``manifest.json`` into ``directory``.

    Parameters
    ----------
    directory: :class:`pathlib.Path`
        Created if missing.
    checkpoint: :class:`Checkpoint`
        The model and the metadata needed to condition it.
    """
    directory = pathlib.Path(directory)

    buffer = io.BytesIO()
    torch.save(checkpoint.model.state_dict(), buffer)
    write_atomic(directory / WEIGHTS, buffer.getvalue())

    write_json(directory / MANIFEST, {
        'config': asdict(checkpoint.config),
        'catalog_version': checkpoint.catalog_version,
        'indices': checkpoint.indices,
        'medians': checkpoint.medians.tolist(),
        'step': checkpoint.step,
    })

def load_checkpoint(directory: pathlib.Path) -> Checkpoint:
    directory = pathlib.Path(directory)
    manifest = read_json(directory / MANIFEST)

    options = dict(manifest['config'])
    config = ModelConfig(**options)

    if config.attr_dim != len(manifest['indices']):
        raise ShapeMismatch(f'checkpoint attr_dim={config.attr_dim} but {len(manifest["indices"])} selected indices')

    model = EmotionTransformer(config)
    model.load_state_dict(torch.load(directory / WEIGHTS, map_location='cpu'))
    model.eval()

    return Checkpoint(
        model=model,
        catalog_version=manifest['catalog_version'],
        indices=[int(index) for index in manifest['indices']],
        medians=np.array(manifest['medians'], dtype=np.float64),
        step=int(manifest['step']),
    )
