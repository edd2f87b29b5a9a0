from __future__ import annotations

from typing import Any, Dict, Optional, Tuple

from dataclasses import dataclass, replace

from emotune.errors import ConfigError
from emotune.score import VOCABULARY

__all__ = (
    'ModelConfig',
    'TrainConfig',
    'SamplerConfig',
    'MODEL_PRESETS',
    'TRAIN_PRESETS',
    'model_config',
    'train_config',
    'with_max_tokens',
)

@dataclass(frozen=True)
class ModelConfig:
    n_layers: int = 2
    n_heads: int = 4
    d_model: int = 64
    d_ffn: int = 128
    max_len: int = 256
    vocab_size: int = len(VOCABULARY)
    dropout: float = 0.1
    attr_dim: int = 100
    attention: str = 'linear'

    def __post_init__(self) -> None:
        if min(self.n_layers, self.n_heads, self.d_model, self.d_ffn, self.max_len, self.vocab_size) < 1:
            raise ConfigError('model dimensions must be positive')

        if self.d_model % self.n_heads:
            raise ConfigError(f'd_model={self.d_model} is not divisible by n_heads={self.n_heads}')

        if self.attr_dim < 0:
            raise ConfigError('attr_dim must be non-negative')

        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError('dropout must be in [0, 1)')

        if self.attention not in ('linear', 'softmax'):
            raise ConfigError(f'attention must be linear or softmax, not {self.attention!r}')

@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 8
    base_lr: float = 1e-4
    warmup_steps: int = 100
    max_steps: int = 1000
    betas: Tuple[float, float] = (0.9, 0.98)
    eps: float = 1e-9
    clip_norm: Optional[float] = 1.0
    seed: int = 0
    log_every: int = 50

    def __post_init__(self) -> None:
        if self.warmup_steps < 1:
            raise ConfigError('warmup_steps must be at least 1')

        if self.batch_size < 1 or self.max_steps < 0:
            raise ConfigError('batch_size must be positive and max_steps non-negative')

        if self.base_lr < 0:
            raise ConfigError('base_lr must be non-negative')

@dataclass(frozen=True)
class SamplerConfig:
    p: float = 0.9
    temperature: float = 1.0
    max_tokens: int = 256
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.p <= 1.0:
            raise ConfigError('p must be in (0, 1]')

        if self.temperature <= 0:
            raise ConfigError('temperature must be positive')

        if self.max_tokens < 1:
            raise ConfigError('max_tokens must be positive')

MODEL_PRESETS: Dict[str, Dict[str, Any]] = {
    'desk': dict(n_layers=2, n_heads=4, d_model=64, d_ffn=128, max_len=256, dropout=0.1),
    'desk-tiny': dict(n_layers=2, n_heads=1, d_model=16, d_ffn=32, max_len=16, dropout=0.0),
    'full': dict(n_layers=6, n_heads=8, d_model=512, d_ffn=2048, max_len=1280, dropout=0.1),
}

TRAIN_PRESETS: Dict[str, Dict[str, Any]] = {
    'desk': dict(batch_size=8, base_lr=1e-4, warmup_steps=100),
    'desk-tiny': dict(batch_size=2, base_lr=1e-3, warmup_steps=10),
    'full': dict(batch_size=8, base_lr=1e-4, warmup_steps=16000),
}

def _preset(presets: Dict[str, Dict[str, Any]], name: str) -> Dict[str, Any]:
    try:
        return dict(presets[name])
    except KeyError:
        raise ConfigError(f'unknown preset {name!r} (expected one of {", ".join(presets)})') from None

def model_config(name: str, attr_dim: int, **overrides: Any) -> ModelConfig:
    """
    Builds a named model configuration.

    Parameters
    ----------
    name: :class:`str`
        ``desk``, ``desk-tiny`` or ``full``.
    attr_dim: :class:`int`
        The number of selected attributes.
    """
    options = _preset(MODEL_PRESETS, name)
    options.update(overrides)

    return ModelConfig(attr_dim=attr_dim, **options)

def train_config(name: str, **overrides: Any) -> TrainConfig:
    options = _preset(TRAIN_PRESETS, name)
    options.update(overrides)

    return TrainConfig(**options)

def with_max_tokens(config: SamplerConfig, model: ModelConfig) -> SamplerConfig:
    if config.max_tokens <= model.max_len:
        return config

    return replace(config, max_tokens=model.max_len)
