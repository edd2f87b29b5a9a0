from __future__ import annotations

from typing import Any, Dict, Optional, Tuple, Type, TypeVar

from dataclasses import asdict, dataclass, field, fields
import json
import os
import pathlib

import toml

from emotune.errors import ConfigError
from emotune.features import CATALOG_VERSION
from emotune.forest import ForestConfig, SelectionConfig
from emotune.mapping import MappingConfig
from emotune.model import ModelConfig, SamplerConfig, TrainConfig, model_config, train_config
from emotune.utils import hash_data

__all__ = (
    'PathsConfig',
    'GenerateConfig',
    'EvaluateConfig',
    'PipelineConfig',
    'ARTIFACTS_ENV',
    'parse_config_file',
    'load_config',
    'config_hash',
)

ARTIFACTS_ENV = 'EMOTUNE_ARTIFACTS'

T = TypeVar('T')

@dataclass(frozen=True)
class PathsConfig:
    """
    Attributes
    ----------
    corpus: :class:`str`
        Directory with the labeled MIDI files.
    manifest: Optional[:class:`str`]
        The corpus manifest. Defaults to ``<corpus>/manifest.json``, or to a scan of the
        directory when that file does not exist.
    artifacts: :class:`str`
        Where every stage writes its output.
    init_from: Optional[:class:`str`]
        A checkpoint directory to fine-tune from instead of training from scratch.
    """
    corpus: str = 'corpus'
    manifest: Optional[str] = None
    artifacts: str = 'artifacts'
    init_from: Optional[str] = None

    @property
    def manifest_path(self) -> pathlib.Path:
        if self.manifest is not None:
            return pathlib.Path(self.manifest)

        return pathlib.Path(self.corpus) / 'manifest.json'

@dataclass(frozen=True)
class GenerateConfig:
    n_per_quadrant: int = 25
    candidate: int = 0

    def __post_init__(self) -> None:
        if self.n_per_quadrant < 1:
            raise ConfigError('generate.n_per_quadrant must be at least 1')

@dataclass(frozen=True)
class EvaluateConfig:
    classifier: str = 'forest'
    bias_n: int = 10
    classifier_steps: int = 300

    def __post_init__(self) -> None:
        if self.classifier not in ('forest', 'transformer'):
            raise ConfigError(f'evaluate.classifier must be forest or transformer, not {self.classifier!r}')

        if self.bias_n < 1:
            raise ConfigError('evaluate.bias_n must be at least 1')

@dataclass(frozen=True)
class PipelineConfig:
    """
    Everything a pipeline run depends on. Built with :meth:`from_dict`, which lets the
    global ``seed`` flow into every seeded section that does not set its own.
    """
    paths: PathsConfig = PathsConfig()
    catalog_version: str = CATALOG_VERSION
    split: Tuple[float, float, float] = (0.8, 0.1, 0.1)
    forest: ForestConfig = ForestConfig()
    selection: SelectionConfig = SelectionConfig()
    mapping: MappingConfig = MappingConfig()
    model: str = 'desk'
    model_overrides: Dict[str, Any] = field(default_factory=dict)
    train: Dict[str, Any] = field(default_factory=dict)
    sampler: SamplerConfig = SamplerConfig()
    generate: GenerateConfig = GenerateConfig()
    evaluate: EvaluateConfig = EvaluateConfig()
    seed: int = 0
    workers: int = 1

    def model_config(self, attr_dim: int) -> ModelConfig:
        return model_config(self.model, attr_dim, **self.model_overrides)

    def train_config(self) -> TrainConfig:
        return train_config(self.model, **self.train)

    @property
    def artifacts(self) -> pathlib.Path:
        return pathlib.Path(self.paths.artifacts)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> PipelineConfig:
        """
        Raises
        ------
        ConfigError
            Unknown keys or invalid values.
        """
        data = dict(data)
        _check_keys(cls, data, 'config')

        seed = int(data.get('seed', 0))

        paths = dict(data.get('paths', {}))
        paths.setdefault('artifacts', os.environ.get(ARTIFACTS_ENV, 'artifacts'))

        def seeded(name: str) -> Dict[str, Any]:
            section = dict(data.get(name, {}))
            section.setdefault('seed', seed)
            return section

        train = seeded('train')
        if 'betas' in train:
            train['betas'] = tuple(train['betas'])

        _check_keys(TrainConfig, train, 'train')
        _check_keys(ModelConfig, data.get('model_overrides', {}), 'model_overrides')

        split = tuple(float(ratio) for ratio in data.get('split', (0.8, 0.1, 0.1)))
        if len(split) != 3:
            raise ConfigError('split needs three ratios (train, valid, test)')

        return cls(
            paths=_section(PathsConfig, paths, 'paths'),
            catalog_version=data.get('catalog_version', CATALOG_VERSION),
            split=split,  # type: ignore[arg-type]
            forest=_section(ForestConfig, seeded('forest'), 'forest'),
            selection=_section(SelectionConfig, seeded('selection'), 'selection'),
            mapping=_section(MappingConfig, seeded('mapping'), 'mapping'),
            model=data.get('model', 'desk'),
            model_overrides=dict(data.get('model_overrides', {})),
            train=train,
            sampler=_section(SamplerConfig, seeded('sampler'), 'sampler'),
            generate=_section(GenerateConfig, data.get('generate', {}), 'generate'),
            evaluate=_section(EvaluateConfig, data.get('evaluate', {}), 'evaluate'),
            seed=seed,
            workers=max(1, int(data.get('workers', 1))),
        )

def _check_keys(cls: Type[Any], data: Dict[str, Any], name: str) -> None:
    unknown = set(data) - {item.name for item in fields(cls)}
    if unknown:
        raise ConfigError(f'unknown keys in {name}: {", ".join(sorted(unknown))}')

def _section(cls: Type[T], data: Dict[str, Any], name: str) -> T:
    _check_keys(cls, data, name)

    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f'invalid {name} section: {exc}') from None

def parse_config_file(path: pathlib.Path) -> Dict[str, Any]:
    """Reads a ``.json`` or ``.toml`` configuration file into a plain dict."""
    path = pathlib.Path(path).resolve()

    if path.suffix not in ('.json', '.toml'):
        raise ConfigError(f"invalid file extension {path.suffix!r}. Supported file extensions are '.json' and '.toml'")

    if not path.exists():
        raise ConfigError(f'config file {str(path)!r} does not exist')

    with path.open('r') as file:
        try:
            if path.suffix == '.json':
                return json.load(file)

            return toml.load(file)
        except (json.JSONDecodeError, toml.TomlDecodeError) as exc:
            raise ConfigError(f'could not parse {path.name!r}: {exc}') from None

def _merge(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value

    return merged

def load_config(path: Optional[pathlib.Path] = None, overrides: Optional[Dict[str, Any]] = None) -> PipelineConfig:
    """
    Loads the configuration file (if any) and applies ``overrides`` on top of it.
    Overrides are nested dicts in the file's layout; ``None`` values are ignored.
    """
    data = parse_config_file(path) if path is not None else {}

    cleaned = _drop_none(overrides or {})
    return PipelineConfig.from_dict(_merge(data, cleaned))

def _drop_none(data: Dict[str, Any]) -> Dict[str, Any]:
    cleaned: Dict[str, Any] = {}
    for key, value in data.items():
        if isinstance(value, dict):
            value = _drop_none(value)
            if not value:
                continue
        elif value is None:
            continue

        cleaned[key] = value

    return cleaned

def config_hash(config: PipelineConfig) -> str:
    return hash_data(config.to_dict())
