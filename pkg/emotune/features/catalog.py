from __future__ import annotations

from typing import Callable, Dict, List, NamedTuple, Optional, TypeVar, Union

import inspect

import numpy as np

from emotune.errors import CatalogMismatch

__all__ = (
    'GROUPS',
    'CATALOG_VERSION',
    'FeatureDef',
    'FeatureCatalog',
    'ALL_FEATURES',
    'register',
    'add_feature',
    'get_feature',
    'default_catalog',
    'render_catalog_doc',
    'ensure_version',
)

GROUPS = ('pitch', 'melody', 'chord/vertical', 'rhythm', 'dynamics', 'texture', 'instrumentation')
CATALOG_VERSION = 'emotune-catalog-1'

FeatureValue = Union[float, np.ndarray]
F = TypeVar('F', bound=Callable[..., FeatureValue])

class FeatureDef(NamedTuple):
    id: str
    group: str
    dim: int
    description: str
    compute: Callable[..., FeatureValue]

ALL_FEATURES: Dict[str, FeatureDef] = {}

def register(id: str, group: str, *, dim: int = 1) -> Callable[[F], F]:
    def wrapper(func: F) -> F:
        add_feature(FeatureDef(id, group, dim, inspect.getdoc(func) or '', func))
        return func

    return wrapper

def add_feature(feature: FeatureDef) -> None:
    if feature.group not in GROUPS:
        raise ValueError(f'{feature.id!r}: unknown group {feature.group!r}')

    if feature.id in ALL_FEATURES:
        raise ValueError(f'feature {feature.id!r} is already registered')

    if feature.dim < 1:
        raise ValueError(f'{feature.id!r}: dim must be positive')

    ALL_FEATURES[feature.id] = feature

def get_feature(id: str) -> Optional[FeatureDef]:
    return ALL_FEATURES.get(id)

class FeatureCatalog:
    """
    An ordered list of feature definitions. The catalog order fixes the layout of
    every attribute vector extracted with it.

    Parameters
    ----------
    entries: List[:class:`FeatureDef`]
        The features, in vector order.
    version: :class:`str`
        The version string embedded in every vector and artifact built from this catalog.
    """
    def __init__(self, entries: List[FeatureDef], version: str = CATALOG_VERSION) -> None:
        self.entries = list(entries)
        self.version = version

        self.offsets: Dict[str, int] = {}

        offset = 0
        for entry in self.entries:
            if entry.id in self.offsets:
                raise ValueError(f'duplicate feature id {entry.id!r}')

            self.offsets[entry.id] = offset
            offset += entry.dim

        self.total_dim = offset

    def __len__(self) -> int:
        return self.total_dim

    def __getitem__(self, id: str) -> FeatureDef:
        for entry in self.entries:
            if entry.id == id:
                return entry

        raise KeyError(id)

    def slice_of(self, id: str) -> slice:
        entry = self[id]
        return slice(self.offsets[id], self.offsets[id] + entry.dim)

    def index_of(self, id: str, bin: Optional[int] = None) -> int:
        """
        Returns the flat vector index of a scalar feature or of one histogram bin.

        Parameters
        ----------
        id: :class:`str`
            The feature id, for example ``Pitch Class Histogram``.
        bin: Optional[:class:`int`]
            The bin for histogram features.
        """
        entry = self[id]
        if entry.dim == 1:
            if bin not in (None, 0):
                raise IndexError(f'{id!r} is a scalar feature')

            return self.offsets[id]

        if bin is None or not 0 <= bin < entry.dim:
            raise IndexError(f'{id!r} needs a bin in 0..{entry.dim - 1}')

        return self.offsets[id] + bin

    @property
    def columns(self) -> List[str]:
        columns: List[str] = []
        for entry in self.entries:
            if entry.dim == 1:
                columns.append(entry.id)
            else:
                columns.extend(f'{entry.id}_{bin}' for bin in range(entry.dim))

        return columns

    @property
    def histograms(self) -> List[slice]:
        return [self.slice_of(entry.id) for entry in self.entries if entry.dim > 1]

    def group_indices(self, group: str) -> List[int]:
        indices: List[int] = []
        for entry in self.entries:
            if entry.group == group:
                start = self.offsets[entry.id]
                indices.extend(range(start, start + entry.dim))

        return indices

    def group_of(self, index: int) -> str:
        for entry in self.entries:
            start = self.offsets[entry.id]
            if start <= index < start + entry.dim:
                return entry.group

        raise IndexError(index)

    def check_version(self, version: str) -> None:
        ensure_version(self.version, version)

def ensure_version(expected: str, actual: str) -> None:
    if actual != expected:
        raise CatalogMismatch(f'expected catalog {expected!r}, got {actual!r}')

def default_catalog() -> FeatureCatalog:
    # Importing the package registers every group module in a fixed order.
    import emotune.features  # noqa: F401

    return FeatureCatalog(list(ALL_FEATURES.values()))

def render_catalog_doc(catalog: FeatureCatalog) -> str:
    lines = [
        f'# Feature catalog `{catalog.version}`',
        '',
        f'{len(catalog.entries)} features, {catalog.total_dim} dimensions. '
        'Vector indices follow the order below; histogram bins are numbered from 0.',
        '',
    ]

    for group in GROUPS:
        lines.append(f'## {group}')
        lines.append('')
        lines.append('| index | id | dim | definition |')
        lines.append('|---|---|---|---|')

        for entry in catalog.entries:
            if entry.group != group:
                continue

            start = catalog.offsets[entry.id]
            index = str(start) if entry.dim == 1 else f'{start}..{start + entry.dim - 1}'
            description = ' '.join(entry.description.split())

            lines.append(f'| {index} | {entry.id} | {entry.dim} | {description} |')

        lines.append('')

    return '\n'.join(lines)
