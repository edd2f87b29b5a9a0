from __future__ import annotations

from typing import List, Optional, Sequence

from dataclasses import dataclass, field
import logging
import pathlib

import numpy as np

from emotune.errors import DegenerateCorpus, ShapeMismatch
from emotune.score import Score
from emotune.utils import map_in_threads, read_json, write_json

from .catalog import FeatureCatalog, default_catalog
from .view import ScoreView

logger = logging.getLogger('emotune.features')

__all__ = ('AttributeVector', 'CorpusMatrix', 'extract_features', 'extract_corpus', 'extract_corpus_async')

@dataclass
class AttributeVector:
    values: np.ndarray
    catalog_version: str
    empty: bool = False

@dataclass
class CorpusMatrix:
    """
    One attribute vector per score.

    Attributes
    ----------
    values: :class:`numpy.ndarray`
        ``(n_scores, D)`` float64 matrix.
    columns: List[:class:`str`]
        Flattened column names, histogram bins as ``<id>_<bin>``.
    catalog_version: :class:`str`
        The catalog the rows were extracted with.
    names: List[:class:`str`]
        Row names, usually the source file stems.
    empty: List[:class:`bool`]
        Rows extracted from scores without notes.
    """
    values: np.ndarray
    columns: List[str]
    catalog_version: str
    names: List[str] = field(default_factory=list)
    empty: List[bool] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.names:
            self.names = [str(index) for index in range(self.values.shape[0])]

        if not self.empty:
            self.empty = [False] * self.values.shape[0]

        if self.values.ndim != 2 or self.values.shape[1] != len(self.columns):
            raise ShapeMismatch(f'matrix of shape {self.values.shape} does not match {len(self.columns)} columns')

    def __len__(self) -> int:
        return self.values.shape[0]

    def rows(self, names: Sequence[str]) -> np.ndarray:
        index = {name: row for row, name in enumerate(self.names)}
        return self.values[[index[name] for name in names]]

    def save_csv(self, path: pathlib.Path) -> None:
        path = pathlib.Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)

        with path.open('w') as file:
            file.write(','.join(['name'] + [f'"{column}"' for column in self.columns]) + '\n')
            for name, row in zip(self.names, self.values):
                file.write(','.join([name] + [repr(float(value)) for value in row]) + '\n')

    def save(self, path: pathlib.Path) -> None:
        """Writes ``<path>.npy`` and the ``<path>.json`` sidecar."""
        path = pathlib.Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)

        np.save(path.with_suffix('.npy'), self.values)
        write_json(path.with_suffix('.json'), {
            'catalog_version': self.catalog_version,
            'columns': self.columns,
            'names': self.names,
            'empty': self.empty,
        })

    @classmethod
    def load(cls, path: pathlib.Path, catalog: Optional[FeatureCatalog] = None) -> CorpusMatrix:
        path = pathlib.Path(path)

        manifest = read_json(path.with_suffix('.json'))
        if catalog is not None:
            catalog.check_version(manifest['catalog_version'])

        return cls(
            values=np.load(path.with_suffix('.npy')),
            columns=manifest['columns'],
            catalog_version=manifest['catalog_version'],
            names=manifest['names'],
            empty=manifest['empty'],
        )

def extract_features(score: Score, catalog: Optional[FeatureCatalog] = None) -> AttributeVector:
    """
    Extracts the attribute vector of a quantized score.

    Parameters
    ----------
    score: :class:`Score`
        The score. Scores without notes yield a zero vector flagged as empty.
    catalog: Optional[:class:`FeatureCatalog`]
        Defaults to :func:`default_catalog`.
    """
    catalog = catalog or default_catalog()

    if score.is_empty:
        logger.warning('extracting features from an empty score')
        return AttributeVector(np.zeros(catalog.total_dim), catalog.version, empty=True)

    view = ScoreView(score)
    values = np.empty(catalog.total_dim)

    for entry in catalog.entries:
        value = np.asarray(entry.compute(view), dtype=np.float64).reshape(-1)
        if value.size != entry.dim:
            raise ShapeMismatch(f'{entry.id!r} returned {value.size} values, expected {entry.dim}')

        values[catalog.slice_of(entry.id)] = value

    if not np.isfinite(values).all():
        columns = [catalog.columns[index] for index in np.flatnonzero(~np.isfinite(values))]
        logger.warning('non-finite feature values replaced by 0: %s', ', '.join(columns))

        values = np.nan_to_num(values, nan=0.0, posinf=0.0, neginf=0.0)

    return AttributeVector(values, catalog.version)

def _check(scores: Sequence[Score]) -> None:
    if not scores:
        raise DegenerateCorpus('cannot extract features from an empty corpus')

def _assemble(vectors: List[AttributeVector], catalog: FeatureCatalog, names: Optional[Sequence[str]]) -> CorpusMatrix:
    return CorpusMatrix(
        values=np.stack([vector.values for vector in vectors]),
        columns=catalog.columns,
        catalog_version=catalog.version,
        names=list(names) if names else [],
        empty=[vector.empty for vector in vectors],
    )

def extract_corpus(
    scores: Sequence[Score],
    catalog: Optional[FeatureCatalog] = None,
    *,
    names: Optional[Sequence[str]] = None
) -> CorpusMatrix:
    _check(scores)

    catalog = catalog or default_catalog()
    return _assemble([extract_features(score, catalog) for score in scores], catalog, names)

async def extract_corpus_async(
    scores: Sequence[Score],
    catalog: Optional[FeatureCatalog] = None,
    *,
    names: Optional[Sequence[str]] = None,
    workers: int = 1
) -> CorpusMatrix:
    """Same as :func:`extract_corpus` with the scores spread over ``workers`` threads."""
    _check(scores)

    catalog = catalog or default_catalog()
    vectors = await map_in_threads(lambda score: extract_features(score, catalog), scores, workers=workers)

    return _assemble(vectors, catalog, names)
