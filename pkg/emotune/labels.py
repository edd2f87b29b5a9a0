from __future__ import annotations

from typing import Any, Dict, List, Sequence, Union

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from emotune.errors import LengthMismatch
from emotune.features import CorpusMatrix

__all__ = ('EmotionQuadrant', 'LabeledCorpus')

class EmotionQuadrant(IntEnum):
    """Russell's four quadrants. The value doubles as the class index."""

    Q1 = 0  # high valence, high arousal
    Q2 = 1  # low valence, high arousal
    Q3 = 2  # low valence, low arousal
    Q4 = 3  # high valence, low arousal

    @classmethod
    def parse(cls, value: Union[str, EmotionQuadrant]) -> EmotionQuadrant:
        if isinstance(value, cls):
            return value

        try:
            return cls[str(value).strip().upper()]
        except KeyError:
            raise ValueError(f'{value!r} is not an emotion quadrant (expected Q1..Q4)') from None

@dataclass
class LabeledCorpus:
    """
    A corpus matrix with one quadrant label per row.

    Attributes
    ----------
    matrix: :class:`CorpusMatrix`
        The attribute vectors.
    labels: :class:`numpy.ndarray`
        Class indices (:class:`EmotionQuadrant` values), one per row.
    """
    matrix: CorpusMatrix
    labels: np.ndarray

    def __post_init__(self) -> None:
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.shape != (len(self.matrix),):
            raise LengthMismatch(f'{len(self.matrix)} rows but {self.labels.size} labels')

    def __len__(self) -> int:
        return len(self.matrix)

    @property
    def values(self) -> np.ndarray:
        return self.matrix.values

    @property
    def names(self) -> List[str]:
        return self.matrix.names

    @property
    def catalog_version(self) -> str:
        return self.matrix.catalog_version

    def rows_of(self, quadrant: EmotionQuadrant) -> np.ndarray:
        return np.flatnonzero(self.labels == int(quadrant))

    def subset(self, rows: Sequence[int]) -> LabeledCorpus:
        rows = list(rows)
        matrix = CorpusMatrix(
            values=self.matrix.values[rows],
            columns=self.matrix.columns,
            catalog_version=self.matrix.catalog_version,
            names=[self.matrix.names[row] for row in rows],
            empty=[self.matrix.empty[row] for row in rows],
        )

        return LabeledCorpus(matrix, self.labels[rows])

    @classmethod
    def from_manifest(cls, matrix: CorpusMatrix, entries: Sequence[Dict[str, Any]]) -> LabeledCorpus:
        """
        Labels the rows of ``matrix`` from manifest entries (``{"name": ..., "label": "Q1"}``).
        Rows without an entry are dropped.
        """
        labels = {entry['name']: EmotionQuadrant.parse(entry['label']) for entry in entries if entry.get('label')}
        rows = [row for row, name in enumerate(matrix.names) if name in labels]

        corpus = cls(matrix, np.zeros(len(matrix), dtype=np.int64)).subset(rows)
        corpus.labels = np.array([int(labels[name]) for name in corpus.names], dtype=np.int64)

        return corpus
