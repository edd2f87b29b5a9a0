"""
Emotion-to-attribute mapping by supervised clustering, median binarization and the
center/boundary split used by the bias analysis.
"""
from __future__ import annotations

from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

from dataclasses import dataclass
import logging
import pathlib

import numpy as np

from emotune.errors import ConfigError, DegenerateCorpus, EmptyQuadrant, LengthMismatch
from emotune.labels import EmotionQuadrant, LabeledCorpus
from emotune.utils import read_json, write_json

logger = logging.getLogger('emotune.mapping')

__all__ = (
    'Standardizer',
    'MappingConfig',
    'MappingTable',
    'KMeansResult',
    'MAPPING_METHODS',
    'register_method',
    'kmeans',
    'compute_mapping',
    'compute_medians',
    'binarize',
    'center_boundary_split',
)

@dataclass
class Standardizer:
    """Per-dimension z-scoring with the population standard deviation. Constant dimensions keep a std of 1."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, values: np.ndarray) -> Standardizer:
        values = np.asarray(values, dtype=np.float64)

        std = values.std(axis=0)
        std[std == 0] = 1.0

        return cls(values.mean(axis=0), std)

    def transform(self, values: np.ndarray) -> np.ndarray:
        return (np.asarray(values, dtype=np.float64) - self.mean) / self.std

    def inverse(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values, dtype=np.float64) * self.std + self.mean

@dataclass(frozen=True)
class MappingConfig:
    method: str = 'closest'
    n_clusters: int = 4
    restarts: int = 10
    max_iter: int = 100
    n_candidates: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_clusters < 1 or self.restarts < 1 or self.max_iter < 1:
            raise ConfigError('n_clusters, restarts and max_iter must be positive')

        if self.n_candidates < 1:
            raise ConfigError('n_candidates must be positive')

@dataclass
class MappingTable:
    """
    Attribute values per emotion quadrant over the selected indices.

    Attributes
    ----------
    vectors: Dict[:class:`EmotionQuadrant`, List[:class:`numpy.ndarray`]]
        At least one raw-space vector of length ``len(indices)`` per quadrant.
    method: :class:`str`
        The mapping method that produced the vectors.
    catalog_version: :class:`str`
        The feature catalog of the corpus.
    indices: List[:class:`int`]
        The selected catalog indices.
    """
    vectors: Dict[EmotionQuadrant, List[np.ndarray]]
    method: str
    catalog_version: str
    indices: List[int]

    def vector(self, quadrant: EmotionQuadrant, candidate: int = 0) -> np.ndarray:
        candidates = self.vectors[EmotionQuadrant.parse(quadrant)]
        if not 0 <= candidate < len(candidates):
            raise ConfigError(f'{quadrant.name} has {len(candidates)} candidate vectors, not {candidate + 1}')

        return candidates[candidate]

    def save(self, path: pathlib.Path) -> None:
        write_json(pathlib.Path(path), {
            'catalog_version': self.catalog_version,
            'indices': self.indices,
            'method': self.method,
            'vectors': {quadrant.name: [vector.tolist() for vector in vectors] for quadrant, vectors in self.vectors.items()},
        })

    @classmethod
    def load(cls, path: pathlib.Path) -> MappingTable:
        data = read_json(pathlib.Path(path))
        return cls(
            vectors={
                EmotionQuadrant.parse(name): [np.array(vector, dtype=np.float64) for vector in vectors]
                for name, vectors in data['vectors'].items()
            },
            method=data['method'],
            catalog_version=data['catalog_version'],
            indices=[int(index) for index in data['indices']],
        )

class KMeansResult(NamedTuple):
    centroids: np.ndarray
    labels: np.ndarray
    inertia: float
    history: List[float]

def _lloyd(points: np.ndarray, k: int, max_iter: int, rng: np.random.Generator) -> KMeansResult:
    centroids = points[rng.choice(points.shape[0], size=k, replace=False)].copy()

    labels: Optional[np.ndarray] = None
    history: List[float] = []

    for _ in range(max_iter):
        distances = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        assigned = distances.argmin(axis=1)

        own = distances[np.arange(points.shape[0]), assigned]
        history.append(float(own.sum()))

        if labels is not None and np.array_equal(assigned, labels):
            break

        labels = assigned
        for cluster in range(k):
            members = labels == cluster
            if members.any():
                centroids[cluster] = points[members].mean(axis=0)
                continue

            # Empty cluster: move it onto the point farthest from its own centroid.
            farthest = int(own.argmax())
            centroids[cluster] = points[farthest]
            own[farthest] = 0.0

    assert labels is not None
    return KMeansResult(centroids, labels, history[-1], history)

def kmeans(points: np.ndarray, k: int, *, restarts: int = 10, max_iter: int = 100, seed: int = 0) -> KMeansResult:
    """
    Lloyd's k-means with ``restarts`` seeded random initializations. The run with the
    lowest inertia wins; ties go to the earliest restart.

    Parameters
    ----------
    points: :class:`numpy.ndarray`
        ``(n, d)`` points. ``k`` is capped at ``n``.
    k: :class:`int`
        The number of clusters.
    """
    points = np.asarray(points, dtype=np.float64)
    k = min(k, points.shape[0])

    best: Optional[KMeansResult] = None
    for child in np.random.SeedSequence(seed).spawn(restarts):
        result = _lloyd(points, k, max_iter, np.random.default_rng(child))
        if best is None or result.inertia < best.inertia:
            best = result

    assert best is not None
    return best

class QuadrantPoints(NamedTuple):
    rows: np.ndarray
    raw: np.ndarray
    scaled: np.ndarray

MappingMethod = Callable[[QuadrantPoints, Standardizer, MappingConfig], List[np.ndarray]]
MAPPING_METHODS: Dict[str, MappingMethod] = {}

def register_method(name: str) -> Callable[[MappingMethod], MappingMethod]:
    def wrapper(func: MappingMethod) -> MappingMethod:
        MAPPING_METHODS[name] = func
        return func

    return wrapper

def _nearest(points: QuadrantPoints) -> np.ndarray:
    distances = np.sqrt(((points.scaled - points.scaled.mean(axis=0)) ** 2).sum(axis=1))
    return np.lexsort((points.rows, distances))

@register_method('closest')
def closest(points: QuadrantPoints, standardizer: Standardizer, config: MappingConfig) -> List[np.ndarray]:
    """The real samples nearest to the quadrant mean in standardized space."""
    order = _nearest(points)
    return [points.raw[index].copy() for index in order[:config.n_candidates]]

@register_method('center')
def center(points: QuadrantPoints, standardizer: Standardizer, config: MappingConfig) -> List[np.ndarray]:
    """The per-dimension mean of the raw values."""
    if config.n_candidates > 1:
        logger.debug('center mapping yields one vector per quadrant')

    return [points.raw.mean(axis=0)]

@register_method('kmeans')
def clustered(points: QuadrantPoints, standardizer: Standardizer, config: MappingConfig) -> List[np.ndarray]:
    """Centroids of the largest k-means clusters of the standardized quadrant points, de-standardized."""
    result = kmeans(points.scaled, config.n_clusters, restarts=config.restarts, max_iter=config.max_iter, seed=config.seed)

    sizes = np.bincount(result.labels, minlength=result.centroids.shape[0])
    order = np.lexsort((np.arange(sizes.size), -sizes))

    return [standardizer.inverse(result.centroids[cluster]) for cluster in order[:config.n_candidates]]

def _quadrants(corpus: LabeledCorpus, indices: Sequence[int], standardizer: Standardizer) -> Dict[EmotionQuadrant, QuadrantPoints]:
    raw = corpus.values[:, list(indices)]
    scaled = standardizer.transform(raw)

    quadrants: Dict[EmotionQuadrant, QuadrantPoints] = {}
    for quadrant in EmotionQuadrant:
        rows = corpus.rows_of(quadrant)
        quadrants[quadrant] = QuadrantPoints(rows, raw[rows], scaled[rows])

    return quadrants

def compute_mapping(corpus: LabeledCorpus, indices: Sequence[int], config: MappingConfig = MappingConfig()) -> MappingTable:
    """
    Maps every emotion quadrant to attribute values over ``indices``.

    Distances are measured after z-scoring the selected columns over the whole corpus;
    the returned vectors are raw values.

    Parameters
    ----------
    corpus: :class:`LabeledCorpus`
        The labeled corpus.
    indices: Sequence[:class:`int`]
        The selected catalog indices.
    config: :class:`MappingConfig`
        ``method`` is one of ``closest``, ``center`` or ``kmeans``.

    Raises
    ------
    EmptyQuadrant
        A quadrant has no samples.
    """
    method = MAPPING_METHODS.get(config.method)
    if method is None:
        raise ConfigError(f'unknown mapping method {config.method!r} (expected one of {", ".join(MAPPING_METHODS)})')

    indices = [int(index) for index in indices]
    standardizer = Standardizer.fit(corpus.values[:, indices])

    vectors: Dict[EmotionQuadrant, List[np.ndarray]] = {}
    for quadrant, points in _quadrants(corpus, indices, standardizer).items():
        if points.rows.size == 0:
            raise EmptyQuadrant(f'{quadrant.name} has no samples')

        vectors[quadrant] = method(points, standardizer, config)

    return MappingTable(vectors, config.method, corpus.catalog_version, indices)

def compute_medians(values: np.ndarray) -> np.ndarray:
    """Per-column median; even counts average the two middle values."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] == 0:
        raise DegenerateCorpus('medians need at least one row')

    return np.median(values, axis=0)

def binarize(values: np.ndarray, medians: np.ndarray) -> np.ndarray:
    """``1`` where a value is strictly above its median, else ``0``."""
    values = np.asarray(values, dtype=np.float64)
    medians = np.asarray(medians, dtype=np.float64)

    if values.shape != medians.shape:
        raise LengthMismatch(f'{values.size} values against {medians.size} medians')

    return (values > medians).astype(np.uint8)

def center_boundary_split(
    corpus: LabeledCorpus,
    indices: Sequence[int],
    n: int
) -> Dict[EmotionQuadrant, Tuple[List[int], List[int]]]:
    """
    Splits every quadrant into its ``n`` samples nearest to the quadrant mean and its
    ``n`` farthest ones, in standardized space. Quadrants with fewer than ``2n``
    samples use half their size instead. Ties go to the lower row.

    Returns
    -------
    Dict[:class:`EmotionQuadrant`, Tuple[List[:class:`int`], List[:class:`int`]]]
        ``(center rows, boundary rows)`` per quadrant.
    """
    indices = [int(index) for index in indices]
    standardizer = Standardizer.fit(corpus.values[:, indices])

    split: Dict[EmotionQuadrant, Tuple[List[int], List[int]]] = {}
    for quadrant, points in _quadrants(corpus, indices, standardizer).items():
        if points.rows.size == 0:
            split[quadrant] = ([], [])
            continue

        ranked = points.rows[_nearest(points)]
        count = min(n, ranked.size // 2)
        if count < n:
            logger.warning('%s has %d samples, using %d center and boundary samples', quadrant.name, ranked.size, count)

        split[quadrant] = (ranked[:count].tolist(), ranked[ranked.size - count:].tolist())

    return split
