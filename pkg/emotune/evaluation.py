"""
Objective evaluation and bias analysis of real and generated pieces.
"""
from __future__ import annotations

from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass, field
import logging
import pathlib

import numpy as np

from emotune.errors import DegenerateCorpus, LengthMismatch
from emotune.features import FeatureCatalog, ensure_version, extract_features
from emotune.forest import RandomForest
from emotune.labels import EmotionQuadrant, LabeledCorpus
from emotune.mapping import Standardizer, center_boundary_split
from emotune.score import QuantizationConfig, Score, quantize, score_to_tokens
from emotune.utils import write_json

logger = logging.getLogger('emotune.evaluation')

__all__ = (
    'ObjectiveClassifier',
    'ForestClassifier',
    'TransformerClassifier',
    'DistanceReport',
    'BiasReport',
    'objective_accuracy',
    'pairwise_l1',
    'l1_distance_analysis',
    'bias_experiment',
    'pca_project',
    'save_projection',
)

class ObjectiveClassifier(ABC):
    """Predicts the emotion quadrant of finished pieces."""

    name: str

    @abstractmethod
    def predict_scores(self, scores: Sequence[Score]) -> List[EmotionQuadrant]:
        raise NotImplementedError

class ForestClassifier(ObjectiveClassifier):
    """
    Extracts attribute vectors from quantized scores and lets a random forest vote.

    Parameters
    ----------
    forest: :class:`RandomForest`
        Trained on held-out labeled pieces.
    catalog: Optional[:class:`FeatureCatalog`]
        Must match the forest's catalog version.
    """
    name = 'forest'

    def __init__(self, forest: RandomForest, catalog: Optional[FeatureCatalog] = None) -> None:
        self.forest = forest
        self.catalog = catalog

    def predict_vectors(self, values: np.ndarray) -> List[EmotionQuadrant]:
        return [EmotionQuadrant(int(label)) for label in self.forest.predict_many(values)]

    def predict_scores(self, scores: Sequence[Score]) -> List[EmotionQuadrant]:
        vectors = [extract_features(quantize(score), self.catalog) for score in scores]
        for vector in vectors:
            ensure_version(self.forest.catalog_version, vector.catalog_version)

        return self.predict_vectors(np.stack([vector.values for vector in vectors]))

class TransformerClassifier(ObjectiveClassifier):
    """Tokenizes scores and classifies them with a trained sequence classifier."""

    name = 'transformer'

    def __init__(self, model: Any, grid: QuantizationConfig = QuantizationConfig()) -> None:
        self.model = model
        self.grid = grid

    def predict_scores(self, scores: Sequence[Score]) -> List[EmotionQuadrant]:
        sequences = [score_to_tokens(score, self.grid).tokens for score in scores]
        return [EmotionQuadrant(int(label)) for label in self.model.predict(sequences)]

def objective_accuracy(
    scores: Sequence[Score],
    intended: Sequence[EmotionQuadrant],
    classifier: ObjectiveClassifier
) -> float:
    """Fraction of pieces whose predicted quadrant is the one they were generated for."""
    if not scores:
        raise DegenerateCorpus('no pieces to evaluate')

    if len(scores) != len(intended):
        raise LengthMismatch(f'{len(scores)} pieces but {len(intended)} intended labels')

    predicted = classifier.predict_scores(scores)
    hits = sum(int(guess) == int(EmotionQuadrant.parse(label)) for guess, label in zip(predicted, intended))

    return hits / len(scores)

@dataclass
class DistanceReport:
    intra_by_quadrant: Dict[str, float]
    intra: float
    inter: float
    n_intra_pairs: int
    n_inter_pairs: int
    curves: Dict[str, List[float]] = field(repr=False)

    @property
    def gap(self) -> float:
        return self.inter - self.intra

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['gap'] = self.gap
        return data

    def save(self, path: pathlib.Path) -> None:
        write_json(pathlib.Path(path), self.to_dict())

    def save_curves(self, path: pathlib.Path) -> None:
        """One row per rank: ``rank,intra,inter`` with empty cells past the shorter curve."""
        path = pathlib.Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)

        intra, inter = self.curves['intra'], self.curves['inter']
        with path.open('w') as file:
            file.write('rank,intra,inter\n')
            for rank in range(max(len(intra), len(inter))):
                left = repr(intra[rank]) if rank < len(intra) else ''
                right = repr(inter[rank]) if rank < len(inter) else ''
                file.write(f'{rank},{left},{right}\n')

def pairwise_l1(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    return np.abs(values[:, None, :] - values[None, :, :]).sum(axis=2)

def _mean(values: np.ndarray) -> float:
    return float(values.mean()) if values.size else 0.0

def l1_distance_analysis(
    vectors: np.ndarray,
    labels: Sequence[int],
    standardizer: Optional[Standardizer] = None
) -> DistanceReport:
    """
    Mean L1 distance over all same-label pairs (intra) and all different-label pairs (inter).

    Parameters
    ----------
    vectors: :class:`numpy.ndarray`
        ``(n, k)`` attribute values over the selected indices.
    labels: Sequence[:class:`int`]
        Quadrant per row.
    standardizer: Optional[:class:`Standardizer`]
        Applied before measuring when given; the pipeline fits it on the real corpus.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)

    if vectors.shape[0] != labels.size:
        raise LengthMismatch(f'{vectors.shape[0]} vectors but {labels.size} labels')

    if standardizer is not None:
        vectors = standardizer.transform(vectors)

    for quadrant in EmotionQuadrant:
        if (labels == int(quadrant)).sum() == 1:
            logger.warning('%s has a single sample and no intra-class pairs', quadrant.name)

    distances = pairwise_l1(vectors)
    first, second = np.triu_indices(labels.size, k=1)

    pairs = distances[first, second]
    same = labels[first] == labels[second]

    intra_by_quadrant = {
        quadrant.name: _mean(pairs[same & (labels[first] == int(quadrant))])
        for quadrant in EmotionQuadrant
        if (labels == int(quadrant)).sum() >= 2
    }

    return DistanceReport(
        intra_by_quadrant=intra_by_quadrant,
        intra=_mean(pairs[same]),
        inter=_mean(pairs[~same]),
        n_intra_pairs=int(same.sum()),
        n_inter_pairs=int((~same).sum()),
        curves={'intra': np.sort(pairs[same]).tolist(), 'inter': np.sort(pairs[~same]).tolist()},
    )

@dataclass
class BiasReport:
    real_center: float
    real_boundary: float
    generated_center: Optional[float]
    generated_boundary: Optional[float]
    per_quadrant: Dict[str, Dict[str, Optional[float]]]
    counts: Dict[str, int]

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def save(self, path: pathlib.Path) -> None:
        write_json(pathlib.Path(path), self.to_dict())

def _accuracy(predicted: Sequence[int], expected: Sequence[int]) -> Optional[float]:
    if not len(expected):
        return None

    return float(np.mean(np.asarray(predicted) == np.asarray(expected)))

def bias_experiment(
    corpus: LabeledCorpus,
    indices: Sequence[int],
    n: int,
    classifier: ForestClassifier,
    *,
    generate: Optional[Callable[[np.ndarray, EmotionQuadrant], Score]] = None,
    generated_classifier: Optional[ObjectiveClassifier] = None
) -> BiasReport:
    """
    Compares how well the classifier recognizes the samples nearest to their quadrant
    center with the samples farthest from it.

    Parameters
    ----------
    corpus: :class:`LabeledCorpus`
        The labeled real corpus.
    indices: Sequence[:class:`int`]
        The selected catalog indices used to find center and boundary samples.
    n: :class:`int`
        Center and boundary samples per quadrant.
    classifier: :class:`ForestClassifier`
        Classifies the real samples from their attribute vectors.
    generate: Optional[Callable]
        When given, ``generate(values, quadrant)`` produces a piece conditioned on the
        selected attribute values of every center and boundary sample, and the pieces
        are classified too.
    generated_classifier: Optional[:class:`ObjectiveClassifier`]
        Classifies generated pieces. Defaults to ``classifier``.
    """
    split = center_boundary_split(corpus, indices, n)

    rows: Dict[str, List[int]] = {'center': [], 'boundary': []}
    per_quadrant: Dict[str, Dict[str, Optional[float]]] = {}

    for quadrant, (center, boundary) in split.items():
        rows['center'].extend(center)
        rows['boundary'].extend(boundary)

        per_quadrant[quadrant.name] = {
            side: _accuracy(
                [int(label) for label in classifier.predict_vectors(corpus.values[members])] if members else [],
                corpus.labels[members].tolist(),
            )
            for side, members in (('center', center), ('boundary', boundary))
        }

    def real(side: str) -> float:
        members = rows[side]
        if not members:
            return 0.0

        predicted = [int(label) for label in classifier.predict_vectors(corpus.values[members])]
        return _accuracy(predicted, corpus.labels[members].tolist()) or 0.0

    generated: Dict[str, Optional[float]] = {'center': None, 'boundary': None}
    if generate is not None:
        judge = generated_classifier or classifier
        selected = [int(index) for index in indices]

        for side in ('center', 'boundary'):
            members = rows[side]
            if not members:
                continue

            quadrants = [EmotionQuadrant(int(corpus.labels[row])) for row in members]
            pieces = [generate(corpus.values[row, selected], quadrant) for row, quadrant in zip(members, quadrants)]

            generated[side] = objective_accuracy(pieces, quadrants, judge)

    report = BiasReport(
        real_center=real('center'),
        real_boundary=real('boundary'),
        generated_center=generated['center'],
        generated_boundary=generated['boundary'],
        per_quadrant=per_quadrant,
        counts={side: len(members) for side, members in rows.items()},
    )

    logger.info('center accuracy %.3f, boundary accuracy %.3f', report.real_center, report.real_boundary)
    return report

def pca_project(vectors: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Projects z-scored vectors onto their two leading principal components.

    Every component is signed so that its largest-magnitude loading is positive.

    Returns
    -------
    Tuple[:class:`numpy.ndarray`, :class:`numpy.ndarray`, :class:`numpy.ndarray`]
        ``(n, 2)`` coordinates, ``(2, d)`` components and the two explained variances.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2 or vectors.shape[0] < 3:
        raise DegenerateCorpus('projection needs at least three vectors')

    scaled = Standardizer.fit(vectors).transform(vectors)
    covariance = scaled.T @ scaled / scaled.shape[0]

    eigenvalues, eigenvectors = np.linalg.eigh(covariance)
    order = np.argsort(-eigenvalues, kind='stable')[:2]

    components = eigenvectors[:, order].T
    variances = np.clip(eigenvalues[order], 0.0, None)

    for component in components:
        if component[np.abs(component).argmax()] < 0:
            component *= -1

    if components.shape[0] < 2:
        components = np.vstack([components, np.zeros((2 - components.shape[0], vectors.shape[1]))])
        variances = np.append(variances, np.zeros(2 - variances.size))

    return scaled @ components.T, components, variances

def save_projection(path: pathlib.Path, coordinates: np.ndarray, names: Sequence[str], labels: Sequence[str]) -> None:
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    with path.open('w') as file:
        file.write('name,label,x,y\n')
        for name, label, (x, y) in zip(names, labels, coordinates):
            file.write(f'{name},{label},{float(x)!r},{float(y)!r}\n')
