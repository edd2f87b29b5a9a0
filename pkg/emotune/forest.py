"""
Random-forest emotion classifier over attribute vectors and the attribute
selection strategies built on its impurity-based feature importance.
"""
from __future__ import annotations

from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

from dataclasses import asdict, dataclass, field
import logging
import math
import pathlib

import numpy as np

from emotune.errors import ConfigError, DegenerateCorpus, KTooLarge, ShapeMismatch
from emotune.features import AttributeVector, FeatureCatalog, GROUPS, ensure_version
from emotune.labels import EmotionQuadrant, LabeledCorpus
from emotune.utils import map_in_threads, read_json, write_json

logger = logging.getLogger('emotune.forest')

__all__ = (
    'ForestConfig',
    'DecisionTree',
    'RandomForest',
    'ImportanceRanking',
    'SelectionConfig',
    'Selection',
    'SELECTION_METHODS',
    'register_selection',
    'train_forest',
    'train_forest_async',
    'predict',
    'feature_importance',
    'select_attributes',
    'oob_accuracy',
    'holdout_accuracy',
    'sweep',
)

N_CLASSES = len(EmotionQuadrant)
MIN_ROWS = 8
LEAF = -1

@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 500
    max_depth: Optional[int] = None
    min_samples_leaf: int = 1
    features_per_split: Optional[int] = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_trees < 1:
            raise ConfigError('n_trees must be at least 1')

        if self.min_samples_leaf < 1:
            raise ConfigError('min_samples_leaf must be at least 1')

        if self.max_depth is not None and self.max_depth < 0:
            raise ConfigError('max_depth must be non-negative')

    def split_features(self, n_features: int) -> int:
        if self.features_per_split is not None:
            return max(1, min(self.features_per_split, n_features))

        return max(1, math.isqrt(n_features))

@dataclass
class DecisionTree:
    """
    A binary tree stored as flat per-node arrays. Node 0 is the root; leaves have
    ``feature == -1``. Samples with ``x[feature] <= threshold`` go left.
    """
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray
    impurity: np.ndarray
    n_samples: np.ndarray
    oob: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    def apply(self, X: np.ndarray) -> np.ndarray:
        nodes = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[nodes] != LEAF

        while active.any():
            rows = np.flatnonzero(active)
            current = nodes[rows]

            goes_left = X[rows, self.feature[current]] <= self.threshold[current]
            nodes[rows] = np.where(goes_left, self.left[current], self.right[current])

            active = self.feature[nodes] != LEAF

        return nodes

    def vote(self, X: np.ndarray) -> np.ndarray:
        # argmax returns the lowest class on ties.
        return self.counts[self.apply(X)].argmax(axis=1)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'feature': self.feature.tolist(),
            'threshold': self.threshold.tolist(),
            'left': self.left.tolist(),
            'right': self.right.tolist(),
            'counts': self.counts.tolist(),
            'impurity': self.impurity.tolist(),
            'n_samples': self.n_samples.tolist(),
            'oob': self.oob.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> DecisionTree:
        return cls(
            feature=np.array(data['feature'], dtype=np.int64),
            threshold=np.array(data['threshold'], dtype=np.float64),
            left=np.array(data['left'], dtype=np.int64),
            right=np.array(data['right'], dtype=np.int64),
            counts=np.array(data['counts'], dtype=np.float64).reshape(-1, N_CLASSES),
            impurity=np.array(data['impurity'], dtype=np.float64),
            n_samples=np.array(data['n_samples'], dtype=np.float64),
            oob=np.array(data['oob'], dtype=np.int64),
        )

@dataclass
class RandomForest:
    trees: List[DecisionTree]
    config: ForestConfig
    n_features: int
    catalog_version: str

    def votes(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_features:
            raise ShapeMismatch(f'forest expects {self.n_features} features, got {X.shape[1]}')

        votes = np.zeros((X.shape[0], N_CLASSES), dtype=np.int64)
        for tree in self.trees:
            votes[np.arange(X.shape[0]), tree.vote(X)] += 1

        return votes

    def predict_many(self, X: np.ndarray) -> np.ndarray:
        return self.votes(X).argmax(axis=1)

    def save(self, path: pathlib.Path) -> None:
        write_json(pathlib.Path(path), {
            'catalog_version': self.catalog_version,
            'n_features': self.n_features,
            'config': asdict(self.config),
            'trees': [tree.to_dict() for tree in self.trees],
        })

    @classmethod
    def load(cls, path: pathlib.Path) -> RandomForest:
        data = read_json(pathlib.Path(path))
        return cls(
            trees=[DecisionTree.from_dict(tree) for tree in data['trees']],
            config=ForestConfig(**data['config']),
            n_features=data['n_features'],
            catalog_version=data['catalog_version'],
        )

def _gini(counts: np.ndarray) -> float:
    total = counts.sum()
    if total == 0:
        return 0.0

    return float(1.0 - ((counts / total) ** 2).sum())

def _best_threshold(values: np.ndarray, onehot: np.ndarray, min_leaf: int) -> Optional[Tuple[float, float]]:
    """
    Returns ``(weighted child impurity, threshold)`` of the best split on one feature,
    or ``None`` when the feature cannot be split.
    """
    order = np.argsort(values, kind='stable')
    x = values[order]
    n = x.size

    left = np.cumsum(onehot[order], axis=0)[:-1]
    right = left[-1] + onehot[order[-1]] - left

    n_left = np.arange(1, n, dtype=np.float64)
    n_right = n - n_left

    valid = (x[1:] > x[:-1]) & (n_left >= min_leaf) & (n_right >= min_leaf)
    if not valid.any():
        return None

    gini_left = 1.0 - ((left / n_left[:, None]) ** 2).sum(axis=1)
    gini_right = 1.0 - ((right / n_right[:, None]) ** 2).sum(axis=1)

    child = np.where(valid, n_left * gini_left + n_right * gini_right, np.inf)
    best = int(child.argmin())

    threshold = (x[best] + x[best + 1]) / 2
    if threshold >= x[best + 1]:
        threshold = x[best]

    return float(child[best]), float(threshold)

def _grow_tree(
    X: np.ndarray,
    y: np.ndarray,
    config: ForestConfig,
    rng: np.random.Generator
) -> DecisionTree:
    n_rows, n_features = X.shape
    per_split = config.split_features(n_features)

    sample = rng.integers(0, n_rows, size=n_rows)
    onehot = np.eye(N_CLASSES)[y]

    feature: List[int] = []
    threshold: List[float] = []
    left: List[int] = []
    right: List[int] = []
    counts: List[np.ndarray] = []
    impurity: List[float] = []
    n_samples: List[float] = []

    def add_node(rows: np.ndarray) -> int:
        node_counts = onehot[rows].sum(axis=0)

        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        counts.append(node_counts)
        impurity.append(_gini(node_counts))
        n_samples.append(float(rows.size))

        return len(feature) - 1

    stack = [(add_node(sample), sample, 0)]
    while stack:
        node, rows, depth = stack.pop()

        if impurity[node] == 0.0 or rows.size < 2 * config.min_samples_leaf:
            continue

        if config.max_depth is not None and depth >= config.max_depth:
            continue

        best: Optional[Tuple[float, int, float]] = None
        examined = 0

        # Keep drawing candidates past the quota until at least one of them can split.
        for candidate in rng.permutation(n_features):
            if examined >= per_split and best is not None:
                break

            examined += 1
            found = _best_threshold(X[rows, candidate], onehot[rows], config.min_samples_leaf)
            if found is None:
                continue

            score = (found[0], int(candidate), found[1])
            if best is None or score < best:
                best = score

        if best is None:
            continue

        _, split_feature, split_threshold = best
        goes_left = X[rows, split_feature] <= split_threshold

        feature[node] = split_feature
        threshold[node] = split_threshold

        left_rows, right_rows = rows[goes_left], rows[~goes_left]
        left[node] = add_node(left_rows)
        right[node] = add_node(right_rows)

        stack.append((right[node], right_rows, depth + 1))
        stack.append((left[node], left_rows, depth + 1))

    in_bag = np.zeros(n_rows, dtype=bool)
    in_bag[sample] = True

    return DecisionTree(
        feature=np.array(feature, dtype=np.int64),
        threshold=np.array(threshold, dtype=np.float64),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        counts=np.array(counts, dtype=np.float64),
        impurity=np.array(impurity, dtype=np.float64),
        n_samples=np.array(n_samples, dtype=np.float64),
        oob=np.flatnonzero(~in_bag),
    )

def _prepare(corpus: LabeledCorpus) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    if len(corpus) < MIN_ROWS:
        raise DegenerateCorpus(f'need at least {MIN_ROWS} labeled rows, got {len(corpus)}')

    classes = np.unique(corpus.labels)
    if classes.size < 2:
        raise DegenerateCorpus('every row has the same label')

    missing = [quadrant.name for quadrant in EmotionQuadrant if int(quadrant) not in classes]
    if missing:
        raise DegenerateCorpus(f'training corpus has no rows for {", ".join(missing)}')

    X, y = corpus.values, corpus.labels

    # Sort rows into a canonical order so that permuting the corpus does not change the trees.
    order = np.lexsort(np.vstack([y[None, :], X.T[::-1]]))
    return X[order], y[order], order

def _finish(trees: List[DecisionTree], order: np.ndarray, corpus: LabeledCorpus, config: ForestConfig) -> RandomForest:
    for tree in trees:
        tree.oob = np.sort(order[tree.oob])

    logger.info('trained %d trees on %d rows', len(trees), len(corpus))
    return RandomForest(trees, config, corpus.values.shape[1], corpus.catalog_version)

def _tree_seeds(config: ForestConfig) -> List[np.random.SeedSequence]:
    return np.random.SeedSequence(config.seed).spawn(config.n_trees)

def train_forest(corpus: LabeledCorpus, config: ForestConfig = ForestConfig()) -> RandomForest:
    """
    Trains a random forest on a labeled corpus.

    Every tree sees a bootstrap sample of the corpus and considers ``floor(sqrt(D))``
    random features at each split, choosing the split with the largest Gini decrease.
    Trees are seeded from ``config.seed`` so the result is deterministic.

    Parameters
    ----------
    corpus: :class:`LabeledCorpus`
        At least 8 rows covering all four quadrants.
    config: :class:`ForestConfig`
        The hyperparameters.

    Raises
    ------
    DegenerateCorpus
        The corpus is too small, has a single class or misses a quadrant.
    """
    X, y, order = _prepare(corpus)
    trees = [_grow_tree(X, y, config, np.random.default_rng(seed)) for seed in _tree_seeds(config)]

    return _finish(trees, order, corpus, config)

async def train_forest_async(corpus: LabeledCorpus, config: ForestConfig = ForestConfig(), *, workers: int = 1) -> RandomForest:
    """Same as :func:`train_forest`, growing up to ``workers`` trees at a time."""
    X, y, order = _prepare(corpus)
    trees = await map_in_threads(
        lambda seed: _grow_tree(X, y, config, np.random.default_rng(seed)), _tree_seeds(config), workers=workers
    )

    return _finish(trees, order, corpus, config)

def predict(forest: RandomForest, vector: Union[AttributeVector, np.ndarray]) -> EmotionQuadrant:
    """
    Majority vote over the trees. Ties go to the lowest quadrant.

    Raises
    ------
    CatalogMismatch
        The vector was extracted with another catalog.
    """
    if isinstance(vector, AttributeVector):
        ensure_version(forest.catalog_version, vector.catalog_version)
        vector = vector.values

    return EmotionQuadrant(int(forest.predict_many(np.asarray(vector)[None, :])[0]))

def holdout_accuracy(forest: RandomForest, corpus: LabeledCorpus) -> float:
    ensure_version(forest.catalog_version, corpus.catalog_version)
    return float((forest.predict_many(corpus.values) == corpus.labels).mean())

def oob_accuracy(forest: RandomForest, corpus: LabeledCorpus) -> float:
    """
    Out-of-bag accuracy on the corpus the forest was trained on. Every row is voted on
    only by the trees that did not see it; rows that every tree saw are skipped.
    """
    votes = np.zeros((len(corpus), N_CLASSES), dtype=np.int64)
    for tree in forest.trees:
        if tree.oob.size:
            votes[tree.oob, tree.vote(corpus.values[tree.oob])] += 1

    covered = votes.sum(axis=1) > 0
    if not covered.any():
        logger.warning('no out-of-bag rows to score')
        return 0.0

    return float((votes[covered].argmax(axis=1) == corpus.labels[covered]).mean())

@dataclass
class ImportanceRanking:
    importance: np.ndarray
    order: np.ndarray
    catalog_version: str

    def top(self, k: int) -> List[int]:
        return self.order[:k].tolist()

    def save(self, path: pathlib.Path, columns: Optional[Sequence[str]] = None) -> None:
        data: Dict[str, Any] = {
            'catalog_version': self.catalog_version,
            'importance': self.importance.tolist(),
            'order': self.order.tolist(),
        }
        if columns is not None:
            data['ranked'] = [[columns[index], float(self.importance[index])] for index in self.order[:50].tolist()]

        write_json(pathlib.Path(path), data)

    @classmethod
    def load(cls, path: pathlib.Path) -> ImportanceRanking:
        data = read_json(pathlib.Path(path))
        return cls(
            np.array(data['importance'], dtype=np.float64),
            np.array(data['order'], dtype=np.int64),
            data['catalog_version'],
        )

def _tree_importance(tree: DecisionTree, n_features: int) -> np.ndarray:
    importance = np.zeros(n_features)

    for node in np.flatnonzero(tree.feature != LEAF):
        left, right = tree.left[node], tree.right[node]
        decrease = (
            tree.n_samples[node] * tree.impurity[node]
            - tree.n_samples[left] * tree.impurity[left]
            - tree.n_samples[right] * tree.impurity[right]
        )
        importance[tree.feature[node]] += decrease

    return importance

def feature_importance(forest: RandomForest) -> ImportanceRanking:
    """
    Decrease in Gini impurity per feature, weighted by node sample counts, averaged over
    the trees and normalized once to sum to 1. Ties in the ranking go to the lower index.
    """
    importance = np.mean([_tree_importance(tree, forest.n_features) for tree in forest.trees], axis=0)

    total = importance.sum()
    if total > 0:
        importance = importance / total
    else:
        logger.warning('no tree has any split, falling back to uniform importance')
        importance = np.full(forest.n_features, 1.0 / forest.n_features)

    order = np.lexsort((np.arange(forest.n_features), -importance))
    return ImportanceRanking(importance, order, forest.catalog_version)

@dataclass(frozen=True)
class SelectionConfig:
    method: str = 'topk'
    k: int = 100
    seed: int = 0

@dataclass
class Selection:
    indices: List[int]
    method: str
    catalog_version: str

    def __len__(self) -> int:
        return len(self.indices)

    def save(self, path: pathlib.Path) -> None:
        write_json(pathlib.Path(path), {
            'catalog_version': self.catalog_version,
            'method': self.method,
            'indices': self.indices,
        })

    @classmethod
    def load(cls, path: pathlib.Path) -> Selection:
        data = read_json(pathlib.Path(path))
        return cls([int(index) for index in data['indices']], data['method'], data['catalog_version'])

SelectionMethod = Callable[[ImportanceRanking, FeatureCatalog, SelectionConfig], List[int]]
SELECTION_METHODS: Dict[str, SelectionMethod] = {}

def register_selection(name: str) -> Callable[[SelectionMethod], SelectionMethod]:
    def wrapper(func: SelectionMethod) -> SelectionMethod:
        SELECTION_METHODS[name] = func
        return func

    return wrapper

def _check_k(k: int, available: int) -> None:
    if k < 1:
        raise ConfigError('k must be at least 1')

    if k > available:
        raise KTooLarge(f'k={k} exceeds the {available} available attributes')

@register_selection('topk')
def top_k(ranking: ImportanceRanking, catalog: FeatureCatalog, config: SelectionConfig) -> List[int]:
    _check_k(config.k, catalog.total_dim)
    return ranking.top(config.k)

@register_selection('random')
def random_grouped(ranking: ImportanceRanking, catalog: FeatureCatalog, config: SelectionConfig) -> List[int]:
    """
    Draws ``ceil(k / 7)`` attributes from every group, tops up from the remaining
    attributes when small groups run out, and keeps the first ``k`` drawn in
    round-robin order over the groups.
    """
    _check_k(config.k, catalog.total_dim)

    rng = np.random.default_rng(config.seed)
    per_group = math.ceil(config.k / len(GROUPS))

    draws: List[List[int]] = []
    for group in GROUPS:
        indices = np.array(catalog.group_indices(group), dtype=np.int64)
        draws.append(rng.permutation(indices)[:per_group].tolist())

    picked: List[int] = []
    for turn in range(per_group):
        picked.extend(draw[turn] for draw in draws if turn < len(draw))

    if len(picked) < config.k:
        remaining = np.setdiff1d(np.arange(catalog.total_dim), picked)
        picked.extend(rng.permutation(remaining)[:config.k - len(picked)].tolist())

    return [int(index) for index in picked[:config.k]]

MANUAL_FEATURES = (
    'Note Density per Quarter Note',
    'Rhythmic Density',
    'Mean Pitch',
    'Mean Duration',
    'Mean Velocity',
)

@register_selection('manual')
def manual(ranking: ImportanceRanking, catalog: FeatureCatalog, config: SelectionConfig) -> List[int]:
    """The fixed 17 attributes: the 12 pitch class bins plus five rhythm, pitch and dynamics means."""
    indices = [catalog.index_of('Pitch Class Histogram', bin) for bin in range(12)]
    indices.extend(catalog.index_of(id) for id in MANUAL_FEATURES)

    return indices

def select_attributes(ranking: ImportanceRanking, catalog: FeatureCatalog, config: SelectionConfig = SelectionConfig()) -> Selection:
    """
    Picks attribute indices with the method named by ``config.method``.

    Raises
    ------
    KTooLarge
        ``config.k`` is larger than the catalog.
    ConfigError
        Unknown method.
    """
    catalog.check_version(ranking.catalog_version)

    method = SELECTION_METHODS.get(config.method)
    if method is None:
        raise ConfigError(f'unknown selection method {config.method!r} (expected one of {", ".join(SELECTION_METHODS)})')

    return Selection(method(ranking, catalog, config), config.method, catalog.version)

def sweep(ranking: ImportanceRanking, catalog: FeatureCatalog, ks: Sequence[int], method: str = 'topk', seed: int = 0) -> Dict[int, Selection]:
    """One selection per ``k``."""
    return {k: select_attributes(ranking, catalog, SelectionConfig(method, k, seed)) for k in ks}
