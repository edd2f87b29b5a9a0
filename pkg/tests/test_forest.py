import asyncio

import numpy as np
import pytest

from emotune.errors import CatalogMismatch, ConfigError, DegenerateCorpus, KTooLarge, ShapeMismatch
from emotune.features import CorpusMatrix, GROUPS
from emotune.forest import (
    DecisionTree,
    ForestConfig,
    ImportanceRanking,
    RandomForest,
    Selection,
    SelectionConfig,
    feature_importance,
    holdout_accuracy,
    oob_accuracy,
    predict,
    select_attributes,
    sweep,
    train_forest,
    train_forest_async,
)
from emotune.labels import EmotionQuadrant, LabeledCorpus

CONFIG = ForestConfig(n_trees=40, seed=7)

def labeled(values, labels, version='test-catalog'):
    columns = [f'f{index}' for index in range(values.shape[1])]
    return LabeledCorpus(CorpusMatrix(values, columns, version), labels)

@pytest.fixture
def corpus(planted):
    return labeled(*planted)

def test_planted_feature_ranks_first(corpus):
    forest = train_forest(corpus, CONFIG)
    ranking = feature_importance(forest)

    assert ranking.order[0] == 5
    assert ranking.importance.sum() == pytest.approx(1.0)
    assert (ranking.importance >= 0).all()

def stump(feature, impurity, n_samples):
    return DecisionTree(
        feature=np.array([feature, -1, -1]),
        threshold=np.array([0.0, 0.0, 0.0]),
        left=np.array([1, -1, -1]),
        right=np.array([2, -1, -1]),
        counts=np.zeros((3, 4)),
        impurity=np.array(impurity, dtype=np.float64),
        n_samples=np.array(n_samples, dtype=np.float64),
    )

def test_importance_weights_trees_by_their_decrease():
    # Decreases of 4 * 0.5 - 0 = 2 on f0 and 4 * 0.5 - 2 * 0.5 = 1 on f1.
    trees = [stump(0, [0.5, 0.0, 0.0], [4, 2, 2]), stump(1, [0.5, 0.5, 0.0], [4, 2, 2])]
    ranking = feature_importance(RandomForest(trees, CONFIG, 3, 'test-catalog'))

    np.testing.assert_allclose(ranking.importance, [2 / 3, 1 / 3, 0.0])
    assert ranking.order.tolist() == [0, 1, 2]

def test_importance_matches_summed_decreases(corpus):
    forest = train_forest(corpus, ForestConfig(n_trees=10, max_depth=2, seed=0))

    expected = np.zeros(12)
    for tree in forest.trees:
        for node in range(tree.n_nodes):
            if tree.feature[node] != -1:
                left, right = tree.left[node], tree.right[node]
                expected[tree.feature[node]] += (
                    tree.n_samples[node] * tree.impurity[node]
                    - tree.n_samples[left] * tree.impurity[left]
                    - tree.n_samples[right] * tree.impurity[right]
                )

    np.testing.assert_allclose(feature_importance(forest).importance, expected / expected.sum())

def test_forest_separates_planted_classes(corpus):
    forest = train_forest(corpus, CONFIG)

    assert holdout_accuracy(forest, corpus) >= 0.95
    assert oob_accuracy(forest, corpus) > 0.7

    row = np.zeros(12)
    row[5] = 6.0
    assert predict(forest, row) is EmotionQuadrant.Q3

def test_training_is_deterministic(corpus, planted):
    first = train_forest(corpus, CONFIG)
    second = train_forest(corpus, CONFIG)

    values, labels = planted
    permutation = np.random.default_rng(3).permutation(labels.size)
    shuffled = train_forest(labeled(values[permutation], labels[permutation]), CONFIG)

    rows = np.random.default_rng(4).normal(size=(50, 12)) * 4
    np.testing.assert_array_equal(first.votes(rows), second.votes(rows))
    np.testing.assert_array_equal(first.votes(rows), shuffled.votes(rows))

def test_async_training_matches(corpus):
    forest = train_forest(corpus, CONFIG)
    threaded = asyncio.run(train_forest_async(corpus, CONFIG, workers=4))

    rows = np.random.default_rng(5).normal(size=(50, 12)) * 4
    np.testing.assert_array_equal(forest.votes(rows), threaded.votes(rows))

def test_save_and_load(corpus, tmp_path):
    forest = train_forest(corpus, CONFIG)
    forest.save(tmp_path / 'forest.json')

    loaded = RandomForest.load(tmp_path / 'forest.json')
    np.testing.assert_array_equal(loaded.predict_many(corpus.values), forest.predict_many(corpus.values))
    assert loaded.config == CONFIG

    ranking = feature_importance(forest)
    ranking.save(tmp_path / 'importance.json', corpus.matrix.columns)

    back = ImportanceRanking.load(tmp_path / 'importance.json')
    np.testing.assert_array_equal(back.order, ranking.order)
    np.testing.assert_allclose(back.importance, ranking.importance)

def test_shallow_trees(corpus):
    forest = train_forest(corpus, ForestConfig(n_trees=5, max_depth=1, seed=0))
    assert all(tree.n_nodes <= 3 for tree in forest.trees)

def test_degenerate_corpora(planted):
    values, labels = planted

    with pytest.raises(DegenerateCorpus):
        train_forest(labeled(values[:7], labels[:7]), CONFIG)

    with pytest.raises(DegenerateCorpus):
        train_forest(labeled(values[:20], np.zeros(20, dtype=np.int64)), CONFIG)

    present = labels != 3
    with pytest.raises(DegenerateCorpus, match='Q4'):
        train_forest(labeled(values[present], labels[present]), CONFIG)

def test_wrong_width_and_catalog(corpus):
    forest = train_forest(corpus, CONFIG)

    with pytest.raises(ShapeMismatch):
        forest.votes(np.zeros((1, 11)))

    with pytest.raises(CatalogMismatch):
        holdout_accuracy(forest, labeled(corpus.values, corpus.labels, 'other-catalog'))

def test_invalid_config():
    with pytest.raises(ConfigError):
        ForestConfig(n_trees=0)

    with pytest.raises(ConfigError):
        ForestConfig(min_samples_leaf=0)

@pytest.fixture
def ranking(catalog):
    importance = np.random.default_rng(0).random(catalog.total_dim)
    importance /= importance.sum()

    order = np.lexsort((np.arange(importance.size), -importance))
    return ImportanceRanking(importance, order, catalog.version)

def test_topk_selection(ranking, catalog):
    selection = select_attributes(ranking, catalog, SelectionConfig('topk', 10))

    assert selection.indices == ranking.order[:10].tolist()
    assert selection.method == 'topk'
    assert ranking.importance[selection.indices[0]] == ranking.importance.max()

def test_random_selection_covers_every_group(ranking, catalog):
    selection = select_attributes(ranking, catalog, SelectionConfig('random', 21, seed=3))

    assert len(selection) == 21
    assert len(set(selection.indices)) == 21
    assert {catalog.group_of(index) for index in selection.indices} == set(GROUPS)

    again = select_attributes(ranking, catalog, SelectionConfig('random', 21, seed=3))
    assert again.indices == selection.indices

def test_manual_selection(ranking, catalog):
    selection = select_attributes(ranking, catalog, SelectionConfig('manual'))

    assert len(selection) == 17
    assert selection.indices[0] == catalog.index_of('Pitch Class Histogram', 0)
    assert catalog.index_of('Mean Velocity') in selection.indices

def test_selection_errors(ranking, catalog):
    with pytest.raises(KTooLarge):
        select_attributes(ranking, catalog, SelectionConfig('topk', catalog.total_dim + 1))

    with pytest.raises(ConfigError):
        select_attributes(ranking, catalog, SelectionConfig('topk', 0))

    with pytest.raises(ConfigError):
        select_attributes(ranking, catalog, SelectionConfig('best', 10))

    stale = ImportanceRanking(ranking.importance, ranking.order, 'other-catalog')
    with pytest.raises(CatalogMismatch):
        select_attributes(stale, catalog, SelectionConfig('topk', 10))

def test_sweep(ranking, catalog, tmp_path):
    selections = sweep(ranking, catalog, [5, 20, 50])

    assert list(selections) == [5, 20, 50]
    assert selections[20].indices[:5] == selections[5].indices

    selections[20].save(tmp_path / 'selection.json')
    assert Selection.load(tmp_path / 'selection.json') == selections[20]

def test_small_planted_corpus():
    rng = np.random.default_rng(8)

    def draw(size):
        labels = np.repeat(np.arange(4), size // 4)
        values = rng.normal(size=(size, 12))
        values[:, 2] = labels * 3 + rng.normal(scale=0.1, size=size)

        return labeled(values, labels)

    train, heldout = draw(32), draw(32)
    forest = train_forest(train, ForestConfig(n_trees=100, features_per_split=6, seed=1))
    ranking = feature_importance(forest)

    assert holdout_accuracy(forest, heldout) >= 0.95
    assert ranking.order[0] == 2
    assert abs(ranking.importance.sum() - 1.0) <= 1e-9
