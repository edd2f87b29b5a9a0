import numpy as np
import pytest

from emotune.errors import ConfigError, DegenerateCorpus, EmptyQuadrant, LengthMismatch
from emotune.features import CorpusMatrix
from emotune.labels import EmotionQuadrant, LabeledCorpus
from emotune.mapping import (
    MappingConfig,
    MappingTable,
    Standardizer,
    binarize,
    center_boundary_split,
    compute_mapping,
    compute_medians,
    kmeans,
)

INDICES = [1, 3, 4]

@pytest.fixture
def corpus(rng):
    labels = np.repeat(np.arange(4), 25)
    values = rng.normal(size=(labels.size, 6)) + labels[:, None] * np.array([0, 2, 0, -1, 5, 0])

    return LabeledCorpus(CorpusMatrix(values, [f'f{index}' for index in range(6)], 'test-catalog'), labels)

def test_standardizer(rng):
    values = rng.normal(loc=3.0, scale=2.0, size=(200, 3))
    values[:, 2] = 7.0

    standardizer = Standardizer.fit(values)
    scaled = standardizer.transform(values)

    np.testing.assert_allclose(scaled[:, :2].mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(scaled[:, :2].std(axis=0), 1.0)
    np.testing.assert_allclose(scaled[:, 2], 0.0)
    np.testing.assert_allclose(standardizer.inverse(scaled), values)

def brute_force_closest(corpus, quadrant):
    raw = corpus.values[:, INDICES]
    scaled = Standardizer.fit(raw).transform(raw)

    rows = corpus.rows_of(quadrant)
    mean = scaled[rows].mean(axis=0)
    distances = [np.linalg.norm(scaled[row] - mean) for row in rows]

    return raw[rows[int(np.argmin(distances))]]

def test_closest_picks_the_nearest_real_sample(corpus):
    table = compute_mapping(corpus, INDICES, MappingConfig('closest', n_candidates=3))

    for quadrant in EmotionQuadrant:
        np.testing.assert_array_equal(table.vector(quadrant), brute_force_closest(corpus, quadrant))
        assert len(table.vectors[quadrant]) == 3

        rows = [tuple(row) for row in corpus.values[corpus.rows_of(quadrant)][:, INDICES]]
        assert all(tuple(vector) in rows for vector in table.vectors[quadrant])

def test_center_is_the_mean(corpus):
    table = compute_mapping(corpus, INDICES, MappingConfig('center', n_candidates=4))

    for quadrant in EmotionQuadrant:
        expected = corpus.values[corpus.rows_of(quadrant)][:, INDICES].mean(axis=0)
        np.testing.assert_allclose(table.vector(quadrant), expected)
        assert len(table.vectors[quadrant]) == 1

def test_kmeans_mapping_separates_quadrants(corpus):
    table = compute_mapping(corpus, INDICES, MappingConfig('kmeans', n_clusters=2, n_candidates=2, seed=1))

    firsts = [table.vector(quadrant)[2] for quadrant in EmotionQuadrant]
    assert firsts == sorted(firsts)
    assert all(len(vectors) == 2 for vectors in table.vectors.values())

def test_mapping_is_deterministic(corpus):
    config = MappingConfig('kmeans', seed=5)

    first = compute_mapping(corpus, INDICES, config)
    second = compute_mapping(corpus, INDICES, config)

    for quadrant in EmotionQuadrant:
        np.testing.assert_array_equal(first.vector(quadrant), second.vector(quadrant))

def test_mapping_errors(corpus):
    with pytest.raises(ConfigError):
        compute_mapping(corpus, INDICES, MappingConfig('nearest'))

    without_q4 = corpus.subset(np.flatnonzero(corpus.labels != int(EmotionQuadrant.Q4)))
    with pytest.raises(EmptyQuadrant):
        compute_mapping(without_q4, INDICES)

    table = compute_mapping(corpus, INDICES)
    with pytest.raises(ConfigError):
        table.vector(EmotionQuadrant.Q1, candidate=1)

def test_table_save_and_load(corpus, tmp_path):
    table = compute_mapping(corpus, INDICES, MappingConfig('closest', n_candidates=2))
    table.save(tmp_path / 'mapping.json')

    loaded = MappingTable.load(tmp_path / 'mapping.json')
    assert loaded.indices == INDICES
    assert loaded.method == 'closest'

    for quadrant in EmotionQuadrant:
        for expected, actual in zip(table.vectors[quadrant], loaded.vectors[quadrant]):
            np.testing.assert_array_equal(actual, expected)

def test_kmeans_inertia_never_increases(rng):
    points = np.concatenate([rng.normal(loc=center, size=(40, 2)) for center in (-6, 0, 6)])
    result = kmeans(points, 3, restarts=20, seed=2)

    assert all(later <= earlier + 1e-9 for earlier, later in zip(result.history, result.history[1:]))
    assert sorted(np.bincount(result.labels).tolist()) == [40, 40, 40]

def test_kmeans_caps_k(rng):
    result = kmeans(rng.normal(size=(3, 2)), 10)

    assert result.centroids.shape == (3, 2)
    assert result.inertia == pytest.approx(0.0)

def test_medians_and_binarize():
    values = np.array([[1.0, 10.0], [2.0, 30.0], [3.0, 20.0], [4.0, 40.0]])
    medians = compute_medians(values)

    np.testing.assert_allclose(medians, [2.5, 25.0])
    np.testing.assert_array_equal(binarize(np.array([2.5, 26.0]), medians), [0, 1])

    with pytest.raises(LengthMismatch):
        binarize(np.zeros(3), medians)

    with pytest.raises(DegenerateCorpus):
        compute_medians(np.zeros((0, 2)))

def test_center_boundary_split(corpus):
    split = center_boundary_split(corpus, INDICES, 5)

    for quadrant, (center, boundary) in split.items():
        assert len(center) == len(boundary) == 5
        assert not set(center) & set(boundary)
        assert all(corpus.labels[row] == int(quadrant) for row in center + boundary)

def test_center_boundary_split_shrinks_small_quadrants(corpus):
    small = corpus.subset(list(range(25)) + list(range(25, 29)) + list(range(50, 100)))
    split = center_boundary_split(small, INDICES, 5)

    assert len(split[EmotionQuadrant.Q2][0]) == 2
    assert len(split[EmotionQuadrant.Q1][0]) == 5
