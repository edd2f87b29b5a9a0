from typing import List, Sequence

from dataclasses import asdict

import numpy as np
import pytest

from emotune.corpus import SynthSpec, synth_corpus
from emotune.errors import DegenerateCorpus, LengthMismatch
from emotune.evaluation import (
    ForestClassifier,
    ObjectiveClassifier,
    TransformerClassifier,
    bias_experiment,
    l1_distance_analysis,
    objective_accuracy,
    pairwise_l1,
    pca_project,
    save_projection,
)
from emotune.features import CorpusMatrix, extract_corpus
from emotune.forest import ForestConfig, train_forest
from emotune.labels import EmotionQuadrant, LabeledCorpus
from emotune.mapping import Standardizer
from emotune.midi import read_midi
from emotune.score import Note, Score, midi_to_score, quantize

class PitchClassifier(ObjectiveClassifier):
    """Reads the quadrant back from the first pitch of a piece (60 + quadrant)."""

    name = 'pitch'

    def predict_scores(self, scores: Sequence[Score]) -> List[EmotionQuadrant]:
        return [EmotionQuadrant(score.notes[0].pitch - 60) for score in scores]

def piece(quadrant: int) -> Score:
    return Score([Note(0, 480, 60 + quadrant, 64)], 480)

def bright_piece(length: int) -> Score:
    return Score([Note(120 * index, 120, 84 + (index % 3), 110) for index in range(length)], 480)

def dark_piece(length: int) -> Score:
    return Score([Note(480 * index, 480, 36 + (index % 2), 40) for index in range(length)], 480)

def tense_piece(length: int) -> Score:
    return Score([Note(240 * index, 240, 48 + (index % 4), 120) for index in range(length)], 480)

def calm_piece(length: int) -> Score:
    return Score([Note(960 * index, 960, 72 + (index % 2), 30) for index in range(length)], 480)

def test_objective_accuracy():
    scores = [piece(0), piece(1), piece(2), piece(3)]
    intended = [EmotionQuadrant.Q1, EmotionQuadrant.Q2, EmotionQuadrant.Q1, EmotionQuadrant.Q4]

    assert objective_accuracy(scores, intended, PitchClassifier()) == pytest.approx(0.75)

    with pytest.raises(LengthMismatch):
        objective_accuracy(scores, intended[:2], PitchClassifier())

    with pytest.raises(DegenerateCorpus):
        objective_accuracy([], [], PitchClassifier())

def test_forest_classifier_on_scores(catalog):
    high = [bright_piece(length) for length in range(4, 12)]
    tense = [tense_piece(length) for length in range(4, 12)]
    low = [dark_piece(length) for length in range(4, 12)]
    calm = [calm_piece(length) for length in range(4, 12)]

    matrix = extract_corpus(high + tense + low + calm, catalog)
    corpus = LabeledCorpus(matrix, [0] * 8 + [1] * 8 + [2] * 8 + [3] * 8)

    classifier = ForestClassifier(train_forest(corpus, ForestConfig(n_trees=20, seed=0)), catalog)
    predicted = classifier.predict_scores([bright_piece(6), dark_piece(9)])

    assert predicted == [EmotionQuadrant.Q1, EmotionQuadrant.Q3]

def test_transformer_classifier_tokenizes_scores():
    class LengthModel:
        def predict(self, sequences):
            self.sequences = sequences
            return np.array([len(sequence) % 4 for sequence in sequences])

    model = LengthModel()
    predicted = TransformerClassifier(model).predict_scores([piece(0), Score([], 480)])

    # BOS Bar Tempo + four note tokens + EOS, and BOS EOS.
    assert [len(sequence) for sequence in model.sequences] == [8, 2]
    assert predicted == [EmotionQuadrant.Q1, EmotionQuadrant.Q3]

def test_pairwise_l1():
    distances = pairwise_l1(np.array([[0.0, 0.0], [1.0, 2.0], [-1.0, 0.0]]))

    np.testing.assert_allclose(distances, [[0, 3, 1], [3, 0, 4], [1, 4, 0]])

def test_l1_distance_analysis():
    vectors = np.array([[0.0], [1.0], [10.0], [11.0]])
    report = l1_distance_analysis(vectors, [0, 0, 1, 1])

    assert report.intra == pytest.approx(1.0)
    assert report.inter == pytest.approx(10.0)
    assert report.gap == pytest.approx(9.0)
    assert report.n_intra_pairs == 2
    assert report.n_inter_pairs == 4
    assert report.intra_by_quadrant == {'Q1': 1.0, 'Q2': 1.0}
    assert report.curves['inter'] == [9.0, 10.0, 10.0, 11.0]

def test_l1_distance_analysis_standardizes():
    vectors = np.array([[0.0], [1.0], [10.0], [11.0]])
    standardizer = Standardizer(np.zeros(1), np.full(1, 2.0))

    report = l1_distance_analysis(vectors, [0, 0, 1, 1], standardizer)
    assert report.inter == pytest.approx(5.0)

    with pytest.raises(LengthMismatch):
        l1_distance_analysis(vectors, [0, 1])

def test_distance_report_files(tmp_path):
    report = l1_distance_analysis(np.array([[0.0], [1.0], [10.0]]), [0, 0, 1])

    report.save(tmp_path / 'distances.json')
    report.save_curves(tmp_path / 'curves.csv')

    lines = (tmp_path / 'curves.csv').read_text().splitlines()
    assert lines == ['rank,intra,inter', '0,1.0,9.0', '1,,10.0']
    assert '"gap"' in (tmp_path / 'distances.json').read_text()

@pytest.fixture
def corpus(planted):
    values, labels = planted
    return LabeledCorpus(CorpusMatrix(values, [f'f{index}' for index in range(12)], 'test-catalog'), labels)

def test_bias_experiment_on_real_samples(corpus):
    classifier = ForestClassifier(train_forest(corpus, ForestConfig(n_trees=30, seed=1)))
    report = bias_experiment(corpus, [5, 0], 4, classifier)

    assert report.counts == {'center': 16, 'boundary': 16}
    assert report.real_center >= 0.9
    assert 0.0 <= report.real_boundary <= 1.0
    assert report.generated_center is None
    assert set(report.per_quadrant) == {'Q1', 'Q2', 'Q3', 'Q4'}

def test_bias_experiment_with_generation(corpus, tmp_path):
    classifier = ForestClassifier(train_forest(corpus, ForestConfig(n_trees=10, seed=1)))
    calls = []

    def generate(values, quadrant):
        calls.append(values.shape)
        return piece(int(quadrant))

    report = bias_experiment(corpus, [5, 0], 3, classifier, generate=generate, generated_classifier=PitchClassifier())

    assert calls == [(2,)] * 24
    assert report.generated_center == 1.0
    assert report.generated_boundary == 1.0

    report.save(tmp_path / 'bias.json')
    assert (tmp_path / 'bias.json').exists()

def test_pca_project(rng, tmp_path):
    direction = np.array([1.0, 2.0, -1.0])
    vectors = rng.normal(size=(50, 1)) * direction + rng.normal(scale=0.01, size=(50, 3))

    coordinates, components, variances = pca_project(vectors)

    assert coordinates.shape == (50, 2)
    assert components.shape == (2, 3)
    assert variances[0] > 100 * variances[1]
    assert all(component[np.abs(component).argmax()] > 0 for component in components)

    save_projection(tmp_path / 'projection.csv', coordinates, [str(index) for index in range(50)], ['Q1'] * 50)
    lines = (tmp_path / 'projection.csv').read_text().splitlines()

    assert lines[0] == 'name,label,x,y'
    assert len(lines) == 51

    with pytest.raises(DegenerateCorpus):
        pca_project(vectors[:2])

@pytest.mark.slow
def test_relabeled_boundary_on_a_synthetic_corpus(tmp_path, catalog):
    manifest = synth_corpus(SynthSpec(boundary_label_noise=0.2), 40, 11, tmp_path)

    scores = [quantize(midi_to_score(read_midi(path))) for path in manifest.paths()]
    matrix = extract_corpus(scores, catalog, names=[entry.name for entry in manifest.entries])
    corpus = LabeledCorpus.from_manifest(matrix, [asdict(entry) for entry in manifest.entries])

    indices = [catalog.index_of('Note Density per Quarter Note'), catalog.index_of('Mean Tempo')]
    train, heldout = corpus.subset(range(0, len(corpus), 2)), corpus.subset(range(1, len(corpus), 2))

    forest = train_forest(train, ForestConfig(n_trees=50, seed=0))
    report = bias_experiment(heldout, indices, 5, ForestClassifier(forest, catalog))

    assert report.real_center >= 0.9
    assert report.real_center >= report.real_boundary

    values = corpus.values[:, indices]
    standardizer = Standardizer.fit(values)
    distances = l1_distance_analysis(values, corpus.labels, standardizer)

    scaled = standardizer.transform(values)
    pairs = [
        (corpus.labels[first] == corpus.labels[second], np.abs(scaled[first] - scaled[second]).sum())
        for first in range(len(corpus))
        for second in range(first + 1, len(corpus))
    ]

    assert distances.inter > distances.intra
    assert distances.intra == pytest.approx(np.mean([distance for same, distance in pairs if same]))
    assert distances.inter == pytest.approx(np.mean([distance for same, distance in pairs if not same]))
