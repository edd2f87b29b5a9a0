"""
Resumable pipeline stages.

Every stage writes into its own directory under the artifact root together with a
``stage.json`` record holding the hash of its inputs, the config hash, the catalog
version and the hashes of the files it produced. A stage whose input hash is
unchanged and whose files are intact is skipped.
"""
from __future__ import annotations

from typing import Any, Awaitable, Callable, Dict, List, Optional, Sequence, Tuple

from dataclasses import asdict, dataclass, is_dataclass, replace
import itertools
import logging
import pathlib
import shutil

import numpy as np

from emotune.config import PipelineConfig, config_hash
from emotune.corpus import Manifest, ManifestEntry, split_dataset
from emotune.errors import ConfigError, DegenerateCorpus, EmptySequence, ShapeMismatch, StageError
from emotune.evaluation import (
    ForestClassifier,
    ObjectiveClassifier,
    TransformerClassifier,
    bias_experiment,
    l1_distance_analysis,
    objective_accuracy,
    pca_project,
    save_projection,
)
from emotune.features import CorpusMatrix, FeatureCatalog, default_catalog, ensure_version, extract_corpus_async
from emotune.forest import (
    ImportanceRanking,
    RandomForest,
    Selection,
    feature_importance,
    holdout_accuracy,
    oob_accuracy,
    select_attributes,
    train_forest_async,
)
from emotune.labels import EmotionQuadrant, LabeledCorpus
from emotune.mapping import MappingTable, Standardizer, binarize, compute_mapping, compute_medians
from emotune.midi import read_midi, save_midi
from emotune.model import (
    Checkpoint,
    SamplerConfig,
    TrainingSample,
    build_model,
    generate,
    generate_many,
    load_checkpoint,
    save_checkpoint,
    save_loss_log,
    train,
    train_classifier,
)
from emotune.score import Score, TokenSequence, midi_to_score, quantize, save_tokens, score_to_midi, score_to_tokens, tokens_to_score
from emotune.utils import hash_data, hash_file, map_in_threads, read_json, to_thread, write_json

logger = logging.getLogger('emotune.pipeline')

__all__ = (
    'Stage',
    'StageContext',
    'StageResult',
    'STAGES',
    'PIPELINE',
    'register_stage',
    'run_stages',
    'run_pipeline',
    'corpus_manifest',
    'load_scores',
    'generate_pieces',
)

RECORD = 'stage.json'

PIPELINE = ('extract', 'train-forest', 'select-attrs', 'map-emotion', 'train', 'generate', 'evaluate')

@dataclass
class StageContext:
    config: PipelineConfig
    catalog: FeatureCatalog
    directory: pathlib.Path

    @property
    def root(self) -> pathlib.Path:
        return self.config.artifacts

    def stage_dir(self, name: str) -> pathlib.Path:
        return self.root / name

    @property
    def workers(self) -> int:
        return self.config.workers

StageFunc = Callable[[StageContext], Awaitable[None]]

@dataclass(frozen=True)
class Stage:
    name: str
    func: StageFunc
    requires: Tuple[str, ...]
    sections: Tuple[str, ...]
    fingerprint: Optional[Callable[[PipelineConfig], Any]] = None

@dataclass
class StageResult:
    name: str
    skipped: bool
    directory: pathlib.Path

STAGES: Dict[str, Stage] = {}

def register_stage(
    name: str,
    *,
    requires: Sequence[str] = (),
    sections: Sequence[str] = (),
    fingerprint: Optional[Callable[[PipelineConfig], Any]] = None
) -> Callable[[StageFunc], StageFunc]:
    def wrapper(func: StageFunc) -> StageFunc:
        STAGES[name] = Stage(name, func, tuple(requires), tuple(sections), fingerprint)
        return func
    return wrapper

def _section(config: PipelineConfig, name: str) -> Any:
    value = getattr(config, name)
    return asdict(value) if is_dataclass(value) else value

def _outputs(directory: pathlib.Path) -> Dict[str, str]:
    files = sorted(path for path in directory.rglob('*') if path.is_file() and path.name != RECORD)
    return {path.relative_to(directory).as_posix(): hash_file(path) for path in files}

def _read_record(directory: pathlib.Path) -> Optional[Dict[str, Any]]:
    path = directory / RECORD
    if not path.exists():
        return None

    return read_json(path)

def _input_hash(stage: Stage, config: PipelineConfig, records: Dict[str, Dict[str, Any]]) -> str:
    return hash_data({
        'stage': stage.name,
        'catalog_version': config.catalog_version,
        'config': {name: _section(config, name) for name in stage.sections},
        'upstream': {name: records[name]['outputs'] for name in stage.requires},
        'fingerprint': stage.fingerprint(config) if stage.fingerprint is not None else None,
    })

def _is_fresh(record: Optional[Dict[str, Any]], digest: str, directory: pathlib.Path) -> bool:
    if record is None or record.get('input_hash') != digest:
        return False

    return _outputs(directory) == record.get('outputs')

def _resolve(names: Sequence[str]) -> List[str]:
    ordered: List[str] = []

    def visit(name: str) -> None:
        if name not in STAGES:
            raise StageError(name, KeyError(f'unknown stage (expected one of {", ".join(STAGES)})'))

        for requirement in STAGES[name].requires:
            visit(requirement)

        if name not in ordered:
            ordered.append(name)

    for name in names:
        visit(name)

    return ordered

async def run_stages(config: PipelineConfig, names: Sequence[str], *, force: bool = False) -> List[StageResult]:
    """
    Runs the named stages and whatever they depend on, in dependency order.

    Parameters
    ----------
    config: :class:`PipelineConfig`
        The run configuration.
    names: Sequence[:class:`str`]
        Stage names from :data:`STAGES`.
    force: :class:`bool`
        Re-run the named stages even when they are up to date. Dependencies are still
        skipped when fresh.

    Raises
    ------
    StageError
        A stage failed; the original exception is kept as ``cause``.
    """
    catalog = default_catalog()
    ensure_version(catalog.version, config.catalog_version)

    records: Dict[str, Dict[str, Any]] = {}
    results: List[StageResult] = []

    for name in _resolve(names):
        stage = STAGES[name]
        directory = config.artifacts / name

        try:
            digest = _input_hash(stage, config, records)
        except Exception as exc:
            raise StageError(name, exc) from exc

        record = _read_record(directory)

        if _is_fresh(record, digest, directory) and not (force and name in names):
            logger.info('stage %r is up to date', name)

            assert record is not None
            records[name] = record
            results.append(StageResult(name, True, directory))
            continue

        logger.info('running stage %r', name)
        if directory.exists():
            shutil.rmtree(directory)
        directory.mkdir(parents=True)

        try:
            await stage.func(StageContext(config, catalog, directory))
        except (KeyboardInterrupt, StageError):
            raise
        except Exception as exc:
            raise StageError(name, exc) from exc

        record = {
            'stage': name,
            'input_hash': digest,
            'config_hash': config_hash(config),
            'catalog_version': catalog.version,
            'outputs': _outputs(directory),
        }
        write_json(directory / RECORD, record)

        records[name] = record
        results.append(StageResult(name, False, directory))

    return results

async def run_pipeline(config: PipelineConfig, *, force: bool = False, bias: bool = False) -> List[StageResult]:
    """Runs every pipeline stage, plus ``analyze-bias`` when ``bias`` is set."""
    names = list(PIPELINE) + (['analyze-bias'] if bias else [])
    return await run_stages(config, names, force=force)

def corpus_manifest(config: PipelineConfig) -> Manifest:
    path = config.paths.manifest_path
    if path.exists():
        return Manifest.load(path)

    if config.paths.manifest is not None:
        raise ConfigError(f'manifest {str(path)!r} does not exist')

    return Manifest.scan(pathlib.Path(config.paths.corpus))

def _corpus_fingerprint(config: PipelineConfig) -> Dict[str, Any]:
    manifest = corpus_manifest(config)
    return {
        'split': list(config.split),
        'seed': config.seed,
        'entries': [asdict(entry) for entry in manifest.entries],
        'files': [hash_file(path) for path in manifest.paths()],
    }

def _load_score(path: pathlib.Path) -> Score:
    return quantize(midi_to_score(read_midi(path)))

async def load_scores(paths: Sequence[pathlib.Path], workers: int = 1) -> List[Score]:
    """Reads and quantizes MIDI files, ``workers`` at a time."""
    return await map_in_threads(_load_score, list(paths), workers=workers)

def _matrix(context: StageContext) -> CorpusMatrix:
    return CorpusMatrix.load(context.stage_dir('extract') / 'corpus', context.catalog)

def _split(context: StageContext, name: str) -> Manifest:
    return Manifest.load(context.stage_dir('extract') / f'{name}.json')

def _labeled(context: StageContext, *names: str) -> LabeledCorpus:
    matrix = _matrix(context)
    entries = [asdict(entry) for name in names for entry in _split(context, name).entries]

    return LabeledCorpus.from_manifest(matrix, entries)

def _selection(context: StageContext) -> Selection:
    selection = Selection.load(context.stage_dir('select-attrs') / 'selection.json')
    context.catalog.check_version(selection.catalog_version)

    return selection

@register_stage('extract', sections=('split',), fingerprint=_corpus_fingerprint)
async def extract(context: StageContext) -> None:
    manifest = corpus_manifest(context.config)
    if not manifest.entries:
        raise DegenerateCorpus(f'no MIDI files in {str(manifest.root)!r}')

    scores = await load_scores(manifest.paths(), context.workers)
    matrix = await extract_corpus_async(
        scores, context.catalog, names=[entry.name for entry in manifest.entries], workers=context.workers
    )

    matrix.save(context.directory / 'corpus')
    matrix.save_csv(context.directory / 'corpus.csv')

    for name, part in split_dataset(manifest, context.config.split, context.config.seed).items():
        part.save(context.directory / f'{name}.json')

    logger.info('extracted %d attribute vectors of dimension %d', len(matrix), len(matrix.columns))

@register_stage('train-forest', requires=('extract',), sections=('forest',))
async def train_forest_stage(context: StageContext) -> None:
    corpus = _labeled(context, 'train')
    forest = await train_forest_async(corpus, context.config.forest, workers=context.workers)

    forest.save(context.directory / 'forest.json')
    feature_importance(forest).save(context.directory / 'importance.json', context.catalog.columns)

    heldout = _labeled(context, 'valid', 'test')
    write_json(context.directory / 'accuracy.json', {
        'oob': oob_accuracy(forest, corpus),
        'holdout': holdout_accuracy(forest, heldout) if len(heldout) else None,
        'n_train': len(corpus),
        'n_holdout': len(heldout),
    })

@register_stage('select-attrs', requires=('train-forest',), sections=('selection',))
async def select_attrs(context: StageContext) -> None:
    ranking = ImportanceRanking.load(context.stage_dir('train-forest') / 'importance.json')

    selection = select_attributes(ranking, context.catalog, context.config.selection)
    selection.save(context.directory / 'selection.json')

    columns = context.catalog.columns
    logger.info('selected %d attributes, first: %s', len(selection), ', '.join(columns[index] for index in selection.indices[:5]))

@register_stage('map-emotion', requires=('extract', 'select-attrs'), sections=('mapping',))
async def map_emotion(context: StageContext) -> None:
    table = compute_mapping(_labeled(context, 'train'), _selection(context).indices, context.config.mapping)
    table.save(context.directory / 'mapping.json')

def _init_fingerprint(config: PipelineConfig) -> Optional[Dict[str, str]]:
    if config.paths.init_from is None:
        return None

    return _outputs(pathlib.Path(config.paths.init_from))

def _training_samples(scores: Sequence[Score], values: np.ndarray, medians: np.ndarray) -> List[TrainingSample]:
    samples: List[TrainingSample] = []
    for score, row in zip(scores, values):
        if score.is_empty:
            logger.warning('skipping an empty score in the training data')
            continue

        samples.append(TrainingSample(score_to_tokens(score).tokens, binarize(row, medians)))

    return samples

@register_stage('train', requires=('extract', 'select-attrs'), sections=('model', 'model_overrides', 'train', 'seed'), fingerprint=_init_fingerprint)
async def train_model(context: StageContext) -> None:
    config = context.config
    indices = _selection(context).indices

    manifest = _split(context, 'train')
    matrix = _matrix(context)

    values = matrix.rows([entry.name for entry in manifest.entries])[:, indices]
    medians = compute_medians(values)

    scores = await load_scores(manifest.paths(), context.workers)
    samples = _training_samples(scores, values, medians)

    if config.paths.init_from is not None:
        initial = load_checkpoint(pathlib.Path(config.paths.init_from))
        ensure_version(initial.catalog_version, context.catalog.version)

        if initial.indices != indices:
            raise ShapeMismatch('the initial checkpoint was trained on other selected attributes')

        model = initial.model
        logger.info('fine-tuning from %s', config.paths.init_from)
    else:
        model = build_model(config.model_config(len(indices)), seed=config.seed)

    result = await to_thread(train, model, samples, config.train_config())

    save_checkpoint(context.directory / 'checkpoint', Checkpoint(result.model, context.catalog.version, indices, medians, len(result.log)))
    save_loss_log(context.directory / 'loss.csv', result.log)

def decode(sequence: TokenSequence) -> Score:
    """Detokenizes a generated sequence; sequences without notes give an empty score."""
    try:
        return tokens_to_score(sequence)
    except EmptySequence:
        logger.warning('generated a sequence without notes')
        return Score([])

async def generate_pieces(
    checkpoint: Checkpoint,
    vectors: Sequence[np.ndarray],
    labels: Sequence[str],
    sampler: SamplerConfig,
    directory: pathlib.Path,
    *,
    workers: int = 1
) -> Manifest:
    """
    Generates one piece per attribute vector and writes ``<name>.mid``, ``<name>.tokens``
    and ``manifest.json`` into ``directory``. Names are ``<label>_<index>``.
    """
    sequences = await generate_many(checkpoint.model, vectors, checkpoint.medians, sampler, workers=workers)

    entries: List[ManifestEntry] = []
    counters: Dict[str, int] = {}

    for label, sequence in zip(labels, sequences):
        index = counters.get(label, 0)
        counters[label] = index + 1

        name = f'{label}_{index:04d}'
        score = decode(sequence)

        save_tokens(directory / f'{name}.tokens', sequence)
        save_midi(directory / f'{name}.mid', score_to_midi(score))

        extra = {'tokens': len(sequence), 'notes': len(score.notes), 'dropped_tokens': score.dropped_tokens}
        entries.append(ManifestEntry(name, f'{name}.mid', label if label in EmotionQuadrant.__members__ else None, None, extra))

    manifest = Manifest(directory, entries, {'sampler': asdict(sampler)})
    manifest.save(directory / 'manifest.json')

    logger.info('generated %d pieces into %s', len(entries), directory)
    return manifest

@register_stage('generate', requires=('train', 'map-emotion'), sections=('sampler', 'generate'))
async def generate_stage(context: StageContext) -> None:
    config = context.config

    checkpoint = load_checkpoint(context.stage_dir('train') / 'checkpoint')
    table = MappingTable.load(context.stage_dir('map-emotion') / 'mapping.json')

    ensure_version(checkpoint.catalog_version, table.catalog_version)
    if table.indices != checkpoint.indices:
        raise ShapeMismatch('the mapping table and the checkpoint use different attributes')

    vectors: List[np.ndarray] = []
    labels: List[str] = []
    for quadrant in EmotionQuadrant:
        vector = table.vector(quadrant, config.generate.candidate)

        vectors.extend([vector] * config.generate.n_per_quadrant)
        labels.extend([quadrant.name] * config.generate.n_per_quadrant)

    await generate_pieces(checkpoint, vectors, labels, config.sampler, context.directory, workers=context.workers)

def _classifier(context: StageContext) -> ObjectiveClassifier:
    config = context.config
    if config.evaluate.classifier == 'forest':
        return ForestClassifier(RandomForest.load(context.stage_dir('train-forest') / 'forest.json'), context.catalog)

    manifest = _split(context, 'train')
    labeled = [entry for entry in manifest.entries if entry.label]

    scores = [_load_score(manifest.root / entry.file) for entry in labeled]
    model = train_classifier(
        [score_to_tokens(score).tokens for score in scores],
        [int(EmotionQuadrant.parse(entry.label)) for entry in labeled],  # type: ignore[arg-type]
        config.model_config(0),
        replace(config.train_config(), max_steps=config.evaluate.classifier_steps),
    )

    return TransformerClassifier(model)

@register_stage('evaluate', requires=('extract', 'train-forest', 'select-attrs', 'generate'), sections=('evaluate',))
async def evaluate(context: StageContext) -> None:
    generated = Manifest.load(context.stage_dir('generate') / 'manifest.json')
    scores = await load_scores(generated.paths(), context.workers)

    intended = [EmotionQuadrant.parse(entry.label) for entry in generated.entries]  # type: ignore[arg-type]
    classifier = _classifier(context)

    predicted = classifier.predict_scores(scores)
    per_quadrant: Dict[str, Optional[float]] = {}
    for quadrant in EmotionQuadrant:
        hits = [int(guess) == int(quadrant) for guess, label in zip(predicted, intended) if label == quadrant]
        per_quadrant[quadrant.name] = float(np.mean(hits)) if hits else None

    accuracy = objective_accuracy(scores, intended, classifier)
    write_json(context.directory / 'objective.json', {
        'classifier': classifier.name,
        'accuracy': accuracy,
        'per_quadrant': per_quadrant,
        'n_pieces': len(scores),
        'empty_pieces': sum(score.is_empty for score in scores),
    })

    indices = _selection(context).indices
    real = _labeled(context, 'train')
    standardizer = Standardizer.fit(real.values[:, indices])

    features = await extract_corpus_async(scores, context.catalog, names=[entry.name for entry in generated.entries], workers=context.workers)
    vectors = features.values[:, indices]
    labels = [int(label) for label in intended]

    report = l1_distance_analysis(vectors, labels, standardizer)
    report.save(context.directory / 'distances.json')
    report.save_curves(context.directory / 'distance_curves.csv')

    l1_distance_analysis(real.values[:, indices], real.labels.tolist(), standardizer).save(context.directory / 'real_distances.json')

    combined = np.vstack([real.values[:, indices], vectors])
    names = [f'real/{name}' for name in real.names] + [f'generated/{entry.name}' for entry in generated.entries]
    quadrants = [EmotionQuadrant(int(label)).name for label in real.labels] + [label.name for label in intended]

    coordinates, _, variances = pca_project(combined)
    save_projection(context.directory / 'projection.csv', coordinates, names, quadrants)

    logger.info('objective accuracy %.3f, inter %.3f vs intra %.3f (explained variance %s)', accuracy, report.inter, report.intra, variances.round(3).tolist())

@register_stage('analyze-bias', requires=('extract', 'train-forest', 'train'), sections=('evaluate', 'sampler'))
async def analyze_bias(context: StageContext) -> None:
    config = context.config

    forest = RandomForest.load(context.stage_dir('train-forest') / 'forest.json')
    checkpoint = load_checkpoint(context.stage_dir('train') / 'checkpoint')
    classifier = ForestClassifier(forest, context.catalog)

    seeds = itertools.count(config.sampler.seed)

    def compose(values: np.ndarray, quadrant: EmotionQuadrant) -> Score:
        sampler = SamplerConfig(config.sampler.p, config.sampler.temperature, config.sampler.max_tokens, next(seeds))
        sequence: TokenSequence = generate(checkpoint.model, values, checkpoint.medians, sampler)

        return quantize(decode(sequence))

    corpus = _labeled(context, 'valid', 'test')
    report = await to_thread(
        bias_experiment, corpus, checkpoint.indices, config.evaluate.bias_n, classifier, generate=compose
    )

    report.save(context.directory / 'bias.json')
