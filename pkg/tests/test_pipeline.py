import asyncio
import json

import pytest

from emotune.config import PipelineConfig
from emotune.corpus import SynthSpec, synth_corpus
from emotune.errors import StageError
from emotune.pipeline import PIPELINE, run_pipeline, run_stages

def small_config(tmp_path, **sections):
    data = {
        'seed': 0,
        'model': 'desk-tiny',
        'paths': {'corpus': str(tmp_path / 'corpus'), 'artifacts': str(tmp_path / 'artifacts')},
        'forest': {'n_trees': 5},
        'selection': {'method': 'topk', 'k': 6},
        'train': {'max_steps': 2},
        'sampler': {'max_tokens': 16},
        'generate': {'n_per_quadrant': 1},
        'evaluate': {'bias_n': 1},
    }
    data.update(sections)

    return PipelineConfig.from_dict(data)

@pytest.fixture
def corpus(tmp_path):
    return synth_corpus(SynthSpec(), 8, 0, tmp_path / 'corpus')

@pytest.mark.slow
def test_pipeline_runs_and_resumes(tmp_path, corpus):
    config = small_config(tmp_path)

    results = asyncio.run(run_pipeline(config, bias=True))
    assert [result.name for result in results] == list(PIPELINE) + ['analyze-bias']
    assert not any(result.skipped for result in results)

    artifacts = tmp_path / 'artifacts'
    for path in ('extract/corpus.csv', 'train-forest/forest.json', 'select-attrs/selection.json', 'map-emotion/mapping.json', 'train/loss.csv', 'evaluate/projection.csv', 'analyze-bias/bias.json'):
        assert (artifacts / path).exists(), path

    assert len(list((artifacts / 'generate').glob('*.mid'))) == 4
    assert len(json.loads((artifacts / 'select-attrs' / 'selection.json').read_text())['indices']) == 6

    objective = json.loads((artifacts / 'evaluate' / 'objective.json').read_text())
    assert objective['n_pieces'] == 4
    assert 0.0 <= objective['accuracy'] <= 1.0

    again = asyncio.run(run_pipeline(config, bias=True))
    assert all(result.skipped for result in again)

@pytest.mark.slow
def test_bias_analysis_classifies_generated_pieces(tmp_path, corpus):
    config = small_config(tmp_path, split=[0.5, 0.25, 0.25], evaluate={'bias_n': 2})
    asyncio.run(run_stages(config, ['analyze-bias']))

    bias = json.loads((tmp_path / 'artifacts' / 'analyze-bias' / 'bias.json').read_text())

    assert bias['counts'] == {'center': 8, 'boundary': 8}
    assert set(bias['per_quadrant']) == {'Q1', 'Q2', 'Q3', 'Q4'}

    for key in ('real_center', 'real_boundary', 'generated_center', 'generated_boundary'):
        assert bias[key] is not None, key
        assert 0.0 <= bias[key] <= 1.0, key

@pytest.mark.slow
def test_changed_sections_rerun_their_stage(tmp_path, corpus):
    asyncio.run(run_stages(small_config(tmp_path), ['train-forest']))

    results = asyncio.run(run_stages(small_config(tmp_path, forest={'n_trees': 6}), ['train-forest']))
    assert [(result.name, result.skipped) for result in results] == [('extract', True), ('train-forest', False)]

    forced = asyncio.run(run_stages(small_config(tmp_path, forest={'n_trees': 6}), ['train-forest'], force=True))
    assert [(result.name, result.skipped) for result in forced] == [('extract', True), ('train-forest', False)]

def test_damaged_outputs_rerun_their_stage(tmp_path, corpus):
    config = small_config(tmp_path)
    asyncio.run(run_stages(config, ['extract']))

    (tmp_path / 'artifacts' / 'extract' / 'corpus.csv').write_text('')

    results = asyncio.run(run_stages(config, ['extract']))
    assert not results[0].skipped

def test_stage_errors(tmp_path):
    (tmp_path / 'corpus').mkdir()

    with pytest.raises(StageError) as info:
        asyncio.run(run_stages(small_config(tmp_path), ['extract']))

    assert info.value.stage == 'extract'
    assert info.value.category == 'data'

    with pytest.raises(StageError):
        asyncio.run(run_stages(small_config(tmp_path), ['compose']))
