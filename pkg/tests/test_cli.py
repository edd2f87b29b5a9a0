import pytest

from emotune.__main__ import main

def test_usage_errors(tmp_path):
    assert main(['compose']) == 1
    assert main(['synth-corpus', '-n', 'many']) == 1
    assert main(['split', '--ratios', '1,0,0']) == 1

def test_version(capsys):
    assert main(['--version']) == 0
    assert 'emotune-cli' in capsys.readouterr().out

def test_synth_and_split(tmp_path):
    corpus = tmp_path / 'corpus'

    assert main(['synth-corpus', '-o', str(corpus), '-n', '2', '--seed', '1']) == 0
    assert len(list(corpus.glob('*.mid'))) == 8

    assert main(['split', '--manifest', str(corpus / 'manifest.json'), '--ratios', '0.5,0.5,0', '-o', str(tmp_path / 'splits')]) == 0
    assert {path.name for path in (tmp_path / 'splits').iterdir()} == {'train.json', 'valid.json', 'test.json'}

    assert main(['split', '--manifest', str(corpus / 'manifest.json'), '--ratios', '0.5,0.6,0']) == 1

def test_catalog_doc(tmp_path):
    assert main(['extract', '--catalog-doc', str(tmp_path / 'features.md')]) == 0
    assert 'Pitch Class Histogram' in (tmp_path / 'features.md').read_text()

def test_data_errors_exit_with_2(tmp_path, capsys):
    (tmp_path / 'corpus').mkdir()

    code = main(['extract', '--corpus', str(tmp_path / 'corpus'), '--artifacts', str(tmp_path / 'artifacts')])

    assert code == 2
    assert 'extract' in capsys.readouterr().out

@pytest.mark.slow
def test_generate_for_one_emotion(tmp_path):
    corpus = tmp_path / 'corpus'
    assert main(['synth-corpus', '-o', str(corpus), '-n', '4']) == 0

    config = tmp_path / 'config.toml'
    config.write_text('model = "desk-tiny"\n[forest]\nn_trees = 5\n[selection]\nk = 4\n[train]\nmax_steps = 1\n')

    common = ['--config', str(config), '--corpus', str(corpus), '--artifacts', str(tmp_path / 'artifacts')]
    assert main(['generate', '--emotion', 'Q3', '-n', '2', '-o', str(tmp_path / 'sad'), *common]) == 0

    assert sorted(path.name for path in (tmp_path / 'sad').glob('*.mid')) == ['Q3_0000.mid', 'Q3_0001.mid']
