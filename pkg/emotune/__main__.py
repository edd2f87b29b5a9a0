from typing import List, Optional

import asyncio
import argparse
import pathlib
import sys

from . import __version__
from .forest import SELECTION_METHODS
from .labels import EmotionQuadrant
from .main import main as amain
from .mapping import MAPPING_METHODS
from .model import MODEL_PRESETS

def add_common_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        '--config',
        type=pathlib.Path,
        help='A JSON/TOML file with the pipeline configuration. Flags override its values.',
        required=False
    )

    parser.add_argument(
        '--artifacts',
        type=str,
        help='Where the stage outputs are written. Defaults to $EMOTUNE_ARTIFACTS or `./artifacts`.',
        required=False
    )

    parser.add_argument('--corpus', type=str, help='The directory containing the labeled MIDI files.', required=False)
    parser.add_argument('--manifest', type=str, help='The corpus manifest. Defaults to `<corpus>/manifest.json`.', required=False)
    parser.add_argument('--seed', type=int, help='The global seed.', required=False)

    parser.add_argument(
        '--workers',
        type=int,
        help='The maximum amount of concurrent jobs within a stage. Defaults to 1.',
        required=False
    )

    parser.add_argument('--force', action='store_true', help='Re-run the requested stage even if it is up to date.')
    parser.add_argument('--debug', action='store_true', help='Print debug information.')

def create_argument_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='emotune-cli', description='Emotion-conditioned symbolic music generation.'
    )

    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    subparsers = parser.add_subparsers(dest='command', required=True)

    def add(name: str, help: str) -> argparse.ArgumentParser:
        subparser = subparsers.add_parser(name, help=help, description=help)
        add_common_arguments(subparser)

        return subparser

    synth = add('synth-corpus', 'Write a synthetic labeled four-quadrant corpus.')
    synth.add_argument('-o', '--out', type=str, help='The output directory. Defaults to `./corpus`.', default='./corpus')
    synth.add_argument('-n', type=int, help='Pieces per quadrant. Defaults to 100.', default=100)
    synth.add_argument('--noise', type=float, help='Archetype noise level in [0, 1]. Defaults to 0.', default=0.0)

    synth.add_argument(
        '--label-noise',
        type=float,
        help='Fraction of every quadrant, farthest from its archetype, that gets a wrong label. Defaults to 0.',
        default=0.0
    )

    split = add('split', 'Split a manifest into train/valid/test manifests.')
    split.add_argument('--ratios', type=str, help='Comma separated ratios. Defaults to `0.8,0.1,0.1`.', default='0.8,0.1,0.1')
    split.add_argument('-o', '--out', type=str, help='The output directory. Defaults to the manifest directory.')

    extract = add('extract', 'Extract the attribute vectors of the corpus.')
    extract.add_argument('--catalog-doc', type=str, help='Only write the feature catalog reference to this path.')

    add('train-forest', 'Train the random forest emotion classifier and rank the attributes.')

    select = add('select-attrs', 'Select the attributes the generator is conditioned on.')
    select.add_argument('--method', dest='selection_method', choices=SELECTION_METHODS.keys(), help='The selection method.')
    select.add_argument('-k', type=int, help='The amount of attributes to select.')
    select.add_argument('--sweep', type=str, help='Comma separated values of k to write one selection each for.')

    mapping = add('map-emotion', 'Map every emotion quadrant to attribute values.')
    mapping.add_argument('--method', dest='mapping_method', choices=MAPPING_METHODS.keys(), help='The mapping method.')
    mapping.add_argument('--candidates', type=int, help='Attribute vectors per quadrant.')

    train = add('train', 'Train the attribute-conditioned generator.')
    train.add_argument('--model', type=str, choices=MODEL_PRESETS.keys(), help='The model preset.')
    train.add_argument('--init-from', type=str, help='A checkpoint directory to fine-tune from.')

    generate = add('generate', 'Generate pieces for every quadrant, or for one emotion or attribute file.')
    generate.add_argument('--emotion', type=str, choices=[quadrant.name for quadrant in EmotionQuadrant], help='The emotion quadrant.')
    generate.add_argument('--attr-file', type=str, help='A JSON list of attribute values over the selected attributes.')
    generate.add_argument('-n', type=int, help='Pieces per quadrant (or in total with --emotion/--attr-file).')
    generate.add_argument('--candidate', type=int, help='The candidate vector of the mapping table. Defaults to 0.')
    generate.add_argument('-o', '--out', type=str, help='The output directory for --emotion/--attr-file.')

    evaluate = add('evaluate', 'Classify the generated pieces and measure attribute distances.')
    evaluate.add_argument('--classifier', choices=('forest', 'transformer'), help='The objective classifier.')

    bias = add('analyze-bias', 'Compare center and boundary samples of every quadrant.')
    bias.add_argument('--bias-n', type=int, help='Center and boundary samples per quadrant.')

    run = add('run', 'Run the whole pipeline.')
    run.add_argument('--stages', type=str, help='Comma separated stages to run instead of the whole pipeline.')
    run.add_argument('--bias', action='store_true', help='Also run analyze-bias.')
    run.add_argument('--model', type=str, choices=MODEL_PRESETS.keys(), help='The model preset.')

    return parser

def main(argv: Optional[List[str]] = None) -> int:
    parser = create_argument_parser()

    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse reports usage errors with 2, which is the data error code here.
        return 1 if exc.code == 2 else int(exc.code or 0)

    try:
        return asyncio.run(amain(args))
    except KeyboardInterrupt:
        return 1

if __name__ == '__main__':
    sys.exit(main())
