from typing import Any, Awaitable, Callable, Dict, List, Optional

import argparse
import logging
import pathlib

import numpy as np

from .config import PipelineConfig, load_config
from .corpus import Manifest, SynthSpec, split_dataset, synth_corpus_async
from .errors import ConfigError, EmotuneError, LengthMismatch, exit_code_for
from .features import default_catalog, render_catalog_doc
from .forest import ImportanceRanking, sweep
from .labels import EmotionQuadrant
from .log import create_logger
from .mapping import MappingTable
from .model import load_checkpoint
from .pipeline import StageResult, generate_pieces, run_pipeline, run_stages
from .utils import Colors, format_exception, read_json, write_atomic

Command = Callable[[argparse.Namespace], Awaitable[int]]
COMMANDS: Dict[str, Command] = {}

logger = logging.getLogger('emotune')

def command(name: str) -> Callable[[Command], Command]:
    def wrapper(func: Command) -> Command:
        COMMANDS[name] = func
        return func
    return wrapper

def parse_list(value: str, cast: Callable[[str], Any]) -> List[Any]:
    try:
        return [cast(item) for item in value.split(',') if item.strip()]
    except ValueError:
        raise ConfigError(f'invalid list {value!r}') from None

def build_config(args: argparse.Namespace) -> PipelineConfig:
    overrides: Dict[str, Any] = {
        'seed': args.seed,
        'workers': args.workers,
        'model': getattr(args, 'model', None),
        'paths': {
            'artifacts': args.artifacts,
            'corpus': args.corpus,
            'manifest': args.manifest,
            'init_from': getattr(args, 'init_from', None),
        },
        'selection': {'method': getattr(args, 'selection_method', None), 'k': getattr(args, 'k', None)},
        'mapping': {'method': getattr(args, 'mapping_method', None), 'n_candidates': getattr(args, 'candidates', None)},
        'generate': {'n_per_quadrant': getattr(args, 'n', None), 'candidate': getattr(args, 'candidate', None)},
        'evaluate': {'classifier': getattr(args, 'classifier', None), 'bias_n': getattr(args, 'bias_n', None)},
    }

    return load_config(args.config, overrides)

def report(results: List[StageResult]) -> None:
    print()
    for result in results:
        if result.skipped:
            print(f'{Colors.white}- {result.name}{Colors.reset}: {Colors.yellow}up to date{Colors.reset}')
        else:
            print(f'{Colors.white}- {result.name}{Colors.reset}: {Colors.green}done{Colors.reset}')

    print()

def summarize(config: PipelineConfig) -> None:
    objective = config.artifacts / 'evaluate' / 'objective.json'
    if objective.exists():
        data = read_json(objective)
        print(f'{Colors.white}- Objective accuracy ({data["classifier"]}): {Colors.green}{data["accuracy"]:.3f}{Colors.reset}')

    bias = config.artifacts / 'analyze-bias' / 'bias.json'
    if bias.exists():
        data = read_json(bias)
        print(
            f'{Colors.white}- Center/boundary accuracy (real): {Colors.green}'
            f'{data["real_center"]:.3f}/{data["real_boundary"]:.3f}{Colors.reset}'
        )

        if data['generated_center'] is not None:
            print(
                f'{Colors.white}- Center/boundary accuracy (generated): {Colors.green}'
                f'{data["generated_center"]:.3f}/{data["generated_boundary"]:.3f}{Colors.reset}'
            )

async def stages(args: argparse.Namespace, *names: str) -> int:
    config = build_config(args)

    report(await run_stages(config, names, force=args.force))
    summarize(config)

    return 0

@command('synth-corpus')
async def synth(args: argparse.Namespace) -> int:
    spec = SynthSpec(noise=args.noise, boundary_label_noise=args.label_noise)
    out = pathlib.Path(args.out)

    manifest = await synth_corpus_async(spec, args.n, args.seed or 0, out, workers=args.workers or 1)
    print(f'\n{Colors.white}- Wrote {len(manifest)} pieces to {str(out)!r}.{Colors.reset}\n')

    return 0

@command('split')
async def split(args: argparse.Namespace) -> int:
    if args.manifest is None:
        raise ConfigError('split needs --manifest')

    path = pathlib.Path(args.manifest)
    out = pathlib.Path(args.out) if args.out else path.parent

    parts = split_dataset(Manifest.load(path), parse_list(args.ratios, float), args.seed or 0)

    print()
    for name, part in parts.items():
        part.save(out / f'{name}.json')
        print(f'{Colors.white}- {name}{Colors.reset}: {Colors.green}{len(part)}{Colors.reset}')

    print()
    return 0

@command('extract')
async def extract(args: argparse.Namespace) -> int:
    if args.catalog_doc is not None:
        catalog = default_catalog()
        write_atomic(pathlib.Path(args.catalog_doc), render_catalog_doc(catalog).encode())

        print(f'\n{Colors.white}- Wrote the reference of {len(catalog.entries)} features ({catalog.total_dim} dimensions).{Colors.reset}\n')
        return 0

    return await stages(args, 'extract')

@command('train-forest')
async def train_forest(args: argparse.Namespace) -> int:
    return await stages(args, 'train-forest')

@command('select-attrs')
async def select_attrs(args: argparse.Namespace) -> int:
    if args.sweep is None:
        return await stages(args, 'select-attrs')

    config = build_config(args)
    report(await run_stages(config, ['train-forest'], force=args.force))

    ranking = ImportanceRanking.load(config.artifacts / 'train-forest' / 'importance.json')
    method = config.selection.method

    directory = config.artifacts / 'select-attrs-sweep'
    for k, selection in sweep(ranking, default_catalog(), parse_list(args.sweep, int), method, config.selection.seed).items():
        selection.save(directory / f'{method}_k{k}.json')
        print(f'{Colors.white}- k={k}{Colors.reset}: {Colors.green}{directory / f"{method}_k{k}.json"}{Colors.reset}')

    return 0

@command('map-emotion')
async def map_emotion(args: argparse.Namespace) -> int:
    return await stages(args, 'map-emotion')

@command('train')
async def train(args: argparse.Namespace) -> int:
    return await stages(args, 'train')

def read_attributes(path: pathlib.Path, size: int) -> np.ndarray:
    data = read_json(path)
    if isinstance(data, dict):
        data = data.get('values')

    if not isinstance(data, list):
        raise ConfigError(f'{path.name!r} must hold a list of attribute values')

    values = np.array(data, dtype=np.float64)
    if values.shape != (size,):
        raise LengthMismatch(f'{path.name!r} holds {values.size} values but the model expects {size}')

    return values

@command('generate')
async def generate(args: argparse.Namespace) -> int:
    if args.emotion is None and args.attr_file is None:
        return await stages(args, 'generate')

    config = build_config(args)
    report(await run_stages(config, ['train', 'map-emotion'], force=args.force))

    checkpoint = load_checkpoint(config.artifacts / 'train' / 'checkpoint')

    if args.attr_file is not None:
        vector = read_attributes(pathlib.Path(args.attr_file), len(checkpoint.indices))
        label = 'custom'
    else:
        table = MappingTable.load(config.artifacts / 'map-emotion' / 'mapping.json')
        quadrant = EmotionQuadrant.parse(args.emotion)

        vector = table.vector(quadrant, config.generate.candidate)
        label = quadrant.name

    count = config.generate.n_per_quadrant
    out = pathlib.Path(args.out) if args.out else config.artifacts / 'generate-custom' / label

    await generate_pieces(checkpoint, [vector] * count, [label] * count, config.sampler, out, workers=config.workers)
    print(f'{Colors.white}- Generated {count} pieces into {str(out)!r}.{Colors.reset}\n')

    return 0

@command('evaluate')
async def evaluate(args: argparse.Namespace) -> int:
    return await stages(args, 'evaluate')

@command('analyze-bias')
async def analyze_bias(args: argparse.Namespace) -> int:
    return await stages(args, 'analyze-bias')

@command('run')
async def run(args: argparse.Namespace) -> int:
    config = build_config(args)

    if args.stages:
        results = await run_stages(config, parse_list(args.stages, str), force=args.force)
    else:
        results = await run_pipeline(config, force=args.force, bias=args.bias)

    report(results)
    summarize(config)

    return 0

async def main(args: argparse.Namespace) -> int:
    logger = create_logger()

    if not args.debug:
        logger.setLevel(logging.WARNING)

    func: Optional[Command] = COMMANDS.get(args.command)
    if func is None:
        print(f'{Colors.red}- Unknown command {args.command!r}. Available commands: {", ".join(COMMANDS)}{Colors.reset}')
        return 1

    try:
        return await func(args)
    except EmotuneError as exc:
        cause = getattr(exc, 'cause', None)
        if cause is not None and not isinstance(cause, EmotuneError):
            logger.debug('stage failure', exc_info=cause)

        print(f'{Colors.red}- {format_exception(exc)}{Colors.reset}')
        return exit_code_for(exc)
    except Exception as exc:
        logger.exception('Unexpected error', exc_info=exc)
        return exit_code_for(exc)
