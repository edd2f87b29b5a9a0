"""
Manifests, dataset splitting and the synthetic four-quadrant corpus.
"""
from __future__ import annotations

from typing import Any, Dict, List, Optional, Sequence, Tuple

from dataclasses import asdict, dataclass, field, replace
import logging
import math
import os
import pathlib

import numpy as np

from emotune.errors import ConfigError, EmptyManifest
from emotune.labels import EmotionQuadrant
from emotune.midi import save_midi
from emotune.score import Note, Score, score_to_midi
from emotune.utils import map_in_threads, read_json, write_json

logger = logging.getLogger('emotune.corpus')

__all__ = (
    'ManifestEntry',
    'Manifest',
    'Archetype',
    'SynthSpec',
    'ARCHETYPES',
    'synth_score',
    'synth_corpus',
    'synth_corpus_async',
    'split_dataset',
    'SPLITS',
)

SPLITS = ('train', 'valid', 'test')

MAJOR = (0, 2, 4, 5, 7, 9, 11)
MINOR = (0, 2, 3, 5, 7, 8, 10)

TICKS_PER_QUARTER = 480
SLOT = TICKS_PER_QUARTER // 4

@dataclass
class ManifestEntry:
    name: str
    file: str
    label: Optional[str] = None
    true_label: Optional[str] = None
    extra: Dict[str, Any] = field(default_factory=dict)

@dataclass
class Manifest:
    """
    The files of a corpus with their labels. ``file`` paths are relative to ``root``.

    Attributes
    ----------
    root: :class:`pathlib.Path`
        The corpus directory.
    entries: List[:class:`ManifestEntry`]
        One entry per MIDI file.
    """
    root: pathlib.Path
    entries: List[ManifestEntry]
    meta: Dict[str, Any] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)

    def paths(self) -> List[pathlib.Path]:
        return [self.root / entry.file for entry in self.entries]

    @property
    def labeled(self) -> List[ManifestEntry]:
        return [entry for entry in self.entries if entry.label]

    def to_dict(self) -> Dict[str, Any]:
        return {'meta': self.meta, 'entries': [asdict(entry) for entry in self.entries]}

    def save(self, path: pathlib.Path) -> None:
        data = self.to_dict()
        path = pathlib.Path(path)
        data['root'] = os.path.relpath(self.root.resolve(), path.resolve().parent)

        write_json(path, data)

    @classmethod
    def load(cls, path: pathlib.Path) -> Manifest:
        path = pathlib.Path(path)
        data = read_json(path)

        root = pathlib.Path(data.get('root', path.parent))
        if not root.is_absolute():
            root = path.parent / root

        return cls(root, [ManifestEntry(**entry) for entry in data['entries']], data.get('meta', {}))

    @classmethod
    def scan(cls, root: pathlib.Path) -> Manifest:
        """An unlabeled manifest of every ``.mid``/``.midi`` file under ``root``."""
        root = pathlib.Path(root)
        files = sorted(path for path in root.rglob('*') if path.suffix.lower() in ('.mid', '.midi'))

        return cls(root, [ManifestEntry(path.relative_to(root).with_suffix('').as_posix(), path.relative_to(root).as_posix()) for path in files])

@dataclass(frozen=True)
class Archetype:
    """Parameter ranges of one quadrant's pieces. Densities are melody notes per quarter note."""

    tempo: Tuple[float, float]
    density: Tuple[float, float]
    mode: str
    register: Tuple[int, int]
    velocity: Tuple[int, int]
    bars: Tuple[int, int] = (8, 8)

# Tempo and density ranges are disjoint and ordered Q1 > Q2 > Q4 > Q3.
ARCHETYPES: Dict[EmotionQuadrant, Archetype] = {
    EmotionQuadrant.Q1: Archetype((150.0, 180.0), (2.5, 3.5), 'major', (64, 88), (96, 120)),
    EmotionQuadrant.Q2: Archetype((120.0, 145.0), (1.5, 2.25), 'minor', (60, 84), (80, 110)),
    EmotionQuadrant.Q3: Archetype((50.0, 75.0), (0.25, 0.6), 'minor', (52, 76), (28, 56)),
    EmotionQuadrant.Q4: Archetype((80.0, 100.0), (0.75, 1.25), 'major', (57, 81), (48, 76)),
}

@dataclass(frozen=True)
class SynthSpec:
    """
    Attributes
    ----------
    archetypes: Dict[:class:`EmotionQuadrant`, :class:`Archetype`]
        Per-quadrant ranges.
    noise: :class:`float`
        0 keeps every range as is, 1 widens every range to the hull of all quadrants
        (and flips the mode half of the time), making labels uninformative.
    boundary_label_noise: :class:`float`
        Fraction of every quadrant, farthest from its archetype center, that is
        relabeled to the nearest other quadrant.
    """
    archetypes: Dict[EmotionQuadrant, Archetype] = field(default_factory=lambda: dict(ARCHETYPES))
    noise: float = 0.0
    boundary_label_noise: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.noise <= 1.0 or not 0.0 <= self.boundary_label_noise <= 1.0:
            raise ConfigError('noise and boundary_label_noise must be in [0, 1]')

        if set(self.archetypes) != set(EmotionQuadrant):
            raise ConfigError('an archetype is needed for every quadrant')

    def widened(self, quadrant: EmotionQuadrant) -> Archetype:
        archetype = self.archetypes[quadrant]
        if self.noise == 0:
            return archetype

        def widen(name: str) -> Tuple[float, float]:
            low, high = getattr(archetype, name)
            hull_low = min(getattr(other, name)[0] for other in self.archetypes.values())
            hull_high = max(getattr(other, name)[1] for other in self.archetypes.values())

            return low + self.noise * (hull_low - low), high + self.noise * (hull_high - high)

        register = widen('register')
        velocity = widen('velocity')

        return replace(
            archetype,
            tempo=widen('tempo'),
            density=widen('density'),
            register=(int(round(register[0])), int(round(register[1]))),
            velocity=(int(round(velocity[0])), int(round(velocity[1]))),
        )

def _scale_pitches(mode: str, low: int, high: int) -> np.ndarray:
    degrees = MAJOR if mode == 'major' else MINOR
    return np.array([pitch for pitch in range(low, high + 1) if (pitch - 60) % 12 in degrees], dtype=np.int64)

def synth_score(spec: SynthSpec, quadrant: EmotionQuadrant, rng: np.random.Generator) -> Tuple[Score, Dict[str, Any]]:
    """
    Draws one piece: a melody on track 0 and a sustained triad at every bar start on track 1.

    Returns
    -------
    Tuple[:class:`Score`, Dict[:class:`str`, Any]]
        The score and the drawn parameters.
    """
    archetype = spec.widened(quadrant)

    tempo = float(rng.uniform(*archetype.tempo))
    density = float(rng.uniform(*archetype.density))
    bars = int(rng.integers(archetype.bars[0], archetype.bars[1] + 1))

    mode = archetype.mode
    if spec.noise > 0 and rng.random() < spec.noise / 2:
        mode = 'minor' if mode == 'major' else 'major'

    scale = _scale_pitches(mode, *archetype.register)
    slots = 16 * bars

    count = int(np.clip(round(density * 4 * bars), 1, slots))
    onsets = np.sort(rng.choice(slots, size=count, replace=False))
    ends = np.append(onsets[1:], slots)

    notes: List[Note] = []

    position = int(rng.integers(0, scale.size))
    for onset, end in zip(onsets.tolist(), ends.tolist()):
        position = int(np.clip(position + rng.integers(-2, 3), 0, scale.size - 1))
        velocity = int(rng.integers(archetype.velocity[0], archetype.velocity[1] + 1))
        duration = int(min(max(end - onset, 1), 8))

        notes.append(Note(onset * SLOT, duration * SLOT, int(scale[position]), velocity, 0))

    chords = _scale_pitches(mode, 48, 71)
    accompaniment = int(round(float(np.mean(archetype.velocity)) * 0.8))
    for bar in range(bars):
        root = int(rng.choice([0, 3, 4, 5]))
        for step in (0, 2, 4):
            notes.append(Note(bar * 16 * SLOT, 16 * SLOT, int(chords[root + step]), max(1, accompaniment), 1))

    score = Score(notes, TICKS_PER_QUARTER, [(0, tempo)], [(0, 4, 4)])
    return score, {'tempo': tempo, 'density': density, 'mode': mode, 'bars': bars}

def _nearest_other(spec: SynthSpec, quadrant: EmotionQuadrant, point: np.ndarray, scale: np.ndarray) -> EmotionQuadrant:
    best: Optional[Tuple[float, int]] = None
    for other, archetype in spec.archetypes.items():
        if other == quadrant:
            continue

        center = np.array([np.mean(archetype.tempo), np.mean(archetype.density)]) / scale
        distance = float(np.linalg.norm(point - center))
        if best is None or (distance, int(other)) < best:
            best = (distance, int(other))

    assert best is not None
    return EmotionQuadrant(best[1])

def _relabel(spec: SynthSpec, entries: List[ManifestEntry]) -> None:
    if spec.boundary_label_noise == 0:
        return

    tempos = [value for archetype in spec.archetypes.values() for value in archetype.tempo]
    densities = [value for archetype in spec.archetypes.values() for value in archetype.density]
    scale = np.array([max(tempos) - min(tempos), max(densities) - min(densities)])

    for quadrant in EmotionQuadrant:
        members = [entry for entry in entries if entry.true_label == quadrant.name]
        archetype = spec.archetypes[quadrant]
        center = np.array([np.mean(archetype.tempo), np.mean(archetype.density)]) / scale

        points = [np.array([entry.extra['tempo'], entry.extra['density']]) / scale for entry in members]
        distances = [float(np.linalg.norm(point - center)) for point in points]

        count = int(math.floor(spec.boundary_label_noise * len(members) + 0.5))
        ranked = sorted(range(len(members)), key=lambda index: (-distances[index], index))

        for index in ranked[:count]:
            members[index].label = _nearest_other(spec, quadrant, points[index], scale).name

def _jobs(n_per_quadrant: int) -> List[Tuple[EmotionQuadrant, int]]:
    if n_per_quadrant < 1:
        raise ConfigError('n_per_quadrant must be at least 1')

    return [(quadrant, index) for quadrant in EmotionQuadrant for index in range(n_per_quadrant)]

def _write_piece(spec: SynthSpec, directory: pathlib.Path, seed: int, job: Tuple[EmotionQuadrant, int]) -> ManifestEntry:
    quadrant, index = job
    rng = np.random.default_rng([seed, int(quadrant), index])

    score, params = synth_score(spec, quadrant, rng)
    name = f'{quadrant.name}_{index:04d}'

    save_midi(directory / f'{name}.mid', score_to_midi(score))
    return ManifestEntry(name, f'{name}.mid', quadrant.name, quadrant.name, params)

def _finish(spec: SynthSpec, directory: pathlib.Path, seed: int, entries: List[ManifestEntry]) -> Manifest:
    _relabel(spec, entries)

    manifest = Manifest(directory, entries, {
        'seed': seed,
        'noise': spec.noise,
        'boundary_label_noise': spec.boundary_label_noise,
    })
    manifest.save(directory / 'manifest.json')

    relabeled = sum(entry.label != entry.true_label for entry in entries)
    logger.info('wrote %d pieces to %s (%d relabeled)', len(entries), directory, relabeled)

    return manifest

def synth_corpus(spec: SynthSpec, n_per_quadrant: int, seed: int, directory: pathlib.Path) -> Manifest:
    """
    Writes ``n_per_quadrant`` labeled pieces per quadrant and ``manifest.json`` into
    ``directory``. Each piece has its own generator derived from ``seed``, the
    quadrant and its index, so the output is identical for identical arguments.

    Parameters
    ----------
    spec: :class:`SynthSpec`
        Archetypes and noise levels.
    n_per_quadrant: :class:`int`
        At least 1.
    seed: :class:`int`
        The corpus seed.
    directory: :class:`pathlib.Path`
        The output directory, created if missing.
    """
    directory = pathlib.Path(directory)
    entries = [_write_piece(spec, directory, seed, job) for job in _jobs(n_per_quadrant)]

    return _finish(spec, directory, seed, entries)

async def synth_corpus_async(spec: SynthSpec, n_per_quadrant: int, seed: int, directory: pathlib.Path, *, workers: int = 1) -> Manifest:
    directory = pathlib.Path(directory)
    entries = await map_in_threads(lambda job: _write_piece(spec, directory, seed, job), _jobs(n_per_quadrant), workers=workers)

    return _finish(spec, directory, seed, entries)

def _cut(count: int, ratios: Sequence[float]) -> List[int]:
    sizes = [int(math.floor(ratio * count + 0.5)) for ratio in ratios[:-1]]
    sizes = [min(size, count - sum(sizes[:index])) for index, size in enumerate(sizes)]

    return sizes + [count - sum(sizes)]

def split_dataset(manifest: Manifest, ratios: Sequence[float] = (0.8, 0.1, 0.1), seed: int = 0) -> Dict[str, Manifest]:
    """
    Splits a manifest into train, valid and test manifests.

    Entries are grouped by label (unlabeled entries form their own group), every group
    is shuffled with the seeded generator and cut into contiguous parts.

    Raises
    ------
    EmptyManifest
        The manifest has no entries.
    ConfigError
        The ratios are not three non-negative numbers summing to 1.
    """
    if not manifest.entries:
        raise EmptyManifest('cannot split an empty manifest')

    if len(ratios) != len(SPLITS) or min(ratios) < 0 or abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f'split ratios must be three non-negative numbers summing to 1, got {list(ratios)}')

    rng = np.random.default_rng(seed)
    parts: Dict[str, List[ManifestEntry]] = {name: [] for name in SPLITS}

    labels = sorted({entry.label or '' for entry in manifest.entries}, key=lambda label: (label == '', label))
    for label in labels:
        group = [entry for entry in manifest.entries if (entry.label or '') == label]
        shuffled = [group[index] for index in rng.permutation(len(group))]

        start = 0
        for name, size in zip(SPLITS, _cut(len(group), ratios)):
            parts[name].extend(shuffled[start:start + size])
            start += size

    meta = dict(manifest.meta, split_seed=seed, split_ratios=list(ratios))
    return {name: Manifest(manifest.root, entries, dict(meta, split=name)) for name, entries in parts.items()}
