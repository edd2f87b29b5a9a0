"""
Note-level scores, grid quantization and the REMI-like tokenizer.

Token grammar::

    BOS ( Bar [Tempo] ( Position Pitch Duration Velocity )* )* EOS

Positions are sixteenth-note slots within a bar. Bars longer than a whole note
are split into several ``Bar`` tokens of at most 16 slots each.
"""
from __future__ import annotations

from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

from collections import defaultdict, deque
from dataclasses import dataclass, field
import bisect
import logging
import math
import pathlib

from emotune.errors import ConfigError, EmptySequence
from emotune.midi import (
    EndOfTrack,
    MidiEvent,
    MidiFile,
    MidiTrack,
    NoteOff,
    NoteOn,
    SetTempo,
    TimeSignature,
)
from emotune.utils import write_atomic, write_json

logger = logging.getLogger('emotune.score')

__all__ = (
    'Note',
    'Score',
    'Token',
    'TokenSequence',
    'QuantizationConfig',
    'Vocabulary',
    'VOCABULARY',
    'PAD',
    'BOS',
    'EOS',
    'BAR',
    'midi_to_score',
    'score_to_midi',
    'quantize',
    'score_to_tokens',
    'tokens_to_score',
    'save_tokens',
    'load_tokens',
    'save_vocabulary',
)

SLOTS_PER_QUARTER = 4
POSITIONS = 16
MAX_DURATION = 32
VELOCITY_BINS = 32
TEMPO_BINS = 32
MIN_BPM = 30.0
MAX_BPM = 240.0

DEFAULT_BPM = 120.0
DEFAULT_TIME_SIGNATURE = (4, 4)

@dataclass(frozen=True)
class Note:
    onset: int
    duration: int
    pitch: int
    velocity: int
    track: int = 0

    @property
    def end(self) -> int:
        return self.onset + self.duration

def _note_key(note: Note) -> Tuple[int, int, int, int, int]:
    return (note.onset, note.pitch, note.track, note.duration, note.velocity)

def _dedupe(entries: Iterable[Tuple], default: Tuple) -> List[Tuple]:
    # One entry per tick, the last one given wins, and there is always one at tick 0.
    by_tick: Dict[int, Tuple] = {}
    for entry in entries:
        by_tick[entry[0]] = entry

    if 0 not in by_tick:
        by_tick[0] = (0, *default)

    return [by_tick[tick] for tick in sorted(by_tick)]

@dataclass
class Score:
    notes: List[Note]
    ticks_per_quarter: int = 480
    tempo_map: List[Tuple[int, float]] = field(default_factory=list)
    time_signatures: List[Tuple[int, int, int]] = field(default_factory=list)
    dropped_tokens: int = field(default=0, compare=False, repr=False)

    def __post_init__(self) -> None:
        if self.ticks_per_quarter <= 0:
            raise ValueError('ticks_per_quarter must be positive')

        self.notes = sorted(self.notes, key=_note_key)
        self.tempo_map = [(int(tick), float(bpm)) for tick, bpm in _dedupe(self.tempo_map, (DEFAULT_BPM,))]
        self.time_signatures = [
            (int(tick), int(num), int(den)) for tick, num, den in _dedupe(self.time_signatures, DEFAULT_TIME_SIGNATURE)
        ]

    @property
    def is_empty(self) -> bool:
        return not self.notes

    @property
    def end_tick(self) -> int:
        return max((note.end for note in self.notes), default=0)

    @property
    def tracks(self) -> List[int]:
        return sorted({note.track for note in self.notes})

class Token(NamedTuple):
    kind: str
    value: int = 0

    @property
    def name(self) -> str:
        if self.kind in ('PAD', 'BOS', 'EOS', 'Bar'):
            return self.kind

        return f'{self.kind}_{self.value}'

class Vocabulary:
    """The fixed 244 element token vocabulary. Ids are stable across versions."""

    def __init__(self) -> None:
        tokens = [Token('PAD'), Token('BOS'), Token('EOS'), Token('Bar')]
        tokens.extend(Token('Position', slot) for slot in range(POSITIONS))
        tokens.extend(Token('Pitch', pitch) for pitch in range(128))
        tokens.extend(Token('Duration', slots) for slots in range(1, MAX_DURATION + 1))
        tokens.extend(Token('Velocity', bin) for bin in range(VELOCITY_BINS))
        tokens.extend(Token('Tempo', bin) for bin in range(TEMPO_BINS))

        self.tokens: List[Token] = tokens
        self.ids: Dict[Token, int] = {token: id for id, token in enumerate(tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def encode(self, token: Token) -> int:
        return self.ids[token]

    def decode(self, id: int) -> Token:
        return self.tokens[id]

    def manifest(self) -> Dict[str, int]:
        return {token.name: id for id, token in enumerate(self.tokens)}

VOCABULARY = Vocabulary()

PAD = VOCABULARY.encode(Token('PAD'))
BOS = VOCABULARY.encode(Token('BOS'))
EOS = VOCABULARY.encode(Token('EOS'))
BAR = VOCABULARY.encode(Token('Bar'))

@dataclass
class TokenSequence:
    tokens: List[int]

    def __len__(self) -> int:
        return len(self.tokens)

    def crop(self, max_len: int) -> TokenSequence:
        return TokenSequence(self.tokens[:max_len])

    def names(self) -> List[str]:
        return [VOCABULARY.decode(id).name for id in self.tokens]

@dataclass(frozen=True)
class QuantizationConfig:
    ticks_per_quarter: int = 480
    time_signature: Tuple[int, int] = DEFAULT_TIME_SIGNATURE
    max_duration: int = MAX_DURATION

    def __post_init__(self) -> None:
        if self.ticks_per_quarter <= 0 or self.ticks_per_quarter % SLOTS_PER_QUARTER:
            raise ConfigError(f'ticks_per_quarter must be a positive multiple of {SLOTS_PER_QUARTER}')

        if not 1 <= self.max_duration <= MAX_DURATION:
            raise ConfigError(f'max_duration must be in 1..{MAX_DURATION}')

    @property
    def slot_ticks(self) -> int:
        return self.ticks_per_quarter // SLOTS_PER_QUARTER

def _round(value: float) -> int:
    return int(math.floor(value + 0.5))

def _clamp(value: int, low: int, high: int) -> int:
    return max(low, min(high, value))

def velocity_bin(velocity: int) -> int:
    return _clamp(velocity // 4, 0, VELOCITY_BINS - 1)

def velocity_value(bin: int) -> int:
    return max(1, bin * 4)

def tempo_bin(bpm: float) -> int:
    if bpm <= 0:
        return 0

    return _clamp(_round((TEMPO_BINS - 1) * math.log(bpm / MIN_BPM) / math.log(MAX_BPM / MIN_BPM)), 0, TEMPO_BINS - 1)

def tempo_value(bin: int) -> float:
    return MIN_BPM * (MAX_BPM / MIN_BPM) ** (bin / (TEMPO_BINS - 1))

def bar_length(numerator: int, denominator: int) -> int:
    return max(1, _round(4 * SLOTS_PER_QUARTER * numerator / denominator))

def bar_starts(time_signatures: Sequence[Tuple[int, int, int]], last_slot: int) -> List[int]:
    """
    Returns the slot of every ``Bar`` token needed to reach ``last_slot``.

    Parameters
    ----------
    time_signatures: Sequence[Tuple[:class:`int`, :class:`int`, :class:`int`]]
        ``(slot, numerator, denominator)`` entries sorted by slot, the first at slot 0.
    last_slot: :class:`int`
        The last slot that has to fall inside a bar.
    """
    starts: List[int] = []
    for index, (slot, numerator, denominator) in enumerate(time_signatures):
        if slot > last_slot:
            break

        next_change: Optional[int] = time_signatures[index + 1][0] if index + 1 < len(time_signatures) else None
        length = bar_length(numerator, denominator)

        start = slot
        while start <= last_slot and (next_change is None or start < next_change):
            end = start + length if next_change is None else min(start + length, next_change)

            sub = start
            while sub < end and sub <= last_slot:
                starts.append(sub)
                sub += POSITIONS

            start = end

    return starts

def midi_to_score(file: MidiFile) -> Score:
    """
    Converts a :class:`MidiFile` into a :class:`Score`.

    Note on/off events are paired per ``(channel, pitch)`` in FIFO order and notes that
    are never closed end with their track.

    Parameters
    ----------
    file: :class:`MidiFile`
        The parsed file.
    """
    notes: List[Note] = []
    tempo_map: List[Tuple[int, float]] = []
    time_signatures: List[Tuple[int, int, int]] = []

    for index, track in enumerate(file.tracks):
        pending: Dict[Tuple[int, int], deque] = defaultdict(deque)
        end = 0

        for tick, event in track.absolute():
            end = tick
            if isinstance(event, NoteOn):
                pending[(event.channel, event.pitch)].append((tick, event.velocity))
            elif isinstance(event, NoteOff):
                queue = pending[(event.channel, event.pitch)]
                if queue:
                    onset, velocity = queue.popleft()
                    notes.append(Note(onset, max(1, tick - onset), event.pitch, velocity, index))
            elif isinstance(event, SetTempo):
                tempo_map.append((tick, event.bpm))
            elif isinstance(event, TimeSignature):
                time_signatures.append((tick, event.numerator, event.denominator))

        for (_, pitch), queue in pending.items():
            for onset, velocity in queue:
                notes.append(Note(onset, max(1, end - onset), pitch, velocity, index))

    score = Score(notes, file.division, tempo_map, time_signatures)
    if score.is_empty:
        logger.warning('MIDI file contains no notes')

    return score

def score_to_midi(score: Score) -> MidiFile:
    """
    Converts a :class:`Score` into a format 1 :class:`MidiFile` with a conductor track
    followed by one track per score track.

    Parameters
    ----------
    score: :class:`Score`
        The score.
    """
    meta: List[Tuple[int, int, MidiEvent]] = []
    for tick, numerator, denominator in score.time_signatures:
        meta.append((tick, 0, TimeSignature(numerator, int(math.log2(denominator)))))

    for tick, bpm in score.tempo_map:
        meta.append((tick, 1, SetTempo(_clamp(_round(60_000_000 / bpm), 1, 0xFFFFFF))))

    tracks = [_to_track(sorted(meta, key=lambda item: item[:2]))]
    for index in score.tracks:
        events: List[Tuple[int, int, MidiEvent]] = []
        for note in score.notes:
            if note.track != index:
                continue

            events.append((note.onset, 1, NoteOn(0, note.pitch, note.velocity)))
            events.append((note.end, 0, NoteOff(0, note.pitch, 0)))

        tracks.append(_to_track(sorted(events, key=lambda item: item[:2])))

    return MidiFile(1, score.ticks_per_quarter, tracks)

def _to_track(events: List[Tuple[int, int, MidiEvent]]) -> MidiTrack:
    track = MidiTrack()

    last = 0
    for tick, _, event in events:
        track.events.append((tick - last, event))
        last = tick

    track.events.append((0, EndOfTrack()))
    return track

def _tempo_at(entries: Sequence[Tuple[int, int]], slot: int) -> int:
    index = bisect.bisect_right([entry[0] for entry in entries], slot) - 1
    return entries[max(index, 0)][1]

def quantize(score: Score, grid: QuantizationConfig = QuantizationConfig()) -> Score:
    """
    Snaps a score onto the token grid.

    Onsets move to the nearest sixteenth slot, durations to 1..``grid.max_duration`` slots,
    velocities to their bin value and tempo changes to the bar they fall into.
    Track indices are kept. Quantizing a quantized score changes nothing.

    Parameters
    ----------
    score: :class:`Score`
        The score to quantize.
    grid: :class:`QuantizationConfig`
        The grid.
    """
    scale = SLOTS_PER_QUARTER / score.ticks_per_quarter
    step = grid.slot_ticks

    notes = [
        Note(
            onset=_round(note.onset * scale) * step,
            duration=_clamp(_round(note.duration * scale), 1, grid.max_duration) * step,
            pitch=note.pitch,
            velocity=velocity_value(velocity_bin(note.velocity)),
            track=note.track,
        )
        for note in score.notes
    ]

    signatures = _dedupe(((_round(tick * scale), num, den) for tick, num, den in score.time_signatures), DEFAULT_TIME_SIGNATURE)
    tempi = _dedupe(((_round(tick * scale), tempo_bin(bpm)) for tick, bpm in score.tempo_map), (tempo_bin(DEFAULT_BPM),))

    last_slot = max((note.onset // step for note in notes), default=0)

    tempo_map: List[Tuple[int, float]] = []
    current = None
    for start in bar_starts(signatures, last_slot):
        bin = _tempo_at(tempi, start)
        if bin != current:
            tempo_map.append((start * step, tempo_value(bin)))
            current = bin

    return Score(
        notes,
        grid.ticks_per_quarter,
        tempo_map,
        [(slot * step, num, den) for slot, num, den in signatures],
    )

def score_to_tokens(score: Score, grid: QuantizationConfig = QuantizationConfig()) -> TokenSequence:
    """
    Tokenizes a score. Tracks are flattened into one stream.

    Parameters
    ----------
    score: :class:`Score`
        The score to tokenize. It is quantized first.
    grid: :class:`QuantizationConfig`
        The grid.
    """
    quantized = quantize(score, grid)
    if quantized.is_empty:
        logger.warning('tokenizing an empty score')
        return TokenSequence([BOS, EOS])

    step = grid.slot_ticks
    notes = sorted(quantized.notes, key=lambda note: (note.onset, note.pitch, note.duration, note.velocity))

    signatures = [(tick // step, num, den) for tick, num, den in quantized.time_signatures]
    tempi = [(tick // step, tempo_bin(bpm)) for tick, bpm in quantized.tempo_map]
    starts = bar_starts(signatures, notes[-1].onset // step)

    tokens = [BOS]
    current = None
    index = 0

    for bar, start in enumerate(starts):
        tokens.append(BAR)

        bin = _tempo_at(tempi, start)
        if bin != current:
            tokens.append(VOCABULARY.encode(Token('Tempo', bin)))
            current = bin

        end = starts[bar + 1] if bar + 1 < len(starts) else math.inf
        while index < len(notes) and notes[index].onset // step < end:
            note = notes[index]
            tokens.extend((
                VOCABULARY.encode(Token('Position', note.onset // step - start)),
                VOCABULARY.encode(Token('Pitch', note.pitch)),
                VOCABULARY.encode(Token('Duration', note.duration // step)),
                VOCABULARY.encode(Token('Velocity', velocity_bin(note.velocity))),
            ))
            index += 1

    tokens.append(EOS)
    return TokenSequence(tokens)

def _kinds(tokens: Sequence[int], start: int, kinds: Tuple[str, ...]) -> bool:
    if start + len(kinds) > len(tokens):
        return False

    return all(VOCABULARY.decode(tokens[start + offset]).kind == kind for offset, kind in enumerate(kinds))

def tokens_to_score(seq: TokenSequence, grid: QuantizationConfig = QuantizationConfig()) -> Score:
    """
    Decodes a token sequence into a quantized single-track score.

    Fragments that do not follow the grammar are skipped; the amount of skipped
    tokens is stored in :attr:`Score.dropped_tokens`. Token streams carry no meter,
    so bars follow ``grid.time_signature``.

    Parameters
    ----------
    seq: :class:`TokenSequence`
        The tokens.
    grid: :class:`QuantizationConfig`
        The grid.

    Raises
    ------
    EmptySequence
        The sequence holds nothing but special tokens.
    """
    tokens = seq.tokens
    if not any(id not in (PAD, BOS, EOS) for id in tokens):
        raise EmptySequence('token sequence has no musical content')

    step = grid.slot_ticks
    length = bar_length(*grid.time_signature)
    per_bar = math.ceil(length / POSITIONS)

    def start_of(bar: int) -> int:
        return (bar // per_bar) * length + (bar % per_bar) * POSITIONS

    notes: List[Note] = []
    tempo: Dict[int, int] = {}

    bar = -1
    dropped = 0
    index = 0

    while index < len(tokens):
        token = VOCABULARY.decode(tokens[index])
        if token.kind == 'EOS':
            break

        if token.kind == 'PAD' or (token.kind == 'BOS' and index == 0):
            index += 1
        elif token.kind == 'Bar':
            bar += 1
            index += 1
        elif token.kind == 'Tempo':
            tempo[start_of(max(bar, 0))] = token.value
            index += 1
        elif token.kind == 'Position' and bar >= 0 and _kinds(tokens, index + 1, ('Pitch', 'Duration', 'Velocity')):
            pitch, duration, velocity = (VOCABULARY.decode(id).value for id in tokens[index + 1:index + 4])
            notes.append(Note(
                onset=(start_of(bar) + token.value) * step,
                duration=min(duration, grid.max_duration) * step,
                pitch=pitch,
                velocity=velocity_value(velocity),
            ))
            index += 4
        else:
            dropped += 1
            index += 1

    if dropped:
        logger.debug('dropped %d tokens that did not follow the grammar', dropped)

    tempo_map: List[Tuple[int, float]] = []
    current = None
    for slot in sorted(tempo):
        if tempo[slot] != current:
            tempo_map.append((slot * step, tempo_value(tempo[slot])))
            current = tempo[slot]

    numerator, denominator = grid.time_signature
    return Score(notes, grid.ticks_per_quarter, tempo_map, [(0, numerator, denominator)], dropped_tokens=dropped)

def save_tokens(path: pathlib.Path, seq: TokenSequence) -> None:
    write_atomic(pathlib.Path(path), ''.join(f'{id}\n' for id in seq.tokens).encode())

def load_tokens(path: pathlib.Path) -> TokenSequence:
    with pathlib.Path(path).open('r') as file:
        return TokenSequence([int(line) for line in file if line.strip()])

def save_vocabulary(path: pathlib.Path) -> None:
    write_json(pathlib.Path(path), VOCABULARY.manifest())
