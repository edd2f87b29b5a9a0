"""
Reader and writer for Standard MIDI Files (formats 0 and 1).

The writer is canonical: every event carries its own status byte (no running
status) and every delta time uses the shortest variable-length quantity, so
``write_midi(parse_midi(write_midi(f))) == write_midi(f)`` byte for byte.
"""
from __future__ import annotations

from typing import Iterator, List, Tuple, Union

from dataclasses import dataclass, field
import logging
import pathlib
import struct

from emotune.errors import (
    BadHeader,
    InvariantViolation,
    MalformedEvent,
    MalformedVlq,
    TruncatedInput,
    UnsupportedDivision,
)
from emotune.utils import write_atomic

logger = logging.getLogger('emotune.midi')

__all__ = (
    'NoteOn',
    'NoteOff',
    'SetTempo',
    'TimeSignature',
    'ProgramChange',
    'EndOfTrack',
    'OtherMeta',
    'OtherChannel',
    'SysEx',
    'MidiEvent',
    'MidiTrack',
    'MidiFile',
    'decode_vlq',
    'encode_vlq',
    'parse_midi',
    'write_midi',
    'read_midi',
    'save_midi',
)

MAX_VLQ = 0x0FFFFFFF

# Channel voice messages and the amount of data bytes that follow their status byte.
DATA_LENGTHS = {0x80: 2, 0x90: 2, 0xA0: 2, 0xB0: 2, 0xC0: 1, 0xD0: 1, 0xE0: 2}
OPAQUE_CHANNEL_KINDS = (0xA0, 0xB0, 0xD0, 0xE0)

META_END_OF_TRACK = 0x2F
META_SET_TEMPO = 0x51
META_TIME_SIGNATURE = 0x58

@dataclass(frozen=True)
class NoteOn:
    channel: int
    pitch: int
    velocity: int

@dataclass(frozen=True)
class NoteOff:
    channel: int
    pitch: int
    velocity: int = 0

@dataclass(frozen=True)
class SetTempo:
    microseconds_per_quarter: int

    @property
    def bpm(self) -> float:
        return 60_000_000 / self.microseconds_per_quarter

@dataclass(frozen=True)
class TimeSignature:
    numerator: int
    denominator_pow2: int
    clocks_per_click: int = 24
    notated_32nds: int = 8

    @property
    def denominator(self) -> int:
        return 2 ** self.denominator_pow2

@dataclass(frozen=True)
class ProgramChange:
    channel: int
    program: int

@dataclass(frozen=True)
class EndOfTrack:
    pass

@dataclass(frozen=True)
class OtherMeta:
    type: int
    data: bytes

@dataclass(frozen=True)
class OtherChannel:
    status: int
    data: bytes

@dataclass(frozen=True)
class SysEx:
    status: int
    data: bytes

MidiEvent = Union[NoteOn, NoteOff, SetTempo, TimeSignature, ProgramChange, EndOfTrack, OtherMeta, OtherChannel, SysEx]

@dataclass
class MidiTrack:
    events: List[Tuple[int, MidiEvent]] = field(default_factory=list)

    def absolute(self) -> Iterator[Tuple[int, MidiEvent]]:
        """Yields ``(absolute tick, event)`` pairs."""
        tick = 0
        for delta, event in self.events:
            tick += delta
            yield tick, event

    @property
    def end_tick(self) -> int:
        return sum(delta for delta, _ in self.events)

@dataclass
class MidiFile:
    format: int
    division: int
    tracks: List[MidiTrack]
    warnings: List[str] = field(default_factory=list, compare=False, repr=False)

def _read_vlq(data: bytes, offset: int, end: int) -> Tuple[int, int]:
    value = 0
    for _ in range(4):
        if offset >= end:
            raise TruncatedInput('variable-length quantity runs past the end of its chunk')

        byte = data[offset]
        offset += 1

        value = (value << 7) | (byte & 0x7F)
        if not byte & 0x80:
            return value, offset

    raise MalformedVlq(f'variable-length quantity longer than 4 bytes at offset {offset - 4}')

def decode_vlq(data: bytes) -> int:
    """
    Decodes a single variable-length quantity that spans all of ``data``.

    Parameters
    ----------
    data: :class:`bytes`
        The encoded quantity.
    """
    value, offset = _read_vlq(data, 0, len(data))
    if offset != len(data):
        raise MalformedVlq(f'{len(data) - offset} trailing bytes after variable-length quantity')

    return value

def encode_vlq(value: int) -> bytes:
    """
    Encodes ``value`` as the shortest variable-length quantity.

    Parameters
    ----------
    value: :class:`int`
        A non-negative integer not larger than ``0x0FFFFFFF``.
    """
    if not 0 <= value <= MAX_VLQ:
        raise InvariantViolation(f'{value} cannot be encoded as a variable-length quantity')

    out = [value & 0x7F]
    value >>= 7

    while value:
        out.append((value & 0x7F) | 0x80)
        value >>= 7

    return bytes(reversed(out))

def _take(data: bytes, offset: int, end: int, size: int) -> Tuple[bytes, int]:
    if offset + size > end:
        raise TruncatedInput(f'event needs {size} bytes but only {end - offset} remain in the chunk')

    return data[offset:offset + size], offset + size

def _meta_event(type: int, payload: bytes) -> MidiEvent:
    if type == META_END_OF_TRACK and not payload:
        return EndOfTrack()
    elif type == META_SET_TEMPO and len(payload) == 3:
        return SetTempo(int.from_bytes(payload, 'big'))
    elif type == META_TIME_SIGNATURE and len(payload) == 4:
        return TimeSignature(payload[0], payload[1], payload[2], payload[3])

    return OtherMeta(type, payload)

def _channel_event(status: int, payload: bytes) -> MidiEvent:
    kind, channel = status & 0xF0, status & 0x0F
    if kind == 0x90:
        if payload[1] == 0:
            return NoteOff(channel, payload[0], 0)

        return NoteOn(channel, payload[0], payload[1])
    elif kind == 0x80:
        return NoteOff(channel, payload[0], payload[1])
    elif kind == 0xC0:
        return ProgramChange(channel, payload[0])

    return OtherChannel(status, payload)

def _parse_track(data: bytes, warnings: List[str], index: int) -> MidiTrack:
    events: List[Tuple[int, MidiEvent]] = []
    offset, end = 0, len(data)
    running = None

    while offset < end:
        delta, offset = _read_vlq(data, offset, end)
        if offset >= end:
            raise TruncatedInput(f'track {index}: delta time without an event')

        byte = data[offset]
        if byte & 0x80:
            status = byte
            offset += 1
        elif running is None:
            raise MalformedEvent(f'track {index}: data byte {byte:#04x} without a running status')
        else:
            status = running

        event: MidiEvent
        if status == 0xFF:
            running = None

            type, offset = _take(data, offset, end, 1)
            length, offset = _read_vlq(data, offset, end)
            payload, offset = _take(data, offset, end, length)

            event = _meta_event(type[0], payload)
        elif status in (0xF0, 0xF7):
            running = None

            length, offset = _read_vlq(data, offset, end)
            payload, offset = _take(data, offset, end, length)

            event = SysEx(status, payload)
        elif status >= 0xF0:
            raise MalformedEvent(f'track {index}: system message {status:#04x} is not allowed in a file')
        else:
            running = status

            payload, offset = _take(data, offset, end, DATA_LENGTHS[status & 0xF0])
            if any(value & 0x80 for value in payload):
                raise MalformedEvent(f'track {index}: status byte inside the data of {status:#04x}')

            event = _channel_event(status, payload)

        events.append((delta, event))
        if isinstance(event, EndOfTrack):
            if offset < end:
                warnings.append(f'track {index}: ignored {end - offset} bytes after EndOfTrack')
            break
    else:
        warnings.append(f'track {index}: missing EndOfTrack, appended one')
        events.append((0, EndOfTrack()))

    return MidiTrack(events)

def parse_midi(data: bytes) -> MidiFile:
    """
    Parses a Standard MIDI File.

    Running status and variable-length quantities are decoded, unknown chunks are
    skipped with a warning and ``NoteOn`` events with velocity 0 become ``NoteOff``.

    Parameters
    ----------
    data: :class:`bytes`
        The contents of the file.

    Raises
    ------
    BadHeader
        The file does not start with a valid ``MThd`` chunk.
    UnsupportedDivision
        The time division is SMPTE based.
    TruncatedInput
        A chunk or an event claims more bytes than are available.
    MalformedVlq
        A variable-length quantity is longer than 4 bytes.
    """
    data = bytes(data)
    if len(data) < 8 or data[:4] != b'MThd':
        raise BadHeader('file does not start with an MThd chunk')

    length = int.from_bytes(data[4:8], 'big')
    if length < 6:
        raise BadHeader(f'MThd chunk has length {length}, expected 6')

    if 8 + length > len(data):
        raise TruncatedInput('MThd chunk runs past the end of the file')

    format, declared, division = struct.unpack('>HHH', data[8:14])
    if format not in (0, 1):
        raise BadHeader(f'unsupported SMF format {format}')

    if division & 0x8000:
        raise UnsupportedDivision('SMPTE time division is not supported')

    if division == 0:
        raise BadHeader('time division must be positive')

    warnings: List[str] = []
    tracks: List[MidiTrack] = []

    offset = 8 + length
    while offset < len(data):
        if len(data) - offset < 8:
            raise TruncatedInput(f'{len(data) - offset} stray bytes where a chunk header was expected')

        tag = data[offset:offset + 4]
        size = int.from_bytes(data[offset + 4:offset + 8], 'big')
        offset += 8

        if size > len(data) - offset:
            raise TruncatedInput(f'chunk {tag!r} declares {size} bytes but only {len(data) - offset} remain')

        body = data[offset:offset + size]
        offset += size

        if tag == b'MTrk':
            tracks.append(_parse_track(body, warnings, len(tracks)))
        else:
            warnings.append(f'skipped unknown chunk {tag!r} ({size} bytes)')

    if len(tracks) != declared:
        warnings.append(f'header declares {declared} tracks but {len(tracks)} were found')

    if format == 0 and len(tracks) != 1:
        raise BadHeader(f'format 0 file has {len(tracks)} tracks')

    for warning in warnings:
        logger.warning(warning)

    return MidiFile(format, division, tracks, warnings)

def _check(condition: bool, message: str) -> None:
    if not condition:
        raise InvariantViolation(message)

def _check_byte(value: int, name: str, limit: int = 0x7F) -> None:
    _check(isinstance(value, int) and 0 <= value <= limit, f'{name} {value!r} out of range 0..{limit}')

def _validate_event(event: MidiEvent) -> None:
    if isinstance(event, (NoteOn, NoteOff)):
        _check_byte(event.channel, 'channel', 15)
        _check_byte(event.pitch, 'pitch')
        _check_byte(event.velocity, 'velocity')

        _check(not isinstance(event, NoteOn) or event.velocity > 0, 'NoteOn with velocity 0 must be written as NoteOff')
    elif isinstance(event, ProgramChange):
        _check_byte(event.channel, 'channel', 15)
        _check_byte(event.program, 'program')
    elif isinstance(event, SetTempo):
        _check_byte(event.microseconds_per_quarter, 'tempo', 0xFFFFFF)
        _check(event.microseconds_per_quarter > 0, 'tempo must be positive')
    elif isinstance(event, TimeSignature):
        for name in ('numerator', 'denominator_pow2', 'clocks_per_click', 'notated_32nds'):
            _check_byte(getattr(event, name), name, 0xFF)
    elif isinstance(event, OtherMeta):
        _check_byte(event.type, 'meta type')
        _check(len(event.data) <= MAX_VLQ, 'meta payload too long')
        _check(
            not isinstance(_meta_event(event.type, event.data), (EndOfTrack, SetTempo, TimeSignature)),
            f'meta {event.type:#04x} with this payload must use its typed event',
        )
    elif isinstance(event, OtherChannel):
        kind = event.status & 0xF0
        _check(kind in OPAQUE_CHANNEL_KINDS, f'status {event.status:#04x} must use its typed event')
        _check(len(event.data) == DATA_LENGTHS[kind], f'status {event.status:#04x} needs {DATA_LENGTHS[kind]} data bytes')
        _check(all(value < 0x80 for value in event.data), 'channel data bytes must be below 0x80')
    elif isinstance(event, SysEx):
        _check(event.status in (0xF0, 0xF7), f'invalid sysex status {event.status:#04x}')
    elif not isinstance(event, EndOfTrack):
        raise InvariantViolation(f'unknown event {event!r}')

def validate(file: MidiFile) -> None:
    """
    Checks the type invariants of a :class:`MidiFile`.

    Raises
    ------
    InvariantViolation
        Any invariant does not hold.
    """
    _check(file.format in (0, 1), f'format must be 0 or 1, not {file.format}')
    _check(0 < file.division < 0x8000, f'division must be in 1..32767, not {file.division}')
    _check(file.format != 0 or len(file.tracks) == 1, 'format 0 requires exactly one track')
    _check(len(file.tracks) <= 0xFFFF, 'too many tracks')

    for index, track in enumerate(file.tracks):
        _check(bool(track.events), f'track {index} is empty')
        for position, (delta, event) in enumerate(track.events):
            _check(0 <= delta <= MAX_VLQ, f'track {index}: delta {delta} out of range')
            _validate_event(event)

            last = position == len(track.events) - 1
            _check(isinstance(event, EndOfTrack) == last, f'track {index}: EndOfTrack must be the last event and only there')

def _encode_event(event: MidiEvent) -> bytes:
    if isinstance(event, NoteOn):
        return bytes((0x90 | event.channel, event.pitch, event.velocity))
    elif isinstance(event, NoteOff):
        return bytes((0x80 | event.channel, event.pitch, event.velocity))
    elif isinstance(event, ProgramChange):
        return bytes((0xC0 | event.channel, event.program))
    elif isinstance(event, OtherChannel):
        return bytes((event.status,)) + event.data
    elif isinstance(event, SetTempo):
        return bytes((0xFF, META_SET_TEMPO, 3)) + event.microseconds_per_quarter.to_bytes(3, 'big')
    elif isinstance(event, TimeSignature):
        return bytes((
            0xFF, META_TIME_SIGNATURE, 4,
            event.numerator, event.denominator_pow2, event.clocks_per_click, event.notated_32nds,
        ))
    elif isinstance(event, EndOfTrack):
        return bytes((0xFF, META_END_OF_TRACK, 0))
    elif isinstance(event, OtherMeta):
        return bytes((0xFF, event.type)) + encode_vlq(len(event.data)) + event.data

    return bytes((event.status,)) + encode_vlq(len(event.data)) + event.data

def write_midi(file: MidiFile) -> bytes:
    """
    Serializes a :class:`MidiFile` canonically.

    Parameters
    ----------
    file: :class:`MidiFile`
        The file to serialize.

    Raises
    ------
    InvariantViolation
        The file does not satisfy the type invariants.
    """
    validate(file)

    out = bytearray(b'MThd')
    out += struct.pack('>IHHH', 6, file.format, len(file.tracks), file.division)

    for track in file.tracks:
        body = bytearray()
        for delta, event in track.events:
            body += encode_vlq(delta)
            body += _encode_event(event)

        out += b'MTrk'
        out += struct.pack('>I', len(body))
        out += body

    return bytes(out)

def read_midi(path: pathlib.Path) -> MidiFile:
    return parse_midi(pathlib.Path(path).read_bytes())

def save_midi(path: pathlib.Path, file: MidiFile) -> None:
    write_atomic(pathlib.Path(path), write_midi(file))
