import numpy as np
import pytest

from emotune.errors import BadHeader, InvariantViolation, MalformedEvent, MalformedVlq, TruncatedInput, UnsupportedDivision
from emotune.midi import (
    EndOfTrack,
    MidiFile,
    MidiTrack,
    NoteOff,
    NoteOn,
    OtherChannel,
    OtherMeta,
    ProgramChange,
    SetTempo,
    SysEx,
    TimeSignature,
    decode_vlq,
    encode_vlq,
    parse_midi,
    read_midi,
    save_midi,
    write_midi,
)

@pytest.mark.parametrize('data, value', [
    (b'\x00', 0),
    (b'\x7f', 127),
    (b'\x81\x00', 128),
    (b'\x81\x48', 200),
    (b'\xff\xff\xff\x7f', 0x0FFFFFFF),
])
def test_vlq_known_values(data, value):
    assert decode_vlq(data) == value
    assert encode_vlq(value) == data

def test_vlq_errors():
    with pytest.raises(MalformedVlq):
        decode_vlq(b'\x81\x81\x81\x81\x01')

    with pytest.raises(TruncatedInput):
        decode_vlq(b'\x81')

    with pytest.raises(InvariantViolation):
        encode_vlq(0x10000000)

    with pytest.raises(InvariantViolation):
        encode_vlq(-1)

def test_parse_minimal(minimal_midi):
    file = parse_midi(minimal_midi)

    assert file.format == 0
    assert file.division == 480
    assert len(file.tracks) == 1
    assert file.tracks[0].events == [
        (0, NoteOn(0, 60, 64)),
        (480, NoteOff(0, 60, 64)),
        (0, EndOfTrack()),
    ]
    assert file.warnings == []

def test_write_minimal_is_canonical(minimal_midi):
    assert write_midi(parse_midi(minimal_midi)) == minimal_midi

def test_empty_format0_file():
    data = write_midi(MidiFile(0, 96, [MidiTrack([(0, EndOfTrack())])]))

    assert len(data) == 26
    assert parse_midi(data).tracks[0].events == [(0, EndOfTrack())]

def test_running_status_and_zero_velocity():
    track = bytes.fromhex('00 90 3c 40  60 3c 00  00 3e 50  60 3e 00  00 ff 2f 00')
    data = bytes.fromhex('4d546864 00000006 0000 0001 0060 4d54726b') + len(track).to_bytes(4, 'big') + track

    events = [event for _, event in parse_midi(data).tracks[0].events]
    assert events == [
        NoteOn(0, 60, 64),
        NoteOff(0, 60, 0),
        NoteOn(0, 62, 80),
        NoteOff(0, 62, 0),
        EndOfTrack(),
    ]

def test_meta_events():
    track = MidiTrack([
        (0, SetTempo(500_000)),
        (0, TimeSignature(3, 2)),
        (0, OtherMeta(0x03, b'melody')),
        (0, EndOfTrack()),
    ])

    file = parse_midi(write_midi(MidiFile(1, 480, [track])))
    events = [event for _, event in file.tracks[0].events]

    assert events == [event for _, event in track.events]
    assert events[0].bpm == pytest.approx(120.0)
    assert events[1].denominator == 4

def test_unknown_chunk_is_skipped(minimal_midi):
    extra = b'XFIH' + (3).to_bytes(4, 'big') + b'abc'
    data = minimal_midi[:14] + extra + minimal_midi[14:]

    file = parse_midi(data)
    assert len(file.tracks) == 1
    assert any('unknown chunk' in warning for warning in file.warnings)

def test_missing_end_of_track_is_appended():
    track = bytes.fromhex('00 90 3c 40 60 80 3c 00')
    data = bytes.fromhex('4d546864 00000006 0000 0001 0060 4d54726b') + len(track).to_bytes(4, 'big') + track

    file = parse_midi(data)
    assert file.tracks[0].events[-1] == (0, EndOfTrack())
    assert file.warnings

@pytest.mark.parametrize('data, error', [
    (b'RIFF0000', BadHeader),
    (bytes.fromhex('4d546864 00000006 0002 0001 0060'), BadHeader),
    (bytes.fromhex('4d546864 00000006 0000 0001 e728'), UnsupportedDivision),
    (bytes.fromhex('4d546864 00000006 0000 0001 0060 4d54726b 00000010 00 90'), TruncatedInput),
    (bytes.fromhex('4d546864 00000006 0000 0001 0060 4d54726b 00000004 00 3c 40 00'), MalformedEvent),
])
def test_parse_errors(data, error):
    with pytest.raises(error):
        parse_midi(data)

def test_write_rejects_invalid_files():
    with pytest.raises(InvariantViolation):
        write_midi(MidiFile(0, 480, [MidiTrack([(0, NoteOn(0, 128, 64)), (0, EndOfTrack())])]))

    with pytest.raises(InvariantViolation):
        write_midi(MidiFile(1, 480, [MidiTrack([(0, NoteOn(0, 60, 64))])]))

    with pytest.raises(InvariantViolation):
        write_midi(MidiFile(0, 480, [MidiTrack([(0, EndOfTrack())]), MidiTrack([(0, EndOfTrack())])]))

CHANNEL_DATA = {0xA0: 2, 0xB0: 2, 0xD0: 1, 0xE0: 2}

def random_bytes(rng: np.random.Generator, size: int, limit: int = 256) -> bytes:
    return bytes(rng.integers(0, limit, size=size).tolist())

def random_event(rng: np.random.Generator):
    channel, pitch = int(rng.integers(0, 16)), int(rng.integers(0, 128))
    kind = int(rng.integers(0, 9))

    if kind == 0:
        return NoteOn(channel, pitch, int(rng.integers(1, 128)))
    elif kind == 1:
        return NoteOff(channel, pitch, int(rng.integers(0, 128)))
    elif kind == 2:
        return ProgramChange(channel, int(rng.integers(0, 128)))
    elif kind == 3:
        status = int(rng.choice(list(CHANNEL_DATA)))
        return OtherChannel(status | channel, random_bytes(rng, CHANNEL_DATA[status], 0x80))
    elif kind == 4:
        return SetTempo(int(rng.integers(1, 0x1000000)))
    elif kind == 5:
        return TimeSignature(*rng.integers(0, 256, size=4).tolist())
    elif kind == 6:
        # Text, track name, key signature and sequencer specific.
        meta = int(rng.choice([0x01, 0x03, 0x59, 0x7F]))
        return OtherMeta(meta, random_bytes(rng, int(rng.integers(0, 200))))
    elif kind == 7:
        return SysEx(int(rng.choice([0xF0, 0xF7])), random_bytes(rng, int(rng.integers(0, 40))))

    # Notes on channel 0 repeat their status byte often.
    return NoteOn(0, pitch, int(rng.integers(1, 128))) if rng.random() < 0.5 else NoteOff(0, pitch, 0)

def random_file(rng: np.random.Generator) -> MidiFile:
    format = int(rng.integers(0, 2))
    tracks = []

    for _ in range(1 if format == 0 else rng.integers(1, 4)):
        events = [(int(rng.integers(0, 5000)), random_event(rng)) for _ in range(rng.integers(0, 40))]
        events.append((int(rng.integers(0, 100)), EndOfTrack()))
        tracks.append(MidiTrack(events))

    return MidiFile(format, int(rng.integers(1, 0x8000)), tracks)

def event_bytes(event) -> bytes:
    # A one-event track is "00 <event> 00 FF 2F 00" after the 22 header bytes.
    return write_midi(MidiFile(0, 1, [MidiTrack([(0, event), (0, EndOfTrack())])]))[23:-4]

def with_running_status(file: MidiFile) -> bytes:
    """Encodes ``file`` the way other writers do, dropping every repeated channel status byte."""
    out = bytearray(write_midi(file)[:14])

    for track in file.tracks:
        body = bytearray()
        running = None

        for delta, event in track.events:
            data = b'\xff\x2f\x00' if isinstance(event, EndOfTrack) else event_bytes(event)
            status = data[0]

            body += encode_vlq(delta)
            if status < 0xF0 and status == running:
                body += data[1:]
            else:
                body += data

            running = status if status < 0xF0 else None

        out += b'MTrk' + len(body).to_bytes(4, 'big') + body

    return bytes(out)

def test_random_files_survive_a_round_trip(rng):
    for _ in range(200):
        file = random_file(rng)
        data = write_midi(file)

        assert parse_midi(data) == file
        assert write_midi(parse_midi(data)) == data

def test_running_status_is_read(rng):
    shorter = 0
    for _ in range(50):
        file = random_file(rng)
        compact = with_running_status(file)

        assert parse_midi(compact) == file
        assert write_midi(parse_midi(compact)) == write_midi(file)
        shorter += len(compact) < len(write_midi(file))

    assert shorter > 0

def test_save_and_read(tmp_path, minimal_midi):
    file = parse_midi(minimal_midi)
    save_midi(tmp_path / 'piece.mid', file)

    assert (tmp_path / 'piece.mid').read_bytes() == minimal_midi
    assert read_midi(tmp_path / 'piece.mid') == file
