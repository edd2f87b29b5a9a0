import numpy as np
import pytest

from emotune.errors import ConfigError, EmptySequence
from emotune.midi import EndOfTrack, MidiFile, MidiTrack, NoteOff, NoteOn, SetTempo, parse_midi
from emotune.score import (
    BOS,
    EOS,
    VOCABULARY,
    Note,
    QuantizationConfig,
    Score,
    Token,
    TokenSequence,
    load_tokens,
    midi_to_score,
    quantize,
    save_tokens,
    score_to_midi,
    score_to_tokens,
    tokens_to_score,
)

def test_vocabulary_layout():
    assert len(VOCABULARY) == 244

    assert VOCABULARY.encode(Token('PAD')) == 0
    assert BOS == 1
    assert EOS == 2
    assert VOCABULARY.encode(Token('Bar')) == 3
    assert VOCABULARY.encode(Token('Position', 0)) == 4
    assert VOCABULARY.encode(Token('Pitch', 0)) == 20
    assert VOCABULARY.encode(Token('Duration', 1)) == 148
    assert VOCABULARY.encode(Token('Velocity', 0)) == 180
    assert VOCABULARY.encode(Token('Tempo', 31)) == 243

def test_minimal_score(minimal_midi):
    score = midi_to_score(parse_midi(minimal_midi))

    assert score.notes == [Note(0, 480, 60, 64)]
    assert score.tempo_map == [(0, 120.0)]
    assert score.time_signatures == [(0, 4, 4)]

def test_unclosed_note_ends_with_its_track():
    track = MidiTrack([(0, NoteOn(0, 60, 64)), (960, EndOfTrack())])
    score = midi_to_score(MidiFile(0, 480, [track]))

    assert score.notes == [Note(0, 960, 60, 64)]

def test_overlapping_notes_pair_first_in_first_out():
    track = MidiTrack([
        (0, NoteOn(0, 60, 50)),
        (100, NoteOn(0, 60, 90)),
        (100, NoteOff(0, 60)),
        (100, NoteOff(0, 60)),
        (0, EndOfTrack()),
    ])
    score = midi_to_score(MidiFile(0, 480, [track]))

    assert score.notes == [Note(0, 200, 60, 50), Note(100, 200, 60, 90)]

def test_tracks_and_tempo_are_kept():
    conductor = MidiTrack([(0, SetTempo(1_000_000)), (0, EndOfTrack())])
    melody = MidiTrack([(0, NoteOn(0, 72, 80)), (240, NoteOff(0, 72)), (0, EndOfTrack())])
    bass = MidiTrack([(0, NoteOn(1, 36, 80)), (480, NoteOff(1, 36)), (0, EndOfTrack())])

    score = midi_to_score(MidiFile(1, 480, [conductor, melody, bass]))

    assert score.tempo_map == [(0, 60.0)]
    assert score.tracks == [1, 2]
    assert [note.pitch for note in score.notes] == [36, 72]

def test_score_to_midi_and_back():
    score = Score([Note(0, 480, 60, 64, 0), Note(240, 240, 48, 100, 1)], 480, [(0, 100.0)])
    file = score_to_midi(score)

    assert file.format == 1
    assert len(file.tracks) == 3

    back = midi_to_score(file)
    assert [(note.onset, note.duration, note.pitch, note.velocity) for note in back.notes] == [
        (0, 480, 60, 64),
        (240, 240, 48, 100),
    ]
    assert back.tempo_map[0][1] == pytest.approx(100.0, rel=1e-4)

def test_quantize_snaps_to_the_grid():
    score = Score([Note(5, 130, 60, 70), Note(3000, 100_000, 62, 127)], 480)
    quantized = quantize(score)

    assert quantized.notes == [Note(0, 120, 60, 68), Note(3000, 32 * 120, 62, 124)]
    assert quantize(quantized) == quantized

def test_quantize_rescales_resolution():
    score = Score([Note(96, 96, 60, 64)], 96)
    assert quantize(score).notes == [Note(480, 480, 60, 64)]

def test_quantization_config_is_validated():
    with pytest.raises(ConfigError):
        QuantizationConfig(ticks_per_quarter=10)

    with pytest.raises(ConfigError):
        QuantizationConfig(max_duration=33)

def test_tokenize_single_note():
    tokens = score_to_tokens(Score([Note(0, 480, 60, 64)], 480))

    assert tokens.names() == ['BOS', 'Bar', 'Tempo_21', 'Position_0', 'Pitch_60', 'Duration_4', 'Velocity_16', 'EOS']

def test_empty_score_tokenizes_to_bos_eos():
    assert score_to_tokens(Score([], 480)).tokens == [BOS, EOS]

def test_tokens_round_trip_notes():
    notes = [Note(0, 480, 60, 64), Note(0, 480, 64, 64), Note(480, 240, 67, 80), Note(2400, 960, 72, 100)]
    score = Score(notes, 480)

    tokens = score_to_tokens(score)
    assert tokens.names().count('Bar') == 2

    decoded = tokens_to_score(tokens)
    assert decoded.notes == score.notes
    assert decoded.dropped_tokens == 0
    assert score_to_tokens(decoded) == tokens

def random_score(rng):
    bars = int(rng.integers(1, 7))
    slots = sorted({(int(rng.integers(0, bars * 16)), int(rng.integers(21, 109))) for _ in range(rng.integers(1, 30))})

    notes = [
        Note(slot * 120, int(rng.integers(1, 33)) * 120, pitch, int(rng.integers(1, 128)))
        for slot, pitch in slots
    ]
    tempo_map = [(int(rng.integers(0, bars * 1920)), float(rng.uniform(40, 220))) for _ in range(rng.integers(0, 4))]

    return Score(notes, 480, tempo_map)

def test_tokens_round_trip_random_scores():
    rng = np.random.default_rng(17)

    for _ in range(100):
        score = quantize(random_score(rng))
        tokens = score_to_tokens(score)
        decoded = tokens_to_score(tokens)

        assert decoded == score
        assert decoded.dropped_tokens == 0
        assert score_to_tokens(decoded) == tokens

def test_tempo_changes_are_tokenized_once_per_change():
    score = Score([Note(0, 480, 60, 64), Note(1920, 480, 62, 64), Note(3840, 480, 64, 64)], 480, [(0, 60.0), (1920, 180.0)])
    names = score_to_tokens(score).names()

    assert [name for name in names if name.startswith('Tempo')] == ['Tempo_10', 'Tempo_27']

def test_ungrammatical_tokens_are_dropped():
    position = VOCABULARY.encode(Token('Position', 2))
    pitch = VOCABULARY.encode(Token('Pitch', 60))
    duration = VOCABULARY.encode(Token('Duration', 2))
    velocity = VOCABULARY.encode(Token('Velocity', 20))
    bar = VOCABULARY.encode(Token('Bar'))

    score = tokens_to_score(TokenSequence([BOS, pitch, bar, position, pitch, duration, velocity, duration, EOS]))

    assert score.notes == [Note(240, 240, 60, 80)]
    assert score.dropped_tokens == 2

def test_tokens_without_music_raise():
    with pytest.raises(EmptySequence):
        tokens_to_score(TokenSequence([BOS, EOS]))

def test_save_and_load_tokens(tmp_path):
    tokens = score_to_tokens(Score([Note(0, 480, 60, 64)], 480))
    save_tokens(tmp_path / 'piece.tokens', tokens)

    assert load_tokens(tmp_path / 'piece.tokens') == tokens
