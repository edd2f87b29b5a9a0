from typing import Tuple

import math

import numpy as np

from .catalog import register
from .view import ScoreView, normalized_histogram, safe_mean, safe_std

# Reference durations in quarter notes: thirty-second up to dotted whole (and longer).
RHYTHMIC_VALUES = np.array([0.125, 0.25, 0.375, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 3.5, 4.0, 6.0])

def _quarter_counts(view: ScoreView) -> np.ndarray:
    windows = max(1, math.ceil(view.length))
    return np.bincount(np.floor(view.onsets).astype(np.int64), minlength=windows)[:windows].astype(np.float64)

def _tempo_segments(view: ScoreView) -> Tuple[np.ndarray, np.ndarray]:
    starts = np.array([start for start, _ in view.tempo_map])
    bpms = np.array([bpm for _, bpm in view.tempo_map])

    ends = np.append(starts[1:], max(view.length, starts[-1]))
    spans = np.clip(np.minimum(ends, view.length) - np.minimum(starts, view.length), 0, None)

    return bpms, spans

@register('Note Density per Quarter Note', 'rhythm')
def note_density(view: ScoreView) -> float:
    """Number of notes divided by the piece length in quarter notes (the latest note end)."""
    return view.n_notes / view.length

@register('Note Density per Quarter Note Variability', 'rhythm')
def note_density_variability(view: ScoreView) -> float:
    """Population standard deviation of note onset counts in consecutive one-quarter-note windows."""
    return safe_std(_quarter_counts(view))

@register('Rhythmic Density', 'rhythm')
def rhythmic_density(view: ScoreView) -> float:
    """Number of distinct onset instants per quarter note."""
    return view.instants.size / view.length

@register('Prevalence of Long Rhythmic Values', 'rhythm')
def long_rhythmic_values(view: ScoreView) -> float:
    """Fraction of notes lasting two quarter notes or more."""
    return safe_mean((view.durations >= 2.0).astype(np.float64))

@register('Prevalence of Very Long Rhythmic Values', 'rhythm')
def very_long_rhythmic_values(view: ScoreView) -> float:
    """Fraction of notes lasting four quarter notes or more."""
    return safe_mean((view.durations >= 4.0).astype(np.float64))

@register('Rhythmic Value Histogram', 'rhythm', dim=12)
def rhythmic_value_histogram(view: ScoreView) -> np.ndarray:
    """
    Fraction of notes per rhythmic value, each duration going to the nearest of
    1/8, 1/4, 3/8, 1/2, 3/4, 1, 3/2, 2, 3, 7/2, 4 and 6 quarter notes on a log scale.
    Durations of six quarters or more fall into the last bin.
    """
    distance = np.abs(np.log2(view.durations)[:, None] - np.log2(RHYTHMIC_VALUES)[None, :])
    bins = np.where(view.durations >= RHYTHMIC_VALUES[-1], RHYTHMIC_VALUES.size - 1, distance.argmin(axis=1))

    return normalized_histogram(bins, RHYTHMIC_VALUES.size)

@register('Mean Duration', 'rhythm')
def mean_duration(view: ScoreView) -> float:
    """Mean note duration in quarter notes."""
    return float(view.durations.mean())

@register('Duration Range', 'rhythm')
def duration_range(view: ScoreView) -> float:
    """Longest minus shortest note duration in quarter notes."""
    return float(view.durations.max() - view.durations.min())

@register('Duration Standard Deviation', 'rhythm')
def duration_std(view: ScoreView) -> float:
    """Population standard deviation of note durations in quarter notes."""
    return safe_std(view.durations)

@register('Mean Inter-Onset Interval', 'rhythm')
def mean_ioi(view: ScoreView) -> float:
    """Mean time between successive distinct onset instants in quarter notes. 0 with a single instant."""
    return safe_mean(np.diff(view.instants))

@register('Inter-Onset Interval Standard Deviation', 'rhythm')
def ioi_std(view: ScoreView) -> float:
    """Population standard deviation of the time between successive distinct onset instants."""
    return safe_std(np.diff(view.instants))

@register('Onset Position Histogram', 'rhythm', dim=16)
def onset_position_histogram(view: ScoreView) -> np.ndarray:
    """Fraction of notes starting on each sixteenth of a whole-note cycle (onset sixteenth mod 16)."""
    return normalized_histogram(np.floor(view.onsets * 4 + 0.5).astype(np.int64) % 16, 16)

@register('Off-Beat Onset Prevalence', 'rhythm')
def off_beat_onsets(view: ScoreView) -> float:
    """Fraction of notes whose onset does not fall on a quarter-note beat."""
    return safe_mean((np.abs(view.onsets - np.round(view.onsets)) > 1e-9).astype(np.float64))

@register('Rest Fraction', 'rhythm')
def rest_fraction(view: ScoreView) -> float:
    """Fraction of the piece (from 0 to the latest note end) during which no note sounds."""
    return 1.0 - view.covered / view.length

@register('Piece Length', 'rhythm')
def piece_length(view: ScoreView) -> float:
    """Latest note end in quarter notes."""
    return view.length

@register('Initial Tempo', 'rhythm')
def initial_tempo(view: ScoreView) -> float:
    """Tempo in BPM at the start of the piece."""
    return float(view.tempo_map[0][1])

@register('Mean Tempo', 'rhythm')
def mean_tempo(view: ScoreView) -> float:
    """Tempo in BPM averaged over the piece, weighted by the quarter notes each tempo lasts."""
    bpms, spans = _tempo_segments(view)
    return safe_mean(bpms, spans) if spans.sum() > 0 else float(bpms[0])

@register('Tempo Variability', 'rhythm')
def tempo_variability(view: ScoreView) -> float:
    """Weighted population standard deviation of the tempo over the piece."""
    bpms, spans = _tempo_segments(view)
    return safe_std(bpms, spans)
