import numpy as np

from .catalog import register
from .view import ScoreView, safe_mean

@register('Total Number of Notes', 'texture')
def total_notes(view: ScoreView) -> float:
    """Number of notes."""
    return float(view.n_notes)

@register('Relative Note Density of Highest Line', 'texture')
def highest_line_density(view: ScoreView) -> float:
    """
    Notes in the track with the highest mean pitch divided by the mean number of notes
    per track. 1 for single-track scores.
    """
    tracks, counts = view.track_counts()
    means = np.array([view.pitches[view.tracks == track].mean() for track in tracks])

    # argmax picks the lowest track index on ties.
    return float(counts[means.argmax()] / counts.mean())

@register('Voice Separation', 'texture')
def voice_separation(view: ScoreView) -> float:
    """Highest minus lowest per-track mean pitch. 0 for single-track scores."""
    tracks, _ = view.track_counts()
    means = np.array([view.pitches[view.tracks == track].mean() for track in tracks])

    return float(means.max() - means.min())

@register('Bass Register Prevalence', 'texture')
def bass_register(view: ScoreView) -> float:
    """Fraction of notes below C3 (MIDI 48)."""
    return safe_mean((view.pitches < 48).astype(np.float64))

@register('Treble Register Prevalence', 'texture')
def treble_register(view: ScoreView) -> float:
    """Fraction of notes at C5 (MIDI 72) or above."""
    return safe_mean((view.pitches >= 72).astype(np.float64))

@register('Mean Onset Pitch Spread', 'texture')
def onset_spread(view: ScoreView) -> float:
    """Mean distance between the highest and lowest sounding pitch over onset instants."""
    _, sounding = view.slices
    return safe_mean(np.array([np.ptp(view.pitches[members]) for members in sounding], dtype=np.float64))
