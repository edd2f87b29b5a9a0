import numpy as np

from .catalog import register
from .view import ScoreView

@register('Number of Tracks', 'instrumentation')
def number_of_tracks(view: ScoreView) -> float:
    """Number of tracks holding at least one note."""
    tracks, _ = view.track_counts()
    return float(tracks.size)

@register('Dominant Track Prevalence', 'instrumentation')
def dominant_track(view: ScoreView) -> float:
    """Fraction of notes in the track with the most notes."""
    _, counts = view.track_counts()
    return float(counts.max() / counts.sum())

@register('Track Balance', 'instrumentation')
def track_balance(view: ScoreView) -> float:
    """Shannon entropy of the note share per track, divided by its maximum. 0 for a single track."""
    _, counts = view.track_counts()
    if counts.size < 2:
        return 0.0

    shares = counts / counts.sum()
    return float(-(shares * np.log(shares)).sum() / np.log(counts.size))
