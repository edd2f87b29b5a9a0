import numpy as np

from .catalog import register
from .view import ScoreView, normalized_histogram, safe_mean, safe_std

# Successive notes are taken in onset order across all tracks, so chord tones
# sharing an onset contribute intervals too.

@register('Melodic Interval Histogram', 'melody', dim=128)
def melodic_interval_histogram(view: ScoreView) -> np.ndarray:
    """Fraction of successive note pairs separated by each absolute interval in semitones."""
    return normalized_histogram(view.intervals, 128)

@register('Melodic Interval Class Histogram', 'melody', dim=12)
def melodic_interval_class_histogram(view: ScoreView) -> np.ndarray:
    """Melodic intervals folded modulo 12."""
    return normalized_histogram(view.intervals % 12, 12)

@register('Mean Melodic Interval', 'melody')
def mean_melodic_interval(view: ScoreView) -> float:
    """Mean absolute interval between successive notes, in semitones."""
    return safe_mean(view.intervals.astype(np.float64))

@register('Melodic Interval Standard Deviation', 'melody')
def melodic_interval_std(view: ScoreView) -> float:
    """Population standard deviation of the absolute successive intervals."""
    return safe_std(view.intervals.astype(np.float64))

@register('Most Common Melodic Interval', 'melody')
def most_common_interval(view: ScoreView) -> float:
    """The most frequent absolute interval (the smallest on ties). 0 for a single note."""
    if view.intervals.size == 0:
        return 0.0

    return float(np.bincount(view.intervals).argmax())

@register('Stepwise Motion Prevalence', 'melody')
def stepwise_motion(view: ScoreView) -> float:
    """Fraction of successive intervals of one or two semitones."""
    return safe_mean(((view.intervals >= 1) & (view.intervals <= 2)).astype(np.float64))

@register('Repeated Note Prevalence', 'melody')
def repeated_notes(view: ScoreView) -> float:
    """Fraction of successive intervals of zero semitones."""
    return safe_mean((view.intervals == 0).astype(np.float64))

@register('Melodic Leap Prevalence', 'melody')
def melodic_leaps(view: ScoreView) -> float:
    """Fraction of successive intervals wider than a major third (five semitones or more)."""
    return safe_mean((view.intervals >= 5).astype(np.float64))

@register('Ascending Motion Prevalence', 'melody')
def ascending_motion(view: ScoreView) -> float:
    """Fraction of non-zero successive intervals that go up."""
    moving = view.signed_intervals[view.signed_intervals != 0]
    return safe_mean((moving > 0).astype(np.float64))
