import numpy as np

from .catalog import register
from .view import ScoreView, normalized_histogram, safe_mean

DISSONANT_CLASSES = (1, 2, 6, 10, 11)

def _class_prevalence(view: ScoreView, classes) -> float:
    gaps, weights = view.vertical_pairs
    total = weights.sum()
    if total <= 0:
        return 0.0

    return float(weights[np.isin(gaps % 12, classes)].sum() / total)

@register('Vertical Interval Histogram', 'chord/vertical', dim=128)
def vertical_interval_histogram(view: ScoreView) -> np.ndarray:
    """
    At every distinct onset instant, each pair of sounding notes adds its semitone gap,
    weighted by the time until the next onset instant (the last instant is weighted by
    the time until its notes end). Normalized to sum to 1.
    """
    gaps, weights = view.vertical_pairs
    return normalized_histogram(gaps, 128, weights)

@register('Vertical Interval Class Histogram', 'chord/vertical', dim=12)
def vertical_interval_class_histogram(view: ScoreView) -> np.ndarray:
    """Vertical Interval Histogram folded modulo 12."""
    gaps, weights = view.vertical_pairs
    return normalized_histogram(gaps % 12, 12, weights)

@register('Mean Vertical Interval', 'chord/vertical')
def mean_vertical_interval(view: ScoreView) -> float:
    """Weighted mean gap between simultaneously sounding notes."""
    gaps, weights = view.vertical_pairs
    return safe_mean(gaps.astype(np.float64), weights)

@register('Vertical Minor Third Prevalence', 'chord/vertical')
def vertical_minor_thirds(view: ScoreView) -> float:
    """Weighted fraction of vertical intervals of class 3."""
    return _class_prevalence(view, (3,))

@register('Vertical Major Third Prevalence', 'chord/vertical')
def vertical_major_thirds(view: ScoreView) -> float:
    """Weighted fraction of vertical intervals of class 4."""
    return _class_prevalence(view, (4,))

@register('Vertical Perfect Fifth Prevalence', 'chord/vertical')
def vertical_fifths(view: ScoreView) -> float:
    """Weighted fraction of vertical intervals of class 7."""
    return _class_prevalence(view, (7,))

@register('Vertical Dissonance Prevalence', 'chord/vertical')
def vertical_dissonance(view: ScoreView) -> float:
    """Weighted fraction of vertical intervals of class 1, 2, 6, 10 or 11."""
    return _class_prevalence(view, DISSONANT_CLASSES)

@register('Polyphony Rate', 'chord/vertical')
def polyphony_rate(view: ScoreView) -> float:
    """Fraction of onset instants where at least two notes sound."""
    return safe_mean((view.polyphony >= 2).astype(np.float64))

@register('Chord Prevalence', 'chord/vertical')
def chord_prevalence(view: ScoreView) -> float:
    """Fraction of onset instants where at least three notes sound."""
    return safe_mean((view.polyphony >= 3).astype(np.float64))

@register('Polyphony Histogram', 'chord/vertical', dim=16)
def polyphony_histogram(view: ScoreView) -> np.ndarray:
    """
    Time-weighted distribution of the number of sounding notes at onset instants.
    Bin k holds k + 1 notes; the last bin holds 16 or more.
    """
    weights, _ = view.slices
    return normalized_histogram(view.polyphony - 1, 16, weights)

@register('Average Number of Simultaneous Notes', 'chord/vertical')
def average_simultaneous_notes(view: ScoreView) -> float:
    """Time-weighted mean number of sounding notes at onset instants."""
    weights, _ = view.slices
    return safe_mean(view.polyphony.astype(np.float64), weights)
