import numpy as np

from .catalog import register
from .view import ScoreView, normalized_histogram, safe_std

# Krumhansl-Kessler key profiles, tonic first.
MAJOR_PROFILE = np.array([6.35, 2.23, 3.48, 2.33, 4.38, 4.09, 2.52, 5.19, 2.39, 3.66, 2.29, 2.88])
MINOR_PROFILE = np.array([6.33, 2.68, 3.52, 5.38, 2.60, 3.53, 2.54, 4.75, 3.98, 2.69, 3.34, 3.17])

def _key_correlation(view: ScoreView, profile: np.ndarray) -> float:
    histogram = normalized_histogram(view.pitches % 12, 12)
    if histogram.std() == 0:
        return 0.0

    best = -1.0
    for tonic in range(12):
        best = max(best, float(np.corrcoef(histogram, np.roll(profile, tonic))[0, 1]))

    return best

@register('Pitch Class Histogram', 'pitch', dim=12)
def pitch_class_histogram(view: ScoreView) -> np.ndarray:
    """Fraction of notes with each pitch class, C = bin 0."""
    return normalized_histogram(view.pitches % 12, 12)

@register('Folded Fifths Pitch Class Histogram', 'pitch', dim=12)
def folded_fifths_histogram(view: ScoreView) -> np.ndarray:
    """Pitch class histogram reordered along the circle of fifths: pitch class p goes to bin 7p mod 12."""
    return normalized_histogram((7 * view.pitches) % 12, 12)

@register('Pitch Histogram', 'pitch', dim=128)
def pitch_histogram(view: ScoreView) -> np.ndarray:
    """Fraction of notes with each MIDI pitch."""
    return normalized_histogram(view.pitches, 128)

@register('Mean Pitch', 'pitch')
def mean_pitch(view: ScoreView) -> float:
    """Mean MIDI pitch over all notes."""
    return float(view.pitches.mean())

@register('Pitch Standard Deviation', 'pitch')
def pitch_std(view: ScoreView) -> float:
    """Population standard deviation of MIDI pitch."""
    return safe_std(view.pitches.astype(np.float64))

@register('Lowest Pitch', 'pitch')
def lowest_pitch(view: ScoreView) -> float:
    """Lowest MIDI pitch."""
    return float(view.pitches.min())

@register('Highest Pitch', 'pitch')
def highest_pitch(view: ScoreView) -> float:
    """Highest MIDI pitch."""
    return float(view.pitches.max())

@register('Range', 'pitch')
def pitch_range(view: ScoreView) -> float:
    """Highest minus lowest MIDI pitch, in semitones."""
    return float(view.pitches.max() - view.pitches.min())

@register('Number of Distinct Pitches', 'pitch')
def distinct_pitches(view: ScoreView) -> float:
    """Number of distinct MIDI pitches used."""
    return float(np.unique(view.pitches).size)

@register('Number of Pitch Classes', 'pitch')
def distinct_pitch_classes(view: ScoreView) -> float:
    """Number of distinct pitch classes used."""
    return float(np.unique(view.pitches % 12).size)

@register('Dominant Pitch Class Prevalence', 'pitch')
def dominant_pitch_class(view: ScoreView) -> float:
    """Fraction of notes that have the most common pitch class."""
    return float(normalized_histogram(view.pitches % 12, 12).max())

@register('Major Key Correlation', 'pitch')
def major_key_correlation(view: ScoreView) -> float:
    """
    Highest Pearson correlation between the pitch class histogram and the twelve rotations
    of the Krumhansl-Kessler major profile. 0 when the histogram is flat.
    """
    return _key_correlation(view, MAJOR_PROFILE)

@register('Minor Key Correlation', 'pitch')
def minor_key_correlation(view: ScoreView) -> float:
    """Same as Major Key Correlation with the minor profile."""
    return _key_correlation(view, MINOR_PROFILE)
