import numpy as np

from .catalog import register
from .view import ScoreView, normalized_histogram, safe_mean, safe_std

@register('Average Note to Note Change in Dynamics', 'dynamics')
def dynamics_change(view: ScoreView) -> float:
    """Mean absolute velocity difference between successive notes in onset order."""
    return safe_mean(np.abs(np.diff(view.velocities)))

@register('Mean Velocity', 'dynamics')
def mean_velocity(view: ScoreView) -> float:
    """Mean note velocity."""
    return float(view.velocities.mean())

@register('Velocity Standard Deviation', 'dynamics')
def velocity_std(view: ScoreView) -> float:
    """Population standard deviation of note velocity."""
    return safe_std(view.velocities)

@register('Velocity Range', 'dynamics')
def velocity_range(view: ScoreView) -> float:
    """Loudest minus softest velocity."""
    return float(view.velocities.max() - view.velocities.min())

@register('Velocity Histogram', 'dynamics', dim=32)
def velocity_histogram(view: ScoreView) -> np.ndarray:
    """Fraction of notes per velocity bin of width 4."""
    return normalized_histogram(view.velocities // 4, 32)

@register('Loud Note Prevalence', 'dynamics')
def loud_notes(view: ScoreView) -> float:
    """Fraction of notes with velocity 96 or more."""
    return safe_mean((view.velocities >= 96).astype(np.float64))

@register('Soft Note Prevalence', 'dynamics')
def soft_notes(view: ScoreView) -> float:
    """Fraction of notes with velocity below 48."""
    return safe_mean((view.velocities < 48).astype(np.float64))

@register('Dynamic Trend', 'dynamics')
def dynamic_trend(view: ScoreView) -> float:
    """Mean velocity of the second half of the notes minus the first half. 0 for a single note."""
    half = view.n_notes // 2
    if half == 0:
        return 0.0

    return float(view.velocities[view.n_notes - half:].mean() - view.velocities[:half].mean())
