from __future__ import annotations

from typing import List, Tuple

from functools import cached_property

import numpy as np

from emotune.score import Score

__all__ = ('ScoreView', 'normalized_histogram', 'safe_mean', 'safe_std')

def normalized_histogram(bins: np.ndarray, size: int, weights: np.ndarray = None) -> np.ndarray:
    """Counts ``bins`` into ``size`` buckets and scales them to sum to 1 (all zero if nothing was counted)."""
    counts = np.bincount(np.clip(bins.astype(np.int64), 0, size - 1), weights=weights, minlength=size).astype(np.float64)

    total = counts.sum()
    if total <= 0:
        return np.zeros(size)

    return counts / total

def safe_mean(values: np.ndarray, weights: np.ndarray = None) -> float:
    if values.size == 0:
        return 0.0

    if weights is None:
        return float(values.mean())

    total = weights.sum()
    return float((values * weights).sum() / total) if total > 0 else 0.0

def safe_std(values: np.ndarray, weights: np.ndarray = None) -> float:
    if values.size == 0:
        return 0.0

    mean = safe_mean(values, weights)
    return float(np.sqrt(safe_mean((values - mean) ** 2, weights)))

class ScoreView:
    """
    Array views of a score in quarter-note units, shared by every feature function.
    Notes keep the score's onset order.

    Parameters
    ----------
    score: :class:`Score`
        A non-empty score.
    """
    def __init__(self, score: Score) -> None:
        tpq = score.ticks_per_quarter

        self.score = score
        self.onsets = np.array([note.onset for note in score.notes], dtype=np.float64) / tpq
        self.durations = np.array([note.duration for note in score.notes], dtype=np.float64) / tpq
        self.ends = self.onsets + self.durations
        self.pitches = np.array([note.pitch for note in score.notes], dtype=np.int64)
        self.velocities = np.array([note.velocity for note in score.notes], dtype=np.float64)
        self.tracks = np.array([note.track for note in score.notes], dtype=np.int64)

        self.tempo_map: List[Tuple[float, float]] = [(tick / tpq, bpm) for tick, bpm in score.tempo_map]
        self.length = float(self.ends.max()) if len(score.notes) else 0.0

    @property
    def n_notes(self) -> int:
        return int(self.pitches.size)

    @cached_property
    def signed_intervals(self) -> np.ndarray:
        return np.diff(self.pitches)

    @cached_property
    def intervals(self) -> np.ndarray:
        return np.abs(self.signed_intervals)

    @cached_property
    def instants(self) -> np.ndarray:
        return np.unique(self.onsets)

    @cached_property
    def slices(self) -> Tuple[np.ndarray, List[np.ndarray]]:
        """
        Weights and sounding note indices at every distinct onset instant. The weight of an
        instant is the time until the next instant (or until the sounding notes end).
        """
        instants = self.instants
        weights = np.empty(instants.size)
        sounding: List[np.ndarray] = []

        for index, instant in enumerate(instants):
            members = np.flatnonzero((self.onsets <= instant) & (self.ends > instant))
            sounding.append(members)

            if index + 1 < instants.size:
                weights[index] = instants[index + 1] - instant
            else:
                weights[index] = self.ends[members].max() - instant

        return weights, sounding

    @cached_property
    def polyphony(self) -> np.ndarray:
        _, sounding = self.slices
        return np.array([members.size for members in sounding], dtype=np.int64)

    @cached_property
    def vertical_pairs(self) -> Tuple[np.ndarray, np.ndarray]:
        """Semitone gaps between every pair of simultaneously sounding notes, with instant weights."""
        weights, sounding = self.slices

        gaps: List[np.ndarray] = []
        pair_weights: List[np.ndarray] = []

        for weight, members in zip(weights, sounding):
            if members.size < 2:
                continue

            pitches = self.pitches[members]
            upper, lower = np.triu_indices(members.size, k=1)

            gap = np.abs(pitches[upper] - pitches[lower])
            gaps.append(gap)
            pair_weights.append(np.full(gap.size, weight))

        if not gaps:
            return np.zeros(0, dtype=np.int64), np.zeros(0)

        return np.concatenate(gaps), np.concatenate(pair_weights)

    @cached_property
    def covered(self) -> float:
        """Total time in quarter notes during which at least one note sounds."""
        order = np.argsort(self.onsets, kind='stable')

        total = 0.0
        start, end = None, None
        for onset, stop in zip(self.onsets[order], self.ends[order]):
            if end is None or onset > end:
                if end is not None:
                    total += end - start

                start, end = onset, stop
            else:
                end = max(end, stop)

        if end is not None:
            total += end - start

        return float(total)

    def track_counts(self) -> Tuple[np.ndarray, np.ndarray]:
        tracks, counts = np.unique(self.tracks, return_counts=True)
        return tracks, counts
