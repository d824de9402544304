"""Speaker log-F0 statistics and the normalized-F0 intonation feature."""
from __future__ import annotations

from typing import Iterable

import numpy as np

from ..errors import NoVoicedFramesError
from .types import UNVOICED_FILL, NormalizedF0, PitchTrack, SpeakerF0Stats

STD_FLOOR = 1e-5


class LogF0Accumulator:
    """Streaming mean/variance of voiced log-F0 (Chan et al. parallel merge).

    Accumulators built on disjoint track sets can be ``merge``d in any order.
    """

    def __init__(self):
        self.n = 0
        self.mean = 0.0
        self.m2 = 0.0

    def add(self, track: PitchTrack) -> "LogF0Accumulator":
        logs = np.log(track.f0_hz[track.voiced])
        if logs.size:
            other = LogF0Accumulator()
            other.n = logs.size
            other.mean = float(logs.mean())
            other.m2 = float(((logs - other.mean) ** 2).sum())
            self.merge(other)
        return self

    def merge(self, other: "LogF0Accumulator") -> "LogF0Accumulator":
        if other.n == 0:
            return self
        n = self.n + other.n
        delta = other.mean - self.mean
        self.mean += delta * other.n / n
        self.m2 += other.m2 + delta * delta * self.n * other.n / n
        self.n = n
        return self

    def stats(self, speaker_id: str = "") -> SpeakerF0Stats:
        if self.n == 0:
            suffix = f" {speaker_id!r}" if speaker_id else ""
            raise NoVoicedFramesError("no voiced frames for speaker" + suffix)
        return SpeakerF0Stats(self.mean, float(np.sqrt(max(self.m2, 0.0) / self.n)), self.n, speaker_id)


def accumulate_speaker_stats(tracks: Iterable[PitchTrack], speaker_id: str = "") -> SpeakerF0Stats:
    """Mean and population standard deviation of ln(f0) over all voiced frames."""
    acc = LogF0Accumulator()
    for track in tracks:
        acc.add(track)
    return acc.stats(speaker_id)


def normalize_f0(track: PitchTrack, stats: SpeakerF0Stats) -> NormalizedF0:
    """z-score voiced log-F0 against the speaker's statistics; unvoiced frames get -10."""
    values = np.full(len(track), UNVOICED_FILL)
    scale = max(stats.std_log_f0, STD_FLOOR)
    voiced = track.voiced
    values[voiced] = (np.log(track.f0_hz[voiced]) - stats.mean_log_f0) / scale
    return NormalizedF0(values, track.frame_hop)


def raw_log_f0(track: PitchTrack, fill: float = 0.0) -> np.ndarray:
    """Unnormalized ln(f0) per frame, speaker register intact."""
    values = np.full(len(track), fill)
    values[track.voiced] = np.log(track.f0_hz[track.voiced])
    return values
