"""Pitch estimation (YIN, RAPT) and speaker-relative F0 normalization."""
from .kernels import BACKEND
from .normalize import LogF0Accumulator, accumulate_speaker_stats, normalize_f0, raw_log_f0
from .rapt import rapt_estimate
from .types import UNVOICED_FILL, NormalizedF0, PitchConfig, PitchTrack, SpeakerF0Stats
from .yin import yin_estimate

ESTIMATORS = {"yin": yin_estimate, "rapt": rapt_estimate}

__all__ = [
    "BACKEND",
    "ESTIMATORS",
    "UNVOICED_FILL",
    "LogF0Accumulator",
    "NormalizedF0",
    "PitchConfig",
    "PitchTrack",
    "SpeakerF0Stats",
    "accumulate_speaker_stats",
    "normalize_f0",
    "rapt_estimate",
    "raw_log_f0",
    "yin_estimate",
]
