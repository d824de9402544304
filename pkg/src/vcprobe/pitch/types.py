from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DataError, UsageError

UNVOICED_FILL = -10.0


@dataclass(frozen=True)
class PitchConfig:
    """Search range, frame grid and estimator tuning shared by YIN and RAPT.

    ``frame_hop`` defaults to the mel hop so pitch frames line up with mel
    frames. The ``rapt_*`` weights feed the dynamic-programming tracker;
    ``voicing_state_cost`` is added to the unvoiced hypothesis of every frame
    and ``voicing_transition_cost`` is paid on each voiced/unvoiced flip.
    """

    fmin: float = 50.0
    fmax: float = 600.0
    frame_hop: int = 256
    yin_threshold: float = 0.15
    rapt_nccf_threshold: float = 0.3
    rapt_downsample_rate: float = 2000.0
    voicing_transition_cost: float = 0.5
    voicing_state_cost: float = 0.0
    rapt_window: float = 0.0075
    rapt_lag_weight: float = 0.1
    rapt_freq_weight: float = 1.0
    rapt_max_candidates: int = 20
    silence_ratio: float = 0.01

    def __post_init__(self):
        if not 0 < self.fmin < self.fmax:
            raise UsageError("need 0 < fmin < fmax")
        if self.frame_hop < 1:
            raise UsageError("frame_hop must be >= 1")
        for name in ("yin_threshold", "rapt_nccf_threshold"):
            if not 0 < getattr(self, name) < 1:
                raise UsageError(f"{name} must be in (0, 1)")

    def check_rate(self, sample_rate: int) -> None:
        if not self.fmax < sample_rate / 2:
            raise UsageError(f"fmax {self.fmax} must be below Nyquist ({sample_rate / 2})")


@dataclass(frozen=True, eq=False)
class PitchTrack:
    f0_hz: np.ndarray
    voiced: np.ndarray
    frame_hop: int
    sample_rate: int

    def __post_init__(self):
        f0 = np.asarray(self.f0_hz, dtype=np.float64).reshape(-1)
        voiced = np.asarray(self.voiced, dtype=bool).reshape(-1)
        if f0.shape != voiced.shape:
            raise DataError("f0_hz and voiced differ in length")
        if np.any(voiced != (f0 > 0)):
            raise DataError("voiced flags must match f0 > 0")
        object.__setattr__(self, "f0_hz", f0)
        object.__setattr__(self, "voiced", voiced)

    def __len__(self) -> int:
        return self.f0_hz.size

    @classmethod
    def from_f0(cls, f0_hz, frame_hop: int, sample_rate: int) -> "PitchTrack":
        f0 = np.asarray(f0_hz, dtype=np.float64)
        return cls(f0, f0 > 0, frame_hop, sample_rate)

    def as_matrix(self) -> np.ndarray:
        """Two columns ``[f0_hz, voiced]`` for the DFM1 pitch-track file."""
        return np.stack([self.f0_hz, self.voiced.astype(np.float64)], axis=1)

    @classmethod
    def from_matrix(cls, mat, frame_hop: int, sample_rate: int) -> "PitchTrack":
        mat = np.asarray(mat, dtype=np.float64)
        if mat.ndim != 2 or mat.shape[1] != 2:
            raise DataError(f"pitch track matrix must have 2 columns, got {mat.shape}")
        voiced = mat[:, 1] > 0.5
        return cls(np.where(voiced, mat[:, 0], 0.0), voiced, frame_hop, sample_rate)


@dataclass(frozen=True)
class SpeakerF0Stats:
    mean_log_f0: float
    std_log_f0: float
    n_voiced_frames: int
    speaker_id: str = ""

    def to_json(self) -> dict:
        return {
            "speaker_id": self.speaker_id,
            "mean_log_f0": self.mean_log_f0,
            "std_log_f0": self.std_log_f0,
            "n_voiced_frames": self.n_voiced_frames,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SpeakerF0Stats":
        return cls(
            float(obj["mean_log_f0"]),
            float(obj["std_log_f0"]),
            int(obj["n_voiced_frames"]),
            str(obj.get("speaker_id", "")),
        )


@dataclass(frozen=True, eq=False)
class NormalizedF0:
    values: np.ndarray
    frame_hop: int

    def __len__(self) -> int:
        return self.values.size
