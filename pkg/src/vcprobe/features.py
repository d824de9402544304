"""Time-major feature matrices and the algebra used to build probe inputs."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, ShapeError

KINDS = frozenset({"PPG", "L", "R", "F", "M", "A", "generic"})
ROW_SUM_TOL = 1e-4


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    data: np.ndarray
    kind: str = "generic"
    frame_hop: int = 256

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 1:
            data = data[:, None]
        if data.ndim != 2:
            raise ShapeError(f"feature matrix must be 2-D, got shape {data.shape}")
        if data.shape[0] < 1:
            raise ShapeError("feature matrix needs at least one frame")
        if not np.all(np.isfinite(data)):
            raise DataError("feature matrix contains non-finite values")
        if self.kind not in KINDS:
            raise DataError(f"unknown feature kind {self.kind!r}; expected one of {sorted(KINDS)}")
        object.__setattr__(self, "data", data)

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    @property
    def n_dims(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True, eq=False)
class AlignmentMatrix:
    """Soft attention weights, shape ``(n_mel_frames, n_text_symbols)``; rows sum to 1."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise ShapeError(f"alignment must be a non-empty 2-D matrix, got shape {data.shape}")
        if not np.all(np.isfinite(data)) or data.min() < 0 or data.max() > 1:
            raise DataError("alignment entries must lie in [0, 1]")
        worst = np.abs(data.sum(axis=1) - 1.0).max()
        if worst > ROW_SUM_TOL:
            raise DataError(f"alignment rows must sum to 1 (worst deviation {worst:.2e})")
        object.__setattr__(self, "data", data)

    @classmethod
    def from_indices(cls, indices, n_symbols: int) -> "AlignmentMatrix":
        """Hard (one-hot) alignment from a per-frame symbol index."""
        indices = np.asarray(indices, dtype=np.int64)
        data = np.zeros((indices.size, n_symbols))
        data[np.arange(indices.size), indices] = 1.0
        return cls(data)


@dataclass(frozen=True, eq=False)
class TextEncoding:
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise ShapeError(f"text encoding must be 2-D, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise DataError("text encoding contains non-finite values")
        object.__setattr__(self, "data", data)


def linear_interpolate_time(feat: FeatureMatrix, target_len: int) -> FeatureMatrix:
    """Stretch to ``target_len`` rows, mapping output row i to source position
    ``i * (n - 1) / (target_len - 1)`` so the first and last rows are kept."""
    if target_len < 1:
        raise ShapeError("target_len must be >= 1")
    x = feat.data
    n = x.shape[0]
    if target_len == n:
        return FeatureMatrix(x.copy(), feat.kind, feat.frame_hop)
    if n == 1 or target_len == 1:
        return FeatureMatrix(np.repeat(x[:1], target_len, axis=0), feat.kind, feat.frame_hop)
    pos = np.arange(target_len) * (n - 1) / (target_len - 1)
    lo = np.minimum(np.floor(pos).astype(np.int64), n - 1)
    hi = np.minimum(lo + 1, n - 1)
    frac = (pos - lo)[:, None]
    a, b = x[lo], x[hi]
    out = a + frac * (b - a)
    out = np.clip(out, np.minimum(a, b), np.maximum(a, b))
    return FeatureMatrix(out, feat.kind, feat.frame_hop)


def fuse_alignment(align: AlignmentMatrix, enc: TextEncoding, frame_hop: int = 256) -> FeatureMatrix:
    """Linguistic features: per-frame attention-weighted text encodings (``A @ enc``)."""
    if align.data.shape[1] != enc.data.shape[0]:
        raise ShapeError(
            f"dimension mismatch: alignment has {align.data.shape[1]} symbols, "
            f"encoding has {enc.data.shape[0]} rows"
        )
    return FeatureMatrix(align.data @ enc.data, "L", frame_hop)


def weighted_text_index(align: AlignmentMatrix, frame_hop: int = 256) -> FeatureMatrix:
    """Expected 0-based text position per frame, shape ``(n_frames, 1)``."""
    idx = np.arange(align.data.shape[1], dtype=np.float64)
    return FeatureMatrix((align.data @ idx)[:, None], "A", frame_hop)


def concat_features(a: FeatureMatrix, b: FeatureMatrix) -> FeatureMatrix:
    """Column-wise concatenation. Lengths must already agree; nothing is resampled."""
    if a.n_frames != b.n_frames:
        raise ShapeError(f"frame-count mismatch: {a.n_frames} vs {b.n_frames}")
    if a.frame_hop != b.frame_hop:
        raise ShapeError(f"frame-hop mismatch: {a.frame_hop} vs {b.frame_hop}")
    if b.n_dims == 0:
        return a
    return FeatureMatrix(np.concatenate([a.data, b.data], axis=1), "generic", a.frame_hop)
