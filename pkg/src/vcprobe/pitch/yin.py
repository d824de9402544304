"""YIN fundamental-frequency estimator."""
from __future__ import annotations

import math

import numpy as np

from ..errors import DataError
from ..signal_core import AudioBuffer, n_frames_for
from . import kernels
from .types import PitchConfig, PitchTrack


def lag_bounds(cfg: PitchConfig, sample_rate: int) -> tuple[int, int]:
    return max(1, int(math.floor(sample_rate / cfg.fmax))), int(math.ceil(sample_rate / cfg.fmin))


def check_length(buf: AudioBuffer, cfg: PitchConfig) -> None:
    need = 2.0 * buf.sample_rate / cfg.fmin
    if len(buf) < need:
        raise DataError(f"buffer too short: {len(buf)} samples, need at least {math.ceil(need)}")


def parabolic_offset(left: float, mid: float, right: float) -> float:
    """Vertex offset in (-1, 1) of the parabola through three equally spaced points."""
    denom = left - 2.0 * mid + right
    if denom == 0:
        return 0.0
    return float(np.clip(0.5 * (left - right) / denom, -1.0, 1.0))


def yin_estimate(buf: AudioBuffer, cfg: PitchConfig | None = None) -> PitchTrack:
    """Track F0 with YIN on frames centered at multiples of ``cfg.frame_hop``.

    Each frame integrates the squared difference over ``ceil(sr / fmin)``
    samples. The lag is the first dip of the cumulative-mean-normalized
    difference below ``yin_threshold`` (followed down to its local minimum),
    refined by parabolic interpolation. Frames with no such dip are unvoiced.
    """
    cfg = cfg or PitchConfig()
    cfg.check_rate(buf.sample_rate)
    check_length(buf, cfg)
    sr = buf.sample_rate
    tau_min, tau_max = lag_bounds(cfg, sr)
    win = tau_max
    span = win + tau_max
    n_frames = n_frames_for(len(buf), cfg.frame_hop)
    padded = np.pad(buf.samples, span)
    starts = (np.arange(n_frames) * cfg.frame_hop - span // 2 + span).astype(np.int64)
    cmnd = kernels.yin_cmnd(padded, starts, win, tau_max)

    f0 = np.zeros(n_frames)
    thr = cfg.yin_threshold
    for t in range(n_frames):
        d = cmnd[t]
        below = np.flatnonzero(d[tau_min : tau_max + 1] < thr)
        if below.size == 0:
            continue
        tau = tau_min + int(below[0])
        while tau + 1 <= tau_max and d[tau + 1] < d[tau]:
            tau += 1
        shift = 0.0
        if tau_min < tau < tau_max:
            shift = parabolic_offset(d[tau - 1], d[tau], d[tau + 1])
        f0[t] = np.clip(sr / (tau + shift), cfg.fmin, cfg.fmax)
    return PitchTrack.from_f0(f0, cfg.frame_hop, sr)
