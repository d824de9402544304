"""RAPT-style pitch tracker: two-pass NCCF candidates plus a Viterbi voicing/lag search."""
from __future__ import annotations

import math

import numpy as np
from scipy.signal import resample_poly

from ..signal_core import AudioBuffer, n_frames_for
from . import kernels
from .types import PitchConfig, PitchTrack
from .yin import check_length, lag_bounds, parabolic_offset

_MISSING = 1e6


def _peaks(values: np.ndarray, lo: int, hi: int) -> np.ndarray:
    """Indices of interior local maxima with index in ``[lo, hi]``."""
    mid = values[1:-1]
    is_peak = (mid >= values[:-2]) & (mid > values[2:])
    idx = np.flatnonzero(is_peak) + 1
    return idx[(idx >= lo) & (idx <= hi)]


def _frame_rms(x: np.ndarray, centers: np.ndarray, width: int) -> np.ndarray:
    half = width // 2
    padded = np.pad(x, half + 1)
    csum = np.concatenate([[0.0], np.cumsum(padded * padded)])
    lo = centers + 1
    hi = lo + 2 * half
    return np.sqrt(np.maximum(csum[hi] - csum[lo], 0.0) / (2 * half))


def coarse_candidates(x: np.ndarray, sr: int, centers: np.ndarray, cfg: PitchConfig):
    """First pass on a decimated copy; returns a list of full-rate lag guesses per frame."""
    factor = max(1, int(round(sr / cfg.rapt_downsample_rate)))
    xd = resample_poly(x, 1, factor) if factor > 1 else x.copy()
    sr_d = sr / factor
    kmin_d = max(1, int(math.floor(sr_d / cfg.fmax)))
    kmax_d = int(math.ceil(sr_d / cfg.fmin))
    win_d = max(2, int(round(cfg.rapt_window * sr_d)))
    lag_lo = max(1, kmin_d - 1)
    lags = np.arange(lag_lo, kmax_d + 2, dtype=np.int64)
    pad = win_d + kmax_d + 2
    padded = np.pad(xd, pad)
    starts = (np.round(centers / factor).astype(np.int64) - win_d // 2 + pad).astype(np.int64)
    phi = kernels.nccf(padded, starts, win_d, np.ascontiguousarray(np.broadcast_to(lags, (centers.size, lags.size))))

    out = []
    for t in range(centers.size):
        row = phi[t]
        idx = _peaks(row, kmin_d - lag_lo, kmax_d - lag_lo)
        if idx.size == 0:
            out.append(np.zeros(0))
            continue
        top = row[idx].max()
        if top <= 0:
            out.append(np.zeros(0))
            continue
        idx = idx[row[idx] >= cfg.rapt_nccf_threshold * top]
        idx = idx[np.argsort(-row[idx], kind="stable")][: cfg.rapt_max_candidates]
        shifts = np.array([parabolic_offset(row[i - 1], row[i], row[i + 1]) for i in idx])
        out.append((lags[idx] + shifts) * factor)
    return out, factor


def refine_candidates(x, sr, centers, guesses, factor, cfg: PitchConfig):
    """Second pass: full-rate NCCF in a ``±factor`` lag window around each guess.

    Returns per-frame arrays of (refined lag, NCCF peak value).
    """
    kmin, kmax = lag_bounds(cfg, sr)
    win = max(2, int(round(cfg.rapt_window * sr)))
    radius = factor
    width = 2 * radius + 1
    n_slots = max((g.size for g in guesses), default=0)
    results = [(np.zeros(0), np.zeros(0)) for _ in guesses]
    if n_slots == 0:
        return results
    lags = np.full((centers.size, n_slots * width), kmin, dtype=np.int64)
    for t, g in enumerate(guesses):
        for i, guess in enumerate(g):
            base = int(round(guess))
            lags[t, i * width : (i + 1) * width] = np.clip(
                np.arange(base - radius, base + radius + 1), max(1, kmin - 1), kmax + 1
            )
    pad = win + kmax + 2
    padded = np.pad(x, pad)
    starts = (centers - win // 2 + pad).astype(np.int64)
    phi = kernels.nccf(padded, starts, win, lags)

    for t, g in enumerate(guesses):
        found: dict[int, tuple[float, float]] = {}
        for i in range(g.size):
            seg_lags = lags[t, i * width : (i + 1) * width]
            seg_phi = phi[t, i * width : (i + 1) * width]
            ok = (seg_lags >= kmin) & (seg_lags <= kmax)
            if not ok.any():
                continue
            j = int(np.flatnonzero(ok)[np.argmax(seg_phi[ok])])
            lag = int(seg_lags[j])
            if lag in found or seg_phi[j] <= 0:
                continue
            shift = 0.0
            if 0 < j < width - 1 and seg_lags[j - 1] == lag - 1 and seg_lags[j + 1] == lag + 1:
                shift = parabolic_offset(seg_phi[j - 1], seg_phi[j], seg_phi[j + 1])
            peak = seg_phi[j]
            if shift:
                # vertex height of the interpolating parabola
                peak -= 0.25 * (seg_phi[j - 1] - seg_phi[j + 1]) * shift
            found[lag] = (lag + shift, min(float(peak), 1.0))
        if found:
            vals = np.array(sorted(found.values(), key=lambda p: -p[1]))
            keep = vals[:, 1] >= cfg.rapt_nccf_threshold * vals[0, 1]
            results[t] = (vals[keep, 0], vals[keep, 1])
    return results


def rapt_estimate(buf: AudioBuffer, cfg: PitchConfig | None = None) -> PitchTrack:
    """Track F0 with a RAPT-style estimator.

    Candidates come from peaks of the normalized cross-correlation on a
    decimated copy, refined at full rate. A Viterbi search over candidates
    and an unvoiced state per frame picks the track; lag jumps cost
    ``rapt_freq_weight * |ln ratio|`` and voicing flips cost
    ``voicing_transition_cost``.
    """
    cfg = cfg or PitchConfig()
    cfg.check_rate(buf.sample_rate)
    check_length(buf, cfg)
    sr = buf.sample_rate
    x = buf.samples
    kmin, kmax = lag_bounds(cfg, sr)
    n_frames = n_frames_for(len(buf), cfg.frame_hop)
    centers = np.arange(n_frames, dtype=np.int64) * cfg.frame_hop

    rms = _frame_rms(x, centers, kmax)
    loud = rms >= cfg.silence_ratio * rms.max() if rms.max() > 0 else np.zeros(n_frames, bool)

    guesses, factor = coarse_candidates(x, sr, centers, cfg)
    guesses = [g if loud[t] else np.zeros(0) for t, g in enumerate(guesses)]
    refined = refine_candidates(x, sr, centers, guesses, factor, cfg)

    n_states = 1 + max((lag.size for lag, _ in refined), default=0)
    local = np.full((n_frames, n_states), _MISSING)
    log_f0 = np.zeros((n_frames, n_states))
    lag_table = np.zeros((n_frames, n_states))
    for t, (lag, phi) in enumerate(refined):
        best = phi.max() if phi.size else 0.0
        local[t, 0] = cfg.voicing_state_cost + best
        k = lag.size
        local[t, 1 : k + 1] = 1.0 - phi * (1.0 - cfg.rapt_lag_weight * lag / kmax)
        log_f0[t, 1 : k + 1] = np.log(sr / lag)
        lag_table[t, 1 : k + 1] = lag
    flip = np.full(n_frames, cfg.voicing_transition_cost)
    path = kernels.viterbi(local, log_f0, flip, cfg.rapt_freq_weight)

    chosen = lag_table[np.arange(n_frames), path]
    f0 = np.zeros(n_frames)
    voiced = path > 0
    f0[voiced] = np.clip(sr / chosen[voiced], cfg.fmin, cfg.fmax)
    return PitchTrack.from_f0(f0, cfg.frame_hop, sr)
