"""Pure-numpy versions of the compiled pitch kernels.

Every function takes the same arguments and returns the same arrays as its
counterpart in ``_kernels.pyx``. Callers pad ``x`` so that every index
``start + j + lag`` touched is in range.
"""
import numpy as np

_BIG = 1e300


def yin_cmnd(x, starts, win, tau_max):
    """Cumulative-mean-normalized difference, shape ``(n_frames, tau_max + 1)``.

    ``d(tau) = e(0) + e(tau) - 2 r(tau)`` with the cross term from an FFT.
    """
    starts = np.asarray(starts, dtype=np.int64)
    out = np.empty((starts.size, tau_max + 1))
    if starts.size == 0:
        return out
    span = win + tau_max
    segs = x[starts[:, None] + np.arange(span)[None, :]]
    head = segs[:, :win]
    n_fft = 1 << int(np.ceil(np.log2(span + win)))
    cross = np.fft.irfft(
        np.conj(np.fft.rfft(head, n_fft, axis=1)) * np.fft.rfft(segs, n_fft, axis=1), n_fft, axis=1
    )[:, : tau_max + 1]
    sq = np.concatenate([np.zeros((starts.size, 1)), np.cumsum(segs * segs, axis=1)], axis=1)
    taus = np.arange(tau_max + 1)
    energy_shift = sq[:, taus + win] - sq[:, taus]
    diff = energy_shift[:, :1] + energy_shift - 2.0 * cross
    diff = np.maximum(diff, 0.0)
    running = np.cumsum(diff[:, 1:], axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        cmnd = np.where(running > 0, diff[:, 1:] * taus[1:] / running, 1.0)
    out[:, 0] = 1.0
    out[:, 1:] = cmnd
    return out


def nccf(x, starts, win, lags):
    """Normalized cross-correlation at arbitrary per-frame lags."""
    starts = np.asarray(starts, dtype=np.int64)
    lags = np.asarray(lags, dtype=np.int64)
    if lags.size == 0:
        return np.zeros(lags.shape)
    j = np.arange(win)
    ref = x[starts[:, None] + j[None, :]]
    shifted = x[(starts[:, None] + lags)[:, :, None] + j[None, None, :]]
    cross = np.einsum("tj,tlj->tl", ref, shifted)
    e0 = np.einsum("tj,tj->t", ref, ref)
    ek = np.einsum("tlj,tlj->tl", shifted, shifted)
    denom = e0[:, None] * ek
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(denom > 0, cross / np.sqrt(denom), 0.0)


def viterbi(local, log_f0, flip_cost, freq_weight):
    """Minimum-cost state path; state 0 is unvoiced, the rest are candidates."""
    local = np.asarray(local, dtype=np.float64)
    T, S = local.shape
    path = np.zeros(T, dtype=np.int64)
    if T == 0:
        return path
    back = np.zeros((T, S), dtype=np.int64)
    cum = local[0].copy()
    for t in range(1, T):
        trans = freq_weight * np.abs(log_f0[t][None, :] - log_f0[t - 1][:, None])
        trans[0, :] = flip_cost[t]
        trans[:, 0] = flip_cost[t]
        trans[0, 0] = 0.0
        cand = cum[:, None] + trans
        back[t] = np.argmin(cand, axis=0)
        cum = cand[back[t], np.arange(S)] + local[t]
    path[-1] = int(np.argmin(cum))
    for t in range(T - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path
