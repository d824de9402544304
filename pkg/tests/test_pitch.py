import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import SR, frame_truth, pitch_errors, tone
from vcprobe.errors import DataError, NoVoicedFramesError, UsageError
from vcprobe.pitch import (
    UNVOICED_FILL,
    LogF0Accumulator,
    PitchConfig,
    PitchTrack,
    SpeakerF0Stats,
    accumulate_speaker_stats,
    normalize_f0,
    rapt_estimate,
    raw_log_f0,
    yin_estimate,
)
from vcprobe.pitch import kernels
from vcprobe.pitch.yin import lag_bounds, parabolic_offset
from vcprobe.signal_core import AudioBuffer

ESTIMATORS = [yin_estimate, rapt_estimate]


# -- kernels against brute-force oracles --------------------------------------------------

def _brute_cmnd(x, start, win, tau_max):
    d = np.array([np.sum((x[start : start + win] - x[start + t : start + t + win]) ** 2) for t in range(tau_max + 1)])
    out = np.ones(tau_max + 1)
    for t in range(1, tau_max + 1):
        s = d[1 : t + 1].sum()
        out[t] = d[t] * t / s if s > 0 else 1.0
    return out


def _brute_viterbi(local, log_f0, flip, w):
    T, S = local.shape
    best, best_cost = None, np.inf
    for path in itertools.product(range(S), repeat=T):
        cost = local[0, path[0]]
        for t in range(1, T):
            a, b = path[t - 1], path[t]
            if a == 0 and b == 0:
                step = 0.0
            elif a == 0 or b == 0:
                step = flip[t]
            else:
                step = w * abs(log_f0[t, b] - log_f0[t - 1, a])
            cost += step + local[t, b]
        if cost < best_cost - 1e-12:
            best, best_cost = path, cost
    return np.array(best)


def test_yin_cmnd_matches_brute_force(backend, rng):
    x = rng.standard_normal(400)
    starts = np.array([0, 17, 150], dtype=np.int64)
    got = kernels.yin_cmnd(x, starts, 60, 80)
    for i, s in enumerate(starts):
        assert np.allclose(got[i], _brute_cmnd(x, s, 60, 80), atol=1e-9)


def test_yin_cmnd_silence_is_one(backend):
    got = kernels.yin_cmnd(np.zeros(300), np.array([0, 50], dtype=np.int64), 50, 100)
    assert np.all(got == 1.0)


def test_nccf_matches_brute_force(backend, rng):
    x = rng.standard_normal(500)
    starts = np.array([10, 200], dtype=np.int64)
    lags = np.array([[3, 40, 90], [1, 2, 150]], dtype=np.int64)
    got = kernels.nccf(x, starts, 64, lags)
    for i, s in enumerate(starts):
        ref = x[s : s + 64]
        for j, k in enumerate(lags[i]):
            sh = x[s + k : s + k + 64]
            assert got[i, j] == pytest.approx(ref @ sh / np.sqrt((ref @ ref) * (sh @ sh)), abs=1e-12)
    assert np.all(kernels.nccf(np.zeros(300), starts[:1], 32, lags[:1]) == 0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), T=st.integers(1, 5), S=st.integers(1, 4))
def test_viterbi_matches_exhaustive_search(seed, T, S):
    r = np.random.default_rng(seed)
    local = r.uniform(0, 1, (T, S))
    log_f0 = np.log(r.uniform(80, 400, (T, S)))
    flip = r.uniform(0, 1, T)
    want = _brute_viterbi(local, log_f0, flip, 1.0)
    for mod in kernels.backends().values():
        got = mod.viterbi(local, log_f0, flip, 1.0)
        assert np.array_equal(got, want)


@pytest.mark.skipif("cython" not in kernels.backends(), reason="compiled kernels not built")
def test_backends_agree(rng):
    py, cy = kernels.backends()["python"], kernels.backends()["cython"]
    x = rng.standard_normal(5000)
    starts = np.arange(0, 3000, 256, dtype=np.int64)
    assert np.allclose(py.yin_cmnd(x, starts, 441, 441), cy.yin_cmnd(x, starts, 441, 441), atol=1e-10)
    lags = rng.integers(1, 400, (starts.size, 7))
    assert np.allclose(py.nccf(x, starts, 165, lags), cy.nccf(x, starts, 165, lags), atol=1e-12)
    local = rng.uniform(0, 1, (50, 6))
    lf = np.log(rng.uniform(60, 500, (50, 6)))
    flip = np.full(50, 0.5)
    assert np.array_equal(py.viterbi(local, lf, flip, 1.0), cy.viterbi(local, lf, flip, 1.0))


def test_parabolic_offset_recovers_vertex():
    for v in (-0.4, 0.0, 0.3):
        f = lambda t: 2.0 * (t - v) ** 2 + 1.0  # noqa: E731
        assert parabolic_offset(f(-1), f(0), f(1)) == pytest.approx(v)
    assert parabolic_offset(1.0, 1.0, 1.0) == 0.0


# -- config and track types ---------------------------------------------------------------

def test_pitch_config_validation():
    with pytest.raises(UsageError):
        PitchConfig(fmin=600, fmax=50)
    with pytest.raises(UsageError):
        PitchConfig(yin_threshold=1.5)
    with pytest.raises(UsageError):
        PitchConfig(fmax=12000).check_rate(SR)
    assert lag_bounds(PitchConfig(), SR) == (36, 441)


def test_pitch_track_invariants():
    t = PitchTrack.from_f0([0.0, 100.0, 0.0], 256, SR)
    assert t.voiced.tolist() == [False, True, False]
    assert np.array_equal(PitchTrack.from_matrix(t.as_matrix(), 256, SR).f0_hz, t.f0_hz)
    with pytest.raises(DataError):
        PitchTrack(np.array([100.0]), np.array([False]), 256, SR)


# -- estimators ---------------------------------------------------------------------------

@pytest.mark.parametrize("estimate", ESTIMATORS)
def test_220hz_sine(estimate, backend):
    track = estimate(tone(220, 1.0))
    interior = slice(2, len(track) - 2)
    assert track.voiced[interior].all()
    assert np.all(np.abs(track.f0_hz[interior] - 220) <= 2)
    assert len(track) == 87 and track.frame_hop == 256


@pytest.mark.parametrize("estimate", ESTIMATORS)
def test_silence_is_unvoiced(estimate, backend):
    assert not estimate(AudioBuffer(np.zeros(SR), SR)).voiced.any()


@pytest.mark.parametrize("estimate", ESTIMATORS)
def test_white_noise_mostly_unvoiced(estimate):
    noise = np.random.default_rng(7).uniform(-0.5, 0.5, SR)
    assert np.mean(~estimate(AudioBuffer(noise, SR)).voiced) >= 0.9


@pytest.mark.parametrize("estimate", ESTIMATORS)
def test_too_short(estimate):
    with pytest.raises(DataError, match="too short"):
        estimate(AudioBuffer(np.zeros(100), SR))


@pytest.mark.parametrize("estimate", ESTIMATORS)
@pytest.mark.parametrize("freq", [50, 80, 130, 250, 440, 600])
def test_tone_accuracy(estimate, freq):
    track = estimate(tone(freq, 0.6, harmonics=(1.0, 0.5, 0.25)))
    gross, fine = pitch_errors(track, freq)
    assert gross < 0.05 and fine < 0.02
    v = track.f0_hz[track.voiced]
    assert np.all((v >= 50) & (v <= 600))


def test_rapt_gap_is_unvoiced_at_the_gap():
    buf = tone(220, 1.0)
    x = buf.samples.copy()
    lo, hi = int(0.45 * SR), int(0.55 * SR)
    x[lo:hi] = 0.0
    track = rapt_estimate(AudioBuffer(x, SR))
    centers = np.arange(len(track)) * 256
    inside = (centers >= lo) & (centers < hi)
    first, last = np.flatnonzero(inside)[[0, -1]]
    unvoiced = np.flatnonzero(~track.voiced[2:-2]) + 2
    assert abs(unvoiced[0] - first) <= 1 and abs(unvoiced[-1] - last) <= 1
    assert np.all(np.diff(unvoiced) == 1)


@pytest.mark.parametrize("estimate", ESTIMATORS)
def test_sweep_is_continuous(estimate):
    n = 2 * SR
    f = np.linspace(150, 300, n)
    track = estimate(tone(f, 2.0))
    gross, fine = pitch_errors(track, frame_truth(f, len(track)))
    assert gross < 0.05 and fine < 0.02
    v = track.f0_hz[2:-2]
    assert np.all(np.abs(np.diff(v)) / v[:-1] <= 0.2)


# -- statistics and normalization ---------------------------------------------------------

def _track(f0):
    return PitchTrack.from_f0(np.asarray(f0, dtype=np.float64), 256, SR)


def test_stats_examples():
    s = accumulate_speaker_stats([_track([200.0] * 10)])
    assert s.mean_log_f0 == pytest.approx(np.log(200)) and s.std_log_f0 == pytest.approx(0.0, abs=1e-12)
    s = accumulate_speaker_stats([_track([100.0, 400.0] * 5)])
    assert s.mean_log_f0 == pytest.approx(np.log(200)) and s.std_log_f0 == pytest.approx(np.log(2))
    assert s.n_voiced_frames == 10


def test_stats_need_voiced_frames():
    with pytest.raises(NoVoicedFramesError, match="no voiced frames for speaker"):
        accumulate_speaker_stats([_track([0.0, 0.0])])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.lists(st.one_of(st.just(0.0), st.floats(50, 600)), min_size=1, max_size=30), min_size=1, max_size=6))
def test_stats_associative(chunks):
    tracks = [_track(c) for c in chunks]
    if not any(t.voiced.any() for t in tracks):
        return
    joined = accumulate_speaker_stats([_track(np.concatenate(chunks))])
    split = accumulate_speaker_stats(tracks)
    merged = LogF0Accumulator()
    for t in reversed(tracks):
        merged.merge(LogF0Accumulator().add(t))
    for s in (split, merged.stats()):
        assert s.n_voiced_frames == joined.n_voiced_frames
        assert s.mean_log_f0 == pytest.approx(joined.mean_log_f0, abs=1e-10)
        assert s.std_log_f0 == pytest.approx(joined.std_log_f0, abs=1e-7)


def test_normalize_examples():
    stats = SpeakerF0Stats(np.log(200), np.log(2), 10)
    out = normalize_f0(_track([0.0, 400.0, 200.0, 0.0]), stats)
    assert out.values[0] == UNVOICED_FILL == -10.0 and out.values[3] == -10.0
    assert out.values[1] == pytest.approx(1.0) and out.values[2] == pytest.approx(0.0, abs=1e-12)
    assert np.all(normalize_f0(_track([0.0] * 5), stats).values == -10.0)


def test_normalize_floors_zero_std():
    out = normalize_f0(_track([200.0, 201.0]), SpeakerF0Stats(np.log(200), 0.0, 1))
    assert np.all(np.isfinite(out.values))


def test_stats_json_round_trip():
    s = SpeakerF0Stats(5.1, 0.2, 42, "p225")
    assert SpeakerF0Stats.from_json(json.loads(json.dumps(s.to_json()))) == s


def test_raw_log_f0_fill():
    assert raw_log_f0(_track([0.0, np.e])).tolist() == [0.0, 1.0]


@settings(max_examples=50, deadline=None)
@given(st.lists(st.one_of(st.just(0.0), st.floats(50, 600)), min_size=1, max_size=200))
def test_self_normalization_properties(f0):
    track = _track(f0)
    if not track.voiced.any():
        return
    out = normalize_f0(track, accumulate_speaker_stats([track]))
    assert len(out.values) == len(f0) and np.all(np.isfinite(out.values))
    assert np.all(out.values[~track.voiced] == -10.0)
    v = out.values[track.voiced]
    assert abs(v.mean()) < 1e-6
    if v.size > 1 and np.ptp(np.log(track.f0_hz[track.voiced])) > 1e-3:
        assert v.std() == pytest.approx(1.0, abs=1e-6)
