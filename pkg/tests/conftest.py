import numpy as np
import pytest

from vcprobe.signal_core import AudioBuffer

SR = 22050


def tone(freq, seconds=1.0, sr=SR, amp=0.5, phase=0.0, harmonics=(1.0,)):
    """Harmonic complex at ``freq`` (constant or per-sample array)."""
    n = int(round(seconds * sr))
    f = np.broadcast_to(np.asarray(freq, dtype=np.float64), (n,))
    ph = 2 * np.pi * np.cumsum(f) / sr + phase
    x = sum(a * np.sin((k + 1) * ph) for k, a in enumerate(harmonics))
    x = amp * x / max(np.max(np.abs(x)), 1e-12)
    return AudioBuffer(x, sr)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pitch_errors(track, true_f0, margin=2):
    """(gross error rate, median relative fine error) over interior frames.

    Gross means more than 20% off, or reported unvoiced, on a frame that
    should be voiced.
    """
    true_f0 = np.broadcast_to(np.asarray(true_f0, dtype=np.float64), track.f0_hz.shape)
    sel = np.zeros(len(track), bool)
    sel[margin : len(track) - margin] = True
    sel &= true_f0 > 0
    rel = np.abs(track.f0_hz[sel] - true_f0[sel]) / true_f0[sel]
    gross = (rel > 0.2) | ~track.voiced[sel]
    fine = rel[~gross]
    return float(gross.mean()), float(np.median(fine)) if fine.size else float("inf")


def frame_truth(freq_per_sample, n_frames, hop=256):
    f = np.asarray(freq_per_sample, dtype=np.float64)
    idx = np.minimum(np.arange(n_frames) * hop, f.size - 1)
    return f[idx]


@pytest.fixture(params=sorted(__import__("vcprobe.pitch.kernels", fromlist=["backends"]).backends()))
def backend(request, monkeypatch):
    """Run the test once per available pitch-kernel backend."""
    from vcprobe.pitch import kernels

    mod = kernels.backends()[request.param]
    for name in ("yin_cmnd", "nccf", "viterbi"):
        monkeypatch.setattr(kernels, name, getattr(mod, name))
    return request.param


_VERDICTS: list[str] = []


@pytest.fixture
def verdict(request):
    """Record a one-line pass/fail summary for an acceptance criterion."""
    reporter = request.config.pluginmanager.get_plugin("terminalreporter")

    def emit(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        _VERDICTS.append(line)
        if reporter is not None:
            reporter.write_line("")
            reporter.write_line(line)
        return ok

    return emit


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS):
            terminalreporter.write_line(line)
