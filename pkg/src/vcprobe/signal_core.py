"""Audio buffers, WAV I/O, resampling, peak normalization and log-mel features."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import get_window, resample_poly

from .errors import AudioFormatError, DataError, UsageError

DEFAULT_SAMPLE_RATE = 22050
DEFAULT_PEAK = 0.95


@dataclass(frozen=True, eq=False)
class AudioBuffer:
    """Mono float64 samples plus their sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if int(self.sample_rate) <= 0:
            raise DataError(f"sample_rate must be positive, got {self.sample_rate}")
        if x.size and not np.all(np.isfinite(x)):
            raise DataError("audio contains non-finite samples")
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class MelConfig:
    sample_rate: int = DEFAULT_SAMPLE_RATE
    fft_size: int = 1024
    hop_size: int = 256
    win_size: int = 1024
    n_mels: int = 80
    fmin: float = 0.0
    fmax: float = 8000.0
    log_floor: float = 1e-5

    def __post_init__(self):
        if not (0 < self.hop_size <= self.win_size <= self.fft_size):
            raise UsageError("need 0 < hop_size <= win_size <= fft_size")
        if not (0 <= self.fmin < self.fmax <= self.sample_rate / 2):
            raise UsageError("need 0 <= fmin < fmax <= sample_rate/2")
        if self.n_mels < 1:
            raise UsageError("n_mels must be >= 1")
        if not self.log_floor > 0:
            raise UsageError("log_floor must be positive")


@dataclass(frozen=True, eq=False)
class MelSpectrogram:
    """Natural-log mel amplitudes, shape ``(n_frames, n_mels)``."""

    data: np.ndarray
    config: MelConfig = field(default_factory=MelConfig)

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]


def load_wav(path) -> AudioBuffer:
    """Read a mono 16-bit PCM or 32-bit float WAV file.

    Multichannel files are rejected rather than downmixed.
    """
    path = Path(path)
    if not path.is_file():
        raise AudioFormatError(f"{path}: no such file")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", wavfile.WavFileWarning)
            rate, data = wavfile.read(path)
    except (ValueError, EOFError) as exc:
        raise AudioFormatError(f"{path}: not a readable WAV file ({exc})") from exc
    if data.ndim != 1:
        raise AudioFormatError(f"{path}: multichannel unsupported ({data.shape[1]} channels)")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise AudioFormatError(f"{path}: unsupported sample format {data.dtype}")
    return AudioBuffer(samples, rate)


def save_wav(path, buf: AudioBuffer, bit_depth: int = 32) -> None:
    if bit_depth == 16:
        data = np.clip(np.round(buf.samples * 32768.0), -32768, 32767).astype(np.int16)
    elif bit_depth == 32:
        data = buf.samples.astype(np.float32)
    else:
        raise UsageError("bit_depth must be 16 or 32")
    wavfile.write(Path(path), buf.sample_rate, data)


def wav_duration(path) -> float:
    """Duration in seconds, read via a memory map so only the header is parsed."""
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", wavfile.WavFileWarning)
            rate, data = wavfile.read(path, mmap=True)
    except (ValueError, EOFError, OSError) as exc:
        raise AudioFormatError(f"{path}: not a readable WAV file ({exc})") from exc
    return data.shape[0] / rate


def resample(buf: AudioBuffer, target_rate: int) -> AudioBuffer:
    """Band-limited polyphase resampling (Kaiser-windowed sinc FIR).

    The output has ``round(n * target_rate / rate)`` samples.
    """
    target_rate = int(target_rate)
    if target_rate <= 0:
        raise UsageError("target_rate must be positive")
    if target_rate == buf.sample_rate:
        return buf
    ratio = Fraction(target_rate, buf.sample_rate)
    n_out = int(np.floor(len(buf) * ratio + Fraction(1, 2)))
    if len(buf) == 0:
        return AudioBuffer(np.zeros(0), target_rate)
    y = resample_poly(buf.samples, ratio.numerator, ratio.denominator)
    if y.size >= n_out:
        y = y[:n_out]
    else:
        y = np.pad(y, (0, n_out - y.size))
    return AudioBuffer(y, target_rate)


def peak_normalize(buf: AudioBuffer, peak: float = DEFAULT_PEAK) -> AudioBuffer:
    if not 0 < peak <= 1:
        raise UsageError("peak must be in (0, 1]")
    top = np.max(np.abs(buf.samples)) if len(buf) else 0.0
    if top == 0:
        return buf
    return AudioBuffer(buf.samples * (peak / top), buf.sample_rate)


# Slaney mel scale: linear below 1 kHz, logarithmic above.
_F_SP = 200.0 / 3
_MIN_LOG_HZ = 1000.0
_MIN_LOG_MEL = _MIN_LOG_HZ / _F_SP
_LOGSTEP = np.log(6.4) / 27.0


def hz_to_mel(hz):
    hz = np.asarray(hz, dtype=np.float64)
    mel = hz / _F_SP
    log_region = hz >= _MIN_LOG_HZ
    return np.where(log_region, _MIN_LOG_MEL + np.log(np.maximum(hz, 1e-10) / _MIN_LOG_HZ) / _LOGSTEP, mel)


def mel_to_hz(mel):
    mel = np.asarray(mel, dtype=np.float64)
    hz = mel * _F_SP
    log_region = mel >= _MIN_LOG_MEL
    return np.where(log_region, _MIN_LOG_HZ * np.exp(_LOGSTEP * (mel - _MIN_LOG_MEL)), hz)


def mel_band_edges(cfg: MelConfig) -> np.ndarray:
    """The ``n_mels + 2`` band edge frequencies; band ``k`` peaks at ``edges[k + 1]``."""
    mels = np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.n_mels + 2)
    return mel_to_hz(mels)


def mel_filterbank(cfg: MelConfig) -> np.ndarray:
    """Triangular, area-normalized filters of shape ``(n_mels, fft_size // 2 + 1)``."""
    fft_freqs = np.linspace(0, cfg.sample_rate / 2, cfg.fft_size // 2 + 1)
    return filter_response(cfg, fft_freqs)


def filter_response(cfg: MelConfig, freqs) -> np.ndarray:
    """Gain of every mel filter at arbitrary frequencies, shape ``(n_mels, len(freqs))``."""
    freqs = np.atleast_1d(np.asarray(freqs, dtype=np.float64))
    edges = mel_band_edges(cfg)
    lower = edges[:-2, None]
    center = edges[1:-1, None]
    upper = edges[2:, None]
    rising = (freqs[None, :] - lower) / (center - lower)
    falling = (upper - freqs[None, :]) / (upper - center)
    weights = np.maximum(0.0, np.minimum(rising, falling))
    return weights * (2.0 / (upper - lower))


def _padded_window(cfg: MelConfig) -> np.ndarray:
    win = get_window("hann", cfg.win_size, fftbins=True)
    left = (cfg.fft_size - cfg.win_size) // 2
    return np.pad(win, (left, cfg.fft_size - cfg.win_size - left))


def stft_magnitude(samples: np.ndarray, cfg: MelConfig) -> np.ndarray:
    """Center-padded Hann STFT magnitude, shape ``(n_frames, fft_size // 2 + 1)``."""
    pad = cfg.fft_size // 2
    mode = "reflect" if samples.size > 1 else "constant"
    padded = np.pad(samples, pad, mode=mode)
    frames = np.lib.stride_tricks.sliding_window_view(padded, cfg.fft_size)[:: cfg.hop_size]
    return np.abs(np.fft.rfft(frames * _padded_window(cfg), axis=1))


def melspectrogram(buf: AudioBuffer, cfg: MelConfig | None = None) -> MelSpectrogram:
    cfg = cfg or MelConfig()
    if buf.sample_rate != cfg.sample_rate:
        raise DataError(
            f"sample-rate mismatch: audio is {buf.sample_rate} Hz, config expects {cfg.sample_rate} Hz"
        )
    mag = stft_magnitude(buf.samples, cfg)
    mel = mag @ mel_filterbank(cfg).T
    return MelSpectrogram(np.log(np.maximum(mel, cfg.log_floor)), cfg)


def n_frames_for(n_samples: int, hop_size: int) -> int:
    return n_samples // hop_size + 1
