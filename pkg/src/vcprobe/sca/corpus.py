"""Synthetic multi-speaker corpus with independently controllable speaker cues.

Each utterance is a chain of pseudo-phoneme units. Voiced units are harmonic
complexes under a unit-specific two-formant envelope; unvoiced units are
shaped noise bursts. Speakers differ only through the cues switched on in
``SyntheticCorpusSpec.cues``:

``register``  mean F0 of the speaker
``rate``      unit durations are divided by the speaker's rate factor
``tilt``      spectral slope in dB per octave

plus an optional linear speaker offset added to the text encodings
(``enc_speaker_cue``), which gives a cue that a per-frame linear map can remove.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import UsageError
from ..features import AlignmentMatrix, TextEncoding
from ..signal_core import AudioBuffer, n_frames_for, peak_normalize

CUES = ("register", "rate", "tilt")


@dataclass(frozen=True)
class SyntheticCorpusSpec:
    n_speakers: int = 8
    utts_per_speaker: int = 10
    units_per_utt: int = 24
    vocab_size: int = 12
    voiced_fraction: float = 0.75
    base_unit_frames: float = 8.0
    duration_jitter: float = 0.1
    cues: tuple[str, ...] = CUES
    register_range_hz: tuple[float, float] = (90.0, 280.0)
    pitch_sigma: float = 0.08
    rate_range: tuple[float, float] = (0.6, 1.6)
    tilt_range_db: tuple[float, float] = (-12.0, -3.0)
    registers_hz: tuple[float, ...] | None = None
    rates: tuple[float, ...] | None = None
    tilts_db: tuple[float, ...] | None = None
    enc_dim: int = 0
    enc_noise: float = 0.1
    enc_speaker_cue: float = 0.0
    sample_rate: int = 22050
    hop_size: int = 256
    silent: bool = False
    seed: int = 0

    def __post_init__(self):
        for name in ("cues", "register_range_hz", "rate_range", "tilt_range_db"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        for name in ("registers_hz", "rates", "tilts_db"):
            value = getattr(self, name)
            if value is not None:
                value = tuple(float(v) for v in value)
                if len(value) != self.n_speakers:
                    raise UsageError(f"{name} needs one entry per speaker")
                object.__setattr__(self, name, value)
        if self.n_speakers < 2:
            raise UsageError("n_speakers must be >= 2")
        if self.utts_per_speaker < 1 or self.units_per_utt < 1 or self.vocab_size < 2:
            raise UsageError("utts_per_speaker, units_per_utt >= 1 and vocab_size >= 2 required")
        if unknown := set(self.cues) - set(CUES):
            raise UsageError(f"unknown cues {sorted(unknown)}; choose from {CUES}")
        if min(self.rate_range) <= 0 or (self.rates is not None and min(self.rates) <= 0):
            raise UsageError("speaking rates must be positive")

    @property
    def encoding_dim(self) -> int:
        return self.enc_dim or self.vocab_size

    def to_json(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_json(), sort_keys=True).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class SpeakerProfile:
    index: int
    register_hz: float
    rate: float
    tilt_db: float
    cue_offset: float


@dataclass(eq=False)
class Utterance:
    utt_id: str
    speaker: int
    units: np.ndarray
    audio: AudioBuffer
    alignment: AlignmentMatrix
    text_encoding: TextEncoding
    f0_true: np.ndarray
    transcript: str = ""

    @property
    def n_frames(self) -> int:
        return self.alignment.data.shape[0]

    def frame_units(self) -> np.ndarray:
        """Vocabulary id of the unit under each frame."""
        return self.units[np.argmax(self.alignment.data, axis=1)]


@dataclass(eq=False)
class SyntheticCorpus:
    spec: SyntheticCorpusSpec
    speakers: list[SpeakerProfile]
    utterances: list[Utterance] = field(default_factory=list)
    cue_direction: np.ndarray | None = None
    cache: dict = field(default_factory=dict, repr=False)

    @property
    def labels(self) -> np.ndarray:
        return np.array([u.speaker for u in self.utterances], dtype=np.int64)

    def manifest(self) -> dict:
        return {
            "spec": self.spec.to_json(),
            "speakers": [asdict(s) for s in self.speakers],
            "utterances": [
                {
                    "utt_id": u.utt_id,
                    "speaker": u.speaker,
                    "transcript": u.transcript,
                    "n_samples": len(u.audio),
                    "n_frames": u.n_frames,
                    "audio_sha256": hashlib.sha256(u.audio.samples.tobytes()).hexdigest(),
                    "encoding_sha256": hashlib.sha256(u.text_encoding.data.tobytes()).hexdigest(),
                }
                for u in self.utterances
            ],
        }


def _spread(lo: float, hi: float, n: int, rng: np.random.Generator, log: bool = False) -> np.ndarray:
    grid = np.geomspace(lo, hi, n) if log else np.linspace(lo, hi, n)
    return rng.permutation(grid)


def speaker_profiles(spec: SyntheticCorpusSpec) -> list[SpeakerProfile]:
    rng = np.random.default_rng([spec.seed, 1])
    n = spec.n_speakers
    mid_register = float(np.sqrt(spec.register_range_hz[0] * spec.register_range_hz[1]))
    registers = _spread(*spec.register_range_hz, n, rng, log=True)
    rates = _spread(*spec.rate_range, n, rng)
    tilts = _spread(*spec.tilt_range_db, n, rng)
    offsets = _spread(-1.0, 1.0, n, rng)
    if "register" not in spec.cues:
        registers = np.full(n, mid_register)
    if "rate" not in spec.cues:
        rates = np.ones(n)
    if "tilt" not in spec.cues:
        tilts = np.full(n, float(np.mean(spec.tilt_range_db)))
    registers = np.array(spec.registers_hz) if spec.registers_hz is not None else registers
    rates = np.array(spec.rates) if spec.rates is not None else rates
    tilts = np.array(spec.tilts_db) if spec.tilts_db is not None else tilts
    return [
        SpeakerProfile(k, float(registers[k]), float(rates[k]), float(tilts[k]), float(offsets[k]))
        for k in range(n)
    ]


def _unit_inventory(spec: SyntheticCorpusSpec):
    """Per-unit (voiced flag, formant 1, formant 2); shared by all speakers."""
    rng = np.random.default_rng([spec.seed, 2])
    n_voiced = max(1, int(round(spec.voiced_fraction * spec.vocab_size)))
    voiced = np.zeros(spec.vocab_size, dtype=bool)
    voiced[:n_voiced] = True
    f1 = rng.uniform(300, 900, spec.vocab_size)
    f2 = rng.uniform(1000, 3000, spec.vocab_size)
    return voiced, f1, f2


def _envelope(freqs: np.ndarray, f1: float, f2: float, tilt_db: float) -> np.ndarray:
    formants = np.exp(-0.5 * ((freqs - f1) / 150.0) ** 2) + 0.6 * np.exp(-0.5 * ((freqs - f2) / 250.0) ** 2)
    octaves = np.log2(np.maximum(freqs, 50.0) / 100.0)
    return (0.05 + formants) * 10.0 ** (tilt_db * octaves / 20.0)


def _intonation(n: int, sr: int, sigma: float, rng: np.random.Generator) -> np.ndarray:
    t = np.arange(n) / sr
    rates = rng.uniform(0.3, 1.5, 2)
    phases = rng.uniform(0, 2 * np.pi, 2)
    wave = np.sin(2 * np.pi * rates[0] * t + phases[0]) + 0.5 * np.sin(2 * np.pi * rates[1] * t + phases[1])
    return sigma * wave / 1.118


def synthesize_utterance(
    spec: SyntheticCorpusSpec,
    speaker: SpeakerProfile,
    utt_index: int,
    inventory,
    cue_direction: np.ndarray,
) -> Utterance:
    rng = np.random.default_rng([spec.seed, 3, speaker.index, utt_index])
    sr, hop = spec.sample_rate, spec.hop_size
    voiced_units, f1, f2 = inventory

    units = rng.integers(0, spec.vocab_size, spec.units_per_utt)
    jitter = np.exp(spec.duration_jitter * rng.standard_normal(spec.units_per_utt))
    frames = np.maximum(2, np.round(spec.base_unit_frames * jitter / speaker.rate)).astype(np.int64)
    bounds = np.concatenate([[0], np.cumsum(frames)]) * hop
    n = int(bounds[-1])

    f0 = speaker.register_hz * np.exp(_intonation(n, sr, spec.pitch_sigma, rng))
    phase = 2 * np.pi * np.cumsum(f0) / sr
    noise = rng.standard_normal(n)
    x = np.zeros(n)
    ramp = min(int(0.004 * sr), hop // 2)
    voiced_mask = np.zeros(n, dtype=bool)
    for k, unit in enumerate(units):
        lo, hi = int(bounds[k]), int(bounds[k + 1])
        if voiced_units[unit]:
            seg_f0 = f0[lo:hi]
            n_harm = int(min(40, 7000.0 // seg_f0.max()))
            harm = np.arange(1, n_harm + 1)
            amps = _envelope(harm[:, None] * seg_f0[None, :], f1[unit], f2[unit], speaker.tilt_db)
            seg = np.sum(amps * np.sin(harm[:, None] * phase[None, lo:hi]), axis=0)
            voiced_mask[lo:hi] = True
        else:
            spectrum = np.fft.rfft(noise[lo:hi])
            freqs = np.fft.rfftfreq(hi - lo, 1.0 / sr)
            gain = _envelope(freqs, 2500.0 + 1500.0 * (f1[unit] - 300) / 600, 5500.0, speaker.tilt_db)
            seg = 0.3 * np.fft.irfft(spectrum * gain, hi - lo)
        env = np.ones(hi - lo)
        r = min(ramp, (hi - lo) // 2)
        if r:
            env[:r] = np.linspace(0, 1, r)
            env[-r:] = np.linspace(1, 0, r)
        x[lo:hi] = seg * env

    audio = AudioBuffer(np.zeros(n) if spec.silent else x, sr)
    if not spec.silent:
        audio = peak_normalize(audio)

    n_frames = n_frames_for(n, hop)
    centers = np.minimum(np.arange(n_frames) * hop, n - 1)
    frame_unit = np.searchsorted(bounds, centers, side="right") - 1
    alignment = AlignmentMatrix.from_indices(frame_unit, spec.units_per_utt)

    dim = spec.encoding_dim
    onehot = np.zeros((spec.units_per_utt, dim))
    onehot[np.arange(spec.units_per_utt), units % dim] = 1.0
    enc = onehot + spec.enc_noise * rng.standard_normal(onehot.shape)
    enc += spec.enc_speaker_cue * speaker.cue_offset * cue_direction[None, :]

    f0_frames = np.where(voiced_mask[centers], f0[centers], 0.0)
    return Utterance(
        utt_id=f"spk{speaker.index:03d}_utt{utt_index:03d}",
        speaker=speaker.index,
        units=units,
        audio=audio,
        alignment=alignment,
        text_encoding=TextEncoding(enc),
        f0_true=f0_frames,
        transcript=" ".join(f"u{u}" for u in units),
    )


def generate_corpus(spec: SyntheticCorpusSpec, jobs: int = 1) -> SyntheticCorpus:
    """Deterministic per ``spec.seed``; each utterance has its own derived seed."""
    speakers = speaker_profiles(spec)
    inventory = _unit_inventory(spec)
    direction = np.random.default_rng([spec.seed, 4]).standard_normal(spec.encoding_dim)
    direction /= np.linalg.norm(direction)
    tasks = [(s, i) for s in speakers for i in range(spec.utts_per_speaker)]

    def make(task):
        return synthesize_utterance(spec, task[0], task[1], inventory, direction)

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(jobs) as pool:
            utterances = list(pool.map(make, tasks))
    else:
        utterances = [make(t) for t in tasks]
    return SyntheticCorpus(spec, speakers, utterances, direction)
