"""Per-arm feature preparation, speaker-shared splits and fixed-length crops."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from ..dfm import read_dfm
from ..errors import DataError, UsageError
from ..features import (
    FeatureMatrix,
    concat_features,
    fuse_alignment,
    linear_interpolate_time,
    weighted_text_index,
)
from ..nn.probe import ProbeConfig
from ..pitch import PitchConfig, accumulate_speaker_stats, normalize_f0, rapt_estimate, raw_log_f0
from ..signal_core import MelConfig, melspectrogram
from .corpus import SyntheticCorpus

ARMS = ("random", "PPG", "L", "(L,F)", "(L,R)", "A-reduced", "L_adv", "M", "F", "F-raw")
EXTERNAL_ARMS = {"PPG": "PPG", "(L,R)": "R"}


@dataclass(frozen=True)
class ExperimentSpec:
    """One SCA measurement. ``probe.feature_dim``, ``n_classes`` and ``frames``
    are filled in from the prepared data, so any placeholder values work."""

    feature_arm: str = "random"
    crop_frames: int = 128
    crops_per_utt: int = 4
    probe: ProbeConfig = field(default_factory=lambda: ProbeConfig(feature_dim=1, n_classes=2))
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 0
    patience: int = 5
    max_steps: int = 100
    min_delta: float = 0.0025
    utterance_vote: bool = False
    random_dim: int = 20
    external_dir: str | None = None
    pitch: PitchConfig = field(default_factory=PitchConfig)

    def __post_init__(self):
        object.__setattr__(self, "ratios", tuple(float(r) for r in self.ratios))
        if self.feature_arm not in ARMS:
            raise UsageError(f"unknown feature arm {self.feature_arm!r}; choose from {ARMS}")
        if len(self.ratios) != 3 or min(self.ratios) < 0 or abs(sum(self.ratios) - 1) > 1e-9:
            raise UsageError("split ratios must be three non-negative numbers summing to 1")
        if self.crop_frames < 1 or self.crops_per_utt < 1:
            raise UsageError("crop_frames and crops_per_utt must be >= 1")
        if self.patience < 1 or self.max_steps < 1:
            raise UsageError("patience and max_steps must be >= 1")

    def to_json(self) -> dict:
        d = asdict(self)
        d["probe"] = self.probe.to_json()
        d["ratios"] = list(self.ratios)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "ExperimentSpec":
        d = dict(d)
        if "probe" in d and not isinstance(d["probe"], ProbeConfig):
            d["probe"] = ProbeConfig(**{"feature_dim": 1, "n_classes": 2, **d["probe"]})
        if "pitch" in d and not isinstance(d["pitch"], PitchConfig):
            d["pitch"] = PitchConfig(**d["pitch"])
        return cls(**d)

    def replace(self, **changes) -> "ExperimentSpec":
        return replace(self, **changes)

    def digest(self, corpus: SyntheticCorpus | None = None) -> str:
        payload = {"experiment": self.to_json(), "corpus": corpus.spec.digest() if corpus else None}
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


@dataclass(eq=False)
class Split:
    """Crops ``x`` (N, frames, dims), speaker labels, source utterance index and
    per-frame unit ids (-1 on padding)."""

    x: np.ndarray
    y: np.ndarray
    utt: np.ndarray
    units: np.ndarray

    def __len__(self) -> int:
        return len(self.y)


@dataclass(eq=False)
class SCADataset:
    arm: str
    train: Split
    val: Split
    test: Split
    n_classes: int
    feature_dim: int


def split_utterances(labels: np.ndarray, ratios, seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-speaker utterance split so every speaker appears in every split.

    Counts come from largest-remainder rounding; when a speaker has at least
    three utterances each split with a positive ratio gets at least one.
    """
    rng = np.random.default_rng([seed, 11])
    parts = ([], [], [])
    for spk in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == spk))
        n = len(idx)
        raw = np.array(ratios) * n
        counts = np.floor(raw).astype(int)
        for j in np.argsort(-(raw - counts), kind="stable")[: n - counts.sum()]:
            counts[j] += 1
        if n >= 3:
            for j in (1, 2):
                if ratios[j] > 0 and counts[j] == 0:
                    counts[j] += 1
                    counts[int(np.argmax(counts))] -= 1
        bounds = np.cumsum(counts)
        for j, chunk in enumerate(np.split(idx, bounds[:2])):
            parts[j].extend(chunk.tolist())
    return tuple(np.array(sorted(p), dtype=np.int64) for p in parts)


def _f0_columns(corpus: SyntheticCorpus, cfg: PitchConfig):
    key = ("f0", cfg)
    if key not in corpus.cache:
        tracks = [rapt_estimate(u.audio, cfg) for u in corpus.utterances]
        normed = {}
        for spk in sorted({u.speaker for u in corpus.utterances}):
            own = [i for i, u in enumerate(corpus.utterances) if u.speaker == spk]
            voiced = [tracks[i] for i in own if tracks[i].voiced.any()]
            if not voiced:
                raise DataError(f"no voiced frames for speaker {spk}")
            stats = accumulate_speaker_stats(voiced, str(spk))
            for i in own:
                normed[i] = normalize_f0(tracks[i], stats).values
        corpus.cache[key] = (
            [normed[i] for i in range(len(tracks))],
            [raw_log_f0(t) for t in tracks],
        )
    return corpus.cache[key]


def _load_external(corpus_dir: str | None, sub: str, utt_id: str, target: int, kind: str) -> FeatureMatrix:
    if corpus_dir is None:
        raise DataError(f"arm needs external {sub} matrices; set external_dir")
    path = Path(corpus_dir) / sub / f"{utt_id}.dfm"
    if not path.exists():
        raise DataError(f"missing external features: {path}")
    return linear_interpolate_time(FeatureMatrix(read_dfm(path), kind), target)


def arm_features(
    corpus: SyntheticCorpus,
    spec: ExperimentSpec,
    projection: np.ndarray | None = None,
) -> list[FeatureMatrix]:
    """Full-length feature matrix per utterance for ``spec.feature_arm``."""
    arm = spec.feature_arm
    cs = corpus.spec
    hop = cs.hop_size
    utts = corpus.utterances
    lengths = [u.n_frames for u in utts]

    if arm == "random":
        # never shorter than a crop, so padding cannot leak utterance length
        out = []
        for i, n in enumerate(lengths):
            rng = np.random.default_rng([spec.seed, 13, i])
            out.append(FeatureMatrix(rng.random((max(n, spec.crop_frames), spec.random_dim)), "generic", hop))
        return out
    if arm == "M":
        mel = MelConfig(sample_rate=cs.sample_rate, hop_size=hop)
        return [FeatureMatrix(melspectrogram(u.audio, mel).data, "M", hop) for u in utts]

    def fused(u):
        return fuse_alignment(u.alignment, u.text_encoding, hop)

    if arm == "L":
        return [fused(u) for u in utts]
    if arm == "L_adv":
        if projection is None:
            raise UsageError("arm L_adv needs the adversarially trained projection")
        return [FeatureMatrix(fused(u).data @ projection, "L", hop) for u in utts]
    if arm == "A-reduced":
        return [weighted_text_index(u.alignment, hop) for u in utts]
    if arm in ("F", "F-raw", "(L,F)"):
        normed, raw = _f0_columns(corpus, spec.pitch)
        cols = normed if arm != "F-raw" else raw
        feats = [FeatureMatrix(c, "F", hop) for c in cols]
        if arm == "(L,F)":
            return [concat_features(fused(u), f) for u, f in zip(utts, feats)]
        return feats
    if arm == "PPG":
        return [_load_external(spec.external_dir, "PPG", u.utt_id, n, "PPG") for u, n in zip(utts, lengths)]
    if arm == "(L,R)":
        return [
            concat_features(fused(u), _load_external(spec.external_dir, "R", u.utt_id, n, "R"))
            for u, n in zip(utts, lengths)
        ]
    raise UsageError(f"unknown feature arm {arm!r}")


def crop(data: np.ndarray, units: np.ndarray, frames: int, starts) -> tuple[np.ndarray, np.ndarray]:
    """Cut ``frames``-long windows at ``starts``; short inputs are zero-padded at the end."""
    n, d = data.shape
    if n < frames:
        data = np.vstack([data, np.zeros((frames - n, d))])
    if len(units) < frames:
        units = np.concatenate([units, -np.ones(frames - len(units), dtype=np.int64)])
    xs = np.stack([data[s : s + frames] for s in starts])
    us = np.stack([units[s : s + frames] for s in starts])
    return xs, us


def _make_split(feats, corpus, idx, spec) -> Split:
    xs, ys, us, src = [], [], [], []
    for i in idx:
        data = feats[i].data
        units = corpus.utterances[i].frame_units()
        if len(units) > len(data):
            units = units[: len(data)]
        rng = np.random.default_rng([spec.seed, 17, int(i)])
        starts = rng.integers(0, max(len(data) - spec.crop_frames, 0) + 1, spec.crops_per_utt)
        x, u = crop(data, units, spec.crop_frames, starts)
        xs.append(x)
        us.append(u)
        ys.append(np.full(len(starts), corpus.utterances[i].speaker))
        src.append(np.full(len(starts), i))
    if not xs:
        dims = feats[0].n_dims if feats else 0
        return Split(np.zeros((0, spec.crop_frames, dims)), np.zeros(0, np.int64), np.zeros(0, np.int64),
                     np.zeros((0, spec.crop_frames), np.int64))
    return Split(np.concatenate(xs), np.concatenate(ys).astype(np.int64), np.concatenate(src).astype(np.int64),
                 np.concatenate(us).astype(np.int64))


def prepare_arm(
    corpus: SyntheticCorpus,
    spec: ExperimentSpec,
    projection: np.ndarray | None = None,
) -> SCADataset:
    """Build train/val/test crops for one arm.

    Parameters
    ----------
    corpus : SyntheticCorpus
    spec : ExperimentSpec
        Arm, crop length, crops per utterance, split ratios and seed.
    projection : ndarray, optional
        Per-frame linear map applied to fused features for the ``L_adv`` arm.
    """
    feats = arm_features(corpus, spec, projection)
    tr, va, te = split_utterances(corpus.labels, spec.ratios, spec.seed)
    return SCADataset(
        arm=spec.feature_arm,
        train=_make_split(feats, corpus, tr, spec),
        val=_make_split(feats, corpus, va, spec),
        test=_make_split(feats, corpus, te, spec),
        n_classes=corpus.spec.n_speakers,
        feature_dim=feats[0].n_dims,
    )
