"""Corpus ingestion, duration filters and transcript-disjoint splits.

Layouts understood by :func:`scan_corpus`:

``flat``      ``<root>/<speaker>/<utt>.wav`` next to ``<utt>.txt``
``vctk``      ``<root>/wav*/<speaker>/<utt>.wav`` and ``<root>/txt/<speaker>/<utt>.txt``
``libritts``  ``<root>/<speaker>/<chapter>/<utt>.wav`` next to ``<utt>.normalized.txt``
"""
from __future__ import annotations

import json
import logging
import re
import unicodedata
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, UsageError
from .signal_core import wav_duration

log = logging.getLogger(__name__)

LAYOUTS = ("flat", "vctk", "libritts")
MIN_SPEAKER_SECONDS = 300.0
MAX_UTTERANCE_SECONDS = 10.0
SPLIT_RATIOS = (0.8, 0.1, 0.1)
SPLIT_NAMES = ("train", "val", "test")


@dataclass(frozen=True)
class ManifestEntry:
    utt_id: str
    audio_path: str
    transcript: str
    speaker_id: str
    duration: float

    def __post_init__(self):
        if not self.duration > 0:
            raise DataError(f"{self.utt_id}: duration must be > 0, got {self.duration}")

    def to_json(self) -> dict:
        return asdict(self)


class ScanResult(list):
    """Manifest entries plus the audio files skipped for lacking a transcript."""

    def __init__(self, entries=(), skipped=()):
        super().__init__(entries)
        self.skipped = list(skipped)


@dataclass
class SplitManifest:
    train: list[ManifestEntry]
    val: list[ManifestEntry]
    test: list[ManifestEntry]
    seed: int
    ratios: tuple[float, float, float]
    weighting: str = "duration"
    missing_speakers: dict[str, list[str]] = field(default_factory=dict)

    def splits(self) -> dict[str, list[ManifestEntry]]:
        return {"train": self.train, "val": self.val, "test": self.test}

    def summary(self) -> dict:
        total_dur = sum(e.duration for s in self.splits().values() for e in s) or 1.0
        total_n = sum(len(s) for s in self.splits().values()) or 1
        return {
            "seed": self.seed,
            "ratios": list(self.ratios),
            "weighting": self.weighting,
            "splits": {
                name: {
                    "n_utterances": len(entries),
                    "duration": sum(e.duration for e in entries),
                    "duration_fraction": sum(e.duration for e in entries) / total_dur,
                    "count_fraction": len(entries) / total_n,
                    "n_speakers": len({e.speaker_id for e in entries}),
                }
                for name, entries in self.splits().items()
            },
            "missing_speakers": self.missing_speakers,
        }


def normalize_transcript(text: str) -> str:
    """Lowercase, drop punctuation, collapse whitespace."""
    text = "".join(" " if unicodedata.category(ch).startswith("P") else ch for ch in text.lower())
    return re.sub(r"\s+", " ", text).strip()


def _candidates(root: Path, layout: str):
    """Yield (wav path, transcript path, speaker id)."""
    if layout == "flat":
        for wav in sorted(root.rglob("*.wav")):
            rel = wav.relative_to(root)
            spk = rel.parts[0] if len(rel.parts) > 1 else wav.stem.split("_")[0]
            yield wav, wav.with_suffix(".txt"), spk
    elif layout == "vctk":
        for wav in sorted(p for d in sorted(root.glob("wav*")) if d.is_dir() for p in d.rglob("*.wav")):
            spk = wav.parent.name
            yield wav, root / "txt" / spk / f"{wav.stem}.txt", spk
    elif layout == "libritts":
        for wav in sorted(root.rglob("*.wav")):
            spk = wav.relative_to(root).parts[0]
            txt = wav.with_suffix(".normalized.txt")
            if not txt.exists():
                txt = wav.with_suffix(".original.txt")
            yield wav, txt, spk
    else:
        raise UsageError(f"unknown layout {layout!r}; choose from {LAYOUTS}")


def scan_corpus(root, layout: str = "flat", jobs: int = 1) -> ScanResult:
    """Pair audio with transcripts; durations come from the WAV headers.

    Audio without a transcript is skipped with a warning and listed in
    ``result.skipped``. Entries are sorted by ``utt_id``.
    """
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"not a readable directory: {root}")
    pairs, skipped = [], []
    for wav, txt, spk in _candidates(root, layout):
        if txt.exists():
            pairs.append((wav, txt, spk))
        else:
            log.warning("no transcript for %s; skipped", wav)
            skipped.append(str(wav))

    def read(pair):
        wav, txt, spk = pair
        return ManifestEntry(wav.stem, str(wav), txt.read_text(encoding="utf-8").strip(), spk, wav_duration(wav))

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            entries = list(pool.map(read, pairs))
    else:
        entries = [read(p) for p in pairs]
    entries.sort(key=lambda e: e.utt_id)
    ids = [e.utt_id for e in entries]
    if len(set(ids)) != len(ids):
        dup = sorted({i for i in ids if ids.count(i) > 1})
        raise DataError(f"duplicate utt_id(s): {dup[:5]}")
    return ScanResult(entries, skipped)


def filter_speakers_min_duration(manifest, min_total: float = MIN_SPEAKER_SECONDS) -> list[ManifestEntry]:
    """Keep speakers whose summed duration is strictly greater than ``min_total`` seconds."""
    if min_total < 0:
        raise UsageError("min_total must be >= 0")
    totals: dict[str, float] = defaultdict(float)
    for e in manifest:
        totals[e.speaker_id] += e.duration
    return [e for e in manifest if totals[e.speaker_id] > min_total]


def filter_utterance_max_len(manifest, max_len: float = MAX_UTTERANCE_SECONDS) -> list[ManifestEntry]:
    """Keep utterances strictly shorter than ``max_len`` seconds."""
    if not max_len > 0:
        raise UsageError("max_len must be > 0")
    return [e for e in manifest if e.duration < max_len]


def _coverage_gaps(groups, assign, speakers) -> dict[str, list[str]]:
    present = [set() for _ in SPLIT_NAMES]
    for g, s in zip(groups, assign):
        present[s] |= g["speakers"]
    return {name: sorted(speakers - present[j]) for j, name in enumerate(SPLIT_NAMES) if speakers - present[j]}


class _Assignment:
    """Group-to-split assignment with per-split speaker counts for cheap safety checks."""

    def __init__(self, groups, assign, weights):
        self.groups = groups
        self.assign = assign
        self.weights = weights
        self.filled = np.zeros(3)
        self.counts = [defaultdict(int) for _ in SPLIT_NAMES]
        for gi, s in enumerate(assign):
            self.filled[s] += weights[gi]
            for spk in groups[gi]["speakers"]:
                self.counts[s][spk] += 1

    def can_leave(self, gi) -> bool:
        src = self.assign[gi]
        return all(self.counts[src][spk] > 1 for spk in self.groups[gi]["speakers"])

    def move(self, gi, dst) -> None:
        src = self.assign[gi]
        for spk in self.groups[gi]["speakers"]:
            self.counts[src][spk] -= 1
            self.counts[dst][spk] += 1
        self.filled[src] -= self.weights[gi]
        self.filled[dst] += self.weights[gi]
        self.assign[gi] = dst


def _repair_coverage(state: _Assignment, speakers) -> None:
    """Move the lightest safe group carrying each missing speaker into the split lacking it."""
    by_speaker = defaultdict(list)
    for gi in sorted(range(len(state.groups)), key=lambda k: state.weights[k]):
        for spk in state.groups[gi]["speakers"]:
            by_speaker[spk].append(gi)
    for dst in range(3):
        for spk in sorted(speakers):
            if state.counts[dst][spk] > 0:
                continue
            for gi in by_speaker[spk]:
                if state.assign[gi] != dst and state.can_leave(gi):
                    state.move(gi, dst)
                    break


def _rebalance(state: _Assignment, targets) -> None:
    """Greedy single-group moves that reduce the total deviation from the targets
    without uncovering any speaker."""
    order = sorted(range(len(state.groups)), key=lambda k: state.weights[k])
    for _ in range(len(order)):
        improved = False
        for gi in order:
            src = state.assign[gi]
            w = state.weights[gi]
            if state.filled[src] <= targets[src] or not state.can_leave(gi):
                continue
            for dst in np.argsort(state.filled - targets):
                if dst == src:
                    continue
                before = abs(state.filled[src] - targets[src]) + abs(state.filled[dst] - targets[dst])
                after = abs(state.filled[src] - w - targets[src]) + abs(state.filled[dst] + w - targets[dst])
                if after < before - 1e-12:
                    state.move(gi, int(dst))
                    improved = True
                    break
        if not improved:
            return


def split_transcript_disjoint(
    manifest,
    ratios=SPLIT_RATIOS,
    seed: int = 0,
    weighting: str = "duration",
    normalize: bool = True,
) -> SplitManifest:
    """Partition utterances so no (normalized) transcript appears in two splits.

    Utterances sharing a transcript form one group. Groups are visited in a
    seeded random order and each goes to the split furthest below its target
    share (duration- or count-weighted). Afterwards groups are moved, where
    possible, so every speaker appears in every split, and single-group moves
    pull the shares back toward the targets. Speakers that cannot be covered
    are reported in ``missing_speakers``.
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or min(ratios) <= 0 or abs(sum(ratios) - 1) > 1e-9:
        raise UsageError("ratios must be three positive numbers summing to 1")
    if weighting not in ("duration", "count"):
        raise UsageError("weighting must be 'duration' or 'count'")
    key = normalize_transcript if normalize else (lambda t: t)
    by_text: dict[str, list[ManifestEntry]] = defaultdict(list)
    for e in manifest:
        by_text[key(e.transcript)].append(e)
    if len(by_text) < 3:
        raise DataError(f"need at least 3 distinct transcripts to split, found {len(by_text)}")

    texts = sorted(by_text)
    rng = np.random.default_rng(seed)
    texts = [texts[i] for i in rng.permutation(len(texts))]
    groups = [{"entries": by_text[t], "speakers": {e.speaker_id for e in by_text[t]}} for t in texts]
    weights = [
        sum(e.duration for e in g["entries"]) if weighting == "duration" else len(g["entries"]) for g in groups
    ]
    targets = np.array(ratios) * sum(weights)
    filled = np.zeros(3)
    assign = [0] * len(groups)
    # shuffled order makes the seed matter; _rebalance then tightens the shares
    for gi in range(len(groups)):
        j = int(np.argmax(targets - filled))
        assign[gi] = j
        filled[j] += weights[gi]

    speakers = {e.speaker_id for e in manifest}
    state = _Assignment(groups, assign, weights)
    _repair_coverage(state, speakers)
    _rebalance(state, targets)
    parts = ([], [], [])
    for g, s in zip(groups, assign):
        parts[s].extend(g["entries"])
    for p in parts:
        p.sort(key=lambda e: e.utt_id)
    return SplitManifest(*parts, seed=seed, ratios=ratios, weighting=weighting,
                         missing_speakers=_coverage_gaps(groups, assign, speakers))


def write_manifest(path, entries) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in entries:
            fh.write(json.dumps(e.to_json(), ensure_ascii=False) + "\n")


def read_manifest(path) -> list[ManifestEntry]:
    with open(path, encoding="utf-8") as fh:
        return [ManifestEntry(**json.loads(line)) for line in fh if line.strip()]


def write_split(split: SplitManifest, out_dir) -> Path:
    """Write ``train/val/test.jsonl`` and ``summary.json``; returns the summary path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, entries in split.splits().items():
        write_manifest(out / f"{name}.jsonl", entries)
    path = out / "summary.json"
    path.write_text(json.dumps(split.summary(), indent=2, sort_keys=True))
    return path
