"""Pipeline configuration documents (TOML or JSON) with strict key checking."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .errors import UsageError
from .nn.probe import ProbeConfig
from .pitch import PitchConfig
from .sca.arms import ExperimentSpec
from .sca.corpus import SyntheticCorpusSpec
from .signal_core import MelConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

_PROBE_PLACEHOLDER = {"feature_dim": 1, "n_classes": 2}


def _build(cls, section: dict, name: str, defaults: dict | None = None):
    if not isinstance(section, dict):
        raise UsageError(f"[{name}] must be a table")
    allowed = {f.name for f in dataclasses.fields(cls)}
    if unknown := set(section) - allowed:
        raise UsageError(f"unknown key(s) in [{name}]: {sorted(unknown)}")
    return cls(**{**(defaults or {}), **section})


def _plain(obj) -> dict:
    d = dataclasses.asdict(obj)
    return json.loads(json.dumps(d))


@dataclass(frozen=True)
class PipelineConfig:
    mel: MelConfig = field(default_factory=MelConfig)
    pitch: PitchConfig = field(default_factory=PitchConfig)
    probe: ProbeConfig = field(default_factory=lambda: ProbeConfig(**_PROBE_PLACEHOLDER))
    experiment: ExperimentSpec = field(default_factory=ExperimentSpec)
    corpus: SyntheticCorpusSpec = field(default_factory=SyntheticCorpusSpec)
    seed: int = 0
    output_dir: str = "out"

    SECTIONS = ("mel", "pitch", "probe", "experiment", "corpus")

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        allowed = set(cls.SECTIONS) | {"seed", "output_dir"}
        if unknown := set(doc) - allowed:
            raise UsageError(f"unknown top-level key(s): {sorted(unknown)}")
        seed = int(doc.get("seed", 0))
        probe = _build(ProbeConfig, doc.get("probe", {}), "probe", {**_PROBE_PLACEHOLDER, "seed": seed})
        pitch = _build(PitchConfig, doc.get("pitch", {}), "pitch")
        exp_doc = dict(doc.get("experiment", {}))
        for nested in ("probe", "pitch"):
            if nested in exp_doc:
                raise UsageError(f"set [{nested}] at top level, not inside [experiment]")
        experiment = _build(ExperimentSpec, exp_doc, "experiment", {"seed": seed})
        experiment = experiment.replace(probe=probe, pitch=pitch)
        return cls(
            mel=_build(MelConfig, doc.get("mel", {}), "mel"),
            pitch=pitch,
            probe=probe,
            experiment=experiment,
            corpus=_build(SyntheticCorpusSpec, doc.get("corpus", {}), "corpus", {"seed": seed}),
            seed=seed,
            output_dir=str(doc.get("output_dir", "out")),
        )

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        path = Path(path)
        if not path.exists():
            raise UsageError(f"config file not found: {path}")
        text = path.read_text(encoding="utf-8")
        try:
            doc = json.loads(text) if path.suffix == ".json" else tomllib.loads(text)
        except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
            raise UsageError(f"cannot parse {path}: {exc}") from exc
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        exp = _plain(self.experiment)
        exp.pop("probe")
        exp.pop("pitch")
        return {
            "mel": _plain(self.mel),
            "pitch": _plain(self.pitch),
            "probe": _plain(self.probe),
            "experiment": exp,
            "corpus": _plain(self.corpus),
            "seed": self.seed,
            "output_dir": self.output_dir,
        }

    def digest(self) -> str:
        return config_hash(self.to_dict())


def config_hash(resolved: dict) -> str:
    return hashlib.sha256(json.dumps(resolved, sort_keys=True).encode()).hexdigest()[:16]


def write_snapshot(resolved: dict, out_dir) -> str:
    """Write ``resolved_config.json`` (with its hash) into ``out_dir``; returns the hash."""
    digest = config_hash(resolved)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved_config.json").write_text(
        json.dumps({"config": resolved, "config_hash": digest}, indent=2, sort_keys=True)
    )
    return digest
