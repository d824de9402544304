"""``vcprobe`` command line.

Exit codes: 0 success, 1 usage error, 2 data error (including a failed
gradient check).
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import corpus_prep
from .config import PipelineConfig, config_hash, write_snapshot
from .dfm import read_dfm, read_meta, write_dfm
from .errors import DataError, UsageError
from .features import (
    AlignmentMatrix,
    FeatureMatrix,
    TextEncoding,
    concat_features,
    fuse_alignment,
    linear_interpolate_time,
    weighted_text_index,
)
from .pitch import (
    ESTIMATORS,
    UNVOICED_FILL,
    PitchTrack,
    SpeakerF0Stats,
    accumulate_speaker_stats,
    normalize_f0,
)
from .sca.arms import ARMS
from .signal_core import load_wav, melspectrogram, resample, save_wav

log = logging.getLogger("vcprobe")


EPILOG = f"""\
defaults worth knowing:
  unvoiced frames of normalized F0   {UNVOICED_FILL}
  train/val/test split               {' / '.join(str(r) for r in corpus_prep.SPLIT_RATIOS)} (transcript-disjoint, duration-weighted)
  speaker kept if total audio        > {corpus_prep.MIN_SPEAKER_SECONDS:g} s (5 minutes)
  utterance kept if shorter than     {corpus_prep.MAX_UTTERANCE_SECONDS:g} s
  mel                                22050 Hz, fft 1024, hop 256, 80 bands, 0-8000 Hz
  pitch search                       50-600 Hz, RAPT by default

exit codes: 0 ok, 1 usage error, 2 data error
"""


class _Formatter(argparse.RawDescriptionHelpFormatter):
    """Append the default to help text unless it is None or already stated."""

    def _get_help_string(self, action):
        text = action.help or ""
        if ("default" in text or action.default in (None, False, argparse.SUPPRESS)
                or not action.option_strings):
            return text
        return f"{text} (default: %(default)s)"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _config(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    if args.seed is not None and args.seed != cfg.seed:
        doc = cfg.to_dict()
        doc["seed"] = args.seed
        for section in ("probe", "experiment", "corpus"):
            doc[section]["seed"] = args.seed
        cfg = PipelineConfig.from_dict(doc)
    return cfg


def _override(obj, **changes):
    changes = {k: v for k, v in changes.items() if v is not None}
    return dataclasses.replace(obj, **changes) if changes else obj


def _write(path, data, args, cfg_section: dict, extra: dict | None = None) -> None:
    """Write a matrix with a sidecar holding the resolved settings and their hash."""
    resolved = {"command": args.command, **cfg_section}
    write_dfm(path, data, {"config": resolved, "config_hash": config_hash(resolved), **(extra or {})})


def _asdict(obj) -> dict:
    return json.loads(json.dumps(dataclasses.asdict(obj)))


def _read_track(path, cfg: PipelineConfig) -> PitchTrack:
    meta = read_meta(path)
    return PitchTrack.from_matrix(
        read_dfm(path),
        int(meta.get("frame_hop", cfg.pitch.frame_hop)),
        int(meta.get("sample_rate", cfg.mel.sample_rate)),
    )


# -- subcommands ---------------------------------------------------------------------------


def cmd_prep(args, cfg):
    scanned = corpus_prep.scan_corpus(args.root, args.layout, jobs=args.jobs)
    kept = corpus_prep.filter_utterance_max_len(scanned, args.max_utterance_seconds)
    kept = corpus_prep.filter_speakers_min_duration(kept, args.min_speaker_seconds)
    split = corpus_prep.split_transcript_disjoint(
        kept, tuple(args.ratios), cfg.seed, "count" if args.count_weighted else "duration"
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    corpus_prep.write_manifest(out / "manifest.jsonl", scanned)
    corpus_prep.write_manifest(out / "filtered.jsonl", kept)
    corpus_prep.write_split(split, out)
    write_snapshot(
        {
            "command": "prep", "root": str(args.root), "layout": args.layout, "seed": cfg.seed,
            "ratios": list(args.ratios), "weighting": split.weighting,
            "min_speaker_seconds": args.min_speaker_seconds, "max_utterance_seconds": args.max_utterance_seconds,
        },
        out,
    )
    print(f"scanned {len(scanned)} (skipped {len(scanned.skipped)}), kept {len(kept)}; "
          + ", ".join(f"{k} {len(v)}" for k, v in split.splits().items()))
    if split.missing_speakers:
        print(f"speakers missing from some split: {split.missing_speakers}", file=sys.stderr)
    return 0


def cmd_mel(args, cfg):
    mel_cfg = _override(cfg.mel, n_mels=args.n_mels, hop_size=args.hop)
    buf = load_wav(args.input)
    if args.resample and buf.sample_rate != mel_cfg.sample_rate:
        buf = resample(buf, mel_cfg.sample_rate)
    mel = melspectrogram(buf, mel_cfg)
    _write(args.output, mel.data, args, {"mel": _asdict(mel_cfg)})
    print(f"{args.output}: {mel.data.shape[0]} frames x {mel.data.shape[1]} mels")
    return 0


def cmd_f0(args, cfg):
    pitch = _override(cfg.pitch, fmin=args.fmin, fmax=args.fmax, frame_hop=args.hop)
    buf = load_wav(args.input)
    track = ESTIMATORS[args.estimator](buf, pitch)
    _write(
        args.output, track.as_matrix(), args,
        {"pitch": _asdict(pitch), "estimator": args.estimator},
        {"frame_hop": track.frame_hop, "sample_rate": track.sample_rate},
    )
    print(f"{args.output}: {len(track)} frames, {int(track.voiced.sum())} voiced")
    return 0


def cmd_f0_stats(args, cfg):
    tracks = [_read_track(p, cfg) for p in args.tracks]
    stats = accumulate_speaker_stats(tracks, args.speaker_id)
    text = json.dumps(stats.to_json(), indent=2, sort_keys=True)
    if args.output:
        Path(args.output).write_text(text + "\n")
    print(text)
    return 0


def cmd_f0_norm(args, cfg):
    track = _read_track(args.track, cfg)
    try:
        stats = SpeakerF0Stats.from_json(json.loads(Path(args.stats).read_text()))
    except (OSError, ValueError, KeyError) as exc:
        raise DataError(f"cannot read speaker stats {args.stats}: {exc}") from exc
    norm = normalize_f0(track, stats)
    _write(args.output, norm.values[:, None], args, {"stats": stats.to_json(), "fill": UNVOICED_FILL})
    print(f"{args.output}: {len(norm.values)} frames")
    return 0


def cmd_interp(args, cfg):
    if (args.length is None) == (args.like is None):
        raise UsageError("give exactly one of --length or --like")
    target = args.length if args.length is not None else read_dfm(args.like).shape[0]
    out = linear_interpolate_time(FeatureMatrix(read_dfm(args.input)), target)
    _write(args.output, out.data, args, {"target_len": int(target)})
    return 0


def cmd_fuse(args, cfg):
    out = fuse_alignment(AlignmentMatrix(read_dfm(args.alignment)), TextEncoding(read_dfm(args.encoding)))
    _write(args.output, out.data, args, {})
    return 0


def cmd_text_index(args, cfg):
    out = weighted_text_index(AlignmentMatrix(read_dfm(args.alignment)))
    _write(args.output, out.data, args, {})
    return 0


def cmd_concat(args, cfg):
    out = concat_features(FeatureMatrix(read_dfm(args.a)), FeatureMatrix(read_dfm(args.b)))
    _write(args.output, out.data, args, {})
    return 0


def _corpus_spec(args, cfg):
    spec = cfg.corpus
    cues = None if args.cues is None else tuple(c for c in args.cues.split(",") if c)
    return _override(
        spec, n_speakers=args.speakers, utts_per_speaker=args.utts, cues=cues,
        enc_speaker_cue=getattr(args, "cue_strength", None),
    )


def cmd_gen_corpus(args, cfg):
    from .sca import generate_corpus

    spec = _corpus_spec(args, cfg)
    corpus = generate_corpus(spec, jobs=args.jobs)
    out = Path(args.out)
    for u in corpus.utterances:
        spk_dir = out / f"spk{u.speaker:03d}"
        spk_dir.mkdir(parents=True, exist_ok=True)
        save_wav(spk_dir / f"{u.utt_id}.wav", u.audio)
        (spk_dir / f"{u.utt_id}.txt").write_text(u.transcript + "\n")
        write_dfm(spk_dir / f"{u.utt_id}.align.dfm", u.alignment.data)
        write_dfm(spk_dir / f"{u.utt_id}.enc.dfm", u.text_encoding.data)
    (out / "corpus_manifest.json").write_text(json.dumps(corpus.manifest(), indent=2, sort_keys=True))
    write_snapshot({"command": "gen-corpus", "corpus": _asdict(spec)}, out)
    print(f"{len(corpus.utterances)} utterances from {spec.n_speakers} speakers in {out}")
    return 0


def _experiment(args, cfg):
    from .sca import ExperimentSpec

    probe = cfg.probe
    if args.channels:
        probe = probe.replace(channels=tuple(int(c) for c in args.channels.split(",")))
    spec = _override(
        cfg.experiment, feature_arm=getattr(args, "arm", None), crop_frames=args.crop,
        crops_per_utt=args.crops_per_utt, max_steps=args.max_epochs, patience=args.patience,
        external_dir=getattr(args, "external_dir", None),
        utterance_vote=True if getattr(args, "utterance_vote", False) else None,
    )
    return ExperimentSpec.from_json({**spec.to_json(), "probe": probe, "pitch": cfg.pitch})


def cmd_sca_run(args, cfg):
    from .sca import format_table, generate_corpus, run_experiment

    corpus = generate_corpus(_corpus_spec(args, cfg), jobs=args.jobs)
    spec = _experiment(args, cfg)
    report = run_experiment(corpus, spec)
    out = Path(args.out)
    write_snapshot({"command": "sca run", "experiment": spec.to_json(), "corpus": _asdict(corpus.spec)}, out)
    (out / "report.json").write_text(report.dumps())
    (out / "table.txt").write_text(format_table([report]) + "\n")
    print(format_table([report]))
    print(f"accuracy {report.accuracy:.4f} (chance {report.chance:.4f}, sigma {report.sigma:.4f}, "
          f"n={report.n_test}, epochs {report.steps})")
    return 0


def cmd_sca_adversarial(args, cfg):
    from .sca import generate_corpus, proportions_differ, run_adversarial_arm

    corpus = generate_corpus(_corpus_spec(args, cfg), jobs=args.jobs)
    spec = _experiment(args, cfg)
    result = run_adversarial_arm(corpus, spec.probe, args.lam, spec, epochs=args.adv_epochs)
    out = Path(args.out)
    write_snapshot(
        {"command": "sca adversarial", "lambda": args.lam, "adv_epochs": args.adv_epochs,
         "experiment": spec.to_json(), "corpus": _asdict(corpus.spec)},
        out,
    )
    doc = {
        "lambda": args.lam,
        "before": result.before.to_json(),
        "after": result.after.to_json(),
        "significant_change": proportions_differ(
            result.before.accuracy, result.before.n_test, result.after.accuracy, result.after.n_test
        ),
    }
    (out / "adversarial.json").write_text(json.dumps(doc, indent=2, sort_keys=True))
    np.save(out / "projection.npy", result.projection)
    print(f"lambda {args.lam}: SCA before {result.before.accuracy:.4f}, after {result.after.accuracy:.4f}")
    return 0


def cmd_gradcheck(args, cfg):
    from .nn.gradcheck import run_all

    results = run_all(cfg.seed)
    worst = max(r.max_rel_error for r in results)
    for r in results:
        print(f"{r.name:<20} max rel error {r.max_rel_error:.2e}  ({r.n_checked} entries)")
    print(f"max relative error {worst:.2e} ({'ok' if worst < 1e-3 else 'FAIL'}, limit 1e-3)")
    return 0 if worst < 1e-3 else 2


# -- parser --------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="TOML or JSON pipeline config; unknown keys are rejected")
    common.add_argument("--seed", type=int, default=None, help="global seed for all randomness (default: config, 0)")
    common.add_argument("--jobs", type=int, default=1, help="worker threads for per-utterance work (default: 1)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(
        prog="vcprobe",
        description="Speech features, F0 normalization and speaker-classification probes.",
        epilog=EPILOG,
        formatter_class=_Formatter,
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True
    fmt = _Formatter

    p = sub.add_parser("prep", parents=[common], formatter_class=fmt,
                       help="scan a corpus, apply duration filters, write transcript-disjoint splits")
    p.add_argument("root")
    p.add_argument("--layout", choices=corpus_prep.LAYOUTS, default="flat")
    p.add_argument("--out", required=True)
    p.add_argument("--min-speaker-seconds", type=float, default=corpus_prep.MIN_SPEAKER_SECONDS,
                   help="keep speakers with strictly more than this much audio (5 minutes)")
    p.add_argument("--max-utterance-seconds", type=float, default=corpus_prep.MAX_UTTERANCE_SECONDS,
                   help="keep utterances strictly shorter than this (10 seconds)")
    p.add_argument("--ratios", type=float, nargs=3, default=list(corpus_prep.SPLIT_RATIOS),
                   metavar=("TRAIN", "VAL", "TEST"), help="split shares (0.8 0.1 0.1)")
    p.add_argument("--count-weighted", action="store_true", help="balance by utterance count instead of duration")
    p.set_defaults(func=cmd_prep)

    p = sub.add_parser("mel", parents=[common], formatter_class=fmt, help="log-mel spectrogram of a WAV file")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--n-mels", type=int, help="mel bands (default 80)")
    p.add_argument("--hop", type=int, help="hop in samples (default 256)")
    p.add_argument("--resample", action="store_true", help="resample input to the configured rate (22050 Hz)")
    p.set_defaults(func=cmd_mel)

    p = sub.add_parser("f0", parents=[common], formatter_class=fmt, help="pitch track as a 2-column [f0, voiced] file")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--estimator", choices=sorted(ESTIMATORS), default="rapt")
    p.add_argument("--fmin", type=float, help="lowest F0 in Hz (default 50)")
    p.add_argument("--fmax", type=float, help="highest F0 in Hz (default 600)")
    p.add_argument("--hop", type=int, help="frame hop in samples (default 256)")
    p.set_defaults(func=cmd_f0)

    p = sub.add_parser("f0-stats", parents=[common], formatter_class=fmt,
                       help="per-speaker mean/std of log F0 over voiced frames")
    p.add_argument("tracks", nargs="+")
    p.add_argument("--speaker-id", default="")
    p.add_argument("--output")
    p.set_defaults(func=cmd_f0_stats)

    p = sub.add_parser("f0-norm", parents=[common], formatter_class=fmt,
                       help=f"speaker-normalized log F0; unvoiced frames are set to {UNVOICED_FILL}")
    p.add_argument("track")
    p.add_argument("stats")
    p.add_argument("output")
    p.set_defaults(func=cmd_f0_norm)

    p = sub.add_parser("interp", parents=[common], formatter_class=fmt,
                       help="linear time interpolation with anchored endpoints")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--length", type=int)
    p.add_argument("--like", help="take the target length from this matrix file")
    p.set_defaults(func=cmd_interp)

    p = sub.add_parser("fuse", parents=[common], formatter_class=fmt, help="alignment times text encoding")
    p.add_argument("alignment")
    p.add_argument("encoding")
    p.add_argument("output")
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("text-index", parents=[common], formatter_class=fmt, help="attention-weighted text index")
    p.add_argument("alignment")
    p.add_argument("output")
    p.set_defaults(func=cmd_text_index)

    p = sub.add_parser("concat", parents=[common], formatter_class=fmt, help="column-wise concatenation")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("output")
    p.set_defaults(func=cmd_concat)

    corpus_opts = _Parser(add_help=False)
    corpus_opts.add_argument("--speakers", type=int, help="number of synthetic speakers (default 8)")
    corpus_opts.add_argument("--utts", type=int, help="utterances per speaker (default 10)")
    corpus_opts.add_argument("--cues", help="comma-separated speaker cues from register,rate,tilt ('' for none)")
    corpus_opts.add_argument("--cue-strength", type=float, help="linear speaker offset in text encodings (default 0)")

    p = sub.add_parser("gen-corpus", parents=[common, corpus_opts], formatter_class=fmt,
                       help="write a synthetic multi-speaker corpus")
    p.add_argument("out")
    p.set_defaults(func=cmd_gen_corpus)

    exp_opts = _Parser(add_help=False)
    exp_opts.add_argument("--out", required=True)
    exp_opts.add_argument("--crop", type=int, help="frames per crop (default 128)")
    exp_opts.add_argument("--crops-per-utt", type=int, help="crops per utterance (default 4)")
    exp_opts.add_argument("--channels", help="comma-separated conv widths (default 64,128,256,256)")
    exp_opts.add_argument("--max-epochs", type=int, help="epoch cap (default 100)")
    exp_opts.add_argument("--patience", type=int,
                          help="epochs without a >0.25 point validation gain before stopping (default 5)")

    sca = sub.add_parser("sca", help="speaker classification accuracy experiments")
    sca_sub = sca.add_subparsers(dest="sca_command", metavar="SCA_COMMAND", parser_class=_Parser)
    sca_sub.required = True
    p = sca_sub.add_parser("run", parents=[common, corpus_opts, exp_opts], formatter_class=fmt,
                           help="train a probe on one feature arm; splits are per speaker (0.8/0.1/0.1)")
    p.add_argument("--arm", choices=ARMS, default=None, help="feature arm (default random)")
    p.add_argument("--external-dir", help="directory holding <arm>/<utt_id>.dfm for PPG and (L,R)")
    p.add_argument("--utterance-vote", action="store_true", help="also report utterance-level majority vote")
    p.set_defaults(func=cmd_sca_run, command="sca run")

    p = sca_sub.add_parser("adversarial", parents=[common, corpus_opts, exp_opts], formatter_class=fmt,
                           help="SCA of fused features before/after gradient-reversal training")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0, help="gradient reversal scale")
    p.add_argument("--adv-epochs", type=int, default=20)
    p.set_defaults(func=cmd_sca_adversarial, command="sca adversarial")

    p = sub.add_parser("gradcheck", parents=[common], formatter_class=fmt,
                       help="finite-difference check of every layer and the composed probe")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = _config(args)
        return args.func(args, cfg)
    except UsageError as exc:
        print(f"vcprobe: usage error: {exc}", file=sys.stderr)
        return 1
    except (DataError, OSError) as exc:
        print(f"vcprobe: data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
