import json

import numpy as np
import pytest

from vcprobe.dfm import write_dfm
from vcprobe.errors import DataError, UsageError
from vcprobe.nn import ProbeConfig
from vcprobe.pitch.normalize import UNVOICED_FILL
from vcprobe.sca import (
    ExperimentSpec,
    SCADataset,
    SCAReport,
    Split,
    SyntheticCorpusSpec,
    evaluate_sca,
    format_table,
    generate_corpus,
    prepare_arm,
    proportions_differ,
    run_adversarial_arm,
    run_experiment,
    split_utterances,
    train_probe_until_plateau,
)
from vcprobe.sca.arms import crop
from vcprobe.sca.training import accuracy

TINY = SyntheticCorpusSpec(n_speakers=3, utts_per_speaker=4, units_per_utt=6, vocab_size=5, seed=3)
PROBE = ProbeConfig(feature_dim=1, n_classes=2, channels=(4, 4, 4, 4), batch_size=8)


@pytest.fixture(scope="module")
def tiny():
    return generate_corpus(TINY)


def exp(**kw):
    base = dict(crop_frames=16, crops_per_utt=2, probe=PROBE, max_steps=3, patience=2)
    return ExperimentSpec(**{**base, **kw})


# -- corpus generator ---------------------------------------------------------------------

def test_corpus_spec_validation():
    with pytest.raises(UsageError):
        SyntheticCorpusSpec(n_speakers=1)
    with pytest.raises(UsageError):
        SyntheticCorpusSpec(cues=("loudness",))
    with pytest.raises(UsageError):
        SyntheticCorpusSpec(n_speakers=2, rates=(1.0,))
    with pytest.raises(UsageError):
        SyntheticCorpusSpec(rate_range=(0.0, 1.0))
    assert SyntheticCorpusSpec(vocab_size=7).encoding_dim == 7
    assert SyntheticCorpusSpec(enc_dim=3).encoding_dim == 3


def test_corpus_is_deterministic(tiny):
    again = generate_corpus(TINY, jobs=2)
    assert again.manifest() == tiny.manifest()
    other = generate_corpus(SyntheticCorpusSpec(**{**TINY.to_json(), "seed": 4}))
    assert other.manifest()["utterances"][0]["audio_sha256"] != tiny.manifest()["utterances"][0]["audio_sha256"]
    json.dumps(tiny.manifest())


def test_corpus_structure(tiny):
    assert len(tiny.utterances) == 12 and tiny.labels.tolist() == sorted(tiny.labels.tolist())
    for u in tiny.utterances:
        assert np.allclose(u.alignment.data.sum(axis=1), 1.0)
        assert u.n_frames == len(u.audio) // TINY.hop_size + 1 == len(u.f0_true)
        assert u.text_encoding.data.shape == (6, 5)
        assert set(u.frame_units()) <= set(u.units.tolist())
        assert u.transcript.split() == [f"u{k}" for k in u.units]
        assert np.max(np.abs(u.audio.samples)) == pytest.approx(0.95)


def test_register_cue_sets_mean_pitch(tiny):
    for spk in tiny.speakers:
        f0 = np.concatenate([u.f0_true for u in tiny.utterances if u.speaker == spk.index])
        voiced = f0[f0 > 0]
        assert np.exp(np.mean(np.log(voiced))) == pytest.approx(spk.register_hz, rel=0.1)


def test_removing_cues_equalizes_speakers():
    spec = SyntheticCorpusSpec(n_speakers=3, utts_per_speaker=1, units_per_utt=4, cues=(), seed=1)
    profiles = generate_corpus(spec).speakers
    assert len({(p.register_hz, p.rate, p.tilt_db) for p in profiles}) == 1


def test_speaker_cue_shifts_encodings_along_one_direction():
    spec = SyntheticCorpusSpec(n_speakers=4, utts_per_speaker=2, units_per_utt=30, cues=(),
                               enc_speaker_cue=1.0, enc_noise=0.0, seed=2)
    corpus = generate_corpus(spec)
    u = corpus.cue_direction
    assert np.linalg.norm(u) == pytest.approx(1.0)
    for utt in corpus.utterances:
        resid = utt.text_encoding.data - np.eye(spec.vocab_size)[utt.units]
        offset = corpus.speakers[utt.speaker].cue_offset
        assert np.allclose(resid, offset * u[None, :])


def test_silent_corpus_has_no_signal():
    corpus = generate_corpus(SyntheticCorpusSpec(n_speakers=2, utts_per_speaker=1, units_per_utt=3, silent=True))
    assert all(not u.audio.samples.any() for u in corpus.utterances)


# -- splits and crops ---------------------------------------------------------------------

@pytest.mark.parametrize("n_per", [3, 5, 10, 23])
def test_split_utterances_covers_speakers(n_per):
    labels = np.repeat(np.arange(4), n_per)
    tr, va, te = split_utterances(labels, (0.8, 0.1, 0.1), seed=0)
    joined = np.concatenate([tr, va, te])
    assert sorted(joined.tolist()) == list(range(len(labels)))
    for part in (tr, va, te):
        assert set(labels[part]) == set(range(4))
    again = split_utterances(labels, (0.8, 0.1, 0.1), seed=0)
    assert all(np.array_equal(a, b) for a, b in zip((tr, va, te), again))
    if n_per == 10:
        assert (len(tr), len(va), len(te)) == (32, 4, 4)


def test_crop_pads_with_zeros():
    data = np.ones((3, 2))
    x, u = crop(data, np.array([4, 4, 5]), 5, [0])
    assert x.shape == (1, 5, 2) and np.array_equal(x[0, 3:], np.zeros((2, 2)))
    assert u[0].tolist() == [4, 4, 5, -1, -1]
    x, _ = crop(np.arange(10.0)[:, None], np.zeros(10, np.int64), 4, [2, 6])
    assert x[:, :, 0].tolist() == [[2, 3, 4, 5], [6, 7, 8, 9]]


def test_experiment_spec_validation_and_json():
    with pytest.raises(UsageError):
        ExperimentSpec(feature_arm="Z")
    with pytest.raises(UsageError):
        ExperimentSpec(ratios=(0.5, 0.5, 0.5))
    with pytest.raises(UsageError):
        ExperimentSpec(patience=0)
    spec = exp(feature_arm="F")
    assert ExperimentSpec.from_json(json.loads(json.dumps(spec.to_json()))) == spec
    assert spec.digest() == exp(feature_arm="F").digest() != exp(feature_arm="L").digest()


@pytest.mark.parametrize("arm,dim", [("random", 20), ("M", 80), ("L", 5), ("A-reduced", 1), ("F", 1),
                                     ("F-raw", 1), ("(L,F)", 6)])
def test_prepare_arm_shapes(tiny, arm, dim):
    data = prepare_arm(tiny, exp(feature_arm=arm))
    assert data.feature_dim == dim and data.n_classes == 3
    total = sum(len(s) for s in (data.train, data.val, data.test))
    assert total == 12 * 2
    assert data.train.x.shape[1:] == (16, dim)
    for s in (data.train, data.val, data.test):
        assert set(s.y.tolist()) == {0, 1, 2}


def test_random_arm_is_uniform_noise(tiny):
    x = prepare_arm(tiny, exp(feature_arm="random")).train.x
    assert x.min() >= 0 and x.max() < 1 and abs(x.mean() - 0.5) < 0.05


def test_f_arm_fills_unvoiced(tiny):
    x = prepare_arm(tiny, exp(feature_arm="F")).train.x
    voiced = x[x != UNVOICED_FILL]
    assert np.any(x == UNVOICED_FILL) and np.all(np.abs(voiced) < 6)


def test_external_arms(tiny, tmp_path):
    with pytest.raises(DataError, match="external"):
        prepare_arm(tiny, exp(feature_arm="PPG"))
    with pytest.raises(DataError, match="missing"):
        prepare_arm(tiny, exp(feature_arm="PPG", external_dir=str(tmp_path)))
    for sub, d in (("PPG", 7), ("R", 2)):
        (tmp_path / sub).mkdir()
        for u in tiny.utterances:
            write_dfm(tmp_path / sub / f"{u.utt_id}.dfm", np.ones((u.n_frames // 2 + 1, d)))
    assert prepare_arm(tiny, exp(feature_arm="PPG", external_dir=str(tmp_path))).feature_dim == 7
    assert prepare_arm(tiny, exp(feature_arm="(L,R)", external_dir=str(tmp_path))).feature_dim == 7


def test_l_adv_needs_projection(tiny):
    with pytest.raises(UsageError):
        prepare_arm(tiny, exp(feature_arm="L_adv"))
    a = prepare_arm(tiny, exp(feature_arm="L")).train.x
    b = prepare_arm(tiny, exp(feature_arm="L_adv"), projection=np.eye(5)).train.x
    assert np.array_equal(a, b)


# -- training and evaluation --------------------------------------------------------------

def _toy_dataset(separable: bool, seed=0):
    r = np.random.default_rng(seed)

    def split(n):
        y = r.integers(0, 3, n)
        x = r.standard_normal((n, 8, 2))
        if separable:
            x[:, :, 0] += 4.0 * y[:, None]
        return Split(x, y, np.arange(n), np.zeros((n, 8), np.int64))

    return SCADataset("toy", split(120), split(60), split(60), 3, 2)


def test_plateau_training_learns_separable_toy():
    data = _toy_dataset(True)
    model, history = train_probe_until_plateau(data, PROBE, patience=3, max_steps=30)
    report = evaluate_sca(model, data.test, "toy", len(history))
    assert report.accuracy > 0.95
    assert np.array(report.confusion).sum() == 60 and report.chance == pytest.approx(1 / 3)


def test_plateau_stops_and_restores_best():
    data = _toy_dataset(False)
    model, history = train_probe_until_plateau(data, PROBE, patience=2, max_steps=50)
    assert len(history) < 50
    assert not any(h["improved"] for h in history[-2:])
    best = max(h["val_accuracy"] for h in history)
    assert accuracy(model, data.val) == pytest.approx(best)


def test_empty_splits_raise():
    data = _toy_dataset(True)
    empty = Split(np.zeros((0, 8, 2)), np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros((0, 8), np.int64))
    with pytest.raises(DataError):
        train_probe_until_plateau(SCADataset("toy", data.train, empty, data.test, 3, 2), PROBE)


def test_utterance_vote():
    data = _toy_dataset(True)
    model, _ = train_probe_until_plateau(data, PROBE, patience=3, max_steps=30)
    test = data.test
    grouped = Split(test.x, test.y, test.y.copy(), test.units)
    report = evaluate_sca(model, grouped, utterance_vote=True)
    assert report.utterance_accuracy == 1.0


def test_run_experiment_is_reproducible(tiny):
    spec = exp(feature_arm="L")
    a, b = run_experiment(tiny, spec), run_experiment(tiny, spec)
    assert a.to_json() == b.to_json()
    assert a.config_hash == spec.digest(tiny) and 1 <= a.steps <= 3
    assert json.loads(a.dumps())["feature_arm"] == "L"


def test_format_table():
    reports = [SCAReport(arm, acc, 0.1, 10, 1, []) for arm, acc in
               [("random", 0.009), ("PPG", 0.5), ("L", 0.25), ("(L,F)", 0.3), ("(L,R)", 0.3), ("A-reduced", 0.36)]]
    text = format_table(reports)
    first, second = text.split("\n\n")
    assert first.splitlines()[0].split(" | ")[:2] == ["Feature", "Rand."]
    assert first.splitlines()[1].split(" | ")[1].strip() == "0.9%"
    assert second.splitlines()[0].split(" | ")[1].strip() == "A"


def test_sigma():
    assert SCAReport("x", 0.0, 0.5, 100, 1, []).sigma == pytest.approx(0.05)


def test_proportions_differ():
    assert not proportions_differ(0.5, 200, 0.52, 200)
    assert proportions_differ(0.8, 256, 0.4, 256)
    assert not proportions_differ(1.0, 10, 1.0, 10)


def test_adversarial_arm_runs(tiny):
    res = run_adversarial_arm(tiny, PROBE, lam=1.0, spec=exp(), epochs=2)
    assert res.projection.shape == (5, 5) and len(res.history) == 2
    assert res.before.feature_arm == "L" and res.after.feature_arm == "L_adv"
    assert not np.allclose(res.projection, np.eye(5))
