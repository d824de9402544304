"""Train-to-plateau loop, SCA evaluation and the report table."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import DataError
from ..nn.probe import ProbeConfig, ProbeModel, backward_and_step, make_optimizer
from .arms import ExperimentSpec, SCADataset, Split, prepare_arm
from .corpus import SyntheticCorpus


@dataclass
class SCAReport:
    feature_arm: str
    accuracy: float
    chance: float
    n_test: int
    steps: int
    confusion: list[list[int]]
    config_hash: str = ""
    utterance_accuracy: float | None = None
    history: list[dict] = field(default_factory=list)

    @property
    def sigma(self) -> float:
        """Binomial standard deviation of the accuracy under the chance null."""
        return float(np.sqrt(self.chance * (1 - self.chance) / max(self.n_test, 1)))

    def to_json(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)


def accuracy(model: ProbeModel, split: Split) -> float:
    if len(split) == 0:
        raise DataError("empty split")
    return float(np.mean(np.argmax(model.predict(split.x), axis=1) == split.y))


def _snapshot(model: ProbeModel):
    return ({k: v.copy() for k, v in model.params().items()}, {k: v.copy() for k, v in model.buffers().items()})


def _restore(model: ProbeModel, snap) -> None:
    params, buffers = snap
    live = model.params()
    for k, v in params.items():
        live[k][...] = v
    model.set_buffers(buffers)


def train_probe_until_plateau(
    dataset: SCADataset,
    probe: ProbeConfig,
    patience: int = 5,
    max_steps: int = 100,
    min_delta: float = 0.0025,
) -> tuple[ProbeModel, list[dict]]:
    """Train epoch by epoch, validating after each one.

    Stops once validation accuracy has not beaten the best so far by more
    than ``min_delta`` for ``patience`` consecutive epochs, or after
    ``max_steps`` epochs. The returned model holds the best-validation weights.
    """
    if len(dataset.train) == 0 or len(dataset.val) == 0:
        raise DataError("train and validation splits must be non-empty")
    cfg = probe.replace(
        feature_dim=dataset.feature_dim, n_classes=dataset.n_classes, frames=dataset.train.x.shape[1]
    )
    model = ProbeModel.build(cfg)
    opt = make_optimizer(cfg)
    rng = np.random.default_rng([cfg.seed, 19])
    best, best_snap, stale = -np.inf, None, 0
    history = []
    train = dataset.train
    for epoch in range(1, max_steps + 1):
        order = rng.permutation(len(train))
        losses = []
        for i in range(0, len(order), cfg.batch_size):
            b = order[i : i + cfg.batch_size]
            losses.append(backward_and_step(model, train.x[b], train.y[b], opt))
        val = accuracy(model, dataset.val)
        improved = val > best + min_delta
        if improved:
            best, best_snap, stale = val, _snapshot(model), 0
        else:
            stale += 1
        history.append({"epoch": epoch, "loss": float(np.mean(losses)), "val_accuracy": val, "improved": improved})
        if stale >= patience:
            break
    _restore(model, best_snap)
    return model, history


def evaluate_sca(
    model: ProbeModel,
    split: Split,
    feature_arm: str = "",
    steps: int = 0,
    config_hash: str = "",
    utterance_vote: bool = False,
) -> SCAReport:
    """Eval-mode crop accuracy plus confusion matrix (rows = true speaker)."""
    if len(split) == 0:
        raise DataError("empty test split")
    n = model.config.n_classes
    pred = np.argmax(model.predict(split.x), axis=1)
    confusion = np.zeros((n, n), dtype=np.int64)
    np.add.at(confusion, (split.y, pred), 1)
    utt_acc = None
    if utterance_vote:
        hits = []
        for u in np.unique(split.utt):
            sel = split.utt == u
            hits.append(np.bincount(pred[sel], minlength=n).argmax() == split.y[sel][0])
        utt_acc = float(np.mean(hits))
    return SCAReport(
        feature_arm=feature_arm,
        accuracy=float(np.mean(pred == split.y)),
        chance=1.0 / n,
        n_test=len(split),
        steps=steps,
        confusion=confusion.tolist(),
        config_hash=config_hash,
        utterance_accuracy=utt_acc,
    )


def run_experiment(corpus: SyntheticCorpus, spec: ExperimentSpec, projection=None) -> SCAReport:
    """prepare -> train to plateau -> evaluate on the test split."""
    data = prepare_arm(corpus, spec, projection)
    model, history = train_probe_until_plateau(
        data, spec.probe, spec.patience, spec.max_steps, spec.min_delta
    )
    report = evaluate_sca(
        model, data.test, spec.feature_arm, len(history), spec.digest(corpus), spec.utterance_vote
    )
    report.history = history
    return report


_DISPLAY = {"random": "Rand.", "A-reduced": "A"}


def format_table(reports: list[SCAReport], per_row: int = 5) -> str:
    """Plain-text 'Feature | ... / SCA | ...' blocks, ``per_row`` arms per block."""
    blocks = []
    for i in range(0, len(reports), per_row):
        chunk = reports[i : i + per_row]
        names = ["Feature"] + [_DISPLAY.get(r.feature_arm, r.feature_arm) for r in chunk]
        values = ["SCA"] + [f"{100 * r.accuracy:.1f}%" for r in chunk]
        widths = [max(len(a), len(b)) for a, b in zip(names, values)]
        blocks.append(
            "\n".join(" | ".join(c.ljust(w) for c, w in zip(row, widths)) for row in (names, values))
        )
    return "\n\n".join(blocks)
