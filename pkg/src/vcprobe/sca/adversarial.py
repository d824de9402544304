"""Domain-adversarial training of a per-frame linear feature map.

The upstream map ``W`` (identity at start) stands in for a trainable encoder
over fused linguistic features. It is trained jointly with

* a per-frame content head that predicts the unit under each frame, keeping
  the mapped features useful, and
* a speaker probe attached through a gradient-reversal layer, pushing ``W``
  to hide the speaker.

Afterwards ``W`` is frozen and fresh probes (no reversal) measure SCA on the
features before and after adaptation.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import TrainingDivergedError
from ..nn.layers import GradReverse
from ..nn.loss import cross_entropy_loss
from ..nn.optim import Adam
from ..nn.probe import ProbeConfig, ProbeModel
from .arms import ExperimentSpec, prepare_arm
from .corpus import SyntheticCorpus
from .training import SCAReport, run_experiment


@dataclass
class AdversarialResult:
    before: SCAReport
    after: SCAReport
    projection: np.ndarray
    history: list[dict] = field(default_factory=list)


def train_adversarial_projection(
    corpus: SyntheticCorpus,
    spec: ExperimentSpec,
    lam: float,
    epochs: int = 20,
    content_weight: float = 1.0,
) -> tuple[np.ndarray, list[dict]]:
    """Jointly train ``W``, the content head and a GRL-attached speaker probe.

    Returns the learned ``W`` (enc_dim x enc_dim) and per-epoch losses.
    """
    grl = GradReverse(lam)
    data = prepare_arm(corpus, spec.replace(feature_arm="L"))
    train = data.train
    d = data.feature_dim
    vocab = corpus.spec.vocab_size
    cfg = spec.probe.replace(feature_dim=d, n_classes=data.n_classes, frames=train.x.shape[1], grl_lambda=0.0)
    probe = ProbeModel.build(cfg)
    rng = np.random.default_rng([cfg.seed, 23])
    up = {"W": np.eye(d), "V": rng.standard_normal((d, vocab)) / np.sqrt(d), "c": np.zeros(vocab)}
    opt = Adam(cfg.lr, cfg.betas)
    history = []
    for epoch in range(1, epochs + 1):
        order = rng.permutation(len(train))
        spk_losses, content_losses = [], []
        for i in range(0, len(order), cfg.batch_size):
            b = order[i : i + cfg.batch_size]
            x, y, units = train.x[b], train.y[b], train.units[b]
            z = x @ up["W"]

            logits = probe.forward(z, "train")
            spk_loss, g = cross_entropy_loss(logits, y)
            dz = grl.backward(probe.backward(g))

            keep = units.reshape(-1) >= 0
            zf = z.reshape(-1, d)[keep]
            c_loss, gc = cross_entropy_loss(zf @ up["V"] + up["c"], units.reshape(-1)[keep])
            if not (np.isfinite(spk_loss) and np.isfinite(c_loss)):
                raise TrainingDivergedError(f"non-finite loss in adversarial epoch {epoch}")
            gc = content_weight * gc
            dzf = np.zeros((len(keep), d))
            dzf[keep] = gc @ up["V"].T
            dz = dz + dzf.reshape(z.shape)

            grads = {
                "W": x.reshape(-1, d).T @ dz.reshape(-1, d),
                "V": zf.T @ gc,
                "c": gc.sum(axis=0),
            }
            params = {**{f"up.{k}": v for k, v in up.items()}, **probe.params()}
            opt.step(params, {**{f"up.{k}": v for k, v in grads.items()}, **probe.grads()})
            spk_losses.append(spk_loss)
            content_losses.append(c_loss)
        history.append(
            {"epoch": epoch, "speaker_loss": float(np.mean(spk_losses)), "content_loss": float(np.mean(content_losses))}
        )
    return up["W"].copy(), history


def run_adversarial_arm(
    corpus: SyntheticCorpus,
    probe: ProbeConfig,
    lam: float,
    spec: ExperimentSpec | None = None,
    epochs: int = 20,
) -> AdversarialResult:
    """SCA of fused features before and after GRL(``lam``) adaptation.

    Both measurements train a fresh probe without gradient reversal, so they
    reflect the features rather than the adversary.
    """
    spec = (spec or ExperimentSpec()).replace(probe=probe)
    W, history = train_adversarial_projection(corpus, spec, lam, epochs)
    before = run_experiment(corpus, spec.replace(feature_arm="L"))
    after = run_experiment(corpus, spec.replace(feature_arm="L_adv"), projection=W)
    return AdversarialResult(before, after, W, history)


def proportions_differ(a: float, n_a: int, b: float, n_b: int, z: float = 3.0) -> bool:
    """Two-sample test on accuracies with the Agresti-Caffo adjustment
    (one success and one failure added to each sample)."""
    pa = (a * n_a + 1) / (n_a + 2)
    pb = (b * n_b + 1) / (n_b + 2)
    se = np.sqrt(pa * (1 - pa) / (n_a + 2) + pb * (1 - pb) / (n_b + 2))
    return bool(abs(pa - pb) > z * se)
