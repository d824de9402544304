"""Speaker-classification probe: 4 x (conv + batch norm + ReLU), global max-pool,
dropout, dense."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ShapeError, TrainingDivergedError, UsageError
from .layers import BatchNorm1d, Conv1d, Dense, Dropout, GlobalMaxPool, GradReverse, Layer, ReLU
from .loss import cross_entropy_loss
from .optim import Adam


@dataclass(frozen=True)
class ProbeConfig:
    feature_dim: int
    n_classes: int
    frames: int | None = None
    channels: tuple[int, ...] = (64, 128, 256, 256)
    kernel_sizes: tuple[int, ...] = (5, 5, 5, 5)
    pool: str = "global_max"
    dropout: float = 0.5
    grl_lambda: float = 0.0
    lr: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    weight_decay: float = 0.0
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        object.__setattr__(self, "kernel_sizes", tuple(int(k) for k in self.kernel_sizes))
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        if len(self.channels) != 4 or len(self.kernel_sizes) != 4:
            raise UsageError("the probe has exactly 4 convolutional layers")
        if self.pool != "global_max":
            raise UsageError("only pool='global_max' is supported")
        if not 0 <= self.dropout < 1:
            raise UsageError("dropout must be in [0, 1)")
        if self.n_classes < 2:
            raise UsageError("n_classes must be >= 2")
        if self.grl_lambda < 0:
            raise UsageError("grl_lambda must be >= 0")
        if self.feature_dim < 1:
            raise UsageError("feature_dim must be >= 1")

    def replace(self, **changes) -> "ProbeConfig":
        return ProbeConfig(**{**asdict(self), **changes})

    def to_json(self) -> dict:
        d = asdict(self)
        d["channels"] = list(self.channels)
        d["kernel_sizes"] = list(self.kernel_sizes)
        d["betas"] = list(self.betas)
        return d

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_json(), sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class ProbeModel:
    config: ProbeConfig
    layers: list[Layer] = field(default_factory=list)
    training: bool = False

    @classmethod
    def build(cls, config: ProbeConfig) -> "ProbeModel":
        init_seq, drop_seq = np.random.SeedSequence(config.seed).spawn(2)
        rng = np.random.default_rng(init_seq)
        layers: list[Layer] = []
        if config.grl_lambda > 0:
            layers.append(GradReverse(config.grl_lambda))
        in_ch = config.feature_dim
        for out_ch, k in zip(config.channels, config.kernel_sizes):
            layers += [Conv1d(in_ch, out_ch, k, rng), BatchNorm1d(out_ch), ReLU()]
            in_ch = out_ch
        layers += [
            GlobalMaxPool(),
            Dropout(config.dropout, np.random.default_rng(drop_seq)),
            Dense(in_ch, config.n_classes, rng),
        ]
        return cls(config, layers)

    def params(self) -> dict[str, np.ndarray]:
        return {f"{i}.{k}": v for i, layer in enumerate(self.layers) for k, v in layer.params.items()}

    def grads(self) -> dict[str, np.ndarray]:
        return {f"{i}.{k}": v for i, layer in enumerate(self.layers) for k, v in layer.grads.items()}

    def buffers(self) -> dict[str, np.ndarray]:
        return {f"{i}.{k}": v for i, layer in enumerate(self.layers) for k, v in layer.state().items()}

    def set_buffers(self, buffers: dict[str, np.ndarray]) -> None:
        for name, value in buffers.items():
            idx, key = name.split(".", 1)
            setattr(self.layers[int(idx)], key, np.array(value, dtype=np.float64))

    def _check(self, batch: np.ndarray) -> np.ndarray:
        batch = np.asarray(batch, dtype=np.float64)
        cfg = self.config
        if batch.ndim != 3 or batch.shape[2] != cfg.feature_dim:
            raise ShapeError(f"expected batch (B, frames, {cfg.feature_dim}), got {batch.shape}")
        if cfg.frames is not None and batch.shape[1] != cfg.frames:
            raise ShapeError(f"expected {cfg.frames} frames per example, got {batch.shape[1]}")
        return batch

    def forward(self, batch, mode: str = "eval") -> np.ndarray:
        if mode not in ("train", "eval"):
            raise UsageError("mode must be 'train' or 'eval'")
        self.training = mode == "train"
        x = self._check(batch)
        for layer in self.layers:
            x = layer.forward(x, self.training)
        return x

    def backward(self, grad_logits: np.ndarray) -> np.ndarray:
        """Backpropagate from the logits; returns the gradient w.r.t. the input batch."""
        g = grad_logits
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return g

    def predict(self, batch, batch_size: int = 256) -> np.ndarray:
        batch = np.asarray(batch)
        out = [self.forward(batch[i : i + batch_size], "eval") for i in range(0, len(batch), batch_size)]
        if not out:
            return np.zeros((0, self.config.n_classes))
        return np.concatenate(out)


def make_optimizer(config: ProbeConfig) -> Adam:
    return Adam(config.lr, config.betas, weight_decay=config.weight_decay)


def forward(model: ProbeModel, batch, mode: str = "eval") -> np.ndarray:
    return model.forward(batch, mode)


def backward_and_step(model: ProbeModel, batch, labels, optimizer: Adam) -> float:
    """One training step: forward in train mode, cross-entropy, backprop, Adam update."""
    logits = model.forward(batch, "train")
    loss, grad = cross_entropy_loss(logits, labels)
    if not np.isfinite(loss):
        raise TrainingDivergedError(
            f"non-finite loss {loss} at optimizer step {optimizer.t + 1}; "
            f"{np.count_nonzero(~np.isfinite(logits))} non-finite logits of {logits.size}"
        )
    model.backward(grad)
    optimizer.step(model.params(), model.grads())
    return loss
