"""Central finite-difference checks for every layer type and the composed probe.

ReLU and max-pool are piecewise linear, so a central difference only measures
the derivative when both probes land on the same linear piece. Each check
records the ReLU masks and max-pool winners at every probe and redraws the
input when any probe crosses a kink.

For the composed probe the check runs at a rescaled but functionally identical
parameter point: batch norm makes each conv block invariant to the scale of its
weights and inputs, and ReLU is positively homogeneous, so multiplying the
convolutions, the first three batch-norm affines and the input by
``COND_SCALE`` leaves the network's output unchanged while moving
pre-activations far from the kinks relative to ``EPS``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import BatchNorm1d, Conv1d, Dense, Dropout, GlobalMaxPool, GradReverse, Layer, ReLU
from .loss import cross_entropy_loss
from .probe import ProbeConfig, ProbeModel

EPS = 1e-3
COND_SCALE = 100.0
MAX_DRAWS = 25


@dataclass
class CheckResult:
    name: str
    max_rel_error: float
    n_checked: int
    draws: int = 1


class KinkCrossed(Exception):
    pass


def rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Largest elementwise ``|a - n| / max(|a|, |n|, floor)``.

    ``floor`` is 1% of the tensor's largest analytic gradient (at least 1e-8),
    so near-zero entries are judged against the tensor's scale rather than
    against their own O(EPS**2) truncation error.
    """
    a = np.asarray(analytic).ravel()
    n = np.asarray(numeric).ravel()
    if a.size == 0:
        return 0.0
    floor = max(1e-2 * float(np.abs(a).max()), 1e-8)
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)))


def numeric_grad(f, x: np.ndarray, eps: float = EPS) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. every entry of ``x`` (mutated in place)."""
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        try:
            flat[i] = orig + eps
            up = f()
            flat[i] = orig - eps
            down = f()
        finally:
            flat[i] = orig
        gflat[i] = (up - down) / (2 * eps)
    return grad


def _pattern(layers) -> bytes:
    parts = []
    for layer in layers:
        if isinstance(layer, ReLU):
            parts.append(np.packbits(layer._mask).tobytes())
        elif isinstance(layer, GlobalMaxPool):
            parts.append(layer._idx.tobytes())
    return b"".join(parts)


def _compare(run, grads_of, tensors, input_scale: float) -> tuple[float, int]:
    """Shared driver: ``run()`` does forward+backward and returns (dx, loss fn)."""
    dx, loss = run()
    base = loss.pattern
    analytic = {k: v.copy() for k, v in grads_of().items()}

    def f():
        value = loss()
        if loss.pattern != base:
            raise KinkCrossed
        return value

    x = tensors.pop("x")
    worst = rel_error(dx, input_scale * numeric_grad(f, x))
    count = x.size
    for key, p in tensors.items():
        worst = max(worst, rel_error(analytic[key], numeric_grad(f, p)))
        count += p.size
    return worst, count


class _Loss:
    def __init__(self, fn, layers):
        self.fn = fn
        self.layers = layers
        self.pattern = b""

    def __call__(self):
        value = self.fn()
        self.pattern = _pattern(self.layers)
        return value


def check_layer(layer: Layer, shape, rng: np.random.Generator, name: str = "") -> CheckResult:
    """Compare ``backward()`` with finite differences of ``sum(layer(x) * R)``.

    A gradient-reversal layer is expected to return ``-lam`` times the true
    input derivative.
    """
    scale = -layer.lam if isinstance(layer, GradReverse) else 1.0
    for draw in range(1, MAX_DRAWS + 1):
        x = rng.standard_normal(shape)
        proj = rng.standard_normal(layer.forward(x, train=True).shape)
        loss = _Loss(lambda: float(np.sum(layer.forward(x, train=True) * proj)), [layer])

        def run():
            loss()
            return layer.backward(proj), loss

        try:
            worst, count = _compare(run, lambda: layer.grads, {"x": x, **layer.params}, scale)
        except KinkCrossed:
            continue
        return CheckResult(name or type(layer).__name__, worst, count, draw)
    raise RuntimeError(f"no kink-free draw for {name or type(layer).__name__} in {MAX_DRAWS} tries")


def condition(model: ProbeModel, scale: float = COND_SCALE) -> None:
    """Move ``model`` to the functionally identical, well-conditioned point described above."""
    bns = [layer for layer in model.layers if isinstance(layer, BatchNorm1d)]
    for layer in model.layers:
        if isinstance(layer, Conv1d):
            layer.params["W"] *= scale
            layer.params["b"] *= scale
    for layer in bns[:-1]:
        layer.params["gamma"] *= scale
        layer.params["beta"] *= scale


def check_model(model: ProbeModel, shape, rng: np.random.Generator, input_scale: float = 1.0) -> CheckResult:
    """Finite-difference check of the full probe under cross-entropy (train-mode BN)."""
    lam = model.config.grl_lambda
    rev = -lam if lam > 0 else 1.0
    for draw in range(1, MAX_DRAWS + 1):
        x = input_scale * rng.standard_normal(shape)
        labels = rng.integers(0, model.config.n_classes, shape[0])
        loss = _Loss(lambda: cross_entropy_loss(model.forward(x, "train"), labels)[0], model.layers)

        def run():
            loss()
            _, g = cross_entropy_loss(model.forward(x, "train"), labels)
            return model.backward(g), loss

        try:
            worst, count = _compare(run, model.grads, {"x": x, **model.params()}, rev)
        except KinkCrossed:
            continue
        return CheckResult("ProbeModel", worst, count, draw)
    raise RuntimeError(f"no kink-free draw for the composed probe in {MAX_DRAWS} tries")


def run_all(seed: int = 0) -> list[CheckResult]:
    """Check each layer type in isolation and a small composed probe (dropout off)."""
    rng = np.random.default_rng(seed)
    B, T, C = 3, 9, 4
    results = [
        check_layer(Conv1d(C, 5, 5, rng), (B, T, C), rng, "Conv1d(k=5)"),
        check_layer(Conv1d(C, 3, 4, rng), (B, T, C), rng, "Conv1d(k=4)"),
        check_layer(BatchNorm1d(C), (B, T, C), rng, "BatchNorm1d"),
        check_layer(ReLU(), (B, T, C), rng),
        check_layer(GlobalMaxPool(), (B, T, C), rng),
        check_layer(Dropout(0.0, rng), (B, C), rng),
        check_layer(Dense(C, 6, rng), (B, C), rng),
        check_layer(GradReverse(0.7), (B, T, C), rng, "GradReverse(0.7)"),
    ]
    cfg = ProbeConfig(
        feature_dim=C, n_classes=3, channels=(4, 5, 6, 6), kernel_sizes=(3, 5, 3, 5),
        dropout=0.0, grl_lambda=0.5, seed=seed,
    )
    model = ProbeModel.build(cfg)
    condition(model)
    results.append(check_model(model, (4, 12, C), rng, input_scale=COND_SCALE))
    return results
