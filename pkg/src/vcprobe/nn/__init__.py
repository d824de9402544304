"""From-scratch numpy network stack for the speaker-classification probe."""
from .checkpoint import load_checkpoint, save_checkpoint
from .layers import BatchNorm1d, Conv1d, Dense, Dropout, GlobalMaxPool, GradReverse, ReLU, grad_reverse
from .loss import cross_entropy_loss
from .optim import Adam
from .probe import ProbeConfig, ProbeModel, backward_and_step, forward, make_optimizer

__all__ = [
    "Adam",
    "BatchNorm1d",
    "Conv1d",
    "Dense",
    "Dropout",
    "GlobalMaxPool",
    "GradReverse",
    "ProbeConfig",
    "ProbeModel",
    "ReLU",
    "backward_and_step",
    "cross_entropy_loss",
    "forward",
    "grad_reverse",
    "load_checkpoint",
    "make_optimizer",
    "save_checkpoint",
]
