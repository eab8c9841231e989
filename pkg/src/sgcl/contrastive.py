"""Corrupted views, the masked-summation predictor head, and the margin ranking loss."""

from dataclasses import dataclass

import numpy as np

from ._validation import FLOAT, check_real
from .errors import DimensionError
from .ops import Param


@dataclass
class PredictorParams:
    w: Param  # k x 1
    b: Param  # 1 x 1

    @classmethod
    def init(cls, hidden, rng):
        w = rng.standard_normal((hidden, 1)) / np.sqrt(hidden)
        return cls(Param(w, "predictor.w"), Param([[0.0]], "predictor.b"))

    def params(self):
        return [self.w, self.b]

    def copy(self):
        return PredictorParams(self.w.copy(), self.b.copy())


@dataclass(frozen=True)
class ContrastConfig:
    margin: float = 1.0
    edge_drop_p: float = 0.5
    seed: int = 0

    def __post_init__(self):
        check_real(self.margin, "margin", low=0.0, high=2.0)
        check_real(self.edge_drop_p, "edge_drop_p", low=0.0, high=1.0, high_open=True)


def shuffle_features(x, seed, perm=None):
    """Permute feature columns; returns ``(x[:, perm], perm)``."""
    x = np.asarray(x)
    if perm is None:
        perm = np.random.default_rng(seed).permutation(x.shape[1])
    return x[:, perm], perm


def predictor_score(spikes, p):
    """``score[u] = b + sum of w_j over the set bits j of row u``."""
    spikes = np.asarray(spikes)
    if spikes.ndim != 2 or spikes.shape[1] != p.w.shape[0]:
        raise DimensionError(f"spikes {spikes.shape} do not match predictor width {p.w.shape[0]}")
    w = p.w.value[:, 0]
    rows, cols = np.nonzero(spikes)
    scores = np.bincount(rows, weights=w[cols].astype(np.float64), minlength=spikes.shape[0])
    return (scores + p.b.value[0, 0]).astype(FLOAT)


def predictor_backward(spikes, p, d_scores):
    """Accumulate dw, db from per-node score gradients; return d(spikes)."""
    rows, cols = np.nonzero(spikes)
    dw = np.bincount(cols, weights=np.asarray(d_scores, np.float64)[rows],
                     minlength=p.w.shape[0])
    p.w.grad[:, 0] += dw.astype(FLOAT)
    p.b.grad[0, 0] += FLOAT(np.sum(d_scores, dtype=np.float64))
    return np.outer(d_scores, p.w.value[:, 0]).astype(FLOAT)


def mrl_loss(pos_scores, neg_scores, margin):
    """Mean hinge ``max(0, pos - neg + m)`` and its (sub)gradients.

    At the kink the hinge is treated as inactive.
    """
    pos = np.asarray(pos_scores, dtype=np.float64)
    neg = np.asarray(neg_scores, dtype=np.float64)
    if pos.shape != neg.shape:
        raise DimensionError(f"score shapes differ: {pos.shape} vs {neg.shape}")
    n = pos.size
    gap = pos - neg + margin
    active = gap > 0
    loss = float(np.sum(np.where(active, gap, 0.0)) / n) if n else 0.0
    d_pos = (active / n).astype(FLOAT) if n else np.zeros(0, FLOAT)
    return loss, d_pos, -d_pos
