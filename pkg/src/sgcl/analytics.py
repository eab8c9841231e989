"""Theoretical energy, output sparsity and linear CKA."""

from dataclasses import asdict, dataclass

import numpy as np

from .encoder import group_widths
from .errors import DimensionError, UndefinedSimilarityError

E_MAC_PJ = 4.6
E_SOP_PJ = 3.7
PJ_TO_MJ = 1e-9


@dataclass(frozen=True)
class EnergyReport:
    e_encoding_mj: float
    e_spiking_mj: float
    total_mj: float
    spike_count: int
    mac_count: int

    @property
    def total_pj(self):
        return self.mac_count * E_MAC_PJ + self.spike_count * E_SOP_PJ

    def to_dict(self):
        return asdict(self)


def energy_from_counts(mac_count, spike_count):
    # sum in pJ and convert once, so the total is not rounded twice
    enc, spk = mac_count * E_MAC_PJ, spike_count * E_SOP_PJ
    return EnergyReport(enc * PJ_TO_MJ, spk * PJ_TO_MJ, (enc + spk) * PJ_TO_MJ,
                        int(spike_count), int(mac_count))


def energy_spikegcl(n, d, t_steps, spike_counts):
    """MACs for encoding each step's N x d_t input plus one SOP per spike."""
    spike_counts = list(spike_counts)
    if len(spike_counts) != t_steps:
        raise DimensionError(f"expected {t_steps} spike counts, got {len(spike_counts)}")
    macs = sum(n * w for w in group_widths(d, t_steps))
    return energy_from_counts(macs, sum(int(c) for c in spike_counts))


def energy_binary_gnn(n, edges, d, layers):
    """1-bit GCN: N d^2 / 64 + 2 N d + |E| d MACs per layer, in mJ."""
    per_layer = n * d * d / 64 + 2 * n * d + edges * d
    return E_MAC_PJ * per_layer * layers * PJ_TO_MJ


def full_precision_macs(n, edges, d_in, d_out, layers):
    return layers * (n * d_in * d_out + edges * d_in + edges * d_out)


def energy_full_precision(n, edges, d_in, d_out, layers):
    """Full-precision GCN: projection plus aggregation, all counted as MACs, in mJ."""
    return E_MAC_PJ * full_precision_macs(n, edges, d_in, d_out, layers) * PJ_TO_MJ


def sparsity(train):
    """Fraction of zero entries over all N * T * k spikes."""
    total = train.num_nodes * train.t_steps * train.hidden
    if total == 0:
        return 1.0
    return 1.0 - sum(train.spike_counts()) / total


def _centered(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionError(f"cka expects 2-D inputs, got shape {x.shape}")
    return x - x.mean(axis=0, keepdims=True)


def cka(x, y):
    """Linear CKA with the biased HSIC estimator.

    Uses the feature-space identity ``HSIC(XX^T, YY^T) ∝ ||Yc^T Xc||_F^2``
    so the N x N Gram matrices are never formed.
    """
    xc, yc = _centered(x), _centered(y)
    if xc.shape[0] != yc.shape[0]:
        raise DimensionError(f"row counts differ: {xc.shape[0]} vs {yc.shape[0]}")
    hsic_xy = np.linalg.norm(yc.T @ xc) ** 2
    hsic_xx = np.linalg.norm(xc.T @ xc)
    hsic_yy = np.linalg.norm(yc.T @ yc)
    if hsic_xx == 0.0 or hsic_yy == 0.0:
        raise UndefinedSimilarityError("CKA is undefined for a zero-variance representation")
    return float(hsic_xy / (hsic_xx * hsic_yy))


def cka_gram(x, y):
    """Same quantity through explicit centred Gram matrices (slow, for checking)."""
    n = np.asarray(x).shape[0]
    h = np.eye(n) - 1.0 / n
    k = h @ (np.asarray(x, np.float64) @ np.asarray(x, np.float64).T) @ h
    l = h @ (np.asarray(y, np.float64) @ np.asarray(y, np.float64).T) @ h
    num = np.sum(k * l)
    den = np.sqrt(np.sum(k * k) * np.sum(l * l))
    if den == 0.0:
        raise UndefinedSimilarityError("CKA is undefined for a zero-variance representation")
    return float(num / den)


def cka_matrix(feature_groups, spike_steps):
    """``M[t, s] = cka(X^t, S^s)``; NaN where a spike step never varies."""
    out = np.full((len(feature_groups), len(spike_steps)), np.nan)
    for i, xg in enumerate(feature_groups):
        for j, s in enumerate(spike_steps):
            try:
                out[i, j] = cka(xg, s)
            except UndefinedSimilarityError:
                pass
    return out


def diagonal_dominance(matrix):
    """Fraction of rows whose maximum sits on the diagonal."""
    m = np.where(np.isnan(matrix), -np.inf, matrix)
    rows = np.arange(min(m.shape))
    return float(np.mean(np.argmax(m[rows], axis=1) == rows))
