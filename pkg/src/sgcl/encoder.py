"""Peer GCN encoders over feature groups, a spiking output neuron, and 1-bit embeddings."""

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._validation import FLOAT, check_matrix, check_positive_int
from .errors import ConfigError, DataError, DimensionError
from .neurons import NeuronConfig, NeuronState, neuron_step, raw_from_tau, tau_from_raw
from .ops import Param, init_normal, linear, linear_backward, relu, relu_backward, spmm


def group_widths(d, t_steps):
    """Column widths of the T contiguous feature groups.

    Groups ``t < T`` get ``d // T`` columns; the last group takes whatever is
    left so that the groups always tile all ``d`` columns.
    """
    t_steps = check_positive_int(t_steps, "t_steps")
    if t_steps > d:
        raise ConfigError(f"cannot split {d} features into {t_steps} non-empty groups")
    base = d // t_steps
    return [base] * (t_steps - 1) + [d - base * (t_steps - 1)]


def partition_features(x, t_steps):
    x = np.asarray(x)
    bounds = np.cumsum([0] + group_widths(x.shape[1], t_steps))
    return [x[:, a:b] for a, b in zip(bounds[:-1], bounds[1:])]


@dataclass
class EncoderParams:
    """First-layer weights per time step, shared deeper layers, neuron settings."""

    first_layer: list
    first_bias: list
    shared: list
    neuron: NeuronConfig
    tau_raw: Param
    depth: int
    hidden: int

    @property
    def t_steps(self):
        return len(self.first_layer)

    @property
    def tau_m(self):
        if self.neuron.kind == "plif":
            return tau_from_raw(self.tau_raw.value[0, 0])
        return self.neuron.tau_m

    def block_params(self, t):
        return [self.first_layer[t], self.first_bias[t]]

    def all_params(self):
        return [*self.first_layer, *self.first_bias, *self.shared, self.tau_raw]

    def tensors(self):
        out = {}
        for t, (w, b) in enumerate(zip(self.first_layer, self.first_bias)):
            out[f"encoder.first.{t}.weight"] = w.value
            out[f"encoder.first.{t}.bias"] = b.value
        for i, w in enumerate(self.shared):
            out[f"encoder.shared.{i}.weight"] = w.value
        out["encoder.tau_raw"] = self.tau_raw.value
        return out

    def copy(self):
        return EncoderParams([p.copy() for p in self.first_layer],
                             [p.copy() for p in self.first_bias],
                             [p.copy() for p in self.shared],
                             self.neuron, self.tau_raw.copy(), self.depth, self.hidden)


def init_encoder(widths, hidden, depth, neuron, rng):
    hidden = check_positive_int(hidden, "hidden")
    depth = check_positive_int(depth, "depth")
    first = [init_normal(rng, w, hidden, f"first.{t}") for t, w in enumerate(widths)]
    bias = [Param(np.zeros((1, hidden)), f"bias.{t}") for t in range(len(widths))]
    shared = [init_normal(rng, hidden, hidden, f"shared.{i}") for i in range(depth - 1)]
    tau_raw = Param([[raw_from_tau(neuron.tau_m)]], "tau_raw")
    return EncoderParams(first, bias, shared, neuron, tau_raw, depth, hidden)


def encoder_from_tensors(tensors, neuron, depth, hidden, t_steps):
    first = [Param(tensors[f"encoder.first.{t}.weight"], f"first.{t}") for t in range(t_steps)]
    bias = [Param(tensors[f"encoder.first.{t}.bias"], f"bias.{t}") for t in range(t_steps)]
    shared = [Param(tensors[f"encoder.shared.{i}.weight"], f"shared.{i}")
              for i in range(depth - 1)]
    return EncoderParams(first, bias, shared, neuron, Param(tensors["encoder.tau_raw"]),
                         depth, hidden)


@dataclass
class StepCache:
    """Forward intermediates of one encoder step (one view, one time step)."""

    group: np.ndarray
    pre: list                 # pre-activations P_1..P_L (P_L is the neuron current)
    agg: list = field(default_factory=list)  # aggregated inputs Q_2..Q_L


def gcn_forward(g, coeffs, group_t, params, t):
    """Current fed to the neuron at step ``t`` and the cache for backward."""
    w1, b1 = params.first_layer[t], params.first_bias[t]
    if group_t.shape[1] != w1.shape[0]:
        raise DimensionError(f"group {t} has width {group_t.shape[1]}, weights expect {w1.shape[0]}")
    p = spmm(coeffs, g, group_t @ w1.value) + b1.value
    cache = StepCache(group_t, [p])
    for w in params.shared:
        q = spmm(coeffs, g, relu(p))
        p = linear(q, w)
        cache.agg.append(q)
        cache.pre.append(p)
    return p, cache


def gcn_backward(g, coeffs, params, t, cache, d_current):
    """Accumulate parameter gradients of step ``t`` from the current's gradient."""
    dp = d_current
    for i in range(len(params.shared) - 1, -1, -1):
        dq = linear_backward(cache.agg[i], params.shared[i], None, dp)
        dp = relu_backward(cache.pre[i], spmm(coeffs, g, dq))
    params.first_bias[t].grad += dp.sum(axis=0, keepdims=True)
    params.first_layer[t].grad += cache.group.T @ spmm(coeffs, g, dp)


def encode_step(g, coeffs, group_t, params, t, state):
    """One time step: GCN current ``H^t`` then the spiking neuron.

    Returns ``(spikes, current, new_state, cache)``.
    """
    current, cache = gcn_forward(g, coeffs, group_t, params, t)
    if state.potential.shape != current.shape:
        raise DimensionError(f"neuron state {state.potential.shape} != current {current.shape}")
    spikes, new_state = neuron_step(state, current)
    return spikes, current, new_state, cache


def encode(g, coeffs, groups, params):
    """Run all T steps from a resting neuron and return the SpikeTrain."""
    state = NeuronState.zeros((g.num_nodes, params.hidden), params.neuron, params.tau_m)
    steps = []
    for t, group in enumerate(groups):
        spikes, _, state, _ = encode_step(g, coeffs, group, params, t, state)
        steps.append(spikes)
    return SpikeTrain.from_dense(steps)


# -- bit packing ----------------------------------------------------------

def pack_bits(bits):
    """Pack an (n, m) 0/1 matrix into (n, ceil(m/64)) uint64 words.

    Bit ``j`` of a row lands in word ``j // 64`` at position ``j % 64``
    (least significant first); rows are zero-padded to a word boundary.
    """
    bits = np.asarray(bits)
    if bits.ndim != 2:
        raise DimensionError(f"pack_bits expects 2-D input, got {bits.shape}")
    n, m = bits.shape
    n_words = -(-m // 64)
    packed = np.packbits(bits.astype(bool), axis=1, bitorder="little")
    buf = np.zeros((n, n_words * 8), dtype=np.uint8)
    buf[:, :packed.shape[1]] = packed
    return buf.view("<u8").reshape(n, n_words)


def unpack_bits(words, m):
    words = np.ascontiguousarray(words, dtype="<u8")
    as_bytes = words.view(np.uint8).reshape(words.shape[0], -1)
    return np.unpackbits(as_bytes, axis=1, count=m, bitorder="little")


@dataclass
class SpikeTrain:
    """T bit-packed N x k spike matrices."""

    steps: list
    num_nodes: int
    hidden: int

    @classmethod
    def from_dense(cls, steps):
        steps = [np.asarray(s) for s in steps]
        if not steps:
            raise ConfigError("a spike train needs at least one step")
        n, k = steps[0].shape
        for s in steps:
            if s.shape != (n, k):
                raise DimensionError("all spike steps must share one shape")
            if not np.all((s == 0) | (s == 1)):
                raise ConfigError("spike matrices must be binary")
        return cls([pack_bits(s) for s in steps], n, k)

    @property
    def t_steps(self):
        return len(self.steps)

    def step(self, t):
        return unpack_bits(self.steps[t], self.hidden)

    def dense(self):
        """(T, N, k) uint8 array."""
        return np.stack([self.step(t) for t in range(self.t_steps)])

    def spike_counts(self):
        return [int(self.step(t).sum()) for t in range(self.t_steps)]


@dataclass
class BinaryEmbedding:
    """Concatenated spikes ``Z = S^1 || ... || S^T``, packed row-major."""

    words: np.ndarray
    num_nodes: int
    t_steps: int
    hidden: int

    @property
    def width(self):
        return self.t_steps * self.hidden

    def unpack(self):
        return unpack_bits(self.words, self.width)

    def row_bytes(self):
        return -(-self.width // 8)

    def step_block(self, t):
        z = self.unpack()
        return z[:, t * self.hidden:(t + 1) * self.hidden]


def concat_pool(train):
    z = np.concatenate([train.step(t) for t in range(train.t_steps)], axis=1)
    return BinaryEmbedding(pack_bits(z), train.num_nodes, train.t_steps, train.hidden)


def firing_rate(train):
    total = np.zeros((train.num_nodes, train.hidden), dtype=np.float64)
    for t in range(train.t_steps):
        total += train.step(t)
    return (total / train.t_steps).astype(FLOAT)


# -- embedding file -------------------------------------------------------

EMB_MAGIC = b"SGCB"
EMB_VERSION = 1
EMB_HEADER = struct.Struct("<4sBIII")


def save_embedding(path, emb):
    """Header (magic, version, N, T, k) followed by ceil(T*k/8) bytes per node."""
    nbytes = emb.row_bytes()
    rows = np.ascontiguousarray(emb.words, dtype="<u8").view(np.uint8)
    rows = rows.reshape(emb.num_nodes, -1)[:, :nbytes]
    header = EMB_HEADER.pack(EMB_MAGIC, EMB_VERSION, emb.num_nodes, emb.t_steps, emb.hidden)
    Path(path).write_bytes(header + np.ascontiguousarray(rows).tobytes())


def load_embedding(path):
    data = Path(path).read_bytes()
    if len(data) < EMB_HEADER.size or data[:4] != EMB_MAGIC:
        raise DataError(f"{path}: not an embedding file (bad magic)")
    _, version, n, t_steps, k = EMB_HEADER.unpack_from(data)
    if version != EMB_VERSION:
        raise DataError(f"{path}: unsupported embedding version {version}")
    nbytes = -(-(t_steps * k) // 8)
    body = np.frombuffer(data, dtype=np.uint8, offset=EMB_HEADER.size)
    if body.size != n * nbytes:
        raise DataError(f"{path}: expected {n * nbytes} payload bytes, found {body.size}")
    n_words = -(-(t_steps * k) // 64)
    buf = np.zeros((n, n_words * 8), dtype=np.uint8)
    buf[:, :nbytes] = body.reshape(n, nbytes)
    return BinaryEmbedding(buf.view("<u8").reshape(n, n_words), n, t_steps, k)


def check_features(x):
    return check_matrix(x, "features")
