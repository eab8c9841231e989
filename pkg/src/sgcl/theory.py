"""Oracle GCN, the constructive spiking approximation, and empirical bound checks.

The constructed network spikes at every layer: layer 1 integrates
``T * A_hat X^t W1_*[block t]`` and each deeper layer integrates
``A_hat s^{l-1}(t) (V_th W_*^l)``. Its final-layer firing rates are compared
against the ReLU GCN output node by node.
"""

from dataclasses import dataclass

import numpy as np

from ._validation import FLOAT, check_matrix
from .encoder import EncoderParams, group_widths, partition_features
from .errors import DimensionError, UsageError
from .graph import degree_bound, sym_norm_coeffs
from .neurons import NeuronConfig, NeuronState, neuron_step
from .ops import Param, relu, spmm
from .synthetic import bounded_degree_graph


@dataclass
class OracleGcn:
    weights: list  # W_*^1 (d x k), then k x k matrices

    @property
    def depth(self):
        return len(self.weights)

    @property
    def in_features(self):
        return self.weights[0].shape[0]

    def nu(self):
        """Largest operator norm among the layer weights."""
        return max(operator_norm(w) for w in self.weights)


def random_oracle(rng, d, k, depth, scale=1.0):
    dims = [d] + [k] * depth
    return OracleGcn([
        (rng.standard_normal((a, b)) * scale / np.sqrt(a)).astype(FLOAT)
        for a, b in zip(dims[:-1], dims[1:])
    ])


def operator_norm(w, max_iter=100, rtol=1e-6):
    """Largest singular value by power iteration on ``W^T W``."""
    w = np.asarray(w, dtype=np.float64)
    if w.size == 0:
        return 0.0
    v = np.random.default_rng(0).standard_normal(w.shape[1])
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(max_iter):
        u = w.T @ (w @ v)
        norm_u = np.linalg.norm(u)
        if norm_u == 0.0:
            return 0.0
        v = u / norm_u
        new_sigma = np.sqrt(norm_u)
        if abs(new_sigma - sigma) <= rtol * new_sigma:
            sigma = new_sigma
            break
        sigma = new_sigma
    return float(np.linalg.norm(w @ v))


def oracle_forward(g, oracle, coeffs=None):
    """ReLU GCN with ReLU after every layer, including the last."""
    x = check_matrix(g.features, "features")
    if x.shape[1] != oracle.in_features:
        raise DimensionError(f"features have width {x.shape[1]}, oracle expects {oracle.in_features}")
    coeffs = sym_norm_coeffs(g) if coeffs is None else coeffs
    z = x
    for w in oracle.weights:
        z = relu(spmm(coeffs, g, z @ np.asarray(w, dtype=FLOAT)))
    return z


def construct_snn(oracle, t_steps, v_th=1.0):
    """Spiking network whose firing rates track ``oracle``.

    Row block ``t`` of the first weight matrix is scaled by ``T``; deeper
    weights are scaled by ``v_th``. Neurons are IF with reset by subtraction.
    """
    w1 = np.asarray(oracle.weights[0], dtype=np.float64)
    bounds = np.cumsum([0] + group_widths(w1.shape[0], t_steps))
    k = w1.shape[1]
    first = [Param(t_steps * w1[a:b], f"first.{t}")
             for t, (a, b) in enumerate(zip(bounds[:-1], bounds[1:]))]
    bias = [Param(np.zeros((1, k)), f"bias.{t}") for t in range(t_steps)]
    shared = [Param(v_th * np.asarray(w, dtype=np.float64), f"shared.{i}")
              for i, w in enumerate(oracle.weights[1:])]
    neuron = NeuronConfig(kind="if", v_threshold=v_th, v_reset=0.0, reset_mode="by_subtraction")
    return EncoderParams(first, bias, shared, neuron, Param([[0.0]]), oracle.depth, k)


@dataclass
class RunTrace:
    """Per-layer records of a multi-layer spiking run."""

    config: NeuronConfig
    currents: list       # per layer: (T, N, k) input currents
    spike_counts: list   # per layer: (N, k) total spikes
    final_potential: list  # per layer: (N, k) V(T)
    min_potential: float

    @property
    def t_steps(self):
        return self.currents[0].shape[0]

    def firing_rates(self, layer=-1):
        return self.spike_counts[layer] / self.t_steps


def run_layered_snn(g, params, coeffs=None, features=None):
    """Simulate the constructed network, with one neuron population per layer."""
    coeffs = sym_norm_coeffs(g) if coeffs is None else coeffs
    x = g.features if features is None else features
    groups = partition_features(x, params.t_steps)
    n, k, cfg = g.num_nodes, params.hidden, params.neuron
    n_layers = params.depth
    states = [NeuronState.zeros((n, k), cfg) for _ in range(n_layers)]
    currents = [np.zeros((params.t_steps, n, k), dtype=FLOAT) for _ in range(n_layers)]
    counts = [np.zeros((n, k), dtype=np.int64) for _ in range(n_layers)]
    v_min = 0.0
    for t, group in enumerate(groups):
        h = spmm(coeffs, g, group @ params.first_layer[t].value) + params.first_bias[t].value
        for layer in range(n_layers):
            if layer > 0:
                h = spmm(coeffs, g, spikes) @ params.shared[layer - 1].value
            currents[layer][t] = h
            spikes, states[layer] = neuron_step(states[layer], h)
            counts[layer] += spikes.astype(np.int64)
            tr = states[layer].last_trace
            v_min = min(v_min, float(tr.v_pre.min()), float(states[layer].potential.min()))
    return RunTrace(cfg, currents, counts, [s.potential for s in states], v_min)


def spike_count_check(trace):
    """Max |V(T) - (sum_t H(t) - N(T) V_th)| over all layers and units."""
    cfg = trace.config
    if cfg.kind != "if" or cfg.reset_mode != "by_subtraction":
        raise UsageError("the spike-count identity is stated for IF neurons with reset by "
                         f"subtraction, got kind={cfg.kind!r} reset_mode={cfg.reset_mode!r}")
    return spike_count_residual(trace)


def spike_count_residual(trace):
    """Residual without the mode guard, for negative controls."""
    worst = 0.0
    vth = trace.config.v_threshold
    for cur, cnt, v_final in zip(trace.currents, trace.spike_counts, trace.final_potential):
        expected = cur.astype(np.float64).sum(axis=0) - cnt * vth
        worst = max(worst, float(np.max(np.abs(v_final - expected))))
    return worst


def trace_from_currents(currents, config):
    """Drive a single neuron population with a (T, N, k) current sequence."""
    currents = np.asarray(currents, dtype=FLOAT)
    state = NeuronState.zeros(currents.shape[1:], config)
    counts = np.zeros(currents.shape[1:], dtype=np.int64)
    v_min = 0.0
    for h in currents:
        spikes, state = neuron_step(state, h)
        counts += spikes.astype(np.int64)
        v_min = min(v_min, float(state.last_trace.v_pre.min()), float(state.potential.min()))
    return RunTrace(config, [currents], [counts], [state.potential], v_min)


@dataclass
class BoundReport:
    errors: np.ndarray   # per-node l2 distance between firing rate and oracle output
    bound: float
    kappa: float
    nu: float
    max_degree: int
    t_steps: int
    num_nodes: int

    @property
    def passed(self):
        return self.errors <= self.bound

    @property
    def max_error(self):
        return float(self.errors.max()) if self.errors.size else 0.0

    @property
    def ok(self):
        return bool(np.all(self.passed))


def approximation_bound(d, kappa, max_degree, nu, depth, t_steps):
    return (np.sqrt(d) * kappa * (np.sqrt(1 + max_degree) * nu) ** depth
            / (t_steps * np.sqrt(t_steps)))


def verify_bound(g, oracle, t_steps, v_th=1.0, reset_mode="by_subtraction"):
    """Run the constructed network for ``t_steps`` and compare with the oracle."""
    if reset_mode != "by_subtraction":
        raise UsageError("the approximation bound relies on reset by subtraction; "
                         f"got reset_mode={reset_mode!r}")
    coeffs = sym_norm_coeffs(g)
    params = construct_snn(oracle, t_steps, v_th)
    trace = run_layered_snn(g, params, coeffs)
    z_star = oracle_forward(g, oracle, coeffs).astype(np.float64)
    z_hat = trace.firing_rates()
    errors = np.linalg.norm(z_hat - z_star, axis=1)
    kappa = max(1.0, abs(trace.min_potential) / v_th)
    nu = oracle.nu()
    D = degree_bound(g)
    bound = approximation_bound(oracle.in_features, kappa, D, nu, oracle.depth, t_steps)
    return BoundReport(errors, float(bound), kappa, nu, D, t_steps, g.num_nodes)


def random_instance(seed, n=50, max_degree=10, depth=2, d=64, k=8, scale=0.5):
    """Bounded-degree graph with uniform [0, 1) features and a random oracle.

    The default weight scale keeps oracle activations mostly below 1, the
    largest value a firing rate can represent.
    """
    rng = np.random.default_rng(seed)
    g = bounded_degree_graph(n, max_degree, int(rng.integers(2 ** 31)), d=d)
    return g, random_oracle(rng, d, k, depth, scale)
