"""Blockwise surrogate-gradient training with gradient isolation between time-step blocks.

Each block of consecutive time steps gets its own margin ranking loss. The
membrane potential entering a block is treated as a constant, so a block's
backward pass only reaches its own first-layer weights, the shared deeper
layers, the predictor head and the neuron time constant.
"""

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from ._validation import check_choice, check_positive_int
from .contrastive import (ContrastConfig, PredictorParams, mrl_loss, predictor_backward,
                          predictor_score, shuffle_features)
from .encoder import (concat_pool, encode, encoder_from_tensors, gcn_backward, gcn_forward,
                      group_widths, init_encoder, partition_features)
from .errors import ConfigError, DataError, NumericError
from .graph import drop_edges, sym_norm_coeffs
from .neurons import NeuronConfig, NeuronState, dtau_draw, neuron_backward, neuron_step
from .ops import OptimConfig, Param, adamw_step, load_tensors, save_tensors

logger = logging.getLogger(__name__)

DETACH_MODES = ("state", "encoder_output")


@dataclass(frozen=True)
class TrainConfig:
    t_steps: int = 8
    block_size: int = 1
    epochs: int = 20
    optim: OptimConfig = field(default_factory=OptimConfig)
    contrast: ContrastConfig = field(default_factory=ContrastConfig)
    neuron: NeuronConfig = field(default_factory=NeuronConfig)
    depth: int = 1
    hidden: int = 8
    early_stop_patience: int = 20
    seed: int = 0
    detach_mode: str = "state"

    def __post_init__(self):
        check_positive_int(self.t_steps, "t_steps")
        check_positive_int(self.block_size, "block_size")
        if self.block_size > self.t_steps:
            raise ConfigError(f"block_size={self.block_size} exceeds t_steps={self.t_steps}")
        check_positive_int(self.epochs, "epochs")
        check_positive_int(self.depth, "depth")
        check_positive_int(self.hidden, "hidden")
        check_positive_int(self.early_stop_patience, "early_stop_patience")
        check_choice(self.detach_mode, "detach_mode", DETACH_MODES)

    def blocks(self):
        return [list(range(s, min(s + self.block_size, self.t_steps)))
                for s in range(0, self.t_steps, self.block_size)]


@dataclass
class TrainHistory:
    rows: list = field(default_factory=list)
    step_grad_norms: list = field(default_factory=list)   # per epoch, length T
    epoch_seconds: list = field(default_factory=list)
    stopped_early: bool = False

    FIELDS = ("epoch", "block", "loss", "grad_norm", "seconds", "spikes", "n_nodes", "in_width")

    def epoch_losses(self):
        out = {}
        for r in self.rows:
            out.setdefault(r["epoch"], []).append(r["loss"])
        return [float(np.mean(v)) for _, v in sorted(out.items())]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=self.FIELDS)
            writer.writeheader()
            for r in self.rows:
                writer.writerow({k: r[k] for k in self.FIELDS})

    @classmethod
    def from_csv(cls, path):
        hist = cls()
        with open(path, newline="") as fh:
            for r in csv.DictReader(fh):
                hist.rows.append({
                    "epoch": int(r["epoch"]), "block": int(r["block"]),
                    "loss": float(r["loss"]), "grad_norm": float(r["grad_norm"]),
                    "seconds": float(r["seconds"]), "spikes": int(r["spikes"]),
                    "n_nodes": int(r["n_nodes"]), "in_width": int(r["in_width"]),
                })
        return hist

    def comparable(self):
        """Rows without wall-clock timings, for determinism checks."""
        return [{k: v for k, v in r.items() if k != "seconds"} for r in self.rows]


@dataclass
class View:
    """One graph view split into T feature groups."""

    graph: object
    coeffs: object
    groups: list

    @classmethod
    def build(cls, g, t_steps, features=None):
        x = g.features if features is None else features
        return cls(g, sym_norm_coeffs(g), partition_features(x, t_steps))


@dataclass
class _StepRecord:
    cache: object
    trace: object
    spikes: np.ndarray


def forward_steps(view, params, state, steps):
    """Run ``steps`` from ``state``; returns (records, final state)."""
    records = []
    for t in steps:
        current, cache = gcn_forward(view.graph, view.coeffs, view.groups[t], params, t)
        spikes, state = neuron_step(state, current)
        records.append(_StepRecord(cache, state.last_trace, spikes))
    return records, state


def backward_steps(view, params, pred, steps, records, d_scores, through_time=True,
                   encoder=True):
    """Backpropagate per-step score gradients through a run of steps.

    ``d_scores[i]`` may be ``None`` for steps without a loss term. With
    ``through_time`` the gradient also flows through the membrane potential
    between consecutive steps of the run; it never flows into the potential
    that entered the run.
    """
    d_tau = 0.0
    d_v_post = None
    for i in range(len(steps) - 1, -1, -1):
        rec = records[i]
        if d_scores[i] is not None:
            d_spikes = predictor_backward(rec.spikes, pred, d_scores[i])
        else:
            d_spikes = np.zeros_like(rec.spikes)
        grads = neuron_backward(rec.trace, d_spikes, d_v_post)
        d_tau += grads.tau
        if encoder:
            gcn_backward(view.graph, view.coeffs, params, steps[i], rec.cache, grads.current)
        d_v_post = grads.potential if through_time else None
    if params.neuron.kind == "plif":
        params.tau_raw.grad[0, 0] += np.float32(d_tau * dtau_draw(params.tau_raw.value[0, 0]))


def block_gradients(pos, neg, params, pred, state_pos, state_neg, steps, margin,
                    detach_mode="state"):
    """Forward one block for both views and accumulate its gradients.

    Incoming states are detached before use. Returns
    ``(loss, new_state_pos, new_state_neg, spikes_pos)``.
    """
    tau = params.tau_m
    state_pos = NeuronState(state_pos.potential.copy(), params.neuron, tau)
    state_neg = NeuronState(state_neg.potential.copy(), params.neuron, tau)
    rec_pos, state_pos = forward_steps(pos, params, state_pos, steps)
    rec_neg, state_neg = forward_steps(neg, params, state_neg, steps)

    losses, d_pos, d_neg = [], [], []
    scale = 1.0 / len(steps)
    for rp, rn in zip(rec_pos, rec_neg):
        loss, dp, dn = mrl_loss(predictor_score(rp.spikes, pred),
                                predictor_score(rn.spikes, pred), margin)
        losses.append(loss)
        d_pos.append(dp * np.float32(scale))
        d_neg.append(dn * np.float32(scale))
    block_loss = float(np.mean(losses))
    if not np.isfinite(block_loss):
        raise NumericError(f"non-finite loss in block starting at step {steps[0]}")

    encoder = detach_mode == "state"
    backward_steps(pos, params, pred, steps, rec_pos, d_pos, encoder=encoder)
    backward_steps(neg, params, pred, steps, rec_neg, d_neg, encoder=encoder)
    spikes_pos = [r.spikes for r in rec_pos]
    return block_loss, state_pos, state_neg, spikes_pos


def corrupted_view(g, cfg, epoch):
    """Feature-shuffled, edge-dropped view for one epoch."""
    rng = np.random.default_rng([cfg.seed, epoch])
    x_neg, _ = shuffle_features(g.features, None, perm=rng.permutation(g.num_features))
    g_neg = drop_edges(g, cfg.contrast.edge_drop_p, int(rng.integers(2 ** 32)))
    return View.build(g_neg, cfg.t_steps, x_neg)


def init_model(g, cfg):
    rng = np.random.default_rng(cfg.seed)
    widths = group_widths(g.num_features, cfg.t_steps)
    params = init_encoder(widths, cfg.hidden, cfg.depth, cfg.neuron, rng)
    pred = PredictorParams.init(cfg.hidden, rng)
    return params, pred


def _grad_norm(params_list):
    return float(np.sqrt(sum(float(np.sum(p.grad.astype(np.float64) ** 2)) for p in params_list)))


def train(g, cfg, params=None, pred=None):
    """Self-supervised blockwise training. Returns ``(params, pred, history)``."""
    if params is None or pred is None:
        params, pred = init_model(g, cfg)
    pos = View.build(g, cfg.t_steps)
    history = TrainHistory()
    blocks = cfg.blocks()
    widths = group_widths(g.num_features, cfg.t_steps)
    shared = [*params.shared, *pred.params()]
    if params.neuron.kind == "plif":
        shared.append(params.tau_raw)
    for p in params.all_params() + pred.params():
        p.zero_grad()

    best, stale = np.inf, 0
    for epoch in range(cfg.epochs):
        t_epoch = time.perf_counter()
        neg = corrupted_view(g, cfg, epoch)
        state_pos = NeuronState.zeros((g.num_nodes, cfg.hidden), params.neuron)
        state_neg = NeuronState.zeros((g.num_nodes, cfg.hidden), params.neuron)
        step_norms = [0.0] * cfg.t_steps
        for b, steps in enumerate(blocks):
            t_block = time.perf_counter()
            loss, state_pos, state_neg, spikes = block_gradients(
                pos, neg, params, pred, state_pos, state_neg, steps,
                cfg.contrast.margin, cfg.detach_mode)
            local = [p for t in steps for p in params.block_params(t)]
            for t in steps:
                step_norms[t] = _grad_norm(params.block_params(t))
            norm = _grad_norm(local)
            for p in local + shared:
                adamw_step(p, cfg.optim)
            history.rows.append({
                "epoch": epoch, "block": b, "loss": loss, "grad_norm": norm,
                "seconds": time.perf_counter() - t_block,
                "spikes": int(sum(s.sum() for s in spikes)),
                "n_nodes": g.num_nodes, "in_width": int(sum(widths[t] for t in steps)),
            })
        history.step_grad_norms.append(step_norms)
        history.epoch_seconds.append(time.perf_counter() - t_epoch)
        epoch_loss = history.epoch_losses()[-1]
        logger.info("epoch %d loss %.6f", epoch, epoch_loss)
        if epoch_loss < best - 1e-8:
            best, stale = epoch_loss, 0
        else:
            stale += 1
            if stale >= cfg.early_stop_patience:
                history.stopped_early = True
                logger.info("early stop after epoch %d", epoch)
                break
    return params, pred, history


def embed(g, params):
    """Binary embedding of the clean graph under ``params``."""
    view = View.build(g, params.t_steps)
    return concat_pool(encode(g, view.coeffs, view.groups, params))


def grad_norm_probe(g, cfg, isolate, params=None, pred=None):
    """Per-step first-layer gradient norms from one forward/backward pass.

    With ``isolate`` each block is scored by its own loss and the carried
    potential is detached at block boundaries. Without it the sequence is
    scored once, at the final step, and the gradient is propagated back
    through the whole membrane recurrence to every earlier step.
    """
    if params is None or pred is None:
        params, pred = init_model(g, cfg)
    for p in params.all_params() + pred.params():
        p.zero_grad()
    pos = View.build(g, cfg.t_steps)
    neg = corrupted_view(g, cfg, 0)
    state_pos = NeuronState.zeros((g.num_nodes, cfg.hidden), params.neuron, params.tau_m)
    state_neg = NeuronState.zeros((g.num_nodes, cfg.hidden), params.neuron, params.tau_m)
    m = cfg.contrast.margin
    if isolate:
        for steps in cfg.blocks():
            _, state_pos, state_neg, _ = block_gradients(
                pos, neg, params, pred, state_pos, state_neg, steps, m)
    else:
        steps = list(range(cfg.t_steps))
        rec_pos, _ = forward_steps(pos, params, state_pos, steps)
        rec_neg, _ = forward_steps(neg, params, state_neg, steps)
        _, d_pos, d_neg = mrl_loss(predictor_score(rec_pos[-1].spikes, pred),
                                   predictor_score(rec_neg[-1].spikes, pred), m)
        none = [None] * (cfg.t_steps - 1)
        backward_steps(pos, params, pred, steps, rec_pos, none + [d_pos])
        backward_steps(neg, params, pred, steps, rec_neg, none + [d_neg])
    return [_grad_norm(params.block_params(t)) for t in range(cfg.t_steps)]


def config_to_dict(cfg):
    return asdict(cfg)


def config_from_dict(d):
    d = dict(d)
    return TrainConfig(optim=OptimConfig(**d.pop("optim")),
                       contrast=ContrastConfig(**d.pop("contrast")),
                       neuron=NeuronConfig(**d.pop("neuron")), **d)


def save_checkpoint(path, params, pred, cfg):
    """Encoder, predictor and the run configuration in one tensor container.

    The configuration travels as UTF-8 JSON bytes stored one per float, which
    float32 represents exactly.
    """
    tensors = dict(params.tensors())
    tensors["predictor.w"] = pred.w.value
    tensors["predictor.b"] = pred.b.value
    meta = json.dumps(config_to_dict(cfg), sort_keys=True).encode("utf-8")
    tensors["meta.config"] = np.frombuffer(meta, dtype=np.uint8).astype(np.float32)
    save_tensors(path, tensors)


def load_checkpoint(path):
    """Returns ``(params, pred, cfg)``."""
    tensors = load_tensors(path)
    try:
        meta = tensors["meta.config"].astype(np.uint8).tobytes().decode("utf-8")
        cfg = config_from_dict(json.loads(meta))
        params = encoder_from_tensors(tensors, cfg.neuron, cfg.depth, cfg.hidden, cfg.t_steps)
        pred = PredictorParams(Param(tensors["predictor.w"], "predictor.w"),
                               Param(tensors["predictor.b"], "predictor.b"))
    except (KeyError, ValueError, TypeError) as exc:
        raise DataError(f"{path}: incomplete or inconsistent checkpoint ({exc})") from exc
    return params, pred, cfg
