"""IF / LIF / PLIF neurons with Heaviside firing and a sigmoid surrogate gradient.

Integration follows ``V <- V + I`` (IF) or ``V <- V + (I - (V - V_reset)) / tau``
(LIF and PLIF). A unit fires when ``V >= V_th`` and is then either set to
``V_reset`` or lowered by ``V_th``.
"""

from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
from scipy.special import expit

from ._validation import FLOAT, check_choice, check_real, check_same_shape
from .errors import UsageError

KINDS = ("if", "lif", "plif")
RESET_MODES = ("by_subtraction", "to_zero")
_LN2 = float(np.log1p(1.0))


@dataclass(frozen=True)
class NeuronConfig:
    kind: str = "plif"
    v_threshold: float = 5e-3
    v_reset: float = 0.0
    reset_mode: str = "by_subtraction"
    tau_m: float = 1.0
    surrogate_alpha: float = 2.0

    def __post_init__(self):
        check_choice(self.kind, "kind", KINDS)
        check_choice(self.reset_mode, "reset_mode", RESET_MODES)
        check_real(self.v_threshold, "v_threshold", low=0.0, low_open=True)
        check_real(self.v_reset, "v_reset", high=self.v_threshold, high_open=True)
        check_real(self.tau_m, "tau_m", low=0.0, low_open=True)
        check_real(self.surrogate_alpha, "surrogate_alpha", low=0.0, low_open=True)

    @property
    def leaky(self):
        return self.kind != "if"


def tau_from_raw(raw):
    """Positive time constant from an unconstrained scalar; raw 0 gives tau 1."""
    return float(np.log1p(np.exp(np.float64(raw)))) / _LN2


def raw_from_tau(tau):
    if tau == 1.0:
        return 0.0
    return float(np.log(np.expm1(tau * _LN2)))


def dtau_draw(raw):
    return float(expit(np.float64(raw))) / _LN2


class StepTrace(NamedTuple):
    """Everything the backward pass of one neuron step needs."""

    v_prev: np.ndarray
    current: np.ndarray
    v_pre: np.ndarray
    spikes: np.ndarray
    tau: float
    config: NeuronConfig


@dataclass
class NeuronState:
    potential: np.ndarray
    config: NeuronConfig
    tau_m: float | None = None
    last_trace: StepTrace | None = field(default=None, repr=False)

    def __post_init__(self):
        self.potential = np.asarray(self.potential, dtype=FLOAT)
        if self.tau_m is None:
            self.tau_m = self.config.tau_m

    @classmethod
    def zeros(cls, shape, config, tau_m=None):
        return cls(np.zeros(shape, dtype=FLOAT), config, tau_m)

    def detached(self):
        """Same potential, no trace: the next step will not backpropagate into it."""
        return NeuronState(self.potential.copy(), self.config, self.tau_m)


def integrate(v_prev, current, config, tau):
    if config.kind == "if":
        return v_prev + current
    inv = FLOAT(1.0 / tau)
    return v_prev * (FLOAT(1.0) - inv) + (current + FLOAT(config.v_reset)) * inv


def heaviside(x):
    return (x >= 0).astype(FLOAT)


def neuron_step(state, input_current):
    """Integrate, fire, reset. Returns ``(spikes, new_state)``.

    ``new_state.last_trace`` keeps what :func:`neuron_backward` needs.
    """
    cfg = state.config
    current = np.asarray(input_current, dtype=FLOAT)
    check_same_shape(current, state.potential, ("input_current", "potential"))
    v_pre = integrate(state.potential, current, cfg, state.tau_m)
    spikes = heaviside(v_pre - FLOAT(cfg.v_threshold))
    if cfg.reset_mode == "by_subtraction":
        v_post = v_pre - spikes * FLOAT(cfg.v_threshold)
    else:
        v_post = np.where(spikes > 0, FLOAT(cfg.v_reset), v_pre).astype(FLOAT)
    trace = StepTrace(state.potential, current, v_pre, spikes, state.tau_m, cfg)
    return spikes, NeuronState(v_post, cfg, state.tau_m, trace)


def surrogate_grad(v_minus_th, alpha):
    """Derivative of ``sigmoid(alpha * x)`` with respect to ``x``."""
    # sigma(ax) * sigma(-ax) == sigma(ax) * (1 - sigma(ax)), without the
    # cancellation in 1 - sigma for large positive x
    ax = FLOAT(alpha) * np.asarray(v_minus_th, dtype=FLOAT)
    return (FLOAT(alpha) * expit(ax) * expit(-ax)).astype(FLOAT)


class NeuronGrads(NamedTuple):
    current: np.ndarray
    potential: np.ndarray  # w.r.t. the potential carried into the step
    tau: float


def neuron_backward(trace, d_spikes, d_v_post=None):
    """Backward through one step.

    ``d_spikes`` is the loss gradient w.r.t. the emitted spikes and
    ``d_v_post`` the gradient arriving through the post-reset potential from
    the next step (omit it when the carried state is detached).
    """
    if trace is None:
        raise UsageError("neuron_backward needs the forward trace of the step")
    cfg = trace.config
    vth = FLOAT(cfg.v_threshold)
    sg = surrogate_grad(trace.v_pre - vth, cfg.surrogate_alpha)
    d_spikes = np.asarray(d_spikes, dtype=FLOAT)
    if d_v_post is None:
        d_v_pre = d_spikes * sg
    elif cfg.reset_mode == "by_subtraction":
        d_v_pre = d_v_post + (d_spikes - vth * d_v_post) * sg
    else:
        s = trace.spikes
        d_v_pre = (d_v_post * (1 - s)
                   + (d_spikes + d_v_post * (FLOAT(cfg.v_reset) - trace.v_pre)) * sg)

    if cfg.kind == "if":
        return NeuronGrads(d_v_pre, d_v_pre, 0.0)
    tau = trace.tau
    inv = FLOAT(1.0 / tau)
    d_current = d_v_pre * inv
    d_v_prev = d_v_pre * (FLOAT(1.0) - inv)
    d_tau = float(np.sum(d_v_pre.astype(np.float64)
                         * (trace.v_prev - trace.current - cfg.v_reset)) / tau ** 2)
    return NeuronGrads(d_current, d_v_prev, d_tau if cfg.kind == "plif" else 0.0)


def with_threshold(config, v_threshold):
    return replace(config, v_threshold=v_threshold)
