"""Scikit-learn style wrapper around blockwise spiking contrastive training."""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .contrastive import ContrastConfig
from .errors import ConfigError, DimensionError
from .graph import CsrGraph
from .neurons import NeuronConfig
from .ops import OptimConfig
from .training import TrainConfig, embed, load_checkpoint, save_checkpoint, train


class SpikingGCL(TransformerMixin, BaseEstimator):
    """Self-supervised spiking graph encoder producing 1-bit node embeddings.

    ``fit`` and ``transform`` take a :class:`CsrGraph`; ``transform`` returns
    the concatenated spikes of all time steps as a 0/1 float32 matrix of
    shape ``(N, t_steps * hidden)``.
    """

    def __init__(self, t_steps=8, hidden=8, depth=1, neuron="plif", v_threshold=5e-3,
                 reset_mode="by_subtraction", tau_m=1.0, surrogate_alpha=2.0, margin=1.0,
                 edge_drop=0.5, epochs=20, block_size=1, learning_rate=1e-3,
                 weight_decay=0.0, patience=20, detach_mode="state", random_state=0):
        self.t_steps = t_steps
        self.hidden = hidden
        self.depth = depth
        self.neuron = neuron
        self.v_threshold = v_threshold
        self.reset_mode = reset_mode
        self.tau_m = tau_m
        self.surrogate_alpha = surrogate_alpha
        self.margin = margin
        self.edge_drop = edge_drop
        self.epochs = epochs
        self.block_size = block_size
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.patience = patience
        self.detach_mode = detach_mode
        self.random_state = random_state

    def train_config(self):
        seed = 0 if self.random_state is None else self.random_state
        return TrainConfig(
            t_steps=self.t_steps, block_size=self.block_size, epochs=self.epochs,
            optim=OptimConfig(learning_rate=self.learning_rate, weight_decay=self.weight_decay),
            contrast=ContrastConfig(margin=self.margin, edge_drop_p=self.edge_drop, seed=seed),
            neuron=NeuronConfig(kind=self.neuron, v_threshold=self.v_threshold,
                                reset_mode=self.reset_mode, tau_m=self.tau_m,
                                surrogate_alpha=self.surrogate_alpha),
            depth=self.depth, hidden=self.hidden, early_stop_patience=self.patience,
            seed=seed, detach_mode=self.detach_mode)

    @staticmethod
    def _check_graph(X):
        if not isinstance(X, CsrGraph):
            raise ConfigError(f"expected a CsrGraph, got {type(X).__name__}")
        return X

    def fit(self, X, y=None):
        g = self._check_graph(X)
        self.config_ = self.train_config()
        self.encoder_, self.predictor_, self.history_ = train(g, self.config_)
        self.n_features_in_ = g.num_features
        return self

    def embed(self, X):
        """Packed :class:`BinaryEmbedding` of ``X``."""
        check_is_fitted(self, "encoder_")
        g = self._check_graph(X)
        if g.num_features != self.n_features_in_:
            raise DimensionError(f"graph has {g.num_features} features, "
                                 f"model was fit on {self.n_features_in_}")
        return embed(g, self.encoder_)

    def transform(self, X):
        return self.embed(X).unpack().astype(np.float32)

    def save(self, path):
        check_is_fitted(self, "encoder_")
        save_checkpoint(path, self.encoder_, self.predictor_, self.config_)

    @classmethod
    def load(cls, path):
        params, pred, cfg = load_checkpoint(path)
        est = cls(t_steps=cfg.t_steps, hidden=cfg.hidden, depth=cfg.depth,
                  neuron=cfg.neuron.kind, v_threshold=cfg.neuron.v_threshold,
                  reset_mode=cfg.neuron.reset_mode, tau_m=cfg.neuron.tau_m,
                  surrogate_alpha=cfg.neuron.surrogate_alpha, margin=cfg.contrast.margin,
                  edge_drop=cfg.contrast.edge_drop_p, epochs=cfg.epochs,
                  block_size=cfg.block_size, learning_rate=cfg.optim.learning_rate,
                  weight_decay=cfg.optim.weight_decay, patience=cfg.early_stop_patience,
                  detach_mode=cfg.detach_mode, random_state=cfg.seed)
        est.config_, est.encoder_, est.predictor_ = cfg, params, pred
        est.n_features_in_ = sum(w.value.shape[0] for w in params.first_layer)
        return est
