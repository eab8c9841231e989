"""Linear-probe evaluation of frozen embeddings."""

from dataclasses import dataclass

import numpy as np
from scipy.special import log_softmax
from sklearn.base import BaseEstimator, ClassifierMixin

from ._validation import check_positive_int, check_real
from .encoder import BinaryEmbedding
from .errors import ConfigError, DegenerateError, DimensionError


@dataclass(frozen=True)
class Split:
    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray

    def sizes(self):
        return len(self.train_idx), len(self.val_idx), len(self.test_idx)


def _check_ratios(ratios):
    ratios = tuple(check_real(r, "ratio", low=0.0, high=1.0) for r in ratios)
    if len(ratios) != 3:
        raise ConfigError(f"expected (train, val, test) ratios, got {len(ratios)} values")
    if abs(sum(ratios) - 1.0) > 1e-6:
        raise ConfigError(f"split ratios must sum to 1, got {sum(ratios)}")
    return ratios


def _allocate(n, ratios):
    """Floor the train/val shares; the test split takes the remainder."""
    n_train = int(np.floor(ratios[0] * n + 1e-9))
    n_val = int(np.floor(ratios[1] * n + 1e-9))
    if ratios[2] == 0.0:
        n_val = n - n_train if ratios[1] > 0 else n_val
        n_train = n - n_val
    return n_train, n_val


def make_split(labels, ratios=(0.1, 0.1, 0.8), stratified=True, seed=0):
    """Random disjoint train/val/test split, optionally per class."""
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise DimensionError(f"labels must be 1-D, got shape {labels.shape}")
    ratios = _check_ratios(ratios)
    rng = np.random.default_rng(seed)
    used = sum(r > 0 for r in ratios)
    pools = [np.flatnonzero(labels == c) for c in np.unique(labels)] if stratified \
        else [np.arange(labels.size)]
    parts = ([], [], [])
    for pool in pools:
        if pool.size < used:
            raise DegenerateError(f"a class has {pool.size} nodes but {used} splits need one each")
        pool = rng.permutation(pool)
        n_train, n_val = _allocate(pool.size, ratios)
        parts[0].append(pool[:n_train])
        parts[1].append(pool[n_train:n_train + n_val])
        parts[2].append(pool[n_train + n_val:])
    return Split(*(np.sort(np.concatenate(p)).astype(np.int64) for p in parts))


def _as_dense(z):
    if isinstance(z, BinaryEmbedding):
        return z.unpack().astype(np.float64)
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2:
        raise DimensionError(f"embeddings must be 2-D, got shape {z.shape}")
    return z


class LinearProbe(ClassifierMixin, BaseEstimator):
    """Multinomial logistic regression trained by full-batch gradient descent.

    Weights start at zero, so a fit is fully determined by the data.
    """

    def __init__(self, lr=0.1, epochs=300, l2=1e-4, n_classes=None):
        self.lr = lr
        self.epochs = epochs
        self.l2 = l2
        self.n_classes = n_classes

    def fit(self, X, y):
        check_real(self.lr, "lr", low=0.0, low_open=True)
        check_positive_int(self.epochs, "epochs")
        check_real(self.l2, "l2", low=0.0)
        x = _as_dense(X)
        y = np.asarray(y, dtype=np.int64)
        if x.shape[0] != y.size:
            raise DimensionError(f"{x.shape[0]} rows but {y.size} labels")
        if np.unique(y).size < 2:
            raise DegenerateError("training set contains a single class")
        c = int(self.n_classes or y.max() + 1)
        n, d = x.shape
        onehot = np.zeros((n, c))
        onehot[np.arange(n), y] = 1.0
        w = np.zeros((d, c))
        b = np.zeros(c)
        self.loss_curve_ = []
        for _ in range(self.epochs):
            logp = log_softmax(x @ w + b, axis=1)
            self.loss_curve_.append(float(-np.mean(np.sum(onehot * logp, axis=1))
                                          + 0.5 * self.l2 * np.sum(w * w)))
            err = (np.exp(logp) - onehot) / n
            w -= self.lr * (x.T @ err + self.l2 * w)
            b -= self.lr * err.sum(axis=0)
        self.coef_, self.intercept_ = w, b
        self.classes_ = np.arange(c)
        return self

    def decision_function(self, X):
        return _as_dense(X) @ self.coef_ + self.intercept_

    def predict(self, X):
        # argmax returns the first maximum, so ties go to the lowest class index
        return np.argmax(self.decision_function(X), axis=1)


def train_probe(z, labels, split, epochs=300, lr=0.1, l2=1e-4):
    x = _as_dense(z)
    labels = np.asarray(labels, dtype=np.int64)
    probe = LinearProbe(lr=lr, epochs=epochs, l2=l2, n_classes=int(labels.max()) + 1)
    return probe.fit(x[split.train_idx], labels[split.train_idx])


def accuracy(model, z, labels, idx=None):
    x = _as_dense(z)
    labels = np.asarray(labels)
    idx = np.arange(labels.size) if idx is None else np.asarray(idx)
    if idx.size == 0:
        return 0.0
    return float(np.mean(model.predict(x[idx]) == labels[idx]))


def evaluate_trials(z, labels, trials=10, ratios=(0.1, 0.1, 0.8), stratified=True, seed=0,
                    epochs=300, lr=0.1, l2=1e-4):
    """Probe accuracy over ``trials`` random splits, as mean and sample std."""
    check_positive_int(trials, "trials")
    x = _as_dense(z)
    rows = []
    for i in range(trials):
        split = make_split(labels, ratios, stratified, seed + i)
        model = train_probe(x, labels, split, epochs, lr, l2)
        rows.append({"trial": i, "seed": seed + i,
                     "val_acc": accuracy(model, x, labels, split.val_idx),
                     "test_acc": accuracy(model, x, labels, split.test_idx)})
    accs = np.array([r["test_acc"] for r in rows])
    std = float(np.std(accs, ddof=1)) if accs.size > 1 else 0.0
    return {"mean_acc": float(accs.mean()), "std_acc": std, "trials": rows}
