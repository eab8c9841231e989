"""Undirected attributed graphs in CSR form: loading, normalization, augmentation."""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._validation import FLOAT, check_matrix, check_real
from .errors import ConfigError, DataError, DimensionError, ParseError


def _frozen(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class CsrGraph:
    """Symmetric adjacency in CSR form plus node features and optional labels.

    Self-loops are never stored; the self-contribution is part of the
    normalization (see :func:`sym_norm_coeffs`). Column indices are strictly
    increasing within each row.
    """

    num_nodes: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    features: np.ndarray
    labels: np.ndarray | None = None
    num_classes: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "row_ptr", _frozen(self.row_ptr, np.int64))
        object.__setattr__(self, "col_idx", _frozen(self.col_idx, np.int64))
        object.__setattr__(self, "features", _frozen(self.features, FLOAT))
        if self.labels is not None:
            labels = _frozen(self.labels, np.int64)
            object.__setattr__(self, "labels", labels)
            if self.num_classes is None:
                n_cls = int(labels.max()) + 1 if labels.size else 0
                object.__setattr__(self, "num_classes", n_cls)
        self.validate()

    def validate(self):
        n = self.num_nodes
        rp, ci = self.row_ptr, self.col_idx
        if rp.shape != (n + 1,) or rp[0] != 0 or rp[-1] != ci.size:
            raise DataError("row_ptr is inconsistent with col_idx")
        if np.any(np.diff(rp) < 0):
            raise DataError("row_ptr must be non-decreasing")
        if ci.size and (ci.min() < 0 or ci.max() >= n):
            raise DataError("col_idx out of range")
        rows = self.row_indices()
        if np.any(rows == ci):
            raise DataError("self-loops must not be stored")
        # strictly increasing within a row <=> (row, col) keys strictly increasing
        keys = rows * max(n, 1) + ci
        if np.any(np.diff(keys) <= 0):
            raise DataError("col_idx must be strictly increasing within each row")
        rev = ci * max(n, 1) + rows
        if not np.array_equal(np.sort(rev), keys):
            raise DataError("adjacency is not symmetric")
        if self.features.ndim != 2 or self.features.shape[0] != n:
            raise DimensionError(f"features must have {n} rows, got {self.features.shape}")
        if self.labels is not None and self.labels.shape != (n,):
            raise DimensionError(f"labels must have length {n}, got {self.labels.shape}")

    @property
    def num_features(self):
        return self.features.shape[1]

    @property
    def num_entries(self):
        """Number of directed CSR entries (twice the undirected edge count)."""
        return int(self.col_idx.size)

    def degrees(self):
        return np.diff(self.row_ptr)

    def row_indices(self):
        return np.repeat(np.arange(self.num_nodes, dtype=np.int64), self.degrees())

    def undirected_edges(self):
        """Edges as an (E, 2) array with u < v."""
        rows = self.row_indices()
        mask = rows < self.col_idx
        return np.stack([rows[mask], self.col_idx[mask]], axis=1)

    def with_features(self, features):
        return CsrGraph(self.num_nodes, self.row_ptr, self.col_idx, features,
                        self.labels, self.num_classes)

    def same_as(self, other):
        return (self.num_nodes == other.num_nodes
                and np.array_equal(self.row_ptr, other.row_ptr)
                and np.array_equal(self.col_idx, other.col_idx)
                and np.array_equal(self.features, other.features))


def from_edges(num_nodes, edges, features, labels=None, num_classes=None):
    """Build a CsrGraph from an arbitrary (possibly directed, duplicated) edge list.

    Edges are symmetrized and deduplicated; self-loops are dropped.
    """
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.size and (edges.min() < 0 or edges.max() >= num_nodes):
        raise DataError(f"edge endpoint out of range for {num_nodes} nodes")
    edges = edges[edges[:, 0] != edges[:, 1]]
    both = np.concatenate([edges, edges[:, ::-1]])
    keys = np.unique(both[:, 0] * max(num_nodes, 1) + both[:, 1])
    rows, cols = np.divmod(keys, max(num_nodes, 1))
    row_ptr = np.zeros(num_nodes + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=num_nodes), out=row_ptr[1:])
    features = check_matrix(features, "features", allow_empty_cols=True)
    return CsrGraph(num_nodes, row_ptr, cols, features, labels, num_classes)


def _read_lines(path):
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if line:
                yield line_no, line


def load_graph(path):
    """Load ``edges.csv``, ``features.csv`` and optional ``labels.csv`` from a directory."""
    path = Path(path)
    if not path.is_dir():
        raise DataError(f"dataset directory not found: {path}")

    edges = []
    edge_file = path / "edges.csv"
    if not edge_file.exists():
        raise DataError(f"missing {edge_file}")
    for line_no, line in _read_lines(edge_file):
        parts = line.split(",")
        try:
            if len(parts) != 2:
                raise ValueError
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise ParseError(edge_file, line_no, f"expected 'u,v', got {line!r}") from None
        if u < 0 or v < 0:
            raise ParseError(edge_file, line_no, "negative node id")
        edges.append((u, v))

    feat_file = path / "features.csv"
    if not feat_file.exists():
        raise DataError(f"missing {feat_file}")
    rows = []
    for line_no, line in _read_lines(feat_file):
        try:
            row = np.array(line.split(","), dtype=np.float64)
        except ValueError:
            raise ParseError(feat_file, line_no, "non-numeric feature value") from None
        if rows and row.size != rows[0].size:
            raise DimensionError(
                f"{feat_file}:{line_no}: row has {row.size} values, expected {rows[0].size}")
        rows.append(row)
    if not rows:
        raise DataError(f"{feat_file} is empty")
    features = np.vstack(rows)
    n = features.shape[0]
    if edges and max(max(e) for e in edges) >= n:
        raise DimensionError(
            f"edges reference node {max(max(e) for e in edges)} but only {n} feature rows")

    labels = None
    label_file = path / "labels.csv"
    if label_file.exists():
        labels = load_labels(label_file)
        if labels.size != n:
            raise DimensionError(f"{label_file} has {labels.size} labels, expected {n}")

    return from_edges(n, np.array(edges, dtype=np.int64).reshape(-1, 2), features, labels)


def load_labels(path):
    out = []
    for line_no, line in _read_lines(path):
        try:
            out.append(int(line))
        except ValueError:
            raise ParseError(path, line_no, f"expected an integer label, got {line!r}") from None
    return np.array(out, dtype=np.int64)


def write_graph(g, path):
    """Write ``g`` in the directory format read by :func:`load_graph`."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    np.savetxt(path / "edges.csv", g.undirected_edges(), fmt="%d", delimiter=",")
    np.savetxt(path / "features.csv", g.features, fmt="%.9g", delimiter=",")
    if g.labels is not None:
        np.savetxt(path / "labels.csv", g.labels, fmt="%d")


@dataclass(frozen=True, eq=False)
class NormCoeffs:
    """GCN coefficients 1/sqrt((deg(u)+1)(deg(v)+1)) aligned with ``col_idx``."""

    values: np.ndarray
    self_term: np.ndarray


def sym_norm_coeffs(g):
    deg = g.degrees().astype(np.float64) + 1.0
    rows = g.row_indices()
    values = 1.0 / np.sqrt(deg[rows] * deg[g.col_idx])
    return NormCoeffs(_frozen(values, FLOAT), _frozen(1.0 / deg, FLOAT))


def drop_edges(g, p, seed):
    """Remove each undirected edge independently with probability ``p``."""
    p = check_real(p, "p", low=0.0, high=1.0, high_open=True)
    if p == 0.0:
        return g
    pairs = g.undirected_edges()
    rng = np.random.default_rng(seed)
    keep = rng.random(len(pairs)) >= p
    return from_edges(g.num_nodes, pairs[keep], g.features, g.labels, g.num_classes)


def degree_bound(g):
    """Maximum node degree D."""
    if g.num_nodes == 0:
        return 0
    return int(g.degrees().max())


def check_graph(g):
    if not isinstance(g, CsrGraph):
        raise ConfigError(f"expected a CsrGraph, got {type(g).__name__}")
    return g
