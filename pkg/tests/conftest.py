import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from sgcl.graph import from_edges
from sgcl.synthetic import erdos_renyi

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def dense_norm_adjacency(g):
    """Â = D^-1/2 (A + I) D^-1/2 built densely, independent of the CSR kernels."""
    a = np.eye(g.num_nodes)
    for u, v in g.undirected_edges():
        a[u, v] = a[v, u] = 1.0
    deg = a.sum(axis=1)
    return a / np.sqrt(np.outer(deg, deg))


def central_diff(f, x, eps=1e-3):
    """Central differences of scalar ``f`` w.r.t. every entry of ``x`` (in float64)."""
    x = np.array(x, dtype=np.float64)
    out = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + eps
        hi = f(x)
        x[idx] = orig - eps
        lo = f(x)
        x[idx] = orig
        out[idx] = (hi - lo) / (2 * eps)
    return out


@pytest.fixture
def edge_graph():
    return from_edges(2, [[0, 1]], np.array([[1.0], [0.0]]))


@pytest.fixture
def random_graph():
    return erdos_renyi(20, 0.2, seed=3, d=6)
