"""Random graph generators for tests, verification sweeps and demos."""

import numpy as np

from .graph import from_edges


def erdos_renyi(n, p, seed, d=4):
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(iu.size) < p
    x = rng.standard_normal((n, d))
    return from_edges(n, np.stack([iu[keep], ju[keep]], axis=1), x)


def bounded_degree_graph(n, max_degree, seed, d=4, n_tries=None, features=None):
    """Random graph whose degrees never exceed ``max_degree``.

    Candidate edges are drawn uniformly and accepted while both endpoints
    still have spare degree.
    """
    rng = np.random.default_rng(seed)
    deg = np.zeros(n, dtype=np.int64)
    seen = set()
    edges = []
    for _ in range(n_tries or n * max_degree * 2):
        u, v = rng.integers(n, size=2)
        if u == v or deg[u] >= max_degree or deg[v] >= max_degree:
            continue
        key = (min(u, v), max(u, v))
        if key in seen:
            continue
        seen.add(key)
        edges.append(key)
        deg[u] += 1
        deg[v] += 1
    x = rng.random((n, d)) if features is None else features
    return from_edges(n, np.array(edges, dtype=np.int64).reshape(-1, 2), x)


def sbm(n=400, n_blocks=2, p_in=0.1, p_out=0.01, d=32, separation=1.0, seed=0):
    """Stochastic block model with Gaussian features centred on per-class means.

    Each class mean has i.i.d. ``N(0, separation**2)`` coordinates; node
    features add unit-variance noise.
    """
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(n_blocks), -(-n // n_blocks))[:n]
    rng.shuffle(labels)
    iu, ju = np.triu_indices(n, k=1)
    prob = np.where(labels[iu] == labels[ju], p_in, p_out)
    keep = rng.random(iu.size) < prob
    means = rng.standard_normal((n_blocks, d)) * separation
    x = means[labels] + rng.standard_normal((n, d))
    return from_edges(n, np.stack([iu[keep], ju[keep]], axis=1), x, labels, n_blocks)
