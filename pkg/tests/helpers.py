"""Network builders and small oracles shared by the test modules."""
import os

import numpy as np

from fastslow.network import ReactionNetwork

DATA = os.path.join(os.path.dirname(__file__), "data")


def data_path(name):
    return os.path.join(DATA, name)


def chain(slow_up, slow_down, fast_up=None, fast_down=None):
    """Linear chain; ``*_up[k]`` is the rate ``k -> k+1``, ``*_down[k]`` the rate ``k+1 -> k``."""
    n = len(slow_up) + 1
    S, F = np.zeros((n, n)), np.zeros((n, n))
    for k in range(n - 1):
        S[k + 1, k], S[k, k + 1] = slow_up[k], slow_down[k]
        if fast_up is not None:
            F[k + 1, k], F[k, k + 1] = fast_up[k], fast_down[k]
    return ReactionNetwork(S, F)


def four_state(r12=1.0, r21=1.0, r23=1.0, r32=1.0, r34=1.0, r43=1.0):
    """Chain 1-2-3-4 with the pair 2~3 fast."""
    return chain([r12, 0.0, r34], [r21, 0.0, r43], [0.0, r23, 0.0], [0.0, r32, 0.0])


def degenerate_limit():
    """Three-state chain whose limit measure vanishes on the middle state."""
    S, F = np.zeros((3, 3)), np.zeros((3, 3))
    S[1, 0] = S[1, 2] = 2.0
    F[0, 1] = F[2, 1] = 2.0
    return ReactionNetwork(S, F)


def random_dbc_network(rng, n, fast_prob=0.35, both_prob=0.15, extra_edges=None):
    """Connected network satisfying detailed balance with an eps-free measure.

    Built from a random positive ``w`` and symmetric intensities, so
    ``A_in = kappa_in sqrt(w_i / w_n)`` for each of the slow and fast parts.
    """
    w = rng.uniform(0.2, 2.0, n)
    w /= w.sum()
    perm = rng.permutation(n)
    edges = {tuple(sorted((perm[k], perm[rng.integers(0, k)]))) for k in range(1, n)}
    extra = n // 2 if extra_edges is None else extra_edges
    for _ in range(extra):
        i, j = rng.choice(n, 2, replace=False)
        edges.add((min(i, j), max(i, j)))
    Ks, Kf = np.zeros((n, n)), np.zeros((n, n))
    for i, j in sorted(edges):
        u = rng.random()
        slow = u >= fast_prob or u < both_prob
        fast = u < fast_prob
        if slow:
            Ks[i, j] = Ks[j, i] = rng.uniform(0.3, 3.0)
        if fast:
            Kf[i, j] = Kf[j, i] = rng.uniform(0.3, 3.0)
    s = np.sqrt(w)
    return ReactionNetwork(Ks * s[:, None] / s[None, :], Kf * s[:, None] / s[None, :]), w


def random_generator(rng, n):
    """Dense detailed-balance generator with its stationary measure."""
    w = rng.uniform(0.2, 2.0, n)
    w /= w.sum()
    K = rng.uniform(0.2, 2.0, (n, n))
    K = 0.5 * (K + K.T)
    np.fill_diagonal(K, 0.0)
    s = np.sqrt(w)
    A = K * s[:, None] / s[None, :]
    A -= np.diag(A.sum(axis=0))
    return A, w


def interior_states(rng, n, count):
    return rng.dirichlet(np.ones(n), size=count) * 0.9 + 0.1 / n


def central_gradient(f, x, h=1e-6):
    g = np.zeros_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def null_vector(A):
    """Normalized null vector from the SVD of ``A`` alone (no normalization row)."""
    _, _, Vt = np.linalg.svd(A)
    v = Vt[-1]
    return v / v.sum()
