"""Fast-slow linear reaction networks and their equilibria.

A network is the family ``A^eps = A_slow + A_fast / eps`` of generator
matrices acting on column vectors of concentrations, ``dc/dt = A^eps c``.
Column ``k`` holds the rates out of state ``k``: ``A[i, k] >= 0`` is the
rate of the jump ``k -> i`` and every column sums to zero.
"""
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from ._graph import connected_components, is_connected
from .errors import (
    InvalidMatrixError,
    InvalidMeasureError,
    InvalidParameterError,
    NonUniqueEquilibriumError,
    NonUniqueLimitError,
)

ALGEBRAIC_TOL = 1e-10


def _off_diagonal(A):
    B = np.array(A, dtype=float, copy=True)
    np.fill_diagonal(B, 0.0)
    return B


def _with_diagonal(A):
    """Return ``A`` with diagonal replaced by minus the off-diagonal column sums."""
    B = _off_diagonal(A)
    np.fill_diagonal(B, -B.sum(axis=0))
    return B


def _frozen(a):
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ReactionNetwork:
    """Slow and fast generator parts of a linear reaction network.

    Diagonals are always recomputed from the off-diagonal column sums;
    ``diagonal_correction`` records how far the supplied diagonals were off.
    """

    slow: np.ndarray
    fast: np.ndarray
    names: Optional[Sequence[str]] = None
    diagonal_correction: float = field(default=0.0, init=False)

    def __post_init__(self):
        slow = np.asarray(self.slow, dtype=float)
        fast = np.asarray(self.fast, dtype=float)
        if slow.ndim != 2 or slow.shape[0] != slow.shape[1] or slow.shape[0] == 0:
            raise InvalidMatrixError("slow generator must be a nonempty square matrix")
        if fast.shape != slow.shape:
            raise InvalidMatrixError("slow and fast generators differ in shape")
        for name, A in (("slow", slow), ("fast", fast)):
            if not np.all(np.isfinite(A)):
                raise InvalidMatrixError(f"{name} generator has non-finite entries")
            if np.any(_off_diagonal(A) < 0):
                raise InvalidMatrixError(f"{name} generator has negative off-diagonal rates")
        slow_fixed = _with_diagonal(slow)
        fast_fixed = _with_diagonal(fast)
        corr = max(np.abs(np.diag(slow) - np.diag(slow_fixed)).max(),
                   np.abs(np.diag(fast) - np.diag(fast_fixed)).max())
        object.__setattr__(self, "slow", _frozen(slow_fixed))
        object.__setattr__(self, "fast", _frozen(fast_fixed))
        object.__setattr__(self, "diagonal_correction", float(corr))
        if self.names is None:
            object.__setattr__(self, "names", tuple(f"c_{i + 1}" for i in range(slow.shape[0])))
        else:
            names = tuple(str(n) for n in self.names)
            if len(names) != slow.shape[0]:
                raise InvalidParameterError("number of state names does not match the generator size")
            object.__setattr__(self, "names", names)

    @property
    def num_states(self) -> int:
        return self.slow.shape[0]

    @property
    def has_fast(self) -> bool:
        return bool(np.any(_off_diagonal(self.fast) > 0))


def assemble_generator(net: ReactionNetwork, eps: float) -> np.ndarray:
    """Return ``A_slow + A_fast / eps``."""
    if not np.isfinite(eps) or eps <= 0:
        raise InvalidParameterError(f"eps must be positive, got {eps!r}")
    if eps == 1:
        return net.slow + net.fast
    return net.slow + net.fast / eps


def _check_generator(A, tol=ALGEBRAIC_TOL):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidMatrixError("generator must be square")
    if not np.all(np.isfinite(A)):
        raise InvalidMatrixError("generator has non-finite entries")
    scale = max(1.0, np.abs(A).max())
    if np.any(_off_diagonal(A) < -tol * scale):
        raise InvalidMatrixError("generator has negative off-diagonal entries")
    if np.abs(A.sum(axis=0)).max() > tol * scale:
        raise InvalidMatrixError("generator columns do not sum to zero")
    return A


def _null_dimension(A, rel=1e-12):
    s = np.linalg.svd(A, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return A.shape[1]
    return int(np.sum(s <= rel * max(A.shape) * s[0])) + max(0, A.shape[1] - A.shape[0])


def _normalized_solution(system, rhs):
    w, *_ = np.linalg.lstsq(system, rhs, rcond=None)
    return w / w.sum()


EXACT_MAX_STATES = 64


def _tree_weights(rate, nodes):
    """Detailed-balance weights on ``nodes`` from ratios along a spanning tree.

    ``rate(i, k)`` is the rate ``k -> i`` as a ``Fraction``. Returns exact
    normalized weights, or ``None`` when a tree edge is one-directional or
    the nodes are not connected.
    """
    nodes = list(nodes)
    weight = {nodes[0]: Fraction(1)}
    queue = [nodes[0]]
    while queue:
        i = queue.pop()
        for k in nodes:
            if k in weight:
                continue
            fwd, back = rate(k, i), rate(i, k)
            if fwd == 0 and back == 0:
                continue
            if fwd == 0 or back == 0:
                return None
            weight[k] = weight[i] * fwd / back
            queue.append(k)
    if len(weight) != len(nodes):
        return None
    total = sum(weight.values())
    return {k: v / total for k, v in weight.items()}


def _polish(w, exact, tol=1e-9):
    """Prefer the correctly rounded exact weights when they agree with ``w``."""
    if exact is None:
        return w
    v = np.array([float(x) for x in exact])
    return v if np.abs(v - w).max() <= tol * max(1.0, float(np.abs(w).max())) else w


def _exact_stationary(A):
    n = A.shape[0]
    if n > EXACT_MAX_STATES:
        return None
    F = [[Fraction(float(A[i, k])) for k in range(n)] for i in range(n)]
    wt = _tree_weights(lambda i, k: F[i][k], range(n))
    return None if wt is None else [wt[i] for i in range(n)]


def stationary_measure(A) -> np.ndarray:
    """Unique probability vector ``w`` with ``A w = 0``.

    Solved as the least-squares problem ``[A; 1^T] w = [0; 1]`` after a rank
    check on ``A`` that rejects generators with several null directions.
    """
    A = _check_generator(A)
    n = A.shape[0]
    if n == 1:
        return np.ones(1)
    if _null_dimension(A) != 1:
        raise NonUniqueEquilibriumError("generator has more than one stationary direction")
    system = np.vstack([A, np.ones((1, n))])
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    w = _normalized_solution(system, rhs)
    if np.all(w > 0):
        B = A * w[None, :]
        if np.abs(B - B.T).max() <= 1e-8 * max(1.0, float(np.abs(A).max())):
            w = _polish(w, _exact_stationary(A))
    if np.any(w <= 0):
        raise NonUniqueEquilibriumError(
            "stationary vector is not strictly positive; the reaction graph is not irreducible")
    return w


def _check_measure(w, n=None):
    w = np.asarray(w, dtype=float)
    if w.ndim != 1 or (n is not None and w.shape[0] != n):
        raise InvalidParameterError("measure has the wrong shape")
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise InvalidMeasureError("measure must be strictly positive")
    return w


def check_detailed_balance(A, w, tol: float = ALGEBRAIC_TOL):
    """Return ``(holds, residual)`` with residual ``max |A_ik w_k - A_ki w_i|``."""
    A = np.asarray(A, dtype=float)
    w = np.asarray(w, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or w.shape != (A.shape[0],):
        raise InvalidParameterError("dimension mismatch between generator and measure")
    B = A * w[None, :]
    residual = float(np.abs(B - B.T).max()) if A.size else 0.0
    return residual <= tol, residual


@dataclass(frozen=True)
class KappaRepresentation:
    """Symmetric-form data ``A = D_w^{1/2} K D_w^{-1/2} - D_b``."""

    kappa: np.ndarray
    b: np.ndarray
    w: np.ndarray

    def generator(self) -> np.ndarray:
        return generator_from_kappa(self.kappa, self.w, self.b)

    def asymmetry(self) -> float:
        return float(np.abs(self.kappa - self.kappa.T).max())

    def is_symmetric(self, tol: float = ALGEBRAIC_TOL) -> bool:
        return self.asymmetry() <= tol * max(1.0, np.abs(self.kappa).max())


def kappa_representation(A, w) -> KappaRepresentation:
    """Intensities ``kappa_in = A_in sqrt(w_n / w_i)`` and ``b_i = -A_ii``."""
    A = np.asarray(A, dtype=float)
    w = _check_measure(w, A.shape[0])
    s = np.sqrt(w)
    K = _off_diagonal(A) * s[None, :] / s[:, None]
    return KappaRepresentation(_frozen(K), _frozen(-np.diag(A)), _frozen(w))


def generator_from_kappa(kappa, w, b=None) -> np.ndarray:
    """Assemble ``D_w^{1/2} K D_w^{-1/2} - D_b``.

    When ``b`` is omitted it is chosen so that every column sums to zero.
    """
    w = _check_measure(w)
    K = _off_diagonal(kappa)
    s = np.sqrt(w)
    A = s[:, None] * K / s[None, :]
    if b is None:
        b = A.sum(axis=0)
    return A - np.diag(np.asarray(b, dtype=float))


def fast_partition_labels(net: ReactionNetwork):
    """Connected components of the undirected fast-reaction graph."""
    return connected_components(_off_diagonal(net.fast) > 0)


def membership_matrix(labels, num_classes) -> np.ndarray:
    M = np.zeros((num_classes, len(labels)), dtype=np.int64)
    M[np.asarray(labels), np.arange(len(labels))] = 1
    return M


def _exact_limit(net, classes):
    """Exact limit weights: fast-tree ratios inside classes, coarse-tree ratios between."""
    n = net.num_states
    if n > EXACT_MAX_STATES:
        return None
    S = [[Fraction(float(net.slow[i, k])) for k in range(n)] for i in range(n)]
    F = [[Fraction(float(net.fast[i, k])) for k in range(n)] for i in range(n)]
    inner = {}
    for cls in classes:
        wt = _tree_weights(lambda i, k: F[i][k], cls)
        if wt is None:
            return None
        inner.update(wt)

    def coarse_rate(b, a):
        return sum(S[k][i] * inner[i] for i in classes[a] for k in classes[b])

    outer = _tree_weights(coarse_rate, range(len(classes)))
    if outer is None:
        return None
    w0 = [Fraction(0)] * n
    for a, cls in enumerate(classes):
        for i in cls:
            w0[i] = outer[a] * inner[i]
    return w0


def limit_equilibrium(net: ReactionNetwork) -> np.ndarray:
    """Limit ``w0`` of the stationary measures as ``eps -> 0``.

    Solves ``A_fast w0 = 0``, ``M A_slow w0 = 0``, ``sum(w0) = 1`` where ``M``
    merges the fast-connected classes.
    """
    n = net.num_states
    classes, labels = fast_partition_labels(net)
    M = membership_matrix(labels, len(classes)).astype(float)
    core = np.vstack([net.fast, M @ net.slow])
    if n > 1 and _null_dimension(core) != 1:
        raise NonUniqueLimitError("limit system has more than one stationary direction")
    system = np.vstack([core, np.ones((1, n))])
    rhs = np.zeros(system.shape[0])
    rhs[-1] = 1.0
    w0 = _normalized_solution(system, rhs)
    if np.all(w0 > 0):
        w0 = _polish(w0, _exact_limit(net, classes))
    if np.any(w0 <= 0):
        raise InvalidMeasureError("limit measure is not strictly positive")
    return w0


@dataclass(frozen=True)
class AssumptionReport:
    """Findings of :func:`check_assumptions`.

    ``quotient_bound`` is ``None`` unless the network is reversible.
    """

    connected: bool
    reversible: bool
    quotient_bound: Optional[float]
    dbc_residual: float
    limit_measure_positive: bool
    eps_values: tuple = ()
    dbc_residuals: tuple = ()
    quotient_bounds: tuple = ()
    quotient_diverging: bool = False
    limit_measure_estimate: Optional[np.ndarray] = None
    tol: float = ALGEBRAIC_TOL

    @property
    def dbc_ok(self) -> bool:
        return bool(np.isfinite(self.dbc_residual) and self.dbc_residual <= self.tol)

    @property
    def ok(self) -> bool:
        return (self.connected and self.reversible and self.dbc_ok
                and self.limit_measure_positive and not self.quotient_diverging)

    def failures(self):
        out = []
        if not self.connected:
            out.append("reaction graph is not connected")
        if not self.reversible:
            out.append("some reaction has no reverse reaction")
        if not self.dbc_ok:
            out.append(f"detailed balance residual {self.dbc_residual:.3g} exceeds {self.tol:.3g}")
        if not self.limit_measure_positive:
            out.append("limit measure is not strictly positive")
        if self.quotient_diverging:
            out.append("transition quotients grow as eps decreases")
        return out


def _quotient_bound(A):
    off = _off_diagonal(A)
    i, k = np.nonzero(off > 0)
    if i.size == 0:
        return 1.0
    q = off[i, k] / off[k, i]
    return float(np.max(np.maximum(q, 1.0 / q)))


def _extrapolated_limit(net, eps_list, refinements=2):
    """Richardson estimate of ``lim w^eps`` from the smallest sampled eps.

    Uses ``eps_min / 10**k`` for ``k = 1..refinements`` and linear
    extrapolation in eps over the last two samples.
    """
    e0 = min(eps_list)
    e1, e2 = e0 / 10 ** (refinements - 1), e0 / 10 ** refinements
    w1 = stationary_measure(assemble_generator(net, e1))
    w2 = stationary_measure(assemble_generator(net, e2))
    return (e1 * w2 - e2 * w1) / (e1 - e2)


def check_assumptions(net: ReactionNetwork, eps_list, tol: float = ALGEBRAIC_TOL,
                      positivity_tol: float = 1e-6) -> AssumptionReport:
    """Test connectivity, reversibility, detailed balance and the limit measure.

    The quotient bound is the maximum of ``max(q, 1/q)`` over edges and the
    sampled eps values. It is flagged as diverging when it grows monotonically
    as eps decreases by at least the square root of the sampled eps range.
    """
    eps_values = tuple(float(e) for e in eps_list)
    if not eps_values:
        raise InvalidParameterError("eps_list must be nonempty")
    connected = True
    reversible = True
    residuals = []
    qbounds = []
    for eps in eps_values:
        A = assemble_generator(net, eps)
        off = _off_diagonal(A)
        support = off > 0
        connected &= is_connected(support)
        reversible &= bool(np.array_equal(support, support.T))
        try:
            w = stationary_measure(A)
            res = check_detailed_balance(A, w, tol)[1]
            scale = max(1.0, np.abs(A).max())
            residuals.append(res / scale)
        except (NonUniqueEquilibriumError, InvalidMatrixError):
            residuals.append(np.inf)
        qbounds.append(_quotient_bound(A) if bool(np.array_equal(support, support.T)) else np.inf)

    quotient_bound = float(max(qbounds)) if reversible else None
    order = np.argsort(eps_values)[::-1]
    q_sorted = np.asarray(qbounds)[order]
    diverging = False
    if reversible and len(eps_values) > 1:
        e_sorted = np.asarray(eps_values)[order]
        growth = q_sorted[-1] / q_sorted[0]
        diverging = bool(np.all(np.diff(q_sorted) > 0)
                         and growth >= np.sqrt(e_sorted[0] / e_sorted[-1]))

    try:
        estimate = _extrapolated_limit(net, eps_values)
        positive = bool(np.min(estimate) > positivity_tol)
    except (NonUniqueEquilibriumError, InvalidMatrixError):
        estimate = None
        positive = False

    return AssumptionReport(
        connected=bool(connected),
        reversible=bool(reversible),
        quotient_bound=quotient_bound,
        dbc_residual=float(max(residuals)),
        limit_measure_positive=positive,
        eps_values=eps_values,
        dbc_residuals=tuple(float(r) for r in residuals),
        quotient_bounds=tuple(float(q) for q in qbounds),
        quotient_diverging=diverging,
        limit_measure_estimate=estimate,
        tol=tol,
    )
