"""Fast-class partition, coarse-graining operators and the coarse generator."""
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import InternalConsistencyError, InvalidMeasureError, InvalidPartitionError
from .network import (
    ReactionNetwork,
    _frozen,
    fast_partition_labels,
    limit_equilibrium,
    membership_matrix,
)

DENSE_PROJECTION_LIMIT = 2000


@dataclass(frozen=True)
class Partition:
    """Disjoint classes covering ``0..I-1``; ``phi[i]`` is the class of ``i``."""

    classes: Tuple[Tuple[int, ...], ...]
    phi: np.ndarray

    def __post_init__(self):
        classes = tuple(tuple(int(i) for i in c) for c in self.classes)
        if any(len(c) == 0 for c in classes):
            raise InvalidPartitionError("partition has an empty class")
        members = [i for c in classes for i in c]
        n = len(members)
        if sorted(members) != list(range(n)):
            raise InvalidPartitionError("classes must be disjoint and cover every state")
        phi = np.empty(n, dtype=np.int64)
        for j, c in enumerate(classes):
            phi[list(c)] = j
        given = np.asarray(self.phi, dtype=np.int64)
        if given.shape != phi.shape or not np.array_equal(given, phi):
            raise InvalidPartitionError("phi does not match the classes")
        phi.setflags(write=False)
        object.__setattr__(self, "classes", classes)
        object.__setattr__(self, "phi", phi)

    @classmethod
    def from_classes(cls, classes):
        n = sum(len(c) for c in classes)
        phi = np.full(n, -1, dtype=np.int64)
        for j, c in enumerate(classes):
            if len(c) == 0:
                raise InvalidPartitionError("partition has an empty class")
            for i in c:
                if not 0 <= i < n or phi[i] >= 0:
                    raise InvalidPartitionError("classes must be disjoint and cover every state")
                phi[i] = j
        return cls(tuple(tuple(sorted(c)) for c in classes), phi)

    @property
    def num_states(self) -> int:
        return self.phi.shape[0]

    @property
    def num_classes(self) -> int:
        return len(self.classes)


def fast_classes(net: ReactionNetwork) -> Partition:
    """Connected components of the fast-reaction graph, ordered by smallest member."""
    classes, labels = fast_partition_labels(net)
    return Partition(tuple(classes), labels)


@dataclass(frozen=True)
class CoarseGraining:
    """Operators ``M`` (I -> J), ``N`` (J -> I) and ``P = N M``.

    ``P`` is stored densely up to ``DENSE_PROJECTION_LIMIT`` states and is
    ``None`` above that; :meth:`project` works in both cases.
    """

    partition: Partition
    M: np.ndarray
    N: np.ndarray
    P: Optional[np.ndarray]
    w0: np.ndarray
    what: np.ndarray

    def coarse(self, c):
        """Apply ``M`` (sum over each class)."""
        c = np.asarray(c, dtype=float)
        out = np.zeros(c.shape[:-1] + (self.partition.num_classes,))
        np.add.at(out.T, self.partition.phi, c.T)
        return out

    def reconstruct(self, chat):
        """Apply ``N``: distribute class mass proportionally to ``w0``."""
        chat = np.asarray(chat, dtype=float)
        phi = self.partition.phi
        return chat[..., phi] * (self.w0 / self.what[phi])

    def project(self, c):
        return self.reconstruct(self.coarse(c))

    def lift(self, xihat):
        """Apply ``M^T``: constant extension of a coarse vector over each class."""
        return np.asarray(xihat, dtype=float)[..., self.partition.phi]

    def average(self, xi):
        """Apply ``N^T``: ``w0``-weighted class average."""
        xi = np.asarray(xi, dtype=float)
        return self.coarse(xi * self.w0) / self.what


def build_operators(partition: Partition, w0) -> CoarseGraining:
    w0 = np.asarray(w0, dtype=float)
    if w0.shape != (partition.num_states,):
        raise InvalidMeasureError("limit measure has the wrong length")
    if not np.all(np.isfinite(w0)) or np.any(w0 <= 0):
        raise InvalidMeasureError("limit measure must be strictly positive")
    if any(len(c) == 0 for c in partition.classes):
        raise InvalidPartitionError("partition has an empty class")
    M = membership_matrix(partition.phi, partition.num_classes)
    what = M @ w0
    N = (w0[:, None] * M.T) / what[None, :]
    P = N @ M if partition.num_states <= DENSE_PROJECTION_LIMIT else None
    M.setflags(write=False)
    return CoarseGraining(partition, M, _frozen(N),
                          None if P is None else _frozen(P), _frozen(w0), _frozen(what))


def coarse_graining(net: ReactionNetwork, w0=None) -> CoarseGraining:
    """Operators for the fast classes of ``net`` and its limit measure."""
    if w0 is None:
        w0 = limit_equilibrium(net)
    return build_operators(fast_classes(net), w0)


def _projection(cg):
    return cg.P if cg.P is not None else cg.N @ cg.M


def verify_operator_algebra(net: ReactionNetwork, cg: CoarseGraining) -> dict:
    """Max-norm residuals of the identities relating ``M``, ``N``, ``P`` and ``A_fast``."""
    M = cg.M.astype(float)
    N, P, F = cg.N, _projection(cg), net.fast
    D = np.diag(cg.w0)
    J = M.shape[0]

    def norm(X):
        return float(np.abs(X).max()) if X.size else 0.0

    return {
        "MN_minus_id": norm(M @ N - np.eye(J)),
        "PP_minus_P": norm(P @ P - P),
        "MAf": norm(M @ F),
        "AfN": norm(F @ N),
        "PAf": norm(P @ F),
        "AfP": norm(F @ P),
        "P_detailed_balance": norm(D @ P.T - P @ D),
        "N_what_minus_w0": norm(N @ cg.what - cg.w0),
        "N_column_sums": norm(N.sum(axis=0) - 1.0),
    }


def _averaged_generator(A_slow, cg):
    """Class-averaged form of the coarse generator, summed entry by entry."""
    classes = cg.partition.classes
    J = len(classes)
    Ahat = np.zeros((J, J))
    for j1, a1 in enumerate(classes):
        for j2, a2 in enumerate(classes):
            total = 0.0
            for i1 in a1:
                for i2 in a2:
                    total += A_slow[i1, i2] * cg.w0[i2]
            Ahat[j1, j2] = total / cg.what[j2]
    return Ahat


def coarse_generator(net: ReactionNetwork, cg: CoarseGraining, tol: float = 1e-12) -> np.ndarray:
    """Coarse generator ``M A_slow N``, cross-checked against the class average."""
    Ahat = cg.M.astype(float) @ net.slow @ cg.N
    check = _averaged_generator(net.slow, cg)
    scale = max(1.0, float(np.abs(net.slow).max()))
    gap = float(np.abs(Ahat - check).max())
    if gap > tol * scale:
        raise InternalConsistencyError(f"coarse generator mismatch {gap:.3g}")
    return Ahat


def decompose_state(c, cg: CoarseGraining):
    """Split ``c`` into ``(P c, (id - P) c)``."""
    c = np.asarray(c, dtype=float)
    eq = cg.project(c)
    return eq, c - eq
