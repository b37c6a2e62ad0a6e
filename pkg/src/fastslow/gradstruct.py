"""Energies, dual dissipation potentials and tilting for the three gradient structures.

All dual potentials have the pairwise form

    R*(c, xi) = sum_{i<n} a_in(c) Psi(xi_i - xi_n)

with ``Psi(z) = z^2 / 2`` for the quadratic kinds and ``Psi = C*`` (the cosh
function ``4 cosh(z/2) - 4``) for the cosh kind.
"""
import enum
from dataclasses import dataclass

import numpy as np

from .errors import (
    BoundaryStateError,
    InternalConsistencyError,
    InvalidMeasureError,
    InvalidParameterError,
)
from .network import ReactionNetwork, _frozen, generator_from_kappa, kappa_representation

COSH_OVERFLOW = 1400.0


class Kind(enum.Enum):
    QUADRATIC = "quad"
    ENTROPIC = "entropic"
    COSH = "cosh"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        aliases = {"quadratic": "quad", "entropic-quadratic": "entropic",
                   "entropic_quadratic": "entropic"}
        key = aliases.get(str(value).lower(), str(value).lower())
        try:
            return cls(key)
        except ValueError:
            raise InvalidParameterError(f"unknown gradient structure kind {value!r}") from None


# ---------------------------------------------------------------- scalar functions

def cosh_star(zeta):
    """``C*(z) = 4 cosh(z/2) - 4``, written as ``8 sinh(z/4)^2`` to avoid cancellation."""
    z = np.asarray(zeta, dtype=float)
    with np.errstate(over="ignore"):
        out = np.where(np.abs(z) > COSH_OVERFLOW, np.inf, 8.0 * np.sinh(z / 4.0) ** 2)
    return out if out.ndim else float(out)


def cosh_star_prime(zeta):
    z = np.asarray(zeta, dtype=float)
    with np.errstate(over="ignore"):
        out = 2.0 * np.sinh(z / 2.0)
    return out if out.ndim else float(out)


def cosh_star_second(zeta):
    z = np.asarray(zeta, dtype=float)
    with np.errstate(over="ignore"):
        out = np.cosh(z / 2.0)
    return out if out.ndim else float(out)


def cosh_primal(v):
    """Legendre dual ``C(v) = 2 v arsinh(v/2) - 2 sqrt(4 + v^2) + 4``."""
    v = np.asarray(v, dtype=float)
    root = np.sqrt(4.0 + v * v)
    out = 2.0 * v * np.arcsinh(v / 2.0) - 2.0 * v * v / (root + 2.0)
    return out if out.ndim else float(out)


def cosh_primal_prime(v):
    out = 2.0 * np.arcsinh(np.asarray(v, dtype=float) / 2.0)
    return out if np.ndim(out) else float(out)


def cosh_primal_second(v):
    v = np.asarray(v, dtype=float)
    out = 2.0 / np.sqrt(4.0 + v * v)
    return out if out.ndim else float(out)


def logarithmic_mean(a, b):
    """``(a - b) / (log a - log b)`` with ``L(a, a) = a`` and ``L(a, 0) = 0``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(a < 0) or np.any(b < 0):
        raise InvalidParameterError("logarithmic mean needs nonnegative arguments")
    a, b = np.broadcast_arrays(a, b)
    out = np.zeros(a.shape)
    pos = (a > 0) & (b > 0)
    ap, bp = a[pos], b[pos]
    # log1p keeps the relative accuracy of log(b/a) when b is close to a
    ratio = bp / ap
    near = (ratio > 0.5) & (ratio < 2.0)
    u = np.where(near, np.log1p(np.where(near, (bp - ap) / ap, 0.0)),
                 np.log(bp) - np.log(ap))
    small = np.abs(u) < 1e-5
    val = np.empty_like(ap)
    # a (e^u - 1) / u expanded to second order
    val[small] = ap[small] * (1.0 + u[small] / 2.0 + u[small] ** 2 / 6.0)
    big = ~small
    val[big] = (bp[big] - ap[big]) / u[big]
    out[pos] = val
    return out if out.ndim else float(out)


def boltzmann_density(rho):
    """``lambda(rho) = rho log rho - rho + 1`` with ``lambda(0) = 1``."""
    rho = np.asarray(rho, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(rho > 0, rho * np.log(np.where(rho > 0, rho, 1.0)) - rho + 1.0, 1.0)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------- structures

@dataclass(frozen=True)
class GradientStructure:
    """Energy and dual dissipation of one kind for measure ``w`` and intensities ``kappa``."""

    kind: Kind
    w: np.ndarray
    kappa: np.ndarray

    def __post_init__(self):
        kind = Kind.parse(self.kind)
        w = np.asarray(self.w, dtype=float)
        K = np.array(self.kappa, dtype=float, copy=True)
        if w.ndim != 1 or K.shape != (w.size, w.size):
            raise InvalidParameterError("measure and intensity shapes disagree")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise InvalidMeasureError("measure must be strictly positive")
        np.fill_diagonal(K, 0.0)
        scale = max(1.0, float(np.abs(K).max()))
        if np.abs(K - K.T).max() > 1e-12 * scale:
            raise InvalidParameterError("intensity matrix is not symmetric (detailed balance fails)")
        if np.any(K < 0):
            raise InvalidParameterError("intensities must be nonnegative")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "w", _frozen(w))
        object.__setattr__(self, "kappa", _frozen(0.5 * (K + K.T)))

    @classmethod
    def from_generator(cls, kind, A, w=None):
        from .network import stationary_measure

        if w is None:
            w = stationary_measure(A)
        rep = kappa_representation(A, w)
        return cls(kind, w, rep.kappa)

    @property
    def num_states(self) -> int:
        return self.w.size

    def generator(self) -> np.ndarray:
        return generator_from_kappa(self.kappa, self.w)

    def with_measure(self, w):
        return GradientStructure(self.kind, w, self.kappa)


def _state(c, n):
    c = np.asarray(c, dtype=float)
    if c.shape != (n,):
        raise InvalidParameterError(f"state must have length {n}")
    if np.any(c < 0):
        raise InvalidParameterError("state has negative entries")
    return c


def energy(gs: GradientStructure, c, gradient: bool = True):
    """Return ``(value, gradient)``; the gradient is ``None`` when not requested."""
    c = _state(c, gs.num_states)
    rho = c / gs.w
    if gs.kind is Kind.QUADRATIC:
        value = 0.5 * float(np.sum(c * rho))
        return value, (rho if gradient else None)
    value = float(np.sum(gs.w * boltzmann_density(rho)))
    if not gradient:
        return value, None
    if np.any(c <= 0):
        raise BoundaryStateError("entropy gradient is undefined on the simplex boundary")
    return value, np.log(rho)


def coefficient_a(kind, c, w, kappa):
    """Symmetric matrix of the pair coefficients ``a_in(c)``.

    The closed form of each kind is cross-checked against the general
    expression built from ``Phi'`` and ``Psi'`` wherever the densities are
    positive and well separated.
    """
    kind = Kind.parse(kind)
    c = np.asarray(c, dtype=float)
    w = np.asarray(w, dtype=float)
    K = np.asarray(kappa, dtype=float)
    a = _closed_coefficient(kind, c, w, K)
    rho = c / w
    ri, rn = rho[:, None], rho[None, :]
    sep = (np.minimum(ri, rn) > 0) & (np.abs(ri - rn) > 1e-3 * np.maximum(ri, rn))
    if np.any(sep):
        g = general_coefficient(kind, c, w, K)
        scale = np.maximum(np.abs(a), 1e-300)
        err = np.abs(g - a)[sep] / np.maximum(scale[sep], 1e-12 * np.abs(K).max())
        if err.size and err.max() > 1e-10:
            raise InternalConsistencyError("closed-form coefficients disagree with the general formula")
    return a


def _closed_coefficient(kind, c, w, K):
    sw = np.sqrt(w[:, None] * w[None, :])
    if kind is Kind.QUADRATIC:
        return K * sw
    if kind is Kind.ENTROPIC:
        rho = c / w
        return K * sw * logarithmic_mean(rho[:, None], rho[None, :])
    return K * np.sqrt(c[:, None] * c[None, :])


_PHI_PRIME = {
    Kind.QUADRATIC: lambda r: r,
    Kind.ENTROPIC: np.log,
    Kind.COSH: np.log,
}
_PHI_SECOND = {
    Kind.QUADRATIC: lambda r: np.ones_like(r),
    Kind.ENTROPIC: lambda r: 1.0 / r,
    Kind.COSH: lambda r: 1.0 / r,
}
_PSI_PRIME = {
    Kind.QUADRATIC: lambda z: z,
    Kind.ENTROPIC: lambda z: z,
    Kind.COSH: cosh_star_prime,
}
_PSI_SECOND_ZERO = {Kind.QUADRATIC: 1.0, Kind.ENTROPIC: 1.0, Kind.COSH: 1.0}


def general_coefficient(kind, c, w, kappa):
    """``kappa sqrt(w_i w_n) (rho_i - rho_n) / Psi'(Phi'(rho_i) - Phi'(rho_n))``.

    At ``rho_i = rho_n`` the removable singularity takes the value
    ``kappa sqrt(w_i w_n) / (Psi''(0) Phi''(rho))``. Requires positive densities.
    """
    kind = Kind.parse(kind)
    c = np.asarray(c, dtype=float)
    w = np.asarray(w, dtype=float)
    K = np.asarray(kappa, dtype=float)
    rho = c / w
    ri, rn = np.meshgrid(rho, rho, indexing="ij")
    sw = np.sqrt(w[:, None] * w[None, :])
    dphi = _PHI_PRIME[kind](ri) - _PHI_PRIME[kind](rn)
    equal = ri == rn
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(equal, 1.0 / (_PSI_SECOND_ZERO[kind] * _PHI_SECOND[kind](ri)),
                         (ri - rn) / _PSI_PRIME[kind](np.where(equal, 1.0, dphi)))
    out = K * sw * ratio
    np.fill_diagonal(out, 0.0)
    return out


def _psi(kind, z):
    if kind is Kind.COSH:
        return cosh_star(z)
    return 0.5 * z * z


def _psi_prime(kind, z):
    if kind is Kind.COSH:
        return cosh_star_prime(z)
    return z


def _psi_second(kind, z):
    if kind is Kind.COSH:
        return cosh_star_second(z)
    return np.ones_like(z)


def _psi_conj(kind, s):
    if kind is Kind.COSH:
        return cosh_primal(s)
    return 0.5 * s * s


def _psi_conj_prime(kind, s):
    if kind is Kind.COSH:
        return cosh_primal_prime(s)
    return s


def _psi_conj_second(kind, s):
    if kind is Kind.COSH:
        return cosh_primal_second(s)
    return np.ones_like(s)


def pair_coefficients(gs: GradientStructure, c):
    c = _state(c, gs.num_states)
    return _closed_coefficient(gs.kind, c, gs.w, gs.kappa)


def _pairwise_dual(kind, a, xi):
    """Value, gradient and Hessian of ``sum_{i<n} a_in Psi(xi_i - xi_n)``."""
    D = xi[:, None] - xi[None, :]
    mask = a > 0
    Dm = np.where(mask, D, 0.0)
    with np.errstate(invalid="ignore"):
        val = 0.5 * np.sum(np.where(mask, a * _psi(kind, Dm), 0.0))
    grad = np.sum(np.where(mask, a * _psi_prime(kind, Dm), 0.0), axis=1)
    return val, grad, Dm, mask


def dual_dissipation(gs: GradientStructure, c, xi):
    """Return ``(R*(c, xi), D_xi R*(c, xi))``."""
    xi = np.asarray(xi, dtype=float)
    a = pair_coefficients(gs, c)
    val, grad, _, _ = _pairwise_dual(gs.kind, a, xi)
    return float(val), grad


def dual_hessian(gs: GradientStructure, c, xi):
    xi = np.asarray(xi, dtype=float)
    a = pair_coefficients(gs, c)
    return _pairwise_hessian(gs.kind, a, xi)


def _pairwise_hessian(kind, a, xi):
    D = xi[:, None] - xi[None, :]
    W = np.where(a > 0, a * _psi_second(kind, np.where(a > 0, D, 0.0)), 0.0)
    H = -W
    np.fill_diagonal(H, W.sum(axis=1) - np.diag(W))
    return H


def vector_field(gs: GradientStructure, c):
    """Gradient-flow field ``D_xi R*(c, -D E(c))``."""
    _, g = energy(gs, c)
    return dual_dissipation(gs, c, -g)[1]


# ---------------------------------------------------------------- tilting

@dataclass(frozen=True)
class Tilt:
    eta: np.ndarray

    def __post_init__(self):
        eta = np.asarray(self.eta, dtype=float)
        if eta.ndim != 1 or not np.all(np.isfinite(eta)):
            raise InvalidParameterError("tilt must be a finite vector")
        object.__setattr__(self, "eta", _frozen(eta))


def _eta(eta):
    return eta.eta if isinstance(eta, Tilt) else Tilt(eta).eta


def tilt_measure(w, eta) -> np.ndarray:
    """``w^eta = exp(-eta) w / Z``."""
    w = np.asarray(w, dtype=float)
    e = _eta(eta)
    if e.shape != w.shape:
        raise InvalidParameterError("tilt and measure lengths differ")
    if np.any(w <= 0):
        raise InvalidMeasureError("measure must be strictly positive")
    logw = np.log(w) - (e - e.min())
    wt = np.exp(logw - logw.max())
    return wt / wt.sum()


def tilt_generator(kappa, w, eta) -> np.ndarray:
    """Generator with the same intensities and the tilted measure."""
    return generator_from_kappa(kappa, tilt_measure(w, eta))


def tilted_field(gs: GradientStructure, eta, c):
    """``D_xi R*(c, -D E^eta(c))`` for the structure's own dual potential.

    ``E^eta = E + <eta, .>`` is the relative entropy with respect to
    ``w^eta`` up to a constant.
    """
    e = _eta(eta)
    _, g = energy(gs, c)
    return dual_dissipation(gs, c, -g - e)[1]


def check_tilt_invariance(gs: GradientStructure, eta, sample_states) -> float:
    """Max over samples of ``|A^eta c - D_xi R*(c, -D E(c) - eta)|``.

    The dual potential is the untilted one of ``gs``; only the cosh kind
    is expected to give a zero residual.
    """
    A_eta = tilt_generator(gs.kappa, gs.w, eta)
    worst = 0.0
    for c in np.atleast_2d(np.asarray(sample_states, dtype=float)):
        r = np.abs(A_eta @ c - tilted_field(gs, eta, c)).max()
        worst = max(worst, float(r))
    return worst


# ---------------------------------------------------------------- coarse cosh structure

def slow_limit_intensities(net: ReactionNetwork, w0) -> np.ndarray:
    """Slow intensities with respect to the limit measure."""
    return kappa_representation(net.slow, w0).kappa


def coarse_cosh_intensities(net: ReactionNetwork, cg, check: bool = True, tol: float = 1e-10):
    """Coarse intensities ``khat = sum_{alpha x alpha'} kappa^S0 sqrt(w0 w0 / (what what))``.

    With ``check`` the coarse cosh potential is compared with the slow one
    evaluated at ``(N chat, M^T xihat)`` on a few deterministic samples.
    """
    w0, what, phi = cg.w0, cg.what, cg.partition.phi
    K0 = np.asarray(slow_limit_intensities(net, w0))
    K0 = 0.5 * (K0 + K0.T)
    scaled = K0 * np.sqrt(w0[:, None] * w0[None, :])
    J = cg.partition.num_classes
    khat = np.zeros((J, J))
    np.add.at(khat, (phi[:, None], phi[None, :]), scaled)
    khat /= np.sqrt(what[:, None] * what[None, :])
    np.fill_diagonal(khat, 0.0)
    khat = 0.5 * (khat + khat.T)
    if check and J > 1:
        rng = np.random.default_rng(0)
        slow = GradientStructure(Kind.COSH, w0, K0)
        coarse = GradientStructure(Kind.COSH, what, khat)
        for _ in range(5):
            chat = rng.dirichlet(np.ones(J))
            xihat = rng.normal(size=J)
            lhs = dual_dissipation(coarse, chat, xihat)[0]
            rhs = dual_dissipation(slow, cg.reconstruct(chat), cg.lift(xihat))[0]
            if abs(lhs - rhs) > tol * max(1.0, abs(rhs)):
                raise InternalConsistencyError("coarse cosh intensities fail the dual cross-check")
    return khat
