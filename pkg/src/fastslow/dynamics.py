"""Exact propagation of the master equation and the eps-convergence experiment."""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import quad_vec

from .coarse import CoarseGraining, coarse_generator, coarse_graining
from .errors import (
    InvalidInitialStateError,
    InvalidParameterError,
    OutOfRangeError,
    RequiresDetailedBalanceError,
)
from .network import (
    ReactionNetwork,
    _frozen,
    assemble_generator,
    check_detailed_balance,
    stationary_measure,
)

log = logging.getLogger(__name__)

SIMPLEX_TOL = 1e-9
DBC_TOL = 1e-8


@dataclass(frozen=True)
class Trajectory:
    """States ``c(t_k)`` on a strictly increasing grid, with optional velocities."""

    times: np.ndarray
    states: np.ndarray
    velocities: Optional[np.ndarray] = None

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        X = np.atleast_2d(np.asarray(self.states, dtype=float))
        if t.ndim != 1 or X.shape[0] != t.size:
            raise InvalidParameterError("times and states have inconsistent lengths")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise InvalidParameterError("times must be strictly increasing")
        if np.any(X < -SIMPLEX_TOL) or np.abs(X.sum(axis=1) - 1.0).max() > SIMPLEX_TOL:
            raise InvalidParameterError("trajectory leaves the probability simplex")
        object.__setattr__(self, "times", _frozen(t))
        object.__setattr__(self, "states", _frozen(X))
        if self.velocities is not None:
            V = np.atleast_2d(np.asarray(self.velocities, dtype=float))
            if V.shape != X.shape:
                raise InvalidParameterError("velocities must match the states in shape")
            object.__setattr__(self, "velocities", _frozen(V))

    def __len__(self):
        return self.times.size

    @property
    def num_states(self) -> int:
        return self.states.shape[1]


def _check_simplex(c, n):
    c = np.asarray(c, dtype=float)
    if c.shape != (n,):
        raise InvalidInitialStateError(f"initial state must have length {n}")
    if np.any(c < -SIMPLEX_TOL) or abs(c.sum() - 1.0) > SIMPLEX_TOL:
        raise InvalidInitialStateError("initial state is not in the probability simplex")
    return c


def _renormalize(X):
    X = np.where((X < 0) & (X > -SIMPLEX_TOL), 0.0, X)
    s = X.sum(axis=-1, keepdims=True)
    drift = float(np.abs(s - 1.0).max())
    if drift > 1e-12:
        log.info("renormalized simplex drift of %.3g", drift)
    return X / s


class SpectralFlow:
    """Solution ``c(t) = sum_k exp(lambda_k t) u_k`` of ``dc/dt = A c``.

    Built from the symmetric matrix ``D_w^{-1/2} A D_w^{1/2}``, which is
    symmetric exactly when ``A`` satisfies detailed balance with respect to ``w``.
    """

    def __init__(self, A, w, c0):
        A = np.asarray(A, dtype=float)
        w = np.asarray(w, dtype=float)
        n = A.shape[0]
        c0 = _check_simplex(c0, n)
        scale = max(1.0, float(np.abs(A).max()))
        ok, res = check_detailed_balance(A, w, DBC_TOL * scale)
        if not ok:
            raise RequiresDetailedBalanceError(f"detailed balance residual {res:.3g}")
        s = np.sqrt(w)
        B = A * s[None, :] / s[:, None]
        lam, V = np.linalg.eigh(0.5 * (B + B.T))
        lam = np.minimum(lam, 0.0)
        self.A = A
        self.rates = lam
        self.modes = s[:, None] * V * (V.T @ (c0 / s))[None, :]

    @classmethod
    def from_modes(cls, A, rates, modes):
        obj = cls.__new__(cls)
        obj.A = A
        obj.rates = np.asarray(rates, dtype=float)
        obj.modes = np.asarray(modes, dtype=float)
        return obj

    def state(self, t):
        return self.modes @ np.exp(self.rates * t)

    def states(self, times):
        E = np.exp(np.outer(np.asarray(times, dtype=float), self.rates))
        return E @ self.modes.T

    def trajectory(self, times) -> Trajectory:
        X = _renormalize(self.states(times))
        return Trajectory(times, X, X @ self.A.T)


def propagate(A, w, c0, times) -> Trajectory:
    """Exact solution of ``dc/dt = A c`` on ``times`` with velocities ``A c(t)``."""
    return SpectralFlow(A, w, c0).trajectory(times)


def limit_flow(net: ReactionNetwork, cg: CoarseGraining, c0, Ahat=None) -> SpectralFlow:
    c0 = _check_simplex(c0, net.num_states)
    scale = max(1.0, float(np.abs(net.fast).max()))
    if np.abs(net.fast @ c0).max() > SIMPLEX_TOL * scale:
        raise InvalidInitialStateError("initial state is not equilibrated along fast reactions")
    if Ahat is None:
        Ahat = coarse_generator(net, cg)
    coarse = SpectralFlow(Ahat, cg.what, cg.coarse(c0))
    modes = cg.N @ coarse.modes
    return SpectralFlow.from_modes(cg.N @ Ahat @ cg.M.astype(float), coarse.rates, modes)


def solve_limit(net: ReactionNetwork, cg: CoarseGraining, c0, times) -> Trajectory:
    """Limit dynamics: propagate ``M c0`` with the coarse generator and lift with ``N``."""
    return limit_flow(net, cg, c0).trajectory(times)


def resample_trajectory(traj: Trajectory, new_times) -> Trajectory:
    """Piecewise-linear interpolation onto ``new_times``.

    Velocities are forward differences on the new grid (the last node
    repeats the final difference).
    """
    new_times = np.asarray(new_times, dtype=float)
    t = traj.times
    if new_times.size and (new_times.min() < t[0] or new_times.max() > t[-1]):
        raise OutOfRangeError("resampling grid extends beyond the trajectory")
    if new_times.shape == t.shape and np.array_equal(new_times, t):
        return traj
    X = np.column_stack([np.interp(new_times, t, traj.states[:, i])
                         for i in range(traj.num_states)])
    return Trajectory(new_times, X, _forward_differences(new_times, X))


def _forward_differences(t, X):
    if t.size < 2:
        return np.zeros_like(X)
    D = np.diff(X, axis=0) / np.diff(t)[:, None]
    return np.vstack([D, D[-1:]])


def with_finite_difference_velocities(traj: Trajectory) -> Trajectory:
    return Trajectory(traj.times, traj.states, _forward_differences(traj.times, traj.states))


def spectral_gap(A, w) -> float:
    """Smallest nonzero decay rate of a detailed-balance generator."""
    A = np.asarray(A, dtype=float)
    if A.shape[0] < 2:
        return 0.0
    s = np.sqrt(np.asarray(w, dtype=float))
    B = A * s[None, :] / s[:, None]
    lam = np.sort(-np.linalg.eigvalsh(0.5 * (B + B.T)))
    return float(lam[1])


def default_times(net: ReactionNetwork, cg: CoarseGraining = None, steps: int = 200,
                  t_final: float = None) -> np.ndarray:
    """Uniform grid on ``[0, T]`` with ``T = 5 / gap`` of the coarse generator."""
    if t_final is None:
        if cg is None:
            cg = coarse_graining(net)
        gap = spectral_gap(coarse_generator(net, cg), cg.what)
        if gap <= 0:
            A = assemble_generator(net, 1.0)
            gap = spectral_gap(A, stationary_measure(A))
        t_final = 5.0 / gap if gap > 0 else 1.0
    return np.linspace(0.0, t_final, steps)


@dataclass(frozen=True)
class ConvergenceReport:
    eps: np.ndarray
    sup_Mc_err: np.ndarray
    l2_err: np.ndarray
    fast_integral: np.ndarray
    rate_ratio: np.ndarray

    @property
    def rate_spread(self) -> float:
        """Max over min of the rescaled fast integrals."""
        hi, lo = self.rate_ratio.max(), self.rate_ratio.min()
        if hi == 0:
            return 1.0
        return float(hi / lo) if lo > 0 else np.inf

    def rows(self):
        for k in range(self.eps.size):
            yield (self.eps[k], self.sup_Mc_err[k], self.l2_err[k],
                   self.fast_integral[k], self.rate_ratio[k])


def _integrals(flow_eps, flow_lim, cg, t_final):
    """``int |c^eps - c^0|^2`` and ``int |(id - P) c^eps|^2`` by adaptive quadrature.

    The initial layer has width of order ``1 / max rate``; breakpoints are
    placed geometrically from that scale so the adaptive rule resolves it.
    """
    fastest = max(float(-flow_eps.rates.min()), 1.0 / t_final)
    points = [p for p in np.geomspace(0.1 / fastest, t_final, 40) if 0 < p < t_final]

    def f(t):
        c = flow_eps.state(t)
        d = c - flow_lim.state(t)
        q = c - cg.project(c)
        return np.array([d @ d, q @ q])

    # epsabs bounds squared norms, so the L2 errors are good to about 1e-12
    val, _ = quad_vec(f, 0.0, t_final, epsabs=1e-24, epsrel=1e-10, points=points,
                      limit=10000)
    return float(val[0]), float(val[1])


def convergence_experiment(net: ReactionNetwork, c0, eps_list, times=None,
                           cg: CoarseGraining = None) -> ConvergenceReport:
    """Compare solutions at each eps with the limit solution started from ``N M c0``.

    Sup errors are taken over the grid; the two time integrals over
    ``[0, times[-1]]`` are computed by adaptive quadrature of the exact
    solutions so the initial layer is resolved for every eps.
    """
    eps = np.asarray(eps_list, dtype=float)
    if eps.ndim != 1 or eps.size == 0 or np.any(eps <= 0):
        raise InvalidParameterError("eps_list must be a nonempty list of positive numbers")
    if cg is None:
        cg = coarse_graining(net)
    if times is None:
        times = default_times(net, cg)
    times = np.asarray(times, dtype=float)
    c0 = _check_simplex(c0, net.num_states)
    lim = limit_flow(net, cg, cg.project(c0))
    M_lim = cg.coarse(lim.states(times))
    sup_err, l2, fast = [], [], []
    for e in eps:
        A = assemble_generator(net, e)
        flow = SpectralFlow(A, stationary_measure(A), c0)
        X = flow.states(times)
        sup_err.append(float(np.abs(cg.coarse(X) - M_lim).max()))
        d2, q2 = _integrals(flow, lim, cg, times[-1])
        l2.append(np.sqrt(d2))
        fast.append(q2)
    fast = np.asarray(fast)
    return ConvergenceReport(eps, np.asarray(sup_err), np.asarray(l2), fast, fast / eps)
