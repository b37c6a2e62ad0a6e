"""Dissipation functionals, Legendre transforms and the effective dissipation.

For a curve ``c`` with velocity ``v`` the dissipation functional is

    D_eps(c) = int R_eps(c, v) + R*_eps(c, -D E_eps(c)) dt,

evaluated by composite trapezoid quadrature on the trajectory grid. The
primal potential ``R`` is obtained numerically from the pairwise dual
``R*`` by a damped Newton method with the gauge ``xi_1 = 0``.
"""
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._graph import is_connected
from .coarse import CoarseGraining, build_operators, fast_classes
from .dynamics import Trajectory, _forward_differences
from .errors import (
    DualityGapError,
    FastSlowError,
    InvalidCurveError,
    InvalidParameterError,
    InvalidVelocityError,
    UnboundedOrDegenerateError,
)
from .gradstruct import (
    GradientStructure,
    Kind,
    _pairwise_dual,
    _pairwise_hessian,
    _psi_conj,
    _psi_conj_prime,
    _psi_conj_second,
    energy,
    pair_coefficients,
    tilt_measure,
)
from .network import (
    ReactionNetwork,
    assemble_generator,
    kappa_representation,
    limit_equilibrium,
    stationary_measure,
)

INF = math.inf
FAST_TOL = 1e-14
CURVE_TOL = 1e-9


class SolverError(FastSlowError):
    """Newton iteration failed to reach the requested tolerance."""


# ---------------------------------------------------------------- families

def _mirror_upper(K):
    U = np.triu(np.asarray(K, dtype=float), 1)
    return U + U.T


class GradientFamily:
    """The eps-indexed gradient structures of a network.

    Intensities are ``kappa^Z_in = A^Z_in sqrt(w_n / w_i)`` for the pairs
    ``i < n`` and ``Z`` in {slow, fast}, taken with respect to ``w^eps``
    (``w0`` at ``eps = 0``). An optional tilt ``eta`` (cosh kind only)
    replaces the measure in the energy by ``w^eta`` and keeps the intensities.
    """

    def __init__(self, net: ReactionNetwork, kind=Kind.COSH, eta=None):
        self.net = net
        self.kind = Kind.parse(kind)
        if eta is not None and self.kind is not Kind.COSH:
            raise InvalidParameterError("tilted families are defined for the cosh kind only")
        self.eta = None if eta is None else np.asarray(eta, dtype=float)
        self._cache = {}

    def base_measure(self, eps):
        key = ("w", float(eps))
        if key not in self._cache:
            if eps == 0:
                w = limit_equilibrium(self.net)
            else:
                w = stationary_measure(assemble_generator(self.net, eps))
            self._cache[key] = w
        return self._cache[key]

    def measure(self, eps):
        w = self.base_measure(eps)
        return w if self.eta is None else tilt_measure(w, self.eta)

    def split_intensities(self, eps):
        key = ("k", float(eps))
        if key not in self._cache:
            w = self.base_measure(eps)
            Ks = _mirror_upper(kappa_representation(self.net.slow, w).kappa)
            Kf = _mirror_upper(kappa_representation(self.net.fast, w).kappa)
            self._cache[key] = (Ks, Kf)
        return self._cache[key]

    def structure(self, eps) -> GradientStructure:
        if eps <= 0:
            raise InvalidParameterError("the combined structure needs eps > 0")
        Ks, Kf = self.split_intensities(eps)
        return GradientStructure(self.kind, self.measure(eps), Ks + Kf / eps)

    def slow_structure(self, eps=0.0) -> GradientStructure:
        return GradientStructure(self.kind, self.measure(eps), self.split_intensities(eps)[0])

    def fast_structure(self, eps=0.0) -> GradientStructure:
        return GradientStructure(self.kind, self.measure(eps), self.split_intensities(eps)[1])

    def coarse_graining(self) -> CoarseGraining:
        if "cg" not in self._cache:
            self._cache["cg"] = build_operators(fast_classes(self.net), self.measure(0.0))
        return self._cache["cg"]


# ---------------------------------------------------------------- slope

def pair_slope(kind, kappa, w, c) -> float:
    """``R*(c, -D E(c))`` in closed form, summed over pairs ``i < n``.

    Cosh: ``2 kappa sqrt(w_i w_n) (sqrt(rho_i) - sqrt(rho_n))^2``; quadratic:
    ``kappa sqrt(w_i w_n) (rho_i - rho_n)^2 / 2``; entropic:
    ``kappa sqrt(w_i w_n) (rho_i - rho_n)(log rho_i - log rho_n) / 2``.
    """
    kind = Kind.parse(kind)
    w = np.asarray(w, dtype=float)
    rho = np.asarray(c, dtype=float) / w
    i, n = np.nonzero(np.triu(np.asarray(kappa) > 0, 1))
    if i.size == 0:
        return 0.0
    k = np.asarray(kappa)[i, n] * np.sqrt(w[i] * w[n])
    ri, rn = rho[i], rho[n]
    if kind is Kind.COSH:
        terms = 2.0 * k * (np.sqrt(ri) - np.sqrt(rn)) ** 2
    elif kind is Kind.QUADRATIC:
        terms = 0.5 * k * (ri - rn) ** 2
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            dlog = np.log(ri) - np.log(rn)
        same = ri == rn
        terms = np.where(same, 0.0, 0.5 * k * (ri - rn) * np.where(same, 0.0, dlog))
    return math.fsum(terms)


def slope_term(family: GradientFamily, c, eps: float):
    """Return ``(slow, fast / eps)`` parts of ``R*_eps(c, -D E_eps(c))``.

    At ``eps = 0`` the slow part uses ``w0`` and the fast part is 0 when
    ``c`` is equilibrated on the fast classes and infinite otherwise.
    """
    if eps < 0:
        raise InvalidParameterError("eps must be nonnegative")
    w = family.measure(eps)
    Ks, Kf = family.split_intensities(eps)
    slow = pair_slope(family.kind, Ks, w, c)
    fast = pair_slope(family.kind, Kf, w, c)
    if eps == 0:
        return slow, (0.0 if fast <= FAST_TOL else INF)
    return slow, fast / eps


# ---------------------------------------------------------------- Legendre transform

@dataclass(frozen=True)
class LegendreSolve:
    value: float
    maximizer_xi: np.ndarray
    iterations: int
    kkt_residual: float


def _newton_maximize(fun, linear, n, tol=1e-10, max_iter=100):
    """Maximize ``<x, linear> - F(x)`` over ``x`` with ``x[0] = 0``.

    ``fun(x)`` returns ``(F, grad F, hess F)`` in full coordinates.
    """
    x = np.zeros(n)
    F, g, H = fun(x)
    obj = -F
    scale = max(1.0, float(np.abs(linear).max()))
    it = 0
    while it < max_iter:
        r = linear - g
        if np.abs(r[1:]).max(initial=0.0) <= tol * scale:
            break
        Hr = H[1:, 1:]
        try:
            d = np.linalg.solve(Hr, r[1:])
        except np.linalg.LinAlgError:
            d = np.linalg.lstsq(Hr, r[1:], rcond=None)[0]
        slope = float(r[1:] @ d)
        t = 1.0
        while t >= 1e-14:
            xn = x.copy()
            xn[1:] += t * d
            Fn, gn, Hn = fun(xn)
            objn = float(xn @ linear) - Fn
            if np.isfinite(objn) and objn >= obj + 1e-4 * t * slope - 1e-15 * abs(obj):
                break
            t *= 0.5
        if t < 1e-14:
            break
        x, F, g, H, obj = xn, Fn, gn, Hn, objn
        it += 1
    kkt = float(np.abs(linear - g).max()) if n else 0.0
    return x, float(x @ linear) - F, it, kkt


def legendre_primal(gs: GradientStructure, c, v, tol: float = 1e-10) -> LegendreSolve:
    """``R(c, v) = sup_xi <xi, v> - R*(c, xi)`` with ``xi_1 = 0``."""
    v = np.asarray(v, dtype=float)
    if v.shape != (gs.num_states,):
        raise InvalidVelocityError("velocity has the wrong length")
    if abs(v.sum()) > 1e-10 * max(1.0, float(np.abs(v).max())):
        raise InvalidVelocityError("velocity components must sum to zero")
    v = v - v.mean()
    a = pair_coefficients(gs, c)
    if not is_connected(a > 0):
        raise UnboundedOrDegenerateError("states are not linked by edges with positive coefficients")
    if not np.any(v):
        return LegendreSolve(0.0, np.zeros_like(v), 0, 0.0)

    def fun(xi):
        val, grad, _, _ = _pairwise_dual(gs.kind, a, xi)
        return val, grad, _pairwise_hessian(gs.kind, a, xi)

    xi, value, it, kkt = _newton_maximize(fun, v, v.size, tol)
    if kkt > 1e-8 * max(1.0, float(np.abs(v).max())):
        raise SolverError(f"Legendre transform did not converge (residual {kkt:.3g})")
    return LegendreSolve(float(value), xi, it, kkt)


# ---------------------------------------------------------------- effective potential

def _in_equilibrated_space(cg, c, tol=CURVE_TOL):
    c = np.asarray(c, dtype=float)
    return float(np.abs(c - cg.project(c)).max()) <= tol


def effective_dual(cg: CoarseGraining, gs_slow: GradientStructure, c, xi, tol: float = 1e-10):
    """``R*_S(c, xi)`` if ``xi`` is constant on every fast class, else infinity."""
    xi = np.asarray(xi, dtype=float)
    proj = cg.lift(cg.average(xi))
    if np.abs(xi - proj).max() > tol * max(1.0, float(np.abs(xi).max())):
        return INF
    from .gradstruct import dual_dissipation

    return dual_dissipation(gs_slow, c, xi)[0]


def _kernel_basis(partition):
    """Differences ``e_i - e_first`` inside each class: a basis of ker M."""
    n = partition.num_states
    cols = []
    for cls in partition.classes:
        for i in cls[1:]:
            e = np.zeros(n)
            e[i] = 1.0
            e[cls[0]] = -1.0
            cols.append(e)
    return np.array(cols).T if cols else np.zeros((n, 0))


def _effective_flux_primal(kind, a, basis, v, tol=1e-12, max_iter=100):
    """``inf { sum_e a_e Psi*(j_e / a_e) : G^T j - K y = v }``.

    ``G^T j`` is the divergence of edge fluxes ``j`` and ``K y`` ranges over
    within-class redistributions, so this equals ``inf R_S(c, v + k)`` over
    ``k`` in the kernel of ``M``.
    """
    n = v.size
    i, m = np.nonzero(np.triu(a > 0, 1))
    ae = a[i, m]
    ne, nk = ae.size, basis.shape[1]
    Gt = np.zeros((n, ne))
    Gt[i, np.arange(ne)] = 1.0
    Gt[m, np.arange(ne)] = -1.0
    E = np.hstack([Gt, -basis])[1:]
    rhs = v[1:]
    if np.linalg.matrix_rank(E) < n - 1:
        raise UnboundedOrDegenerateError("slow edges and fast classes do not connect all states")
    x = np.linalg.lstsq(E, rhs, rcond=None)[0]

    def objective(x):
        return math.fsum(ae * _psi_conj(kind, x[:ne] / ae))

    f = objective(x)
    for _ in range(max_iter):
        s = x[:ne] / ae
        g = np.concatenate([_psi_conj_prime(kind, s), np.zeros(nk)])
        h = np.concatenate([_psi_conj_second(kind, s) / ae, np.zeros(nk)])
        kkt = np.block([[np.diag(h), E.T], [E, np.zeros((E.shape[0], E.shape[0]))]])
        rhs_k = np.concatenate([-g, rhs - E @ x])
        try:
            sol = np.linalg.solve(kkt, rhs_k)
        except np.linalg.LinAlgError:
            sol = np.linalg.lstsq(kkt, rhs_k, rcond=None)[0]
        dx = sol[: ne + nk]
        decrement = float(dx[:ne] @ (h[:ne] * dx[:ne]))
        if decrement <= tol * max(1.0, abs(f)):
            break
        t = 1.0
        slope = float(g @ dx)
        while True:
            fn = objective(x + t * dx)
            if fn <= f + 1e-4 * t * slope + 1e-15 * abs(f):
                break
            t *= 0.5
            if t < 1e-14:
                break
        if t < 1e-14:
            break
        x = x + t * dx
        f = fn
    return f


def effective_values(cg: CoarseGraining, gs_slow: GradientStructure, c, v, check: bool = True):
    """Primal and dual evaluations of ``R_eff(c, v)``.

    Primal: minimize ``R_S(c, v + k)`` over within-class redistributions ``k``
    (the kernel of ``M``). Dual: maximize ``<M^T xihat, v> - R*_S(c, M^T xihat)``
    over coarse forces with ``xihat_1 = 0``.
    """
    c = np.asarray(c, dtype=float)
    v = np.asarray(v, dtype=float)
    if check and not _in_equilibrated_space(cg, c):
        raise InvalidParameterError("state is not equilibrated on the fast classes")
    if abs(v.sum()) > 1e-10 * max(1.0, float(np.abs(v).max())):
        raise InvalidVelocityError("velocity components must sum to zero")
    vhat = cg.coarse(v)
    if np.abs(vhat).max() <= 1e-15 * max(1.0, float(np.abs(v).max())):
        return 0.0, 0.0
    a = pair_coefficients(gs_slow, c)
    primal = _effective_flux_primal(gs_slow.kind, a, _kernel_basis(cg.partition), v - v.mean())

    M = cg.M.astype(float)
    if not is_connected(M @ (a > 0) @ M.T):
        raise UnboundedOrDegenerateError("coarse classes are not linked by slow edges")

    def fun(xihat):
        xi = cg.lift(xihat)
        val, grad, _, _ = _pairwise_dual(gs_slow.kind, a, xi)
        H = _pairwise_hessian(gs_slow.kind, a, xi)
        return val, M @ grad, M @ H @ M.T

    _, dual, _, _ = _newton_maximize(fun, vhat, vhat.size)
    return primal, dual


def effective_primal(cg: CoarseGraining, gs_slow: GradientStructure, c, v,
                     check: bool = True, rtol: float = 1e-8) -> float:
    """``R_eff(c, v) = inf { R_S(c, z) : M z = M v }``.

    Returns the primal value after checking it against the dual one to ``rtol``.
    """
    primal, dual = effective_values(cg, gs_slow, c, v, check)
    if abs(primal - dual) > rtol * (1.0 + abs(primal)):
        raise DualityGapError(f"effective potential: primal {primal!r} vs dual {dual!r}")
    return primal


# ---------------------------------------------------------------- functionals

@dataclass(frozen=True)
class DissipationReport:
    velocity_part: float
    slope_slow: float
    slope_fast: float
    total: float
    edb_residual: float
    quadrature_points: int
    energy_start: float = 0.0
    energy_end: float = 0.0
    coarse_total: Optional[float] = None
    times: np.ndarray = field(default=None, repr=False)
    velocity_integrand: np.ndarray = field(default=None, repr=False)
    slow_integrand: np.ndarray = field(default=None, repr=False)
    fast_integrand: np.ndarray = field(default=None, repr=False)

    @property
    def relative_edb_residual(self) -> float:
        """Residual over ``max(|E(c(0))|, D)``, floored at machine epsilon."""
        scale = max(abs(self.energy_start), abs(self.total), float(np.finfo(float).eps))
        return self.edb_residual / scale

    def summary(self) -> dict:
        out = {
            "velocity_part": self.velocity_part,
            "slope_slow": self.slope_slow,
            "slope_fast": self.slope_fast,
            "total": self.total,
            "edb_residual": self.edb_residual,
            "relative_edb_residual": self.relative_edb_residual,
            "energy_start": self.energy_start,
            "energy_end": self.energy_end,
            "quadrature_points": self.quadrature_points,
        }
        if self.coarse_total is not None:
            out["coarse_total"] = self.coarse_total
        return out


def trapezoid(times, values) -> float:
    """Composite trapezoid rule with compensated summation."""
    t = np.asarray(times, dtype=float)
    f = np.asarray(values, dtype=float)
    if t.size < 2:
        return 0.0
    if np.any(np.isinf(f)):
        return INF
    return math.fsum(0.5 * np.diff(t) * (f[:-1] + f[1:]))


def _velocities(traj):
    if traj.velocities is None:
        raise InvalidParameterError("trajectory has no velocities")
    return traj.velocities


def _report(times, vel, slow, fast, e0, e1, coarse_total=None):
    V, S, F = trapezoid(times, vel), trapezoid(times, slow), trapezoid(times, fast)
    total = V + S + F
    res = abs(e1 + total - e0) if np.isfinite(total) else INF
    return DissipationReport(V, S, F, total, res, len(times), e0, e1, coarse_total,
                             np.asarray(times), np.asarray(vel), np.asarray(slow), np.asarray(fast))


def dissipation_functional(family: GradientFamily, traj: Trajectory, eps: float) -> DissipationReport:
    """Evaluate the dissipation functional of the family at ``eps`` along ``traj``.

    ``eps = 0`` uses the limit structure: slow part at ``w0`` with the
    effective velocity potential, and an infinite fast part unless the curve
    is equilibrated on the fast classes.
    """
    if eps < 0:
        raise InvalidParameterError("eps must be nonnegative")
    V = _velocities(traj)
    vel, slow, fast = [], [], []
    if eps > 0:
        gs = family.structure(eps)
        for c, v in zip(traj.states, V):
            vel.append(legendre_primal(gs, c, v).value)
            s, f = slope_term(family, c, eps)
            slow.append(s)
            fast.append(f)
    else:
        gs = family.slow_structure(0.0)
        cg = family.coarse_graining()
        for c, v in zip(traj.states, V):
            vel.append(effective_primal(cg, gs, c, v, check=False))
            s, f = slope_term(family, c, 0.0)
            slow.append(s)
            fast.append(f)
    e0 = energy(gs, traj.states[0], gradient=False)[0]
    e1 = energy(gs, traj.states[-1], gradient=False)[0]
    return _report(traj.times, vel, slow, fast, e0, e1)


def coarse_intensities(kappa, w, cg: CoarseGraining) -> np.ndarray:
    """Class sums of ``kappa_in sqrt(w_i w_n)`` divided by ``sqrt(what_j what_k)``."""
    phi = cg.partition.phi
    w = np.asarray(w, dtype=float)
    what = cg.coarse(w)
    J = cg.partition.num_classes
    khat = np.zeros((J, J))
    np.add.at(khat, (phi[:, None], phi[None, :]), np.asarray(kappa) * np.sqrt(np.outer(w, w)))
    khat /= np.sqrt(np.outer(what, what))
    np.fill_diagonal(khat, 0.0)
    return 0.5 * (khat + khat.T)


def limit_dissipation(cg: CoarseGraining, gs_slow: GradientStructure, traj: Trajectory) -> DissipationReport:
    """Limit functional on a curve equilibrated on the fast classes.

    Also evaluates the same functional in coarse variables ``M c`` with the
    class-summed intensities and stores it as ``coarse_total``.
    """
    V = _velocities(traj)
    for c in traj.states:
        if not _in_equilibrated_space(cg, c):
            raise InvalidCurveError("curve is not equilibrated on the fast classes")
    vel, slow = [], []
    for c, v in zip(traj.states, V):
        vel.append(effective_primal(cg, gs_slow, c, v))
        slow.append(pair_slope(gs_slow.kind, gs_slow.kappa, gs_slow.w, c))
    fast = np.zeros(len(vel))

    coarse_gs = GradientStructure(gs_slow.kind, cg.coarse(gs_slow.w),
                                  coarse_intensities(gs_slow.kappa, gs_slow.w, cg))
    C, Vh = cg.coarse(traj.states), cg.coarse(V)
    cvel, cslow = [], []
    for ch, vh in zip(C, Vh):
        vh = vh - vh.mean()
        cvel.append(legendre_primal(coarse_gs, ch, vh).value if coarse_gs.num_states > 1 else 0.0)
        cslow.append(pair_slope(coarse_gs.kind, coarse_gs.kappa, coarse_gs.w, ch))
    coarse_total = trapezoid(traj.times, cvel) + trapezoid(traj.times, cslow)

    e0 = energy(gs_slow, traj.states[0], gradient=False)[0]
    e1 = energy(gs_slow, traj.states[-1], gradient=False)[0]
    return _report(traj.times, vel, slow, fast, e0, e1, coarse_total)


def rockafellar_integral(family: GradientFamily, traj: Trajectory, eps: float, xi) -> float:
    """``int <xi, v> - R*_eps(c, xi) dt`` for one force path (one row per node)."""
    from .gradstruct import dual_dissipation

    V = _velocities(traj)
    xi = np.asarray(xi, dtype=float)
    if xi.shape != traj.states.shape:
        raise InvalidParameterError("force path must have one vector per grid node")
    vals = []
    if eps > 0:
        gs = family.structure(eps)
        for c, v, x in zip(traj.states, V, xi):
            vals.append(float(x @ v) - dual_dissipation(gs, c, x)[0])
    else:
        gs = family.slow_structure(0.0)
        cg = family.coarse_graining()
        for c, v, x in zip(traj.states, V, xi):
            vals.append(float(x @ v) - effective_dual(cg, gs, c, x))
    if any(not np.isfinite(x) for x in vals):
        return -INF
    return trapezoid(traj.times, vals)


def rockafellar_bound(family: GradientFamily, traj: Trajectory, eps: float, xi_candidates) -> float:
    """Best lower bound on the velocity part over the candidate force paths."""
    best = -INF
    for xi in xi_candidates:
        best = max(best, rockafellar_integral(family, traj, eps, xi))
    return best


# ---------------------------------------------------------------- recovery curves

def mollify_positivity(traj: Trajectory, delta: float, w0) -> Trajectory:
    """``delta w0 + (1 - delta) c(t)``."""
    if not 0 < delta < 1:
        raise InvalidParameterError("delta must lie in (0, 1)")
    w0 = np.asarray(w0, dtype=float)
    X = delta * w0[None, :] + (1.0 - delta) * traj.states
    V = None if traj.velocities is None else (1.0 - delta) * traj.velocities
    return Trajectory(traj.times, X, V)


def recovery_sequence(traj0: Trajectory, net: ReactionNetwork, eps: float,
                      family: GradientFamily = None) -> Trajectory:
    """Rescale densities: ``c^eps = D_{w^eps} D_{w0}^{-1} c0``, renormalized.

    With a tilted ``family`` the tilted measures are used, so the fast slope
    of the result vanishes for that family.
    """
    if family is None:
        family = GradientFamily(net)
    if np.any(traj0.states <= 0):
        raise InvalidCurveError("recovery construction needs a strictly positive curve")
    factor = family.measure(eps) / family.measure(0.0)
    Y = traj0.states * factor[None, :]
    s = Y.sum(axis=1, keepdims=True)
    X = Y / s
    if traj0.velocities is not None:
        dY = traj0.velocities * factor[None, :]
        V = dY / s - Y * dY.sum(axis=1, keepdims=True) / s ** 2
    else:
        V = _forward_differences(traj0.times, X)
    return Trajectory(traj0.times, X, V)
