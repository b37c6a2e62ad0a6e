"""Consistency and invariance suite run by the ``gs-check`` subcommand."""
from dataclasses import dataclass

import numpy as np

from .coarse import coarse_generator, coarse_graining, verify_operator_algebra
from .edp import GradientFamily, effective_values
from .gradstruct import (
    GradientStructure,
    Kind,
    check_tilt_invariance,
    cosh_primal,
    cosh_star,
    cosh_star_prime,
    vector_field,
)
from .network import ReactionNetwork, assemble_generator, stationary_measure


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    threshold: float
    passed: bool
    required: bool = True


def _interior_states(rng, n, count):
    return rng.dirichlet(np.ones(n), size=count) * 0.98 + 0.02 / n


def appendix_identities(num=2001, pairs=1000, seed=0) -> dict:
    """Worst violations of the cosh-function identities on grids.

    Keys: ``fenchel`` (relative), ``log_identity``, ``scaling_dual``,
    ``scaling_primal``, ``growth_lower``, ``growth_upper`` (positive parts of
    the violated inequalities).
    """
    z = np.linspace(-30.0, 30.0, num)
    dz = cosh_star_prime(z)
    lhs = cosh_primal(dz) + cosh_star(z)
    fenchel = np.abs(lhs - z * dz) / np.maximum(1.0, np.abs(z * dz))

    rng = np.random.default_rng(seed)
    p = np.exp(rng.uniform(-5, 5, pairs))
    q = np.exp(rng.uniform(-5, 5, pairs))
    exact = 2.0 * (np.sqrt(p / q) + np.sqrt(q / p) - 2.0)
    log_id = np.abs(cosh_star(np.log(p) - np.log(q)) - exact) / np.maximum(1.0, exact)

    lam = np.linspace(1.0, 10.0, 37)[:, None]
    zz = np.linspace(-20.0, 20.0, 161)[None, :]
    ss = np.linspace(-1e3, 1e3, 161)[None, :]
    sd = lam ** 2 * cosh_star(zz) - cosh_star(lam * zz)
    sp = cosh_primal(lam * ss) - lam ** 2 * cosh_primal(ss)
    scale_d = np.maximum(1.0, np.abs(cosh_star(lam * zz)))
    scale_p = np.maximum(1.0, np.abs(cosh_primal(lam * ss)))

    s = np.concatenate([-np.logspace(-6, 6, 400), np.logspace(-6, 6, 400)])
    g = np.abs(s) * np.log1p(np.abs(s))
    C = cosh_primal(s)
    return {
        "fenchel": float(fenchel.max()),
        "log_identity": float(log_id.max()),
        "scaling_dual": float(np.maximum(sd / scale_d, 0).max()),
        "scaling_primal": float(np.maximum(sp / scale_p, 0).max()),
        "growth_lower": float(np.maximum((0.5 * g - C) / np.maximum(g, 1e-300), 0).max()),
        "growth_upper": float(np.maximum((C - 2.0 * g) / np.maximum(g, 1e-300), 0).max()),
    }


def run_checks(net: ReactionNetwork, eps: float = 0.1, tol: float = 1e-10, seed: int = 0,
               samples: int = 20):
    rng = np.random.default_rng(seed)
    n = net.num_states
    A = assemble_generator(net, eps)
    w = stationary_measure(A)
    scale = max(1.0, float(np.abs(A).max()))
    states = _interior_states(rng, n, samples)
    out = []

    for kind in Kind:
        gs = GradientStructure.from_generator(kind, A, w)
        worst = max(float(np.abs(vector_field(gs, c) - A @ c).max()) for c in states)
        out.append(CheckResult(f"gradient_flow_{kind.value}", worst, 1e-9 * scale, worst <= 1e-9 * scale))

    cosh = GradientStructure.from_generator(Kind.COSH, A, w)
    tilts = rng.normal(size=(5, n))
    worst = max(check_tilt_invariance(cosh, eta, states) for eta in tilts)
    out.append(CheckResult("tilt_invariance_cosh", worst, 1e-9 * scale, worst <= 1e-9 * scale))
    for kind in (Kind.QUADRATIC, Kind.ENTROPIC):
        gs = GradientStructure.from_generator(kind, A, w)
        r = max(check_tilt_invariance(gs, eta, states) for eta in tilts)
        out.append(CheckResult(f"tilt_residual_{kind.value}", r, 1e-3, r > 1e-3, required=False))

    for name, value in appendix_identities().items():
        thr = 1e-12 if name == "log_identity" else 1e-10
        out.append(CheckResult(f"appendix_{name}", value, thr, value <= thr))

    cg = coarse_graining(net)
    res = verify_operator_algebra(net, cg)
    worst = max(res.values())
    out.append(CheckResult("operator_algebra", worst, tol, worst <= tol))
    Ahat = coarse_generator(net, cg)
    r = float(np.abs(Ahat @ cg.what).max())
    out.append(CheckResult("coarse_generator_stationary", r, tol, r <= tol))

    if cg.partition.num_classes < n:
        fam = GradientFamily(net)
        gs0 = fam.slow_structure(0.0)
        gap = 0.0
        for _ in range(10):
            c = cg.reconstruct(rng.dirichlet(np.ones(cg.partition.num_classes)) * 0.98
                               + 0.02 / cg.partition.num_classes)
            v = rng.normal(size=n)
            v -= v.mean()
            p, d = effective_values(cg, gs0, c, v)
            gap = max(gap, abs(p - d) / (1.0 + abs(p)))
        out.append(CheckResult("effective_duality", gap, 1e-8, gap <= 1e-8))
    return out
