"""Command-line driver.

Every subcommand reads a network (``--network``) or an experiment
configuration (``--config``), writes CSV/YAML outputs plus ``manifest.yaml``
into ``--out``, and exits with

    0  success
    2  configuration or input error
    3  assumption check failed under --strict
    4  numerical failure

Failures print a one-line JSON record on stderr.
"""
import argparse
import dataclasses
import json
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .checks import run_checks
from .coarse import coarse_generator, coarse_graining, verify_operator_algebra
from .dynamics import (
    Trajectory,
    convergence_experiment,
    default_times,
    propagate,
    resample_trajectory,
    solve_limit,
)
from .edp import (
    GradientFamily,
    dissipation_functional,
    limit_dissipation,
    mollify_positivity,
    recovery_sequence,
)
from .errors import ConfigError, FastSlowError, InvalidParameterError
from .gradstruct import (
    GradientStructure,
    Kind,
    check_tilt_invariance,
    coarse_cosh_intensities,
    tilt_generator,
    tilt_measure,
)
from .inputs import ExperimentConfig, config_from_network, parse_initial, validate_config
from .network import assemble_generator, check_assumptions, limit_equilibrium, stationary_measure
from .output import ensure_dir, fmt, matrix_rows, write_csv, write_yaml

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ASSUMPTION = 3
EXIT_NUMERICAL = 4

SUBCOMMANDS = ("stationary", "coarse-grain", "simulate", "converge", "edb", "recovery",
               "gs-check", "tilt")


class AssumptionFailure(Exception):
    pass


class CheckFailure(FastSlowError):
    pass


@dataclass
class RunManifest:
    subcommand: str
    config: dict
    version: str = __version__
    outputs: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    def as_dict(self):
        return {
            "subcommand": self.subcommand,
            "version": self.version,
            "outputs": list(self.outputs),
            "timings": dict(self.timings),
            "warnings": list(self.warnings),
            "config": self.config,
        }


def _state_header(n):
    return [f"c_{i + 1}" for i in range(n)]


def _initial(cfg: ExperimentConfig, n):
    base = os.path.dirname(cfg.source) if cfg.source else os.getcwd()
    return parse_initial(cfg.initial, n, base)


def _times(cfg: ExperimentConfig, cg=None, t_final=None):
    return default_times(cfg.network, cg, steps=cfg.steps, t_final=t_final or cfg.t_final)


def _path(out, name, manifest):
    p = os.path.join(out, name)
    manifest.outputs.append(name)
    return p


# ---------------------------------------------------------------- subcommands

def _stationary(cfg, out, manifest, figures):
    net = cfg.network
    rows = []
    eps = cfg.eps if cfg.eps > 0 else 1.0
    w = stationary_measure(assemble_generator(net, eps))
    rows.append(["w", *w])
    try:
        rows.append(["w0", *limit_equilibrium(net)])
    except FastSlowError as exc:
        manifest.warnings.append(f"limit measure unavailable: {exc}")
    write_csv(_path(out, "stationary.csv", manifest), ["quantity", *_state_header(net.num_states)], rows)


def _coarse_grain(cfg, out, manifest, figures):
    net = cfg.network
    cg = coarse_graining(net)
    Ahat = coarse_generator(net, cg)
    doc = {
        "classes": [[net.names[i] for i in c] for c in cg.partition.classes],
        "M": matrix_rows(cg.M),
        "N": matrix_rows(cg.N),
        "P": matrix_rows(cg.P if cg.P is not None else cg.N @ cg.M),
        "w0": [fmt(x) for x in cg.w0],
        "w_hat": [fmt(x) for x in cg.what],
        "A_hat": matrix_rows(Ahat),
        "kappa_hat": matrix_rows(coarse_cosh_intensities(net, cg)),
        "residuals": {k: fmt(v) for k, v in verify_operator_algebra(net, cg).items()},
    }
    write_yaml(_path(out, "coarse.yaml", manifest), doc)


def _simulate(cfg, out, manifest, figures):
    net = cfg.network
    n = net.num_states
    c0 = _initial(cfg, n)
    cg = coarse_graining(net) if cfg.t_final is None or cfg.eps == 0 else None
    times = _times(cfg, cg)
    if cfg.eps > 0:
        A = assemble_generator(net, cfg.eps)
        traj = propagate(A, stationary_measure(A), c0, times)
    else:
        start = cg.project(c0)
        if np.abs(start - c0).max() > 1e-12:
            manifest.warnings.append("initial state projected onto the fast-equilibrated states")
        traj = solve_limit(net, cg, start, times)
    rows = ([t, *c] for t, c in zip(traj.times, traj.states))
    write_csv(_path(out, "simulate.csv", manifest), ["t", *_state_header(n)], rows)
    if figures:
        from .plotting import plot_trajectory

        plot_trajectory(traj.times, traj.states, net.names,
                        _path(out, "simulate.png", manifest), title=f"eps = {fmt(cfg.eps)}")


def _converge(cfg, out, manifest, figures):
    net = cfg.network
    cg = coarse_graining(net)
    times = _times(cfg, cg)
    rep = convergence_experiment(net, _initial(cfg, net.num_states), cfg.eps_list, times, cg)
    write_csv(_path(out, "converge.csv", manifest),
              ["eps", "sup_Mc_err", "l2_err", "fast_integral", "rate_ratio"], rep.rows())
    if figures:
        from .plotting import plot_convergence

        plot_convergence(rep, _path(out, "converge.png", manifest))


def _edb(cfg, out, manifest, figures, refine=1):
    net = cfg.network
    n = net.num_states
    c0 = _initial(cfg, n)
    fam = GradientFamily(net, cfg.gs)
    t_final = cfg.t_final if cfg.t_final is not None else 1.0
    levels = []
    base = None
    for m in range(refine + 1):
        steps = (cfg.steps - 1) * 2 ** m + 1
        times = np.linspace(0.0, t_final, steps)
        if cfg.eps > 0:
            A = assemble_generator(net, cfg.eps)
            traj = propagate(A, fam.base_measure(cfg.eps), c0, times)
            rep = dissipation_functional(fam, traj, cfg.eps)
        else:
            cg = fam.coarse_graining()
            traj = solve_limit(net, cg, cg.project(c0), times)
            rep = limit_dissipation(cg, fam.slow_structure(0.0), traj)
        levels.append(rep)
        if base is None:
            base = rep
    summary = {
        "eps": cfg.eps,
        "gs": cfg.gs.value,
        "t_final": t_final,
        "levels": [r.summary() for r in levels],
        "residual_reduction": [
            (a.edb_residual / b.edb_residual if b.edb_residual > 0 else float("inf"))
            for a, b in zip(levels, levels[1:])
        ],
    }
    write_yaml(_path(out, "edb_report.yaml", manifest), summary)
    rows = zip(base.times, base.velocity_integrand, base.slow_integrand, base.fast_integrand)
    write_csv(_path(out, "edb_integrand.csv", manifest),
              ["t", "velocity", "slope_slow", "slope_fast"], rows)
    if figures:
        from .plotting import plot_integrands

        plot_integrands(base, _path(out, "edb.png", manifest))


def _limit_curve(cfg, fam):
    """Mollified, resampled limit curve on the configured grid."""
    net = cfg.network
    cg = coarse_graining(net)
    cg_t = fam.coarse_graining()
    times = _times(cfg, cg)
    fine = np.linspace(times[0], times[-1], 4 * (times.size - 1) + 1)
    lim = solve_limit(net, cg, cg.project(_initial(cfg, net.num_states)), fine)
    X = cg_t.reconstruct(cg.coarse(lim.states))
    V = cg_t.reconstruct(cg.coarse(lim.velocities))
    curve = mollify_positivity(Trajectory(fine, X, V), cfg.delta, cg_t.w0)
    return resample_trajectory(curve, times)


def _recovery(cfg, out, manifest, figures):
    net = cfg.network
    fam = GradientFamily(net, Kind.COSH, eta=cfg.tilt)
    curve = _limit_curve(cfg, fam)
    d0 = limit_dissipation(fam.coarse_graining(), fam.slow_structure(0.0), curve).total
    rows, gaps = [], []
    for eps in cfg.eps_list:
        de = dissipation_functional(fam, recovery_sequence(curve, net, eps, fam), eps).total
        gap = abs(de - d0) / (1.0 + d0)
        gaps.append(gap)
        rows.append([eps, de, d0, gap])
    write_csv(_path(out, "recovery.csv", manifest), ["eps", "D_eps", "D_0", "rel_gap"], rows)
    if figures:
        from .plotting import plot_gap

        plot_gap(cfg.eps_list, gaps, _path(out, "recovery.png", manifest))


def _gs_check(cfg, out, manifest, figures):
    eps = cfg.eps if cfg.eps > 0 else cfg.eps_list[0]
    results = run_checks(cfg.network, eps=eps, tol=cfg.tol)
    rows = [[r.name, r.value, r.threshold, r.passed, r.required] for r in results]
    write_csv(_path(out, "gs_check.csv", manifest),
              ["check", "value", "threshold", "passed", "required"], rows)
    failed = [r.name for r in results if r.required and not r.passed]
    if failed:
        raise CheckFailure("failed checks: " + ", ".join(failed))


def _tilt(cfg, out, manifest, figures):
    net = cfg.network
    if cfg.tilt is None:
        raise ConfigError(["tilt: a tilt vector is required (--tilt or config 'tilt')"])
    eta = np.asarray(cfg.tilt)
    eps = cfg.eps if cfg.eps > 0 else 1.0
    A = assemble_generator(net, eps)
    w = stationary_measure(A)
    w_eta = tilt_measure(w, eta)
    header = ["quantity", *_state_header(net.num_states)]
    write_csv(_path(out, "tilt.csv", manifest), header, [["w", *w], ["w_eta", *w_eta]])
    rng = np.random.default_rng(0)
    samples = rng.dirichlet(np.ones(net.num_states), size=20) * 0.98 + 0.02 / net.num_states
    rows = []
    for kind in Kind:
        gs = GradientStructure.from_generator(kind, A, w)
        rows.append([kind.value, check_tilt_invariance(gs, eta, samples)])
    write_csv(_path(out, "tilt_residuals.csv", manifest), ["kind", "residual"], rows)
    kappa = GradientStructure.from_generator(Kind.COSH, A, w).kappa
    write_yaml(_path(out, "tilt.yaml", manifest),
               {"eps": eps, "eta": [fmt(x) for x in eta], "A_eta": matrix_rows(tilt_generator(kappa, w, eta))})


HANDLERS = {
    "stationary": _stationary,
    "coarse-grain": _coarse_grain,
    "simulate": _simulate,
    "converge": _converge,
    "edb": _edb,
    "recovery": _recovery,
    "gs-check": _gs_check,
    "tilt": _tilt,
}


def run(subcommand: str, config: ExperimentConfig, strict: bool = False, figures: bool = False,
        refine: int = 1) -> RunManifest:
    """Run one subcommand; raises on failure, returns the manifest on success."""
    if subcommand not in HANDLERS:
        raise InvalidParameterError(f"unknown subcommand {subcommand!r}")
    out = ensure_dir(config.output_dir)
    manifest = RunManifest(subcommand, config.snapshot())
    t0 = time.perf_counter()
    report = check_assumptions(config.network, config.eps_list, tol=config.tol)
    write_yaml(_path(out, "assumptions.yaml", manifest), {
        "connected": report.connected,
        "reversible": report.reversible,
        "quotient_bound": report.quotient_bound,
        "quotient_diverging": report.quotient_diverging,
        "dbc_residual": report.dbc_residual,
        "limit_measure_positive": report.limit_measure_positive,
        "limit_measure_estimate": report.limit_measure_estimate,
        "eps_values": list(report.eps_values),
        "diagonal_correction": config.network.diagonal_correction,
        "failures": report.failures(),
    })
    manifest.timings["assumptions"] = time.perf_counter() - t0
    if not report.ok:
        if strict:
            raise AssumptionFailure("; ".join(report.failures()))
        for msg in report.failures():
            manifest.warnings.append(f"assumption: {msg}")
            print(f"warning: {msg}", file=sys.stderr)
    t1 = time.perf_counter()
    handler = HANDLERS[subcommand]
    if subcommand == "edb":
        handler(config, out, manifest, figures, refine=refine)
    else:
        handler(config, out, manifest, figures)
    manifest.timings[subcommand] = time.perf_counter() - t1
    manifest.outputs.append("manifest.yaml")
    write_yaml(os.path.join(out, "manifest.yaml"), manifest.as_dict())
    return manifest


# ---------------------------------------------------------------- argument parsing

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _error_record(EXIT_CONFIG, "UsageError", message)
        self.print_usage(sys.stderr)
        sys.exit(EXIT_CONFIG)


def _error_record(code, kind, message):
    print(json.dumps({"status": "error", "exit_code": code, "error": kind, "message": str(message)}),
          file=sys.stderr)


def _float_list(text):
    try:
        return [float(x) for x in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global options")
    g.add_argument("--config", help="experiment configuration (YAML)")
    g.add_argument("--network", help="network file (YAML/JSON); alternative to --config")
    g.add_argument("--out", help="output directory (default: config output_dir or ./results)")
    g.add_argument("--strict", action="store_true", help="fail with exit code 3 when an assumption check fails")
    g.add_argument("--tol", type=float, help="absolute tolerance for algebraic residuals (default 1e-10)")
    g.add_argument("--eps-list", type=_float_list, help="comma-separated decreasing eps values")
    g.add_argument("--figures", action="store_true", help="also render PNG figures next to the CSV files")

    parser = _Parser(
        prog="fastslow",
        description="Fast-slow linear reaction networks: coarse-graining, limits and dissipation functionals.",
        epilog="exit codes: 0 success, 2 configuration error, 3 assumption failure under --strict, "
               "4 numerical failure",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_text):
        return sub.add_parser(name, parents=[common], help=help_text, description=help_text)

    add("stationary", "stationary measure at eps and the limit measure")
    p = add("coarse-grain", "operators M, N, P, coarse measure and coarse generator")
    p = add("simulate", "solve the master equation at eps (eps = 0: limit dynamics)")
    p.add_argument("--eps", type=float)
    p.add_argument("--t-final", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--initial", help="uniform | vertex:i | path to a file with I numbers")
    p = add("converge", "eps sweep of solution errors against the limit dynamics")
    p.add_argument("--t-final", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--initial")
    p = add("edb", "energy-dissipation balance along a computed solution")
    p.add_argument("--eps", type=float)
    p.add_argument("--gs", choices=["quad", "entropic", "cosh"])
    p.add_argument("--refine", type=int, default=1, help="number of grid halvings (default 1)")
    p.add_argument("--t-final", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--initial")
    p = add("recovery", "dissipation functionals along recovery curves over the eps sweep")
    p.add_argument("--t-final", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--initial")
    p.add_argument("--delta", type=float, help="positivity mollification weight (default 0.01)")
    p.add_argument("--tilt", type=_float_list)
    p = add("gs-check", "invariance and consistency checks of the gradient structures")
    p.add_argument("--eps", type=float)
    p = add("tilt", "tilted measure and generator, with tilt residuals per structure")
    p.add_argument("--tilt", type=_float_list)
    p.add_argument("--eps", type=float)
    return parser


def _load_config(args) -> ExperimentConfig:
    if args.config and args.network:
        raise ConfigError(["give either --config or --network, not both"])
    if args.config:
        if not os.path.exists(args.config):
            raise ConfigError([f"config: file not found: {args.config}"])
        cfg = validate_config(args.config)
    elif args.network:
        if not os.path.exists(args.network):
            raise ConfigError([f"network: file not found: {args.network}"])
        cfg = config_from_network(args.network)
    else:
        raise ConfigError(["one of --config or --network is required"])
    changes = {}
    mapping = {"out": "output_dir", "tol": "tol", "eps_list": "eps_list", "eps": "eps",
               "t_final": "t_final", "steps": "steps", "initial": "initial", "gs": "gs",
               "tilt": "tilt", "delta": "delta"}
    for arg, key in mapping.items():
        value = getattr(args, arg, None)
        if value is not None:
            changes[key] = value
    if "gs" in changes:
        changes["gs"] = Kind.parse(changes["gs"])
    problems = []
    if "eps_list" in changes:
        e = changes["eps_list"]
        if not e or any(x <= 0 for x in e) or any(b >= a for a, b in zip(e, e[1:])):
            problems.append("eps_list: must be positive and strictly decreasing")
        changes["eps_list"] = tuple(e)
    if "steps" in changes and changes["steps"] < 2:
        problems.append("steps: must be an integer >= 2")
    if "eps" in changes and changes["eps"] < 0:
        problems.append("eps: must be nonnegative")
    if "tol" in changes and changes["tol"] <= 0:
        problems.append("tol: must be positive")
    if "delta" in changes and not 0 < changes["delta"] < 1:
        problems.append("delta: must lie strictly between 0 and 1")
    if "tilt" in changes:
        if len(changes["tilt"]) != cfg.network.num_states:
            problems.append(f"tilt: must have one entry per state ({cfg.network.num_states})")
        changes["tilt"] = tuple(changes["tilt"])
    if problems:
        raise ConfigError(problems)
    return dataclasses.replace(cfg, **changes)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_config(args)
        manifest = run(args.command, cfg, strict=args.strict, figures=args.figures,
                       refine=getattr(args, "refine", 1))
    except ConfigError as exc:
        _error_record(EXIT_CONFIG, "ConfigError", exc)
        return EXIT_CONFIG
    except AssumptionFailure as exc:
        _error_record(EXIT_ASSUMPTION, "AssumptionFailure", exc)
        return EXIT_ASSUMPTION
    except (FastSlowError, np.linalg.LinAlgError, FloatingPointError) as exc:
        _error_record(EXIT_NUMERICAL, type(exc).__name__, exc)
        return EXIT_NUMERICAL
    print(os.path.join(cfg.output_dir, "manifest.yaml"))
    return EXIT_OK if manifest else EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
