"""Network files and experiment configuration.

Both are YAML documents (JSON is accepted as a subset). A network lists
``states`` and directed ``edges`` with ``from``, ``to``, ``rate`` and
``speed`` (``slow`` or ``fast``). A configuration may name a network file,
embed one under ``network``, or carry ``states``/``edges`` at top level.
"""
import os
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
import yaml

from .errors import ConfigError
from .gradstruct import Kind
from .network import ReactionNetwork

NETWORK_KEYS = {"states", "edges"}
EDGE_KEYS = {"from", "to", "rate", "speed"}
CONFIG_KEYS = NETWORK_KEYS | {
    "network", "eps_list", "eps", "t_final", "steps", "gs", "tilt", "tol",
    "output_dir", "initial", "delta",
}


@dataclass(frozen=True)
class Diagnostic:
    field: str
    message: str
    line: Optional[int] = None

    def __str__(self):
        where = f"line {self.line}: " if self.line else ""
        return f"{where}{self.field}: {self.message}"


def _line_map(text):
    """Map key paths (tuples of keys and indices) to 1-based line numbers."""
    lines = {}
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError:
        return lines

    def walk(node, path):
        lines[path] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                key = k.value
                lines[path + (key,)] = k.start_mark.line + 1
                walk(v, path + (key,))
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                walk(v, path + (i,))

    if root is not None:
        walk(root, ())
    return lines


def _read(path):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError([Diagnostic("<document>", f"cannot parse: {getattr(exc, 'problem', exc)}",
                                      mark.line + 1 if mark else None)]) from None
    return data, _line_map(text)


class _Collector:
    def __init__(self, lines, prefix=()):
        self.lines = lines
        self.prefix = prefix
        self.items = []

    def sub(self, key):
        child = _Collector(self.lines, self.prefix + (key,))
        child.items = self.items
        return child

    def add(self, path, message):
        full = self.prefix + tuple(path)
        line = None
        for k in range(len(full), -1, -1):
            if full[:k] in self.lines:
                line = self.lines[full[:k]]
                break
        name = ".".join(str(p) if not isinstance(p, int) else f"[{p}]" for p in full) or "<document>"
        self.items.append(Diagnostic(name.replace(".[", "["), message, line))


def _is_number(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _parse_network(data, diag: _Collector) -> Optional[ReactionNetwork]:
    if not isinstance(data, dict):
        diag.add((), "network must be a mapping with 'states' and 'edges'")
        return None
    for key in sorted(set(data) - NETWORK_KEYS):
        diag.add((key,), "unknown field")
    for key in ("states", "edges"):
        if key not in data:
            diag.add((key,), "required field is missing")
    states, edges = data.get("states"), data.get("edges")
    if states is not None:
        if not isinstance(states, list) or not states:
            diag.add(("states",), "must be a nonempty list of state names")
            states = None
        else:
            names = [str(s) for s in states]
            if len(set(names)) != len(names):
                diag.add(("states",), "state names must be unique")
                states = None
            else:
                states = names
    if edges is not None and not isinstance(edges, list):
        diag.add(("edges",), "must be a list of edges")
        edges = None
    if states is None or edges is None:
        return None
    index = {s: i for i, s in enumerate(states)}
    n = len(states)
    slow, fast = np.zeros((n, n)), np.zeros((n, n))
    seen = set()
    ok = True
    for k, e in enumerate(edges):
        path = ("edges", k)
        if not isinstance(e, dict):
            diag.add(path, "edge must be a mapping")
            ok = False
            continue
        for key in sorted(set(e) - EDGE_KEYS):
            diag.add(path + (key,), "unknown field")
            ok = False
        for key in ("from", "to", "rate", "speed"):
            if key not in e:
                diag.add(path + (key,), "required field is missing")
                ok = False
        if not EDGE_KEYS <= set(e):
            continue
        src, dst = str(e["from"]), str(e["to"])
        for key, s in (("from", src), ("to", dst)):
            if s not in index:
                diag.add(path + (key,), f"unknown state {s!r}")
                ok = False
        rate = e["rate"]
        if not _is_number(rate) or not np.isfinite(rate) or rate <= 0:
            diag.add(path + ("rate",), "must be a positive number")
            ok = False
        speed = e["speed"]
        if speed not in ("slow", "fast"):
            diag.add(path + ("speed",), "must be 'slow' or 'fast'")
            ok = False
        if src == dst:
            diag.add(path, "self-loops are not reactions")
            ok = False
        key = (src, dst, speed)
        if key in seen:
            diag.add(path, f"duplicate {speed} edge {src} -> {dst}")
            ok = False
        seen.add(key)
        if ok:
            target = slow if speed == "slow" else fast
            target[index[dst], index[src]] = float(rate)
    if not ok:
        return None
    return ReactionNetwork(slow, fast, names=states)


def load_network(path) -> ReactionNetwork:
    data, lines = _read(path)
    diag = _Collector(lines)
    net = _parse_network(data, diag)
    if diag.items:
        raise ConfigError(diag.items)
    return net


def network_document(net: ReactionNetwork) -> dict:
    """Inverse of :func:`load_network` (as a plain mapping)."""
    edges = []
    for speed, A in (("slow", net.slow), ("fast", net.fast)):
        n = net.num_states
        for k in range(n):
            for i in range(n):
                if i != k and A[i, k] > 0:
                    edges.append({"from": net.names[k], "to": net.names[i],
                                  "rate": float(A[i, k]), "speed": speed})
    return {"states": list(net.names), "edges": edges}


@dataclass(frozen=True)
class ExperimentConfig:
    network: ReactionNetwork
    network_path: Optional[str] = None
    eps_list: Tuple[float, ...] = (1e-1, 1e-2, 1e-3)
    eps: float = 0.1
    t_final: Optional[float] = None
    steps: int = 200
    gs: Kind = Kind.COSH
    tilt: Optional[Tuple[float, ...]] = None
    tol: float = 1e-10
    output_dir: str = "results"
    initial: str = "uniform"
    delta: float = 0.01
    source: Optional[str] = field(default=None, compare=False)

    def snapshot(self) -> dict:
        return {
            "source": self.source,
            "network_path": self.network_path,
            "network": network_document(self.network),
            "eps_list": list(self.eps_list),
            "eps": self.eps,
            "t_final": self.t_final,
            "steps": self.steps,
            "gs": self.gs.value,
            "tilt": None if self.tilt is None else list(self.tilt),
            "tol": self.tol,
            "output_dir": self.output_dir,
            "initial": self.initial,
            "delta": self.delta,
        }


def _positive(x):
    return _is_number(x) and np.isfinite(x) and x > 0


def validate_config(path) -> ExperimentConfig:
    """Parse and check a configuration file; raise ``ConfigError`` with all findings."""
    data, lines = _read(path)
    diag = _Collector(lines)
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError([Diagnostic("<document>", "configuration must be a mapping")])
    for key in sorted(set(data) - CONFIG_KEYS):
        diag.add((key,), "unknown field")

    base = os.path.dirname(os.path.abspath(path))
    net, net_path = None, None
    inline = NETWORK_KEYS & set(data)
    if "network" in data and inline:
        diag.add(("network",), "give either 'network' or top-level states/edges, not both")
    elif "network" in data:
        ref = data["network"]
        if isinstance(ref, str):
            net_path = ref if os.path.isabs(ref) else os.path.join(base, ref)
            if not os.path.exists(net_path):
                diag.add(("network",), f"file not found: {ref}")
            else:
                try:
                    net = load_network(net_path)
                except ConfigError as exc:
                    diag.items.extend(Diagnostic(f"network:{d.field}", d.message, d.line)
                                      for d in exc.diagnostics)
        elif isinstance(ref, dict):
            net = _parse_network(ref, diag.sub("network"))
        else:
            diag.add(("network",), "must be a file path or an inline network")
    else:
        net = _parse_network({k: data[k] for k in inline}, diag)
        net_path = os.path.abspath(path)

    kw = {}
    if "eps_list" in data:
        eps = data["eps_list"]
        if not isinstance(eps, list) or not eps or not all(_positive(e) for e in eps):
            diag.add(("eps_list",), "must be a nonempty list of positive numbers")
        elif any(b >= a for a, b in zip(eps, eps[1:])):
            diag.add(("eps_list",), "must be strictly decreasing")
        else:
            kw["eps_list"] = tuple(float(e) for e in eps)
    if "eps" in data:
        e = data["eps"]
        if not _is_number(e) or not np.isfinite(e) or e < 0:
            diag.add(("eps",), "must be a nonnegative number")
        else:
            kw["eps"] = float(e)
    if "t_final" in data and data["t_final"] is not None:
        if not _positive(data["t_final"]):
            diag.add(("t_final",), "must be a positive number")
        else:
            kw["t_final"] = float(data["t_final"])
    if "steps" in data:
        s = data["steps"]
        if not isinstance(s, int) or isinstance(s, bool) or s < 2:
            diag.add(("steps",), "must be an integer >= 2")
        else:
            kw["steps"] = s
    if "gs" in data:
        try:
            kw["gs"] = Kind.parse(data["gs"])
        except ValueError:
            diag.add(("gs",), "must be one of quad, entropic, cosh")
    if "tilt" in data and data["tilt"] is not None:
        t = data["tilt"]
        if not isinstance(t, list) or not all(_is_number(x) and np.isfinite(x) for x in t):
            diag.add(("tilt",), "must be a list of finite numbers")
        elif net is not None and len(t) != net.num_states:
            diag.add(("tilt",), f"must have one entry per state ({net.num_states})")
        else:
            kw["tilt"] = tuple(float(x) for x in t)
    if "tol" in data:
        if not _positive(data["tol"]):
            diag.add(("tol",), "must be a positive number")
        else:
            kw["tol"] = float(data["tol"])
    if "output_dir" in data:
        if not isinstance(data["output_dir"], str):
            diag.add(("output_dir",), "must be a path")
        else:
            out = data["output_dir"]
            kw["output_dir"] = out if os.path.isabs(out) else os.path.join(base, out)
    if "initial" in data:
        if not isinstance(data["initial"], str):
            diag.add(("initial",), "must be 'uniform', 'vertex:i' or a file path")
        else:
            kw["initial"] = data["initial"]
    if "delta" in data:
        d = data["delta"]
        if not _is_number(d) or not 0 < d < 1:
            diag.add(("delta",), "must lie strictly between 0 and 1")
        else:
            kw["delta"] = float(d)
    if diag.items:
        raise ConfigError(diag.items)
    return ExperimentConfig(network=net, network_path=net_path, source=os.path.abspath(path), **kw)


def config_from_network(path, **overrides) -> ExperimentConfig:
    net = load_network(path)
    return ExperimentConfig(network=net, network_path=os.path.abspath(path), **overrides)


def parse_initial(spec: str, n: int, base_dir: str = ".") -> np.ndarray:
    """``uniform``, ``vertex:i`` (1-based) or a file with ``n`` numbers."""
    spec = spec.strip()
    if spec == "uniform":
        return np.full(n, 1.0 / n)
    if spec.startswith("vertex:"):
        try:
            i = int(spec.split(":", 1)[1])
        except ValueError:
            raise ConfigError([Diagnostic("initial", f"bad vertex spec {spec!r}")]) from None
        if not 1 <= i <= n:
            raise ConfigError([Diagnostic("initial", f"vertex index must be in 1..{n}")])
        c = np.zeros(n)
        c[i - 1] = 1.0
        return c
    path = spec if os.path.isabs(spec) else os.path.join(base_dir, spec)
    if not os.path.exists(path):
        raise ConfigError([Diagnostic("initial", f"file not found: {spec}")])
    with open(path, encoding="utf-8") as fh:
        text = fh.read().replace(",", " ")
    try:
        c = np.array([float(x) for x in text.split()])
    except ValueError:
        raise ConfigError([Diagnostic("initial", "initial-state file must contain numbers")]) from None
    if c.shape != (n,) or np.any(c < 0) or c.sum() <= 0:
        raise ConfigError([Diagnostic("initial", f"initial state must be {n} nonnegative numbers")])
    return c / c.sum()
