"""CSV and YAML writers with deterministic float formatting."""
import csv
import math
import os

import numpy as np
import yaml

INF_TOKEN = "INF"


def fmt(x) -> str:
    """Shortest round-trip decimal form of a float; infinities become ``INF``."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    x = float(x)
    if math.isinf(x):
        return INF_TOKEN if x > 0 else "-" + INF_TOKEN
    if math.isnan(x):
        return "NAN"
    if x == 0:
        return "0"
    return repr(x)


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if header is not None:
            writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(x) for x in row])
    return path


def matrix_rows(A):
    """Row-major text rows, entries separated by single spaces."""
    return [" ".join(fmt(x) for x in row) for row in np.atleast_2d(A)]


def plain(obj):
    """Convert numpy containers and floats to YAML-safe builtins."""
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return fmt(x) if not math.isfinite(x) else x
    return obj


def write_yaml(path, data):
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(plain(data), fh, sort_keys=False, default_flow_style=None, width=100)
    return path


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
