"""Small text formats: vertex sets, JSON records, CSV tables."""
from __future__ import annotations

import csv
import json
from fractions import Fraction

import numpy as np

from .errors import UsageError


def read_vertex_set(path, dim=3):
    pts = []
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != dim:
                raise UsageError(f"{path}:{n}: expected {dim} integers")
            try:
                pts.append([int(p) for p in parts])
            except ValueError:
                raise UsageError(f"{path}:{n}: non-integer coordinate") from None
    return np.array(pts, dtype=np.int64).reshape(-1, dim)


def write_vertex_set(path, pts, comment=None):
    with open(path, "w") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        for p in np.asarray(pts):
            fh.write(" ".join(str(int(c)) for c in p) + "\n")


def _default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Fraction):
        return f"{o.numerator}/{o.denominator}"
    if isinstance(o, (set, frozenset, tuple)):
        return list(o)
    return str(o)


def dumps(obj):
    """Canonical JSON: sorted keys, fixed separators, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=2, default=_default, allow_nan=True) + "\n"


def write_json(path, obj):
    with open(path, "w") as fh:
        fh.write(dumps(obj))


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
