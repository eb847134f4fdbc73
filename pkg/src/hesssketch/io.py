"""Persistence: the HSK1 factor format plus JSON and CSV report writers.

HSK1 layout::

    b"HSK1" | N: <u8 | r: <u8 | N*r float64 little-endian, row-major

JSON reports use sorted keys and no timestamps, so identical inputs give
byte-identical files.  Non-finite floats are written as the strings
``"inf"``, ``"-inf"`` and ``"nan"``.
"""
import csv
import json
import math
import struct
from importlib import resources

import numpy as np

from hesssketch.errors import FactorFormatError
from hesssketch.numkit import GramFactor

MAGIC = b"HSK1"
HEADER = struct.Struct("<4sQQ")

ENSEMBLE_COLUMNS = ("trial_id", "cond", "rank@1e-6", "rank@1e-2", "min_diag", "max_diag", "hollow_norm")
SUMMARY_COLUMNS = ("N", "r", "trace", "frob", "snorm", "ell", "L", "mu")
BOUNDS_COLUMNS = ("m", "tau", "threshold", "crude_bound", "success_prob", "admissible")


def save_factor(path, f):
    phi = np.ascontiguousarray(f.phi, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, phi.shape[0], phi.shape[1]))
        fh.write(phi.tobytes(order="C"))


def load_factor(path):
    """Read an HSK1 file; magic and total size are validated exactly."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < HEADER.size:
        raise FactorFormatError(f"{path}: file too short for an HSK1 header")
    magic, n, r = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FactorFormatError(f"{path}: bad magic {magic!r}")
    expected = HEADER.size + 8 * n * r
    if len(data) != expected:
        raise FactorFormatError(f"{path}: expected {expected} bytes for N={n}, r={r}, found {len(data)}")
    phi = np.frombuffer(data, dtype="<f8", offset=HEADER.size).reshape(n, r)
    return GramFactor(phi.astype(np.float64), {"source": str(path)})


def jsonable(obj):
    """Recursively convert numpy scalars, tuples and non-finite floats."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return obj


def dumps(obj):
    return json.dumps(jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(obj))


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, columns, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def ensemble_rows(records):
    r6 = records.ranks(1e-6)
    r2 = records.ranks(1e-2)
    for i in range(len(records)):
        yield (
            int(records.trial_id[i]),
            float(records.cond[i]),
            int(r6[i]),
            int(r2[i]),
            float(records.min_diag[i]),
            float(records.max_diag[i]),
            float(records.hollow_norm[i]),
        )


def summary_row(s):
    return (s.n, s.r, s.trace, s.frob, s.snorm, s.ell, s.big_l, s.mu)


def bounds_row(t):
    return (t.m, t.tau, t.threshold, t.crude_bound, t.success_prob, t.admissible)


def load_schema(name):
    """Shipped JSON schema ``name`` (``ensemble``, ``summary`` or ``theorem``)."""
    text = resources.files("hesssketch").joinpath("schemas", f"{name}.schema.json").read_text(encoding="utf-8")
    return json.loads(text)
