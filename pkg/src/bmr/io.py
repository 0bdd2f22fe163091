"""
Reading and writing densities, tables and time series.

Structured files are JSON (schemas in ``docs/schemas.md``); tables are CSV
with 17 significant digits. Every written file carries a provenance block:
the seed, a hash of the run configuration, the package version and a
SHA-256 over the input files. JSON files hold it under ``"provenance"``;
CSV files start with ``# key: value`` comment lines.
"""

import csv
import hashlib
import io as _io
import json
from pathlib import Path

import numpy as np

from .densities import density_from_dict

__all__ = [
    "provenance",
    "config_hash",
    "write_json",
    "read_json",
    "read_density",
    "write_table",
    "read_table",
    "read_matrix",
    "write_timeseries",
    "read_timeseries",
    "format_number",
]


def format_number(x):
    """17 significant digits, enough to round-trip a double."""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.17g" % float(x)
    return str(x)


def _canonical(obj):
    return json.dumps(_plain(obj), sort_keys=True, separators=(",", ":"))


def config_hash(config):
    return hashlib.sha256(_canonical(config).encode("utf-8")).hexdigest()


def _sha256_files(paths):
    h = hashlib.sha256()
    for p in paths:
        h.update(Path(p).read_bytes())
    return h.hexdigest()


def provenance(seed, config, inputs=()):
    """Provenance block for an output file.

    ``inputs`` are file paths; without any, the checksum covers the
    canonical configuration instead.
    """
    from . import __version__

    inputs = list(inputs)
    checksum = _sha256_files(inputs) if inputs else config_hash(config)
    return {
        "seed": seed,
        "config_sha256": config_hash(config),
        "version": __version__,
        "input_sha256": checksum,
    }


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None if np.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


def write_json(path, obj, prov=None):
    """Write ``obj`` as JSON, adding ``prov`` under ``"provenance"``."""
    data = dict(_plain(obj))
    if prov is not None:
        data["provenance"] = prov
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=False) + "\n")
    return Path(path)


def read_json(path):
    return json.loads(Path(path).read_text())


def read_density(path):
    """Load a density file; schema violations raise :class:`SchemaError`."""
    return density_from_dict(read_json(path))


def write_table(path, header, rows, prov=None):
    """Write an RFC-4180 CSV table preceded by provenance comment lines."""
    buf = _io.StringIO()
    if prov is not None:
        for k, v in prov.items():
            buf.write(f"# {k}: {v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format_number(v) for v in row])
    Path(path).write_text(buf.getvalue())
    return Path(path)


def _data_lines(path):
    return [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]


def read_table(path):
    """Return ``(header, rows)`` with rows as lists of strings."""
    rows = list(csv.reader(_data_lines(path)))
    return rows[0], rows[1:]


def read_matrix(path):
    """Numeric matrix from CSV; a non-numeric first row is taken as a header."""
    rows = list(csv.reader(_data_lines(path)))
    if not rows:
        raise ValueError(f"{path}: no data rows")
    try:
        [float(v) for v in rows[0]]
    except ValueError:
        rows = rows[1:]
    try:
        return np.array([[float(v) for v in r] for r in rows], dtype=float)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None


def write_timeseries(path, ts, prov=None):
    header = ["time"] + [f"node{i + 1}" for i in range(ts.n_nodes)]
    rows = np.column_stack([ts.times, ts.values])
    return write_table(path, header, rows, prov)


def read_timeseries(path):
    from .dynamics import TimeSeries

    M = read_matrix(path)
    return TimeSeries(M[:, 0], M[:, 1:])
