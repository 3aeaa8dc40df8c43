"""Snapshot, metadata and diagnostics writers.

CSV snapshots are bit-faithful (17 significant digits, enough to round-trip
any float64); PGM snapshots are 8-bit previews with the true min/max kept
in the header comment.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np


@dataclass
class SnapshotRecord:
    time: float
    field: str
    nx: int
    ny: int
    values: np.ndarray      # row-major cell values, length nx*ny

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if self.values.size != self.nx * self.ny:
            raise ValueError("value count %d does not match %dx%d grid"
                             % (self.values.size, self.nx, self.ny))
        if not np.isfinite(self.values).all():
            raise ValueError("snapshot field %r contains non-finite values"
                             % self.field)


def _g17(x):
    return "%.17g" % x


def snapshot_filename(record, fmt):
    return "%s_t%s.%s" % (record.field, ("%.6f" % record.time), fmt)


def write_snapshot(record, fmt, out_dir):
    """Write one snapshot in the requested format, return the file path."""
    if fmt not in ("csv", "pgm"):
        raise ValueError("unknown snapshot format %r" % fmt)
    path = os.path.join(out_dir, snapshot_filename(record, fmt))
    grid = record.values.reshape(record.ny, record.nx)
    if fmt == "csv":
        lines = ["# t=%s field=%s nx=%d ny=%d"
                 % (_g17(record.time), record.field, record.nx, record.ny)]
        for row in grid:
            lines.append(",".join(_g17(v) for v in row))
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
        return path
    lo = float(grid.min())
    hi = float(grid.max())
    if hi > lo:
        pixels = np.rint((grid - lo) / (hi - lo) * 255.0).astype(np.uint8)
    else:
        pixels = np.zeros(grid.shape, dtype=np.uint8)
    header = ("P5\n# t=%s field=%s min=%s max=%s\n%d %d\n255\n"
              % (_g17(record.time), record.field, _g17(lo), _g17(hi),
                 record.nx, record.ny))
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(pixels.tobytes())
    return path


def read_snapshot_csv(path):
    """Parse a CSV snapshot back into a SnapshotRecord (roundtrip tests)."""
    with open(path) as fh:
        header = fh.readline().strip()
        body = fh.read()
    if not header.startswith("# "):
        raise ValueError("missing snapshot header in %s" % path)
    meta = dict(item.split("=", 1) for item in header[2:].split())
    rows = [[float(v) for v in line.split(",")]
            for line in body.strip().splitlines()]
    return SnapshotRecord(time=float(meta["t"]), field=meta["field"],
                          nx=int(meta["nx"]), ny=int(meta["ny"]),
                          values=np.array(rows, dtype=np.float64))


def write_metadata(out_dir, resolved_config, seed, extra=None):
    from .. import __version__
    from .. import _kernels
    payload = {
        "config": resolved_config,
        "seed": int(seed),
        "version": __version__,
        "backend": _kernels.backend_name(),
        "threads": _kernels.get_num_threads(),
    }
    if extra:
        payload.update(extra)
    path = os.path.join(out_dir, "metadata.json")
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _format_cell(v):
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None:
        return ""
    return _g17(float(v))


def write_diagnostics(out_dir, records, filename="diagnostics.csv"):
    """One CSV row per record; columns fixed by the first record's keys."""
    path = os.path.join(out_dir, filename)
    if not records:
        with open(path, "w") as fh:
            fh.write("\n")
        return path
    columns = list(records[0].keys())
    lines = [",".join(columns)]
    for rec in records:
        lines.append(",".join(_format_cell(rec.get(c)) for c in columns))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return path
