"""Snapshot and manifest files."""

import csv
import os
import platform
import time

import numpy as np

from . import __version__
from .config import format_config
from .exceptions import ConfigurationError, DimensionError

__all__ = ["write_snapshot", "read_snapshot", "write_manifest", "snapshot_name"]

SNAPSHOT_HEADER = ["i", "j", "x", "y", "rho", "count"]


def snapshot_name(prefix, step):
    return f"{prefix}_{int(step):08d}.csv"


def write_snapshot(path, grid, rho, counts):
    """One row per cell: ``i,j,x,y,rho,count``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SNAPSHOT_HEADER)
        for i in range(grid.I):
            for j in range(grid.J):
                w.writerow([i, j, repr(float(grid.x[i, j])), repr(float(grid.y[i, j])),
                            repr(float(rho[i, j])), repr(float(counts[i, j]))])


def read_snapshot(path, grid=None):
    """Read a snapshot back as ``(rho, counts)`` arrays of the grid shape."""
    if not os.path.exists(path):
        raise ConfigurationError(f"initial.path: file not found: {path}")
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or set(SNAPSHOT_HEADER) - set(rows[0]):
        raise ConfigurationError(f"{path}: expected header {','.join(SNAPSHOT_HEADER)}")
    I = max(int(r["i"]) for r in rows) + 1
    J = max(int(r["j"]) for r in rows) + 1
    if grid is not None and (I, J) != grid.shape:
        raise DimensionError(f"{path}: snapshot is {I}x{J}, grid is {grid.I}x{grid.J}")
    rho, counts = np.zeros((I, J)), np.zeros((I, J))
    for r in rows:
        i, j = int(r["i"]), int(r["j"])
        rho[i, j] = float(r["rho"])
        counts[i, j] = float(r["count"])
    return rho, counts


def write_manifest(directory, cfg, started, extra=None):
    """Write ``manifest.txt``: the resolved config plus run metadata."""
    meta = {
        "seed": cfg.seed,
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(started)),
        "wall_seconds": f"{time.time() - started:.3f}",
    }
    meta.update(extra or {})
    path = os.path.join(directory, "manifest.txt")
    with open(path, "w") as fh:
        fh.write(format_config(cfg, meta))
    return path
