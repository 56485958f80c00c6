"""
Equilibrium statistics
======================

Streaming per-cell moments, the density/count mapping
``N_ij = N rho_ij sqrt|G|_ij dx dy``, and the equilibrium reference fields::

    mean rho = 1 / A_S
    Var rho  = 1 / (N A_S sqrt|G| dx dy)
    mean N   = Var N = N sqrt|G| dx dy / A_S

where ``A_S`` is the grid surface area.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DimensionError

__all__ = [
    "Moments",
    "RunningMoments",
    "BatchMeans",
    "rho_to_counts",
    "TheoryReference",
    "theory_reference",
    "ComparisonReport",
    "compare",
    "ZScoreCheck",
    "zscore_check",
]


class Moments:
    """Welford accumulator for arrays of a fixed shape."""

    def __init__(self, shape):
        self.shape = tuple(shape)
        self.n = 0
        self.mean = np.zeros(self.shape)
        self.m2 = np.zeros(self.shape)

    def update(self, sample):
        sample = np.asarray(sample, float)
        if sample.shape != self.shape:
            raise DimensionError(f"sample shape {sample.shape} != accumulator shape {self.shape}")
        self.n += 1
        delta = sample - self.mean
        self.mean += delta / self.n
        self.m2 += delta * (sample - self.mean)

    def merge(self, other):
        """Combine with another accumulator (Chan et al. pairwise update)."""
        if other.shape != self.shape:
            raise DimensionError("cannot merge accumulators of different shape")
        out = Moments(self.shape)
        n = self.n + other.n
        if n == 0:
            return out
        delta = other.mean - self.mean
        out.n = n
        out.mean = self.mean + delta * (other.n / n)
        out.m2 = self.m2 + other.m2 + delta**2 * (self.n * other.n / n)
        return out

    @property
    def variance(self):
        """Unbiased sample variance; NaN for fewer than two samples."""
        if self.n < 2:
            return np.full(self.shape, np.nan)
        return self.m2 / (self.n - 1)

    @property
    def standard_error(self):
        """Naive standard error of the mean, ignoring autocorrelation."""
        return np.sqrt(self.variance / self.n)


@dataclass
class RunningMoments:
    """Paired accumulators for density and particle-count snapshots."""

    rho: Moments
    counts: Moments

    @classmethod
    def for_shape(cls, shape):
        return cls(Moments(shape), Moments(shape))

    @property
    def n(self):
        return self.rho.n

    def update(self, rho_snapshot, count_snapshot):
        self.rho.update(rho_snapshot)
        self.counts.update(count_snapshot)
        return self

    def merge(self, other):
        return RunningMoments(self.rho.merge(other.rho), self.counts.merge(other.counts))


class BatchMeans:
    """Standard error of a correlated stream's mean from non-overlapping batches.

    Samples are grouped into consecutive batches of ``batch_size``; the spread
    of batch means estimates the error of the overall mean.  Only complete
    batches are used.
    """

    def __init__(self, shape, batch_size):
        self.batch_size = int(batch_size)
        self.batches = Moments(shape)
        self._current = Moments(shape)

    def update(self, sample):
        self._current.update(sample)
        if self._current.n == self.batch_size:
            self.batches.update(self._current.mean)
            self._current = Moments(self._current.shape)

    @property
    def n_batches(self):
        return self.batches.n

    @property
    def mean(self):
        return self.batches.mean

    @property
    def standard_error(self):
        return self.batches.standard_error


def rho_to_counts(rho, grid, N):
    """Expected particles per cell, ``N rho sqrt|G| dx dy``."""
    return N * np.asarray(rho, float) * grid.cell_surface_area


@dataclass(frozen=True)
class TheoryReference:
    mean_rho: float
    var_rho: np.ndarray
    mean_N: np.ndarray
    var_N: np.ndarray


def theory_reference(grid, N):
    """Equilibrium moments of ``rho`` and ``N_ij`` for ``N`` particles."""
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    area = grid.surface_area
    cell = grid.cell_surface_area
    mean_n = N * cell / area
    return TheoryReference(
        mean_rho=1.0 / area,
        var_rho=1.0 / (N * area * cell),
        mean_N=mean_n,
        var_N=mean_n.copy(),
    )


@dataclass
class ComparisonReport:
    """Per-cell relative errors against the reference and their summaries."""

    errors: dict
    tolerances: dict = field(default_factory=dict)

    def summary(self):
        out = {}
        for name, err in self.errors.items():
            a = np.abs(err)
            out[name] = {"max": float(np.max(a)), "median": float(np.median(a))}
        return out

    def passed(self, name=None):
        names = [name] if name else list(self.tolerances)
        return all(np.max(np.abs(self.errors[k])) <= self.tolerances[k] for k in names)

    def write_csv(self, path, grid):
        names = list(self.errors)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["i", "j", "x", "y"] + [f"relerr_{k}" for k in names])
            for i in range(grid.I):
                for j in range(grid.J):
                    row = [i, j, f"{grid.x[i, j]:.10g}", f"{grid.y[i, j]:.10g}"]
                    row += [f"{self.errors[k][i, j]:.6e}" for k in names]
                    w.writerow(row)
            w.writerow([])
            w.writerow(["quantity", "max_abs", "median_abs", "tolerance", "pass"])
            for k, s in self.summary().items():
                tol = self.tolerances.get(k)
                ok = "" if tol is None else str(s["max"] <= tol)
                w.writerow([k, f"{s['max']:.6e}", f"{s['median']:.6e}", "" if tol is None else tol, ok])


def compare(acc, ref, tolerances=None):
    """Relative errors of accumulated moments against ``ref``.

    ``tolerances`` maps any of ``mean_rho``, ``var_rho``, ``mean_N``,
    ``var_N`` or ``poisson`` (``Var N / mean N - 1``) to the allowed max
    absolute relative error.
    """
    if acc.n < 2:
        raise ValueError("compare needs at least two samples")
    errors = {
        "mean_rho": acc.rho.mean / ref.mean_rho - 1.0,
        "var_rho": acc.rho.variance / ref.var_rho - 1.0,
        "mean_N": acc.counts.mean / ref.mean_N - 1.0,
        "var_N": acc.counts.variance / ref.var_N - 1.0,
        "poisson": acc.counts.variance / acc.counts.mean - 1.0,
    }
    return ComparisonReport(errors, dict(tolerances or {}))


@dataclass(frozen=True)
class ZScoreCheck:
    """Summary of per-cell z-scores against a ``threshold``.

    Passes when at most ``max_fraction`` of the cells exceed ``threshold``
    and none exceeds ``hard_limit``; with hundreds of cells a handful of
    3-sigma excursions are expected even when the hypothesis holds.
    """

    z: np.ndarray
    threshold: float
    max_fraction: float
    hard_limit: float

    @property
    def max_abs(self):
        return float(np.max(np.abs(self.z)))

    @property
    def fraction_over(self):
        return float(np.mean(np.abs(self.z) > self.threshold))

    @property
    def passed(self):
        return self.fraction_over <= self.max_fraction and self.max_abs <= self.hard_limit


def zscore_check(diff, se, threshold=3.0, max_fraction=0.01, hard_limit=4.5):
    """``diff / se`` per cell, summarised by :class:`ZScoreCheck`."""
    se = np.asarray(se, float)
    if np.any(~(se > 0)):
        raise ValueError("standard errors must be positive")
    return ZScoreCheck(np.asarray(diff, float) / se, threshold, max_fraction, hard_limit)
