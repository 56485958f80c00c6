"""
Experiment drivers
==================

Each ``run_*`` function takes a resolved :class:`~surfdk.config.ExperimentConfig`,
runs the protocol, optionally writes a run directory (``manifest.txt`` plus CSV
files) and returns a result object whose ``checks`` dict maps a check name to
pass/fail.  The CLI exits 0 only when every check passes.

Random numbers come from named substreams of the run seed: ``fvm-noise``,
``particle-noise``, ``particle-init`` and, for the OU chain, ``ou-noise`` and
``ou-init``.
"""

import csv
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigurationError, IntegratorBlowup
from .fvm import (
    DeanKawasakiSolver,
    FVOperators,
    MAX_ASSEMBLY_CELLS,
    assemble_operators,
    discrete_mass,
    estimate_max_dt,
    LinearizedOUSolver,
)
from .geometry import precompute_grid, surface_from_config
from .io import read_snapshot, snapshot_name, write_manifest, write_snapshot
from .particles import ParticleSimulator, bin_to_grid, sample_from_density, sample_initial
from .potentials import PotentialSpec
from .rng import NoiseStream, block_generator
from .stats import BatchMeans, RunningMoments, compare, rho_to_counts, theory_reference, zscore_check

__all__ = [
    "build_grid",
    "resolve_dt",
    "initial_density",
    "run_equilibrium",
    "run_particles",
    "run_transient",
    "run_potential",
    "run_fdr_check",
    "run_estimate_dt",
    "run_experiment",
]

# number of batches used for batch-means standard errors
N_BATCHES = 50


# ============================================================
# Setup helpers
# ============================================================

def build_grid(cfg):
    return precompute_grid(surface_from_config(cfg.surface_kind, cfg.amplitude), cfg.I, cfg.J)


def resolve_dt(cfg, grid):
    """``run.dt`` if given, otherwise ``run.dt_fraction`` times the estimated limit."""
    if cfg.dt is not None:
        return float(cfg.dt)
    return cfg.dt_fraction * estimate_max_dt(grid)


def disk_density(grid, center, radius, normalization="nu"):
    """Constant density on the cells whose centres lie within ``radius`` of ``center``.

    ``normalization="nu"`` makes ``sum rho sqrt|G| dx dy = 1``;
    ``"lebesgue"`` makes ``sum rho dx dy = 1``.
    """
    cx, cy = center
    inside = (grid.x - cx) ** 2 + (grid.y - cy) ** 2 <= radius**2
    if not inside.any():
        raise ConfigurationError("initial.radius: disk contains no cell centre")
    weight = grid.sqrt_det if normalization == "nu" else np.ones(grid.shape)
    value = 1.0 / (np.sum(weight[inside]) * grid.dx * grid.dy)
    return np.where(inside, value, 0.0)


def initial_density(cfg, grid):
    if cfg.initial_kind == "uniform_nu":
        return np.full(grid.shape, 1.0 / grid.surface_area)
    if cfg.initial_kind == "disk":
        return disk_density(grid, (cfg.center_x, cfg.center_y), cfg.radius, cfg.normalization)
    rho, _ = read_snapshot(cfg.initial_path, grid)
    return rho


def _potentials(cfg):
    return PotentialSpec.from_v0(cfg.v0)


def _run_dir(cfg):
    if not cfg.output_dir:
        return None
    os.makedirs(cfg.output_dir, exist_ok=True)
    return cfg.output_dir


def _particle_density(counts, grid, N):
    return counts / (N * grid.cell_surface_area)


def _batch_size(n_samples):
    return max(1, n_samples // N_BATCHES)


def _write_fields(path, grid, columns):
    names = list(columns)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j", "x", "y"] + names)
        for i in range(grid.I):
            for j in range(grid.J):
                row = [i, j, repr(float(grid.x[i, j])), repr(float(grid.y[i, j]))]
                row += [repr(float(np.broadcast_to(columns[k], grid.shape)[i, j])) for k in names]
                w.writerow(row)


# ============================================================
# Equilibrium
# ============================================================

@dataclass
class ChainStatistics:
    """Moments of one sampled chain (FVM or particles)."""

    moments: RunningMoments
    count_batches: BatchMeans
    final: np.ndarray
    report: object = None


@dataclass
class EquilibriumResult:
    grid: object
    N: int
    dt: float
    theory: object
    fvm: ChainStatistics = None
    particles: ChainStatistics = None
    crossval: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    mass_drift: float = 0.0
    negative_events: int = 0
    wall_seconds: float = 0.0


def _tolerances(cfg):
    return {"mean_rho": cfg.tol_mean_rho, "var_rho": cfg.tol_var_rho, "poisson": cfg.tol_poisson}


def _fvm_chain(cfg, grid, N, dt, progress=None):
    rho0 = initial_density(cfg, grid)
    noise = NoiseStream(cfg.noise_seed, "fvm-noise", (2,) + grid.shape) if cfg.noise else None
    solver = DeanKawasakiSolver(grid, N, dt, _potentials(cfg), noise)
    rho = solver.run(rho0, cfg.equilibration_steps)
    n_samples = cfg.steps // cfg.sample_every
    acc = RunningMoments.for_shape(grid.shape)
    batches = BatchMeans(grid.shape, _batch_size(n_samples))

    def sample(step, field_):
        counts = rho_to_counts(field_, grid, N)
        acc.update(field_, counts)
        batches.update(counts)
        if progress is not None:
            progress("fvm", step)

    rho = solver.run(rho, cfg.steps, callback=sample, every=cfg.sample_every)
    drift = abs(discrete_mass(rho, grid) - discrete_mass(rho0, grid)) / discrete_mass(rho0, grid)
    return ChainStatistics(acc, batches, rho), drift, solver.negative_events


def _particle_chain(cfg, grid, N, dt, progress=None):
    rng = block_generator(cfg.particles_seed, "particle-init", 0)
    if cfg.per_cell is not None and cfg.initial_kind == "uniform_nu":
        ens = sample_initial(grid, cfg.per_cell, rng)
    else:
        ens = sample_from_density(grid, initial_density(cfg, grid), N, rng)
    noise = NoiseStream(cfg.particles_seed, "particle-noise", (ens.N, 2)) if cfg.noise else None
    sim = ParticleSimulator(grid.surface, dt, _potentials(cfg), noise)
    ens = sim.run(ens, cfg.equilibration_steps)
    n_samples = cfg.steps // cfg.sample_every
    acc = RunningMoments.for_shape(grid.shape)
    batches = BatchMeans(grid.shape, _batch_size(n_samples))

    def sample(step, e):
        counts = bin_to_grid(e, grid).astype(float)
        acc.update(_particle_density(counts, grid, N), counts)
        batches.update(counts)
        if progress is not None:
            progress("particles", step)

    ens = sim.run(ens, cfg.steps, callback=sample, every=cfg.sample_every)
    return ChainStatistics(acc, batches, ens.positions)


def _finish_chain(chain, theory, cfg):
    if chain.moments.n >= 2:
        chain.report = compare(chain.moments, theory, _tolerances(cfg))


def _equilibrium_outputs(run_dir, res):
    grid, th = res.grid, res.theory
    cols = {
        "theory_mean_rho": th.mean_rho,
        "theory_var_rho": th.var_rho,
        "theory_mean_N": th.mean_N,
        "theory_var_N": th.var_N,
    }
    for name, chain in (("fvm", res.fvm), ("particles", res.particles)):
        if chain is None:
            continue
        m = chain.moments
        cols.update({
            f"{name}_mean_rho": m.rho.mean,
            f"{name}_var_rho": m.rho.variance,
            f"{name}_mean_N": m.counts.mean,
            f"{name}_var_N": m.counts.variance,
            f"{name}_se_mean_N": chain.count_batches.standard_error,
        })
        if chain.report is not None:
            chain.report.write_csv(os.path.join(run_dir, f"{name}_report.csv"), grid)
    _write_fields(os.path.join(run_dir, "fields.csv"), grid, cols)
    if res.crossval:
        _write_fields(os.path.join(run_dir, "crossval.csv"), grid,
                      {f"z_{k}": v.z for k, v in res.crossval.items()})
    if res.fvm is not None:
        rho = res.fvm.final
        write_snapshot(os.path.join(run_dir, snapshot_name("rho", 0)), grid, rho,
                       rho_to_counts(rho, grid, res.N))


def _crossval(res):
    """Per-cell z-scores of mean counts: particles vs FVM vs theory."""
    out = {}
    th = res.theory.mean_N
    chains = {k: c for k, c in (("fvm", res.fvm), ("particles", res.particles)) if c is not None}
    for name, c in chains.items():
        if c.count_batches.n_batches >= 2:
            out[f"{name}_vs_theory"] = zscore_check(c.count_batches.mean - th, c.count_batches.standard_error)
    if len(chains) == 2 and all(c.count_batches.n_batches >= 2 for c in chains.values()):
        f, p = chains["fvm"].count_batches, chains["particles"].count_batches
        se = np.sqrt(f.standard_error**2 + p.standard_error**2)
        out["particles_vs_fvm"] = zscore_check(p.mean - f.mean, se)
    return out


def run_equilibrium(cfg, progress=None, fvm=True):
    """FVM chain (and the particle chain when ``particles.enabled``) at equilibrium.

    Checks: per-cell mean rho, Var rho and the Poisson ratio against the
    theory within the ``check.*`` tolerances, and, with particles, per-cell
    mean counts of both chains against each other and the theory at three
    batch-means standard errors.
    """
    started = time.time()
    grid = build_grid(cfg)
    dt = resolve_dt(cfg, grid)
    N = cfg.particle_count
    res = EquilibriumResult(grid, N, dt, theory_reference(grid, N))
    try:
        if fvm:
            res.fvm, res.mass_drift, res.negative_events = _fvm_chain(cfg, grid, N, dt, progress)
        if cfg.particles_enabled or not fvm:
            res.particles = _particle_chain(cfg, grid, N, dt, progress)
    except IntegratorBlowup as exc:
        raise IntegratorBlowup(f"{cfg.experiment}: {exc}", step=exc.step, time=exc.time, index=exc.index) from exc

    for name, chain in (("fvm", res.fvm), ("particles", res.particles)):
        if chain is None:
            continue
        _finish_chain(chain, res.theory, cfg)
        if cfg.noise and chain.report is not None:
            for k in ("mean_rho", "var_rho", "poisson"):
                res.checks[f"{name}.{k}"] = bool(chain.report.passed(k))
    if cfg.noise:
        res.crossval = _crossval(res)
        for k, v in res.crossval.items():
            res.checks[f"crossval.{k}"] = v.passed
    res.wall_seconds = time.time() - started
    run_dir = _run_dir(cfg)
    if run_dir:
        _equilibrium_outputs(run_dir, res)
        write_manifest(run_dir, cfg, started, {"dt_resolved": repr(dt)})
    return res


def run_particles(cfg, progress=None):
    """Pure particle run with the equilibrium protocol and checks."""
    return run_equilibrium(cfg, progress=progress, fvm=False)


# ============================================================
# Transient runs
# ============================================================

@dataclass
class TransientResult:
    grid: object
    N: int
    dt: float
    snapshot_steps: list
    snapshot_times: list
    snapshots: list
    peak_rho: list
    peak_N: list
    particle_peak_N: list = None
    running_max_rho: float = 0.0
    running_max_N: float = 0.0
    mass_drift: float = 0.0
    negative_events: int = 0
    checks: dict = field(default_factory=dict)
    wall_seconds: float = 0.0


def snapshot_steps(times, dt):
    """Step index landing on each requested time, ``round(t / dt)``."""
    return [int(round(t / dt)) for t in times]


def run_transient(cfg, progress=None):
    """Relaxation from the configured initial condition.

    Records the field and its peak density and peak expected count at each
    ``run.snapshot_times`` entry, plus running maxima over every step.
    Runs ``max(run.steps, last snapshot step)`` steps.
    """
    started = time.time()
    grid = build_grid(cfg)
    dt = resolve_dt(cfg, grid)
    N = cfg.particle_count
    steps_at = snapshot_steps(cfg.snapshot_times, dt)
    total = max([cfg.steps] + steps_at)
    run_dir = _run_dir(cfg)

    rho0 = initial_density(cfg, grid)
    noise = NoiseStream(cfg.noise_seed, "fvm-noise", (2,) + grid.shape) if cfg.noise else None
    solver = DeanKawasakiSolver(grid, N, dt, _potentials(cfg), noise)
    sim = ens = None
    if cfg.particles_enabled:
        rng = block_generator(cfg.particles_seed, "particle-init", 0)
        ens = sample_from_density(grid, rho0, N, rng)
        pnoise = NoiseStream(cfg.particles_seed, "particle-noise", (N, 2)) if cfg.noise else None
        sim = ParticleSimulator(grid.surface, dt, _potentials(cfg), pnoise)

    res = TransientResult(grid, N, dt, steps_at, list(cfg.snapshot_times), [], [], [],
                          [] if sim is not None else None)
    wanted = set(steps_at)
    rho = rho0
    res.running_max_rho = float(rho.max())
    res.running_max_N = float(rho_to_counts(rho, grid, N).max())

    def record(step, field_):
        counts = rho_to_counts(field_, grid, N)
        if step in wanted:
            for _ in range(steps_at.count(step)):
                res.snapshots.append(field_.copy())
                res.peak_rho.append(float(field_.max()))
                res.peak_N.append(float(counts.max()))
                if ens is not None:
                    res.particle_peak_N.append(int(bin_to_grid(ens, grid).max()))
        if run_dir and (step in wanted or (cfg.snapshot_every and step % cfg.snapshot_every == 0)):
            write_snapshot(os.path.join(run_dir, snapshot_name("rho", step)), grid, field_, counts)
            if ens is not None:
                pc = bin_to_grid(ens, grid)
                write_snapshot(os.path.join(run_dir, snapshot_name("particles", step)), grid,
                               _particle_density(pc, grid, N), pc)

    try:
        record(0, rho)
        for step in range(1, total + 1):
            rho = solver.step(rho)
            if sim is not None:
                ens = sim.step(ens)
            m = float(rho.max())
            if m > res.running_max_rho:
                res.running_max_rho = m
                res.running_max_N = float(rho_to_counts(rho, grid, N).max())
            record(step, rho)
            if progress is not None and step % 1000 == 0:
                progress("transient", step)
    except IntegratorBlowup as exc:
        raise IntegratorBlowup(f"{cfg.experiment}: {exc}", step=exc.step, time=exc.time, index=exc.index) from exc

    res.mass_drift = abs(discrete_mass(rho, grid) - discrete_mass(rho0, grid)) / discrete_mass(rho0, grid)
    res.negative_events = solver.negative_events
    res.checks["mass_conservation"] = bool(res.mass_drift <= 1e-10)
    res.wall_seconds = time.time() - started
    if run_dir:
        _write_peaks(os.path.join(run_dir, "peaks.csv"), res)
        write_manifest(run_dir, cfg, started, {"dt_resolved": repr(dt), "steps_run": total})
    return res


def _write_peaks(path, res):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        header = ["time", "step", "peak_rho", "peak_N"]
        if res.particle_peak_N is not None:
            header.append("particle_peak_N")
        w.writerow(header)
        for k, (t, s) in enumerate(zip(res.snapshot_times, res.snapshot_steps)):
            row = [repr(t), s, repr(res.peak_rho[k]), repr(res.peak_N[k])]
            if res.particle_peak_N is not None:
                row.append(res.particle_peak_N[k])
            w.writerow(row)


def run_potential(cfg, progress=None):
    """:func:`run_transient` with the external potential ``potential.v0``."""
    return run_transient(cfg, progress=progress)


# ============================================================
# Fluctuation-dissipation check
# ============================================================

# (reference cell, offset) pairs whose covariance is tested
COVARIANCE_OFFSETS = ((1, 0), (0, 1), (1, 1), (1, -1))


@dataclass
class FDRResult:
    grid: object
    dt: float
    residuals: dict
    variance_theory: np.ndarray = None
    variance: np.ndarray = None
    variance_se: np.ndarray = None
    covariance: dict = field(default_factory=dict)
    covariance_se: dict = field(default_factory=dict)
    samples_per_cell: int = 0
    checks: dict = field(default_factory=dict)
    wall_seconds: float = 0.0

    @property
    def max_variance_error(self):
        return float(np.max(np.abs(self.variance / self.variance_theory - 1.0)))

    def covariance_z(self):
        return {k: self.covariance[k] / self.covariance_se[k] for k in self.covariance}


def covariance_pairs(shape):
    """Cell pairs tested for zero covariance: near neighbours of two cells and a distant pair."""
    I, J = shape
    refs = ((0, 0), (I // 2, J // 3))
    pairs = []
    for ri, rj in refs:
        for oi, oj in COVARIANCE_OFFSETS:
            pairs.append(((ri, rj), ((ri + oi) % I, (rj + oj) % J)))
    pairs.append(((0, 0), (I // 2, J // 2)))
    return pairs


def algebraic_residuals(grid, N, rho_bar=None):
    asm = assemble_operators(grid)
    rho_bar = 1.0 / grid.surface_area if rho_bar is None else rho_bar
    return {
        "symmetry": asm.symmetry_residual(),
        "factorization": asm.factorization_residual(),
        "lyapunov": asm.lyapunov_residual(rho_bar, N, grid.dx, grid.dy),
    }


def run_fdr_check(cfg, progress=None, algebra_tol=1e-12):
    """Algebraic FDR residuals and the linearised OU chain statistics.

    The OU chain runs ``run.replicas`` independent copies started from the
    exact stationary law, samples every ``output.sample_every`` steps and
    estimates per-cell variances and selected cross-cell covariances; standard
    errors come from the spread of per-replica time averages.
    """
    started = time.time()
    grid = build_grid(cfg)
    dt = resolve_dt(cfg, grid)
    N = cfg.particle_count
    rho_bar = 1.0 / grid.surface_area
    residuals = algebraic_residuals(grid, N, rho_bar) if grid.I * grid.J <= MAX_ASSEMBLY_CELLS else {}
    res = FDRResult(grid, dt, residuals)
    for k, v in residuals.items():
        res.checks[f"algebra.{k}"] = bool(v <= algebra_tol)

    ops = FVOperators(grid)
    R = cfg.replicas
    var_theory = rho_bar / (N * grid.dx * grid.dy) * ops.inv_jac
    init = block_generator(cfg.noise_seed, "ou-init", 0)
    z = np.sqrt(var_theory) * init.standard_normal((R,) + grid.shape)
    noise = NoiseStream(cfg.noise_seed, "ou-noise", (R, 2) + grid.shape, block_steps=16)
    solver = LinearizedOUSolver(grid, N, rho_bar, dt, noise)
    pairs = covariance_pairs(grid.shape)
    sq = np.zeros((R,) + grid.shape)
    prod = np.zeros((R, len(pairs)))
    a_idx = tuple(np.array([p[0][d] for p in pairs]) for d in (0, 1))
    b_idx = tuple(np.array([p[1][d] for p in pairs]) for d in (0, 1))
    n = 0
    if cfg.noise:
        for step in range(cfg.steps):
            z = solver.step(z)
            if (step + 1) % cfg.sample_every == 0:
                sq += z * z
                prod += z[:, a_idx[0], a_idx[1]] * z[:, b_idx[0], b_idx[1]]
                n += 1
                if progress is not None:
                    progress("ou", step + 1)
    if n:
        sq /= n
        prod /= n
        res.variance_theory = var_theory
        res.variance = sq.mean(axis=0)
        res.variance_se = sq.std(axis=0, ddof=1) / np.sqrt(R) if R > 1 else np.full(grid.shape, np.nan)
        scale = np.sqrt(var_theory[a_idx] * var_theory[b_idx])
        for k, pair in enumerate(pairs):
            key = f"{pair[0]}-{pair[1]}"
            res.covariance[key] = float(prod[:, k].mean() / scale[k])
            res.covariance_se[key] = float(prod[:, k].std(ddof=1) / np.sqrt(R) / scale[k]) if R > 1 else np.nan
        res.samples_per_cell = n * R
        res.checks["ou.variance"] = res.max_variance_error <= cfg.tol_ou_var
        if R > 1:
            res.checks["ou.covariance"] = bool(all(abs(v) <= 3.0 for v in res.covariance_z().values()))
    res.wall_seconds = time.time() - started
    run_dir = _run_dir(cfg)
    if run_dir:
        _write_fdr(run_dir, res)
        write_manifest(run_dir, cfg, started, {"dt_resolved": repr(dt)})
    return res


def _write_fdr(run_dir, res):
    with open(os.path.join(run_dir, "fdr_report.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["check", "value", "pass"])
        for k, v in res.residuals.items():
            w.writerow([f"algebra.{k}", f"{v:.3e}", res.checks[f"algebra.{k}"]])
        if res.variance is not None:
            w.writerow(["ou.max_variance_relerr", f"{res.max_variance_error:.4e}", res.checks["ou.variance"]])
            for k, z in res.covariance_z().items():
                w.writerow([f"ou.corr{k}", f"{res.covariance[k]:.4e} (z={z:.2f})", abs(z) <= 3.0])
    if res.variance is not None:
        _write_fields(os.path.join(run_dir, "ou_variance.csv"), res.grid,
                      {"variance": res.variance, "se": res.variance_se, "theory": res.variance_theory})


# ============================================================
# Time-step estimate
# ============================================================

@dataclass
class DtResult:
    grid: object
    dt_max: float
    dt: float
    dt_fraction: float
    checks: dict = field(default_factory=dict)
    wall_seconds: float = 0.0


def run_estimate_dt(cfg, progress=None):
    """Estimate the explicit stability limit and the step ``dt_fraction`` of it.

    ``run.dt_fraction`` defaults to 1.5625e-2 when the config fixes ``run.dt``.
    """
    started = time.time()
    grid = build_grid(cfg)
    dt_max = estimate_max_dt(grid)
    frac = cfg.dt_fraction if cfg.dt_fraction is not None else 1.5625e-2
    res = DtResult(grid, dt_max, frac * dt_max, frac)
    res.checks["stable"] = bool(np.isfinite(dt_max) and dt_max > 0)
    res.wall_seconds = time.time() - started
    run_dir = _run_dir(cfg)
    if run_dir:
        write_manifest(run_dir, cfg, started, {"dt_max": repr(dt_max), "dt": repr(res.dt)})
    return res


RUNNERS = {
    "equilibrium": run_equilibrium,
    "particles": run_particles,
    "transient": run_transient,
    "potential": run_potential,
    "fdr-check": run_fdr_check,
    "estimate-dt": run_estimate_dt,
}


def run_experiment(cfg, progress=None):
    return RUNNERS[cfg.experiment](cfg, progress=progress)
