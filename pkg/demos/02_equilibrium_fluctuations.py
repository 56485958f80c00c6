"""
Equilibrium fluctuations: FVM against particles
===============================================

The Dean-Kawasaki field and a cloud of Brownian particles on the same
surface should share their equilibrium statistics.  Mean counts follow the
cell surface area and count fluctuations are Poissonian.

A short run on a coarse grid keeps this under a minute; the full desk-scale
check lives in the acceptance suite.
"""

# %%
import numpy as np

from surfdk.config import parse_config
from surfdk.experiments import run_equilibrium

cfg = parse_config(experiment="equilibrium", overrides={
    "grid.I": 8,
    "grid.J": 8,
    "particles.N": 640,
    "particles.enabled": "true",
    "run.dt_fraction": 1.5625e-2,
    "run.equilibration_steps": 5_000,
    "run.steps": 40_000,
    "output.sample_every": 10,
})
res = run_equilibrium(cfg)
print(f"dt = {res.dt:.3e}, {res.fvm.moments.n} samples per chain, {res.wall_seconds:.1f} s")

# %% [markdown]
# Mean counts per cell.  The theory column is N sqrt|G| dx dy / A_S.

# %%
th = res.theory.mean_N
fv = res.fvm.count_batches
pa = res.particles.count_batches
print(" cell   theory    FVM (+- SE)       particles (+- SE)")
for i, j in [(0, 0), (1, 2), (2, 2), (4, 5), (7, 3)]:
    print(f"({i},{j})  {th[i, j]:7.3f}  {fv.mean[i, j]:7.3f} ({fv.standard_error[i, j]:.3f})"
          f"  {pa.mean[i, j]:7.3f} ({pa.standard_error[i, j]:.3f})")

# %% [markdown]
# Fluctuations: Var(N) / mean(N) should be close to one in every cell.

# %%
for name, chain in (("FVM", res.fvm), ("particles", res.particles)):
    ratio = chain.moments.counts.variance / chain.moments.counts.mean
    print(f"{name:9s} Var/mean: median {np.median(ratio):.3f}, range [{ratio.min():.3f}, {ratio.max():.3f}]")

# %% [markdown]
# Per-cell z-scores of the mean counts, with batch-means standard errors.

# %%
for k, z in res.crossval.items():
    print(f"{k:20s} max |z| {z.max_abs:.2f}, fraction beyond 3: {z.fraction_over:.3f}")
