"""
Langevin particles on a Monge-gauge surface
===========================================

Euler-Maruyama for::

    dX = b(X) dt - G^-1 grad V(X) dt - (1/N) sum_j G^-1 grad_x U(X, X_j) dt
         + sqrt(2) G^-1/2(X) dB

with positions wrapped into the periodic coordinate rectangle after every
step, plus helpers to seed particles per cell and count them per cell.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .exceptions import IntegratorBlowup
from .geometry import langevin_coefficients
from .potentials import PotentialSpec, SinSquaredPotential, minimum_image

__all__ = [
    "ParticleEnsemble",
    "em_step",
    "bin_to_grid",
    "sample_initial",
    "sample_from_density",
    "ParticleSimulator",
]


@dataclass(frozen=True)
class ParticleEnsemble:
    """``positions`` has shape ``(N, 2)``; ``time`` is elapsed simulation time."""

    positions: np.ndarray
    time: float = 0.0

    @property
    def N(self):
        return self.positions.shape[0]


def pair_forces(positions, pair, Lx, Ly):
    """``(1/N) sum_j grad_x U(x_i, x_j)`` for every particle; direct O(N^2) sum."""
    x, y = positions[:, 0], positions[:, 1]
    ddx = minimum_image(x[:, None] - x[None, :], Lx)
    ddy = minimum_image(y[:, None] - y[None, :], Ly)
    gx, gy = pair.gradient(ddx, ddy)
    n = positions.shape[0]
    return gx.sum(axis=1) / n, gy.sum(axis=1) / n


def em_step(ensemble, surface, potentials, dt, xi=None):
    """Advance every particle by one Euler-Maruyama step.

    ``xi`` holds standard normals of shape ``(N, 2)``; ``None`` means a zero
    draw (pure drift).  Raises :class:`IntegratorBlowup` on a non-finite
    position, reporting the first offending particle.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    pos = ensemble.positions
    if pos.shape[0] == 0:
        return replace(ensemble, time=ensemble.time + dt)
    x, y = surface.wrap(pos[:, 0], pos[:, 1])
    (gxx, gxy, gyy), (rxx, rxy, ryy), (bx, by) = langevin_coefficients(surface, x, y)

    fx, fy = np.zeros_like(x), np.zeros_like(y)
    potentials = potentials if potentials is not None else PotentialSpec()
    if potentials.external is not None:
        vx, vy = potentials.external.gradient(x, y)
        fx, fy = fx + vx, fy + vy
    if potentials.pair is not None:
        ux, uy = pair_forces(np.stack([x, y], axis=1), potentials.pair, surface.Lx, surface.Ly)
        fx, fy = fx + ux, fy + uy

    new_x = x + (bx - (gxx * fx + gxy * fy)) * dt
    new_y = y + (by - (gxy * fx + gyy * fy)) * dt
    if xi is not None:
        amp = np.sqrt(2.0 * dt)
        new_x = new_x + amp * (rxx * xi[:, 0] + rxy * xi[:, 1])
        new_y = new_y + amp * (rxy * xi[:, 0] + ryy * xi[:, 1])

    bad = ~(np.isfinite(new_x) & np.isfinite(new_y))
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        raise IntegratorBlowup(
            f"particle {k} left the finite range at t={ensemble.time + dt:.6g}",
            time=ensemble.time + dt,
            index=k,
        )
    new_x, new_y = surface.wrap(new_x, new_y)
    return ParticleEnsemble(np.stack([new_x, new_y], axis=1), ensemble.time + dt)


def cell_indices(positions, grid):
    """Cell index pair of each particle; positions must already be wrapped."""
    i = np.minimum((positions[:, 0] / grid.dx).astype(np.int64), grid.I - 1)
    j = np.minimum((positions[:, 1] / grid.dy).astype(np.int64), grid.J - 1)
    return i, j


def bin_to_grid(ensemble, grid):
    """Particle count per cell, shape ``(I, J)``."""
    i, j = cell_indices(ensemble.positions, grid)
    counts = np.bincount(i * grid.J + j, minlength=grid.I * grid.J)
    return counts.reshape(grid.shape)


def sample_initial(grid, per_cell, rng):
    """``per_cell`` particles placed uniformly at random inside every cell."""
    per_cell = int(per_cell)
    if per_cell < 0:
        raise ValueError(f"per_cell must be >= 0, got {per_cell}")
    ii, jj = np.meshgrid(np.arange(grid.I), np.arange(grid.J), indexing="ij")
    ii = np.repeat(ii.ravel(), per_cell)
    jj = np.repeat(jj.ravel(), per_cell)
    u = rng.random((ii.size, 2))
    x = (ii + u[:, 0]) * grid.dx
    y = (jj + u[:, 1]) * grid.dy
    # guard against rounding onto the upper edge
    x = np.where(x >= grid.Lx, 0.0, x)
    y = np.where(y >= grid.Ly, 0.0, y)
    return ParticleEnsemble(np.stack([x, y], axis=1), 0.0)


def sample_from_density(grid, rho, N, rng):
    """``N`` particles with cell occupations drawn from ``rho``.

    Cell counts are multinomial with weights ``max(rho, 0) sqrt|G| dx dy``
    (normalised); positions are uniform in coordinates within each cell.
    """
    w = np.maximum(np.asarray(rho, float), 0.0) * grid.cell_surface_area
    total = w.sum()
    if not total > 0:
        raise ValueError("density has no positive mass")
    counts = rng.multinomial(int(N), (w / total).ravel())
    cells = np.repeat(np.arange(counts.size), counts)
    ii, jj = np.divmod(cells, grid.J)
    u = rng.random((cells.size, 2))
    x = (ii + u[:, 0]) * grid.dx
    y = (jj + u[:, 1]) * grid.dy
    x = np.where(x >= grid.Lx, 0.0, x)
    y = np.where(y >= grid.Ly, 0.0, y)
    return ParticleEnsemble(np.stack([x, y], axis=1), 0.0)


class ParticleSimulator:
    """Repeated particle steps drawing noise from a step-indexed stream.

    For built-in surfaces with no pair kernel and either no external potential
    or the built-in ``v0 sin^2 x sin^2 y`` one, steps run through a compiled
    kernel when numba is installed; ``compiled=False`` forces the numpy path.
    """

    def __init__(self, surface, dt, potentials=None, noise=None, compiled=True):
        if dt <= 0:
            raise ValueError(f"dt must be positive, got {dt}")
        self.surface = surface
        self.dt = float(dt)
        self.potentials = potentials if potentials is not None else PotentialSpec()
        self.noise = noise
        self.step_index = 0
        ext = self.potentials.external
        self._kind = {"sinusoidal_a": _kernels.SINUSOIDAL, "four_peak_b": _kernels.FOUR_PEAK}.get(surface.kind)
        self.compiled = bool(
            compiled
            and _kernels.available()
            and self._kind is not None
            and self.potentials.pair is None
            and (ext is None or isinstance(ext, SinSquaredPotential))
        )
        self._v0 = float(ext.v0) if isinstance(ext, SinSquaredPotential) else 0.0

    def _compiled_step(self, ensemble, xi):
        pos = np.ascontiguousarray(ensemble.positions, dtype=float)
        out = np.empty_like(pos)
        use_noise = xi is not None
        draw = np.ascontiguousarray(xi, dtype=float) if use_noise else np.zeros((1, 2))
        s = self.surface
        bad = _kernels.particle_step(
            pos, draw, out, self._kind, s.amplitude, self._v0, self.dt, s.Lx, s.Ly, use_noise
        )
        t = ensemble.time + self.dt
        if bad >= 0:
            raise IntegratorBlowup(f"particle {bad} left the finite range at t={t:.6g}", time=t, index=bad)
        return ParticleEnsemble(out, t)

    def step(self, ensemble):
        xi = None if self.noise is None else self.noise.draw(self.step_index)
        if self.compiled and ensemble.N:
            out = self._compiled_step(ensemble, xi)
        else:
            out = em_step(ensemble, self.surface, self.potentials, self.dt, xi)
        self.step_index += 1
        return out

    def run(self, ensemble, steps, callback=None, every=1):
        """Advance ``steps`` steps; ``callback(step_index, ensemble)`` every ``every`` steps."""
        for _ in range(int(steps)):
            ensemble = self.step(ensemble)
            if callback is not None and self.step_index % every == 0:
                callback(self.step_index, ensemble)
        return ensemble
