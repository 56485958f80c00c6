"""
Finite-volume Dean-Kawasaki solver
==================================

Cell-centred finite volumes on a periodic ``I x J`` grid.  The density
``rho[i, j]`` is the cell average with respect to the surface measure.  Two
periodic difference operators form an adjoint pair::

    grad_minus(rho)[i, j] = ((rho[i] - rho[i-1]) / dx, (rho[j] - rho[j-1]) / dy)
    div_plus(u, v)[i, j]  = (u[i+1] - u[i]) / dx + (v[j+1] - v[j]) / dy

so that ``sum(rho * div_plus(w)) == -sum(w . grad_minus(rho))``.  Writing
``J = sqrt|G|`` per cell, the dissipative and noise operators are::

    L = div_plus  J G^-1        grad_minus      (IJ x IJ, symmetric)
    K = div_plus  J^1/2 G^-1/2                  (IJ x 2IJ)

and ``L = -K K^T`` holds exactly, which is the discrete fluctuation-dissipation
balance.  One Euler-Maruyama step reads::

    rho += dt / J * [L rho + div_plus(J rho G^-1 grad_minus V)]
         + sqrt(2 / N) / J * div_plus(sqrt(rho+) J^1/2 G^-1/2 sqrt(dt / (dx dy)) Z)

Vector fields have shape ``(..., 2, I, J)`` and scalar fields ``(..., I, J)``;
every kernel broadcasts over leading axes.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionError, EstimationError, IntegratorBlowup
from .potentials import PotentialSpec, minimum_image

__all__ = [
    "grad_minus",
    "div_plus",
    "FVOperators",
    "deterministic_rhs",
    "interaction_potential",
    "interaction_field",
    "noise_increment",
    "em_step",
    "linearized_ou_step",
    "AssembledOperators",
    "assemble_operators",
    "spectral_radius",
    "estimate_max_dt",
    "discrete_mass",
    "DeanKawasakiSolver",
    "LinearizedOUSolver",
    "MAX_ASSEMBLY_CELLS",
]

MAX_ASSEMBLY_CELLS = 64 * 64


# ============================================================
# Difference operators
# ============================================================

def grad_minus(rho, dx, dy):
    """Backward periodic gradient; returns shape ``(..., 2, I, J)``."""
    rho = np.asarray(rho, float)
    gx = (rho - np.roll(rho, 1, axis=-2)) / dx
    gy = (rho - np.roll(rho, 1, axis=-1)) / dy
    return np.stack([gx, gy], axis=-3)


def div_plus(vf, dx, dy):
    """Forward periodic divergence of ``vf = (u, v)`` stacked on axis -3."""
    vf = np.asarray(vf, float)
    u, v = vf[..., 0, :, :], vf[..., 1, :, :]
    return (np.roll(u, -1, axis=-2) - u) / dx + (np.roll(v, -1, axis=-1) - v) / dy


def _matvec(a_xx, a_xy, a_yy, w):
    u, v = w[..., 0, :, :], w[..., 1, :, :]
    return np.stack([a_xx * u + a_xy * v, a_xy * u + a_yy * v], axis=-3)


def discrete_mass(rho, grid):
    """``sum(rho * sqrt|G|) dx dy``."""
    return float(np.sum(rho * grid.sqrt_det) * grid.dx * grid.dy)


# ============================================================
# Precomputed per-cell coefficients
# ============================================================

class FVOperators:
    """Cell coefficients of ``L`` and ``K`` for one grid, applied matrix-free."""

    def __init__(self, grid):
        self.grid = grid
        self.dx, self.dy = grid.dx, grid.dy
        m = grid.metric
        self.jac = m.sqrt_det
        self.inv_jac = 1.0 / m.sqrt_det
        self.g_xx = m.g_inv[..., 0, 0]
        self.g_xy = m.g_inv[..., 0, 1]
        self.g_yy = m.g_inv[..., 1, 1]
        # J G^-1
        self.d_xx = self.jac * self.g_xx
        self.d_xy = self.jac * self.g_xy
        self.d_yy = self.jac * self.g_yy
        # J^1/2 G^-1/2
        root = np.sqrt(self.jac)
        self.k_xx = root * m.g_inv_sqrt[..., 0, 0]
        self.k_xy = root * m.g_inv_sqrt[..., 0, 1]
        self.k_yy = root * m.g_inv_sqrt[..., 1, 1]

    def grad(self, rho):
        return grad_minus(rho, self.dx, self.dy)

    def div(self, vf):
        return div_plus(vf, self.dx, self.dy)

    def apply_L(self, rho):
        """``L rho = div_plus(J G^-1 grad_minus rho)``."""
        return self.div(_matvec(self.d_xx, self.d_xy, self.d_yy, self.grad(rho)))

    def apply_K(self, w):
        """``K w = div_plus(J^1/2 G^-1/2 w)`` for ``w`` of shape ``(..., 2, I, J)``."""
        return self.div(_matvec(self.k_xx, self.k_xy, self.k_yy, w))

    def apply_KT(self, rho):
        """``K^T rho = -J^1/2 G^-1/2 grad_minus rho`` (the root is symmetric)."""
        return -_matvec(self.k_xx, self.k_xy, self.k_yy, self.grad(rho))

    def potential_flux_div(self, rho, grad_v):
        """``div_plus(J rho G^-1 grad_v)`` with ``grad_v`` already differenced."""
        flux = _matvec(self.d_xx, self.d_xy, self.d_yy, grad_v) * rho[..., None, :, :]
        return self.div(flux)


# ============================================================
# Right-hand side pieces
# ============================================================

def _operators(grid, ops):
    return ops if ops is not None else FVOperators(grid)


def interaction_potential(rho, grid, pair):
    """``W[i, j] = sum_kl U(x_ij - x_kl) rho_kl sqrt|G|_kl dx dy``."""
    x, y = grid.x.ravel(), grid.y.ravel()
    ddx = minimum_image(x[:, None] - x[None, :], grid.Lx)
    ddy = minimum_image(y[:, None] - y[None, :], grid.Ly)
    weights = (np.asarray(rho, float) * grid.cell_surface_area).ravel()
    return (pair.value(ddx, ddy) @ weights).reshape(grid.shape)


def interaction_field(rho, grid, pair):
    """Metric gradient of the interaction potential, ``G^-1 sum_kl grad U ...``.

    Returns shape ``(2, I, J)``.  The gradient of ``U`` is taken analytically in
    its first argument at the cell centres.
    """
    x, y = grid.x.ravel(), grid.y.ravel()
    ddx = minimum_image(x[:, None] - x[None, :], grid.Lx)
    ddy = minimum_image(y[:, None] - y[None, :], grid.Ly)
    weights = (np.asarray(rho, float) * grid.cell_surface_area).ravel()
    gx, gy = pair.gradient(ddx, ddy)
    ex = (gx @ weights).reshape(grid.shape)
    ey = (gy @ weights).reshape(grid.shape)
    gi = grid.metric.g_inv
    return np.stack([gi[..., 0, 0] * ex + gi[..., 0, 1] * ey, gi[..., 1, 0] * ex + gi[..., 1, 1] * ey])


def external_potential_cells(grid, potentials):
    """External potential sampled at cell centres, or ``None``."""
    if potentials is None or potentials.external is None:
        return None
    return potentials.external.value(grid.x, grid.y)


def deterministic_rhs(rho, grid, potentials=None, ops=None, v_cells=None):
    """Drift of the semi-discrete equation at density ``rho``.

    ``v_cells`` overrides the external potential sampled from ``potentials``.
    A configured pair kernel adds its interaction potential to ``V``.
    """
    ops = _operators(grid, ops)
    rho = np.asarray(rho, float)
    out = ops.apply_L(rho)
    if v_cells is None:
        v_cells = external_potential_cells(grid, potentials)
    if potentials is not None and potentials.pair is not None:
        w = interaction_potential(rho, grid, potentials.pair)
        v_cells = w if v_cells is None else v_cells + w
    if v_cells is not None:
        out = out + ops.potential_flux_div(rho, ops.grad(v_cells))
    return out * ops.inv_jac


def noise_increment(rho, grid, N, dt, draw, ops=None):
    """Stochastic increment of one step, already scaled by ``dt``.

    ``draw`` holds independent standard normals of shape ``(2, I, J)``.
    Negative densities are clipped to zero under the square root.
    """
    ops = _operators(grid, ops)
    amp = np.sqrt(np.maximum(rho, 0.0)) * np.sqrt(dt / (grid.dx * grid.dy))
    return np.sqrt(2.0 / N) * ops.inv_jac * ops.apply_K(amp * np.asarray(draw, float))


def em_step(rho, grid, potentials, N, dt, draw=None, ops=None, v_cells=None, step=None):
    """One Euler-Maruyama step; ``draw=None`` disables the noise."""
    ops = _operators(grid, ops)
    new = rho + dt * deterministic_rhs(rho, grid, potentials, ops=ops, v_cells=v_cells)
    if draw is not None:
        new = new + noise_increment(rho, grid, N, dt, draw, ops=ops)
    if not np.all(np.isfinite(new)):
        raise IntegratorBlowup(f"non-finite density at step {step}", step=step)
    return new


def linearized_ou_step(z, grid, N, rho_bar, dt, draw=None, ops=None):
    """Step of the linearisation around ``rho_bar``.

    ``z += dt J^-1 L z + sqrt(2 rho_bar / (N dx dy)) J^-1 K sqrt(dt) draw``
    """
    ops = _operators(grid, ops)
    new = z + dt * ops.inv_jac * ops.apply_L(z)
    if draw is not None:
        amp = np.sqrt(2.0 * rho_bar / (N * grid.dx * grid.dy))
        new = new + amp * ops.inv_jac * ops.apply_K(np.sqrt(dt) * np.asarray(draw, float))
    if not np.all(np.isfinite(new)):
        raise IntegratorBlowup("non-finite fluctuation field")
    return new


# ============================================================
# Dense assembly
# ============================================================

@dataclass(frozen=True)
class AssembledOperators:
    """Dense ``L`` (IJ x IJ), ``K`` (IJ x 2IJ) and the diagonal of ``J``.

    Flattening is C order over ``(i, j)``; ``K`` columns run over the x
    component of every cell first, then the y component.
    """

    L: np.ndarray
    K: np.ndarray
    J_diag: np.ndarray

    def symmetry_residual(self):
        return float(np.max(np.abs(self.L - self.L.T)))

    def factorization_residual(self):
        return float(np.max(np.abs(self.L + self.K @ self.K.T)))

    def lyapunov_residual(self, rho_bar, N, dx, dy):
        """Max-norm residual of the stationary covariance equation at
        ``C = rho_bar / (N dx dy) J^-1``."""
        inv_j = 1.0 / self.J_diag
        scale = rho_bar / (N * dx * dy)
        A = inv_j[:, None] * self.L
        C = np.diag(scale * inv_j)
        Q = (2.0 * scale) * (inv_j[:, None] * (self.K @ self.K.T) * inv_j[None, :])
        return float(np.max(np.abs(A @ C + C @ A.T + Q)))


def assemble_operators(grid, ops=None):
    """Build ``L`` and ``K`` by applying the matrix-free kernels to unit vectors."""
    n = grid.I * grid.J
    if n > MAX_ASSEMBLY_CELLS:
        raise DimensionError(
            f"dense assembly refused for {grid.I}x{grid.J} grid (limit {MAX_ASSEMBLY_CELLS} cells)"
        )
    ops = _operators(grid, ops)
    eye = np.eye(n).reshape(n, grid.I, grid.J)
    L = ops.apply_L(eye).reshape(n, n).T
    eye2 = np.eye(2 * n).reshape(2 * n, 2, grid.I, grid.J)
    K = ops.apply_K(eye2).reshape(2 * n, n).T
    return AssembledOperators(L=L, K=K, J_diag=grid.sqrt_det.ravel().copy())


# ============================================================
# Stability limit
# ============================================================

def spectral_radius(grid, ops=None, tol=1e-6, maxiter=10_000, block=8, seed=0):
    """Largest eigenvalue of ``-J^-1 L`` by block power iteration.

    Works on the symmetric similar operator ``B = J^-1/2 (-L) J^-1/2``.  A
    block of ``block`` vectors is multiplied by ``B - shift`` and
    re-orthonormalised each sweep; a Rayleigh-Ritz projection gives the
    estimate.  The block makes clustered or degenerate top eigenvalues
    harmless.  Stops once the top Ritz pair has residual ``<= tol * lam``.
    """
    ops = _operators(grid, ops)
    n = grid.I * grid.J
    block = min(block, n)
    root = np.sqrt(ops.jac)

    def apply_b(V):
        # V has shape (block, I, J)
        return -ops.apply_L(V / root) / root

    V = np.random.default_rng(seed).standard_normal((block,) + grid.shape)
    V = np.linalg.qr(V.reshape(block, n).T)[0].T.reshape(V.shape)
    shift = 0.0
    for _ in range(maxiter):
        BV = apply_b(V)
        flat_v, flat_bv = V.reshape(block, n), BV.reshape(block, n)
        theta, Y = np.linalg.eigh(flat_v @ flat_bv.T)
        lam = float(theta[-1])
        x, bx = Y[:, -1] @ flat_v, Y[:, -1] @ flat_bv
        if lam > 0 and np.linalg.norm(bx - lam * x) <= tol * lam:
            return lam
        shift = 0.45 * max(lam, 0.0)
        W = flat_bv - shift * flat_v
        V = np.linalg.qr(W.T)[0].T.reshape(V.shape)
    raise EstimationError(f"power iteration did not converge in {maxiter} iterations")


def estimate_max_dt(grid, ops=None, tol=1e-6, maxiter=10_000):
    """Explicit-Euler stability bound ``2 / lambda_max`` of the diffusion part."""
    return 2.0 / spectral_radius(grid, ops=ops, tol=tol, maxiter=maxiter)


# ============================================================
# Stateful stepper
# ============================================================

class DeanKawasakiSolver:
    """Repeated Euler-Maruyama steps of the density on a fixed grid.

    Produces the same update as :func:`em_step` but fuses the deterministic
    and stochastic fluxes into a single divergence and works in preallocated
    buffers, which matters on the small grids used for long statistics runs.

    Parameters
    ----------
    grid : MetricGrid
    N : int
        Particle number setting the noise strength ``sqrt(2 / N)``.
    dt : float
    potentials : PotentialSpec, optional
    noise : NoiseStream or None
        Source of ``(2, I, J)`` draws indexed by step; ``None`` runs the
        deterministic scheme.
    """

    def __init__(self, grid, N, dt, potentials=None, noise=None):
        if dt <= 0:
            raise ValueError(f"dt must be positive, got {dt}")
        self.grid = grid
        self.N = N
        self.dt = float(dt)
        self.potentials = potentials if potentials is not None else PotentialSpec()
        self.noise = noise
        self.ops = ops = FVOperators(grid)
        self.v_cells = external_potential_cells(grid, self.potentials)
        self._v_flux = None
        if self.v_cells is not None:
            # J G^-1 grad_minus V does not change between steps
            self._v_flux = _matvec(ops.d_xx, ops.d_xy, ops.d_yy, ops.grad(self.v_cells))
        self._noise_scale = np.sqrt(2.0 / N) * np.sqrt(self.dt / (grid.dx * grid.dy)) / self.dt
        shape = grid.shape
        self._gx, self._gy = np.empty(shape), np.empty(shape)
        self._fx, self._fy = np.empty(shape), np.empty(shape)
        self._tmp, self._div = np.empty(shape), np.empty(shape)
        self.step_index = 0
        self.negative_events = 0

    @property
    def time(self):
        return self.step_index * self.dt

    def _flux(self, rho):
        ops = self.ops
        gx, gy, fx, fy, tmp = self._gx, self._gy, self._fx, self._fy, self._tmp
        np.subtract(rho[1:], rho[:-1], out=gx[1:])
        np.subtract(rho[0], rho[-1], out=gx[0])
        gx *= 1.0 / ops.dx
        np.subtract(rho[:, 1:], rho[:, :-1], out=gy[:, 1:])
        np.subtract(rho[:, 0], rho[:, -1], out=gy[:, 0])
        gy *= 1.0 / ops.dy
        np.multiply(ops.d_xx, gx, out=fx)
        fx += np.multiply(ops.d_xy, gy, out=tmp)
        np.multiply(ops.d_xy, gx, out=fy)
        fy += np.multiply(ops.d_yy, gy, out=tmp)

        v_flux = self._v_flux
        if self.potentials.pair is not None:
            w = interaction_potential(rho, self.grid, self.potentials.pair)
            w_flux = _matvec(ops.d_xx, ops.d_xy, ops.d_yy, ops.grad(w))
            v_flux = w_flux if v_flux is None else v_flux + w_flux
        if v_flux is not None:
            fx += np.multiply(rho, v_flux[0], out=tmp)
            fy += np.multiply(rho, v_flux[1], out=tmp)

        if self.noise is not None:
            negative = int(np.count_nonzero(rho < 0))
            self.negative_events += negative
            draw = self.noise.draw(self.step_index)
            amp = np.sqrt(np.maximum(rho, 0.0) if negative else rho) * self._noise_scale
            wx, wy = draw[0] * amp, draw[1] * amp
            fx += ops.k_xx * wx + ops.k_xy * wy
            fy += ops.k_xy * wx + ops.k_yy * wy
        return fx, fy

    def _divergence(self, fx, fy):
        ops, out, tmp = self.ops, self._div, self._tmp
        np.subtract(fx[1:], fx[:-1], out=out[:-1])
        np.subtract(fx[0], fx[-1], out=out[-1])
        out *= 1.0 / ops.dx
        np.subtract(fy[:, 1:], fy[:, :-1], out=tmp[:, :-1])
        np.subtract(fy[:, 0], fy[:, -1], out=tmp[:, -1])
        tmp *= 1.0 / ops.dy
        out += tmp
        return out

    def step(self, rho):
        fx, fy = self._flux(rho)
        div = self._divergence(fx, fy)
        new = rho + (self.dt * self.ops.inv_jac) * div
        if not np.isfinite(new.sum()):
            raise IntegratorBlowup(
                f"non-finite density at step {self.step_index} (t={self.time:.6g})",
                step=self.step_index,
                time=self.time,
            )
        self.step_index += 1
        return new

    def run(self, rho, steps, callback=None, every=1):
        """Advance ``steps`` steps; ``callback(step_index, rho)`` every ``every`` steps."""
        for _ in range(int(steps)):
            rho = self.step(rho)
            if callback is not None and self.step_index % every == 0:
                callback(self.step_index, rho)
        return rho


class LinearizedOUSolver:
    """Batched fused form of :func:`linearized_ou_step`.

    ``z`` may carry leading replica axes, ``(..., I, J)``; draws then have
    shape ``(..., 2, I, J)``.  Matches :func:`linearized_ou_step` to rounding.
    """

    def __init__(self, grid, N, rho_bar, dt, noise=None):
        if dt <= 0:
            raise ValueError(f"dt must be positive, got {dt}")
        self.grid = grid
        self.dt = float(dt)
        self.noise = noise
        self.ops = FVOperators(grid)
        # flux = J G^-1 grad z + (amp / sqrt(dt)) J^1/2 G^-1/2 xi, so dt * div(flux) is the step
        self._noise_scale = np.sqrt(2.0 * rho_bar / (N * grid.dx * grid.dy)) / np.sqrt(self.dt)
        self.step_index = 0

    def step(self, z):
        ops = self.ops
        gx = np.empty_like(z)
        gy = np.empty_like(z)
        np.subtract(z[..., 1:, :], z[..., :-1, :], out=gx[..., 1:, :])
        np.subtract(z[..., 0, :], z[..., -1, :], out=gx[..., 0, :])
        gx *= 1.0 / ops.dx
        np.subtract(z[..., :, 1:], z[..., :, :-1], out=gy[..., :, 1:])
        np.subtract(z[..., :, 0], z[..., :, -1], out=gy[..., :, 0])
        gy *= 1.0 / ops.dy
        fx = ops.d_xx * gx + ops.d_xy * gy
        fy = ops.d_xy * gx
        fy += ops.d_yy * gy
        if self.noise is not None:
            draw = self.noise.draw(self.step_index)
            wx = draw[..., 0, :, :] * self._noise_scale
            wy = draw[..., 1, :, :] * self._noise_scale
            fx += ops.k_xx * wx + ops.k_xy * wy
            fy += ops.k_xy * wx + ops.k_yy * wy
        div = gx  # reuse buffer
        np.subtract(fx[..., 1:, :], fx[..., :-1, :], out=div[..., :-1, :])
        np.subtract(fx[..., 0, :], fx[..., -1, :], out=div[..., -1, :])
        div *= 1.0 / ops.dx
        np.subtract(fy[..., :, 1:], fy[..., :, :-1], out=gy[..., :, :-1])
        np.subtract(fy[..., :, 0], fy[..., :, -1], out=gy[..., :, -1])
        gy *= 1.0 / ops.dy
        div += gy
        div *= self.dt * ops.inv_jac
        new = z + div
        if not np.isfinite(new.sum()):
            raise IntegratorBlowup(f"non-finite fluctuation field at step {self.step_index}", step=self.step_index)
        self.step_index += 1
        return new
