"""Compiled particle step for the built-in surfaces.

Mirrors :func:`surfdk.particles.em_step` for ``sinusoidal_a`` / ``four_peak_b``
surfaces with an optional ``v0 sin^2 x sin^2 y`` potential and no pair kernel.
Falls back to ``None`` when numba is unavailable.
"""

import math

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

SINUSOIDAL, FOUR_PEAK = 0, 1

__all__ = ["particle_step", "available", "SINUSOIDAL", "FOUR_PEAK"]


def _particle_step(pos, xi, out, kind, a, v0, dt, Lx, Ly, use_noise):
    amp = math.sqrt(2.0 * dt)
    bad = -1
    for k in range(pos.shape[0]):
        x, y = pos[k, 0], pos[k, 1]
        sx, cx, sy, cy = math.sin(x), math.cos(x), math.sin(y), math.cos(y)
        if kind == 0:
            p, q = a * cx * sy, a * sx * cy
            hxx = -a * sx * sy
            hxy = a * cx * cy
            hyy = hxx
        else:
            sx2, sy2 = sx * sx, sy * sy
            s2x, s2y = 2.0 * sx * cx, 2.0 * sy * cy
            p, q = a * s2x * sy2, a * sx2 * s2y
            hxx = 2.0 * a * (cx * cx - sx2) * sy2
            hxy = a * s2x * s2y
            hyy = 2.0 * a * sx2 * (cy * cy - sy2)
        s = 1.0 + p * p + q * q
        gxx, gxy, gyy = (1.0 + q * q) / s, -p * q / s, (1.0 + p * p) / s
        quad = p * p * hxx + 2.0 * p * q * hxy + q * q * hyy
        factor = -(hxx + hyy - quad / s) / s
        dx_ = factor * p
        dy_ = factor * q
        if v0 != 0.0:
            vx = 2.0 * v0 * sx * cx * sy * sy
            vy = 2.0 * v0 * sy * cy * sx * sx
            dx_ -= gxx * vx + gxy * vy
            dy_ -= gxy * vx + gyy * vy
        nx = x + dx_ * dt
        ny = y + dy_ * dt
        if use_noise:
            c = 1.0 / (s + math.sqrt(s))
            rxx, rxy, ryy = 1.0 - c * p * p, -c * p * q, 1.0 - c * q * q
            nx += amp * (rxx * xi[k, 0] + rxy * xi[k, 1])
            ny += amp * (rxy * xi[k, 0] + ryy * xi[k, 1])
        if not (math.isfinite(nx) and math.isfinite(ny)):
            if bad < 0:
                bad = k
            out[k, 0], out[k, 1] = nx, ny
            continue
        out[k, 0] = nx - Lx * math.floor(nx / Lx)
        out[k, 1] = ny - Ly * math.floor(ny / Ly)
        # floor can round a tiny negative up to exactly L
        if out[k, 0] >= Lx:
            out[k, 0] = 0.0
        if out[k, 1] >= Ly:
            out[k, 1] = 0.0
    return bad


if numba is not None:
    particle_step = numba.njit(cache=True, fastmath=False)(_particle_step)
else:  # pragma: no cover
    particle_step = None


def available():
    return particle_step is not None
