"""
Monge-gauge geometry
====================

A surface is the graph ``(x, y, H(x, y))`` of a periodic height function over
the coordinate rectangle ``[0, Lx) x [0, Ly)``.  With slopes ``p = dH/dx`` and
``q = dH/dy`` the induced metric and its derived quantities are::

    G        = [[1 + p^2, p q], [p q, 1 + q^2]]
    s        = |G| = 1 + p^2 + q^2
    G^-1     = [[1 + q^2, -p q], [-p q, 1 + p^2]] / s
    G^-1/2   = [[1 - c p^2, -c p q], [-c p q, 1 - c q^2]],   c = 1 / (s + sqrt(s))
    b        = (1 / sqrt s) div(sqrt(s) G^-1)

``G^-1/2`` is the symmetric square root of ``G^-1``.  The drift ``b`` is the
column-wise divergence that turns the Langevin SDE into Brownian motion on the
surface.  For a graph it reduces to::

    b = -(grad H / s) * (lap H - grad H . Hess H . grad H / s)

which only needs first and second derivatives of ``H``.

All evaluation functions broadcast over numpy arrays of coordinates.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .exceptions import ConfigurationError, DimensionError

__all__ = [
    "HeightSurface",
    "MetricSample",
    "MetricGrid",
    "metric_at",
    "drift_b_at",
    "drift_b_closed_form",
    "precompute_grid",
    "surface_from_config",
]

TWO_PI = 2.0 * np.pi


# ============================================================
# Surfaces
# ============================================================

@dataclass(frozen=True)
class HeightSurface:
    """Periodic height function with its derivatives.

    Use the constructors :meth:`flat`, :meth:`sinusoidal`, :meth:`four_peak`
    and :meth:`custom` rather than building instances directly.

    ``gradient(x, y)`` returns ``(p, q)``; ``hessian(x, y)`` returns
    ``(H_xx, H_xy, H_yy)``.
    """

    kind: str
    amplitude: float = 0.0
    Lx: float = TWO_PI
    Ly: float = TWO_PI
    height: Optional[Callable] = field(default=None, repr=False, compare=False)
    gradient: Optional[Callable] = field(default=None, repr=False, compare=False)
    hessian: Optional[Callable] = field(default=None, repr=False, compare=False)
    derivatives: Optional[Callable] = field(default=None, repr=False, compare=False)

    @classmethod
    def flat(cls, Lx=TWO_PI, Ly=TWO_PI):
        return cls.sinusoidal(0.0, Lx=Lx, Ly=Ly)

    @classmethod
    def sinusoidal(cls, amplitude, Lx=TWO_PI, Ly=TWO_PI):
        """``H = a sin(x) sin(y)``."""
        a = float(amplitude)

        def height(x, y):
            return a * np.sin(x) * np.sin(y)

        def gradient(x, y):
            return a * np.cos(x) * np.sin(y), a * np.sin(x) * np.cos(y)

        def hessian(x, y):
            sx, cx, sy, cy = np.sin(x), np.cos(x), np.sin(y), np.cos(y)
            return -a * sx * sy, a * cx * cy, -a * sx * sy

        def derivatives(x, y):
            sx, cx, sy, cy = np.sin(x), np.cos(x), np.sin(y), np.cos(y)
            h = -a * sx * sy
            return a * cx * sy, a * sx * cy, h, a * cx * cy, h

        return cls("sinusoidal_a", a, float(Lx), float(Ly), height, gradient, hessian, derivatives)

    @classmethod
    def four_peak(cls, amplitude, Lx=TWO_PI, Ly=TWO_PI):
        """``H = a sin^2(x) sin^2(y)``: peaks at ``(pi +- pi/2, pi +- pi/2)``."""
        a = float(amplitude)

        def height(x, y):
            return a * np.sin(x) ** 2 * np.sin(y) ** 2

        def gradient(x, y):
            sx, cx, sy, cy = np.sin(x), np.cos(x), np.sin(y), np.cos(y)
            return 2 * a * cx * sx * sy**2, 2 * a * sx**2 * cy * sy

        def hessian(x, y):
            sx, cx, sy, cy = np.sin(x), np.cos(x), np.sin(y), np.cos(y)
            s2x, c2x = 2 * sx * cx, cx**2 - sx**2
            s2y, c2y = 2 * sy * cy, cy**2 - sy**2
            return 2 * a * c2x * sy**2, a * s2x * s2y, 2 * a * sx**2 * c2y

        def derivatives(x, y):
            sx, cx, sy, cy = np.sin(x), np.cos(x), np.sin(y), np.cos(y)
            sx2, sy2 = sx * sx, sy * sy
            s2x, s2y = 2 * sx * cx, 2 * sy * cy
            return (a * s2x * sy2, a * sx2 * s2y,
                    2 * a * (cx * cx - sx2) * sy2, a * s2x * s2y, 2 * a * sx2 * (cy * cy - sy2))

        return cls("four_peak_b", a, float(Lx), float(Ly), height, gradient, hessian, derivatives)

    @classmethod
    def custom(cls, height, gradient, hessian=None, Lx=TWO_PI, Ly=TWO_PI):
        """User supplied height. ``gradient`` is mandatory."""
        if gradient is None:
            raise ConfigurationError("custom surface requires a gradient function")
        if not (Lx > 0 and Ly > 0):
            raise ConfigurationError(f"domain lengths must be positive, got {Lx}, {Ly}")
        return cls("custom", 0.0, float(Lx), float(Ly), height, gradient, hessian)

    @property
    def is_builtin(self):
        return self.kind in ("sinusoidal_a", "four_peak_b")

    def wrap(self, x, y):
        return np.mod(x, self.Lx), np.mod(y, self.Ly)


def surface_from_config(kind, amplitude):
    """Build a built-in surface from the ``surface.kind`` config value."""
    if kind == "sinusoidal_a":
        return HeightSurface.sinusoidal(amplitude)
    if kind == "four_peak_b":
        return HeightSurface.four_peak(amplitude)
    if kind == "flat":
        return HeightSurface.flat()
    raise ConfigurationError(f"surface.kind: unknown surface kind {kind!r}")


# ============================================================
# Pointwise metric quantities
# ============================================================

@dataclass(frozen=True)
class MetricSample:
    """Metric quantities at one or many points.

    Scalar fields have the broadcast shape of the inputs; ``g_inv`` and
    ``g_inv_sqrt`` carry two trailing 2x2 axes and ``drift`` one trailing axis
    of length 2.
    """

    p: np.ndarray
    q: np.ndarray
    s: np.ndarray
    g_inv: np.ndarray
    g_inv_sqrt: np.ndarray
    sqrt_det: np.ndarray
    drift: np.ndarray


def _stack2x2(a, b, c):
    return np.stack([np.stack([a, b], axis=-1), np.stack([b, c], axis=-1)], axis=-2)


def _slopes(surface, x, y):
    if surface.gradient is None:
        raise ConfigurationError("surface has no gradient function")
    p, q = surface.gradient(x, y)
    shape = np.broadcast(x, y).shape
    return np.broadcast_to(np.asarray(p, float), shape), np.broadcast_to(np.asarray(q, float), shape)


def _inverse_metric(p, q):
    s = 1.0 + p * p + q * q
    return s, (1.0 + q * q) / s, -p * q / s, (1.0 + p * p) / s


def _inverse_sqrt_metric(p, q, s):
    c = 1.0 / (s + np.sqrt(s))
    return 1.0 - c * p * p, -c * p * q, 1.0 - c * q * q


def metric_at(surface, point):
    """Metric quantities of ``surface`` at ``point = (x, y)``.

    The coordinates may be scalars or arrays; they are wrapped into the
    periodic domain first.
    """
    x, y = surface.wrap(np.asarray(point[0], float), np.asarray(point[1], float))
    p, q = _slopes(surface, x, y)
    s, gxx, gxy, gyy = _inverse_metric(p, q)
    rxx, rxy, ryy = _inverse_sqrt_metric(p, q, s)
    return MetricSample(
        p=p,
        q=q,
        s=s,
        g_inv=_stack2x2(gxx, gxy, gyy),
        g_inv_sqrt=_stack2x2(rxx, rxy, ryy),
        sqrt_det=np.sqrt(s),
        drift=drift_b_at(surface, (x, y)),
    )


# ============================================================
# Drift
# ============================================================

def _drift_from_hessian(p, q, hxx, hxy, hyy):
    s = 1.0 + p * p + q * q
    lap = hxx + hyy
    quad = p * p * hxx + 2.0 * p * q * hxy + q * q * hyy
    factor = -(lap - quad / s) / s
    return np.stack([factor * p, factor * q], axis=-1)


def _flux_columns(surface, x, y):
    # sqrt(s) G^-1, as the four components xx, xy, yx (= xy), yy
    p, q = _slopes(surface, x, y)
    s, gxx, gxy, gyy = _inverse_metric(p, q)
    r = np.sqrt(s)
    return r * gxx, r * gxy, r * gyy, r


def drift_b_fd(surface, point, h=None):
    """Fourth-order central difference of ``(1/sqrt s) div(sqrt(s) G^-1)``.

    Only the gradient function of the surface is used.
    """
    x, y = (np.asarray(c, float) for c in point)
    if h is None:
        h = 1e-5 * min(surface.Lx, surface.Ly)
    weights = ((-2, 1.0), (-1, -8.0), (1, 8.0), (2, -1.0))

    dx_xx = sum(w * _flux_columns(surface, x + k * h, y)[0] for k, w in weights) / (12 * h)
    dx_xy = sum(w * _flux_columns(surface, x + k * h, y)[1] for k, w in weights) / (12 * h)
    dy_xy = sum(w * _flux_columns(surface, x, y + k * h)[1] for k, w in weights) / (12 * h)
    dy_yy = sum(w * _flux_columns(surface, x, y + k * h)[2] for k, w in weights) / (12 * h)
    r = _flux_columns(surface, x, y)[3]
    return np.stack([(dx_xx + dy_xy) / r, (dx_xy + dy_yy) / r], axis=-1)


def drift_b_closed_form(surface, point):
    """Explicit drift of ``H = a sin x sin y`` written in terms of ``s``."""
    if surface.kind != "sinusoidal_a":
        raise ConfigurationError("closed-form drift is only tabulated for sinusoidal_a")
    a = surface.amplitude
    x, y = (np.asarray(c, float) for c in point)
    sx, cx, sy, cy = np.sin(x), np.cos(x), np.sin(y), np.cos(y)
    p, q = a * cx * sy, a * sx * cy
    s = 1.0 + p * p + q * q
    pre = a**2 * (2.0 + a**2 * (cx**2 + cy**2)) / s**2
    return np.stack([pre * sx * cx * sy**2, pre * sy * cy * sx**2], axis=-1)


def drift_b_at(surface, point):
    """Drift vector ``b`` at ``point``; trailing axis holds ``(b^x, b^y)``."""
    x, y = surface.wrap(np.asarray(point[0], float), np.asarray(point[1], float))
    if surface.hessian is None:
        return drift_b_fd(surface, (x, y))
    p, q = _slopes(surface, x, y)
    hxx, hxy, hyy = surface.hessian(x, y)
    return _drift_from_hessian(p, q, hxx, hxy, hyy)


def langevin_coefficients(surface, x, y):
    """``(g_inv, g_inv_sqrt, drift)`` component tuples at wrapped points.

    ``g_inv`` and ``g_inv_sqrt`` are ``(xx, xy, yy)`` tuples and ``drift`` is
    ``(b^x, b^y)``.  Slopes and Hessian are evaluated once.
    """
    if surface.derivatives is not None:
        p, q, hxx, hxy, hyy = surface.derivatives(x, y)
        s, gxx, gxy, gyy = _inverse_metric(p, q)
        quad = p * p * hxx + 2.0 * p * q * hxy + q * q * hyy
        factor = -(hxx + hyy - quad / s) / s
        return (gxx, gxy, gyy), _inverse_sqrt_metric(p, q, s), (factor * p, factor * q)
    p, q = _slopes(surface, x, y)
    s, gxx, gxy, gyy = _inverse_metric(p, q)
    root = _inverse_sqrt_metric(p, q, s)
    if surface.hessian is None:
        b = drift_b_fd(surface, (x, y))
        drift = (b[..., 0], b[..., 1])
    else:
        hxx, hxy, hyy = surface.hessian(x, y)
        quad = p * p * hxx + 2.0 * p * q * hxy + q * q * hyy
        factor = -(hxx + hyy - quad / s) / s
        drift = (factor * p, factor * q)
    return (gxx, gxy, gyy), root, drift


# ============================================================
# Cell-centred grid
# ============================================================

@dataclass(frozen=True)
class MetricGrid:
    """Metric quantities sampled at the centres of an ``I x J`` periodic grid.

    Arrays are indexed ``[i, j]`` with ``i`` along ``x``.
    """

    surface: HeightSurface
    I: int
    J: int
    dx: float
    dy: float
    x: np.ndarray
    y: np.ndarray
    metric: MetricSample
    surface_area: float

    @property
    def Lx(self):
        return self.surface.Lx

    @property
    def Ly(self):
        return self.surface.Ly

    @property
    def shape(self):
        return (self.I, self.J)

    @property
    def sqrt_det(self):
        return self.metric.sqrt_det

    @property
    def cell_area(self):
        """Coordinate area ``dx dy`` of one cell."""
        return self.dx * self.dy

    @property
    def cell_surface_area(self):
        """Surface area ``sqrt|G| dx dy`` of every cell."""
        return self.metric.sqrt_det * self.dx * self.dy


def precompute_grid(surface, I, J):
    """Sample all metric quantities at cell centres ``((i+1/2)dx, (j+1/2)dy)``."""
    if int(I) < 2 or int(J) < 2:
        raise DimensionError(f"grid needs I, J >= 2, got I={I}, J={J}")
    I, J = int(I), int(J)
    dx, dy = surface.Lx / I, surface.Ly / J
    xc = (np.arange(I) + 0.5) * dx
    yc = (np.arange(J) + 0.5) * dy
    x, y = np.meshgrid(xc, yc, indexing="ij")
    metric = metric_at(surface, (x, y))
    area = float(np.sum(metric.sqrt_det) * dx * dy)
    return MetricGrid(surface, I, J, dx, dy, x, y, metric, area)
