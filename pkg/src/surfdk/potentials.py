"""
External and pairwise potentials
================================

External potentials are scalar fields ``V(x, y)`` with an analytic
coordinate gradient.  Pair potentials are functions of the minimum-image
displacement ``d = x - y`` on the periodic domain; symmetry ``U(x, y) = U(y, x)``
becomes evenness ``U(d) = U(-d)``.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import ConfigurationError

__all__ = [
    "SinSquaredPotential",
    "GaussianPair",
    "ConstantPair",
    "PotentialSpec",
    "minimum_image",
]


def minimum_image(d, L):
    """Map displacements into ``[-L/2, L/2)``."""
    return d - L * np.floor(d / L + 0.5)


@dataclass(frozen=True)
class SinSquaredPotential:
    """``V = v0 sin^2(x) sin^2(y)``."""

    v0: float

    def value(self, x, y):
        return self.v0 * np.sin(x) ** 2 * np.sin(y) ** 2

    def gradient(self, x, y):
        sx, cx, sy, cy = np.sin(x), np.cos(x), np.sin(y), np.cos(y)
        return 2 * self.v0 * sx * cx * sy**2, 2 * self.v0 * sy * cy * sx**2


@dataclass(frozen=True)
class GaussianPair:
    """``U(d) = strength * exp(-|d|^2 / (2 width^2))`` on minimum-image ``d``."""

    strength: float
    width: float

    def value(self, dx, dy):
        return self.strength * np.exp(-(dx * dx + dy * dy) / (2 * self.width**2))

    def gradient(self, dx, dy):
        """Gradient with respect to the first argument ``x`` of ``U(x, y)``."""
        u = self.value(dx, dy) / self.width**2
        return -u * dx, -u * dy


@dataclass(frozen=True)
class ConstantPair:
    """Constant kernel; its gradient vanishes."""

    strength: float

    def value(self, dx, dy):
        return np.full(np.broadcast(dx, dy).shape, float(self.strength))

    def gradient(self, dx, dy):
        z = np.zeros(np.broadcast(dx, dy).shape)
        return z, z.copy()


@dataclass(frozen=True)
class PotentialSpec:
    """External potential ``V`` and pair kernel ``U``; either may be absent."""

    external: Optional[object] = None
    pair: Optional[object] = None

    @classmethod
    def none(cls):
        return cls()

    @classmethod
    def from_v0(cls, v0):
        return cls(external=SinSquaredPotential(float(v0)) if v0 else None)

    def check_symmetric(self, rng=None, samples=64, Lx=2 * np.pi, Ly=2 * np.pi):
        """Raise if the pair kernel is not even in the displacement."""
        if self.pair is None:
            return
        rng = np.random.default_rng(0) if rng is None else rng
        d = rng.uniform(-0.5, 0.5, size=(2, samples)) * np.array([[Lx], [Ly]])
        if not np.allclose(self.pair.value(d[0], d[1]), self.pair.value(-d[0], -d[1])):
            raise ConfigurationError("pair potential must be symmetric, U(x, y) = U(y, x)")
