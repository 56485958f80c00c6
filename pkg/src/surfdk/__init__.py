"""Stochastic particle dynamics and the Dean-Kawasaki equation on Monge-gauge surfaces."""

__version__ = "0.1.0"

from .exceptions import (  # noqa: E402
    ConfigurationError,
    DimensionError,
    EstimationError,
    IntegratorBlowup,
    SurfDKError,
)
from .geometry import HeightSurface, MetricGrid, drift_b_at, metric_at, precompute_grid  # noqa: E402
from .potentials import GaussianPair, PotentialSpec, SinSquaredPotential  # noqa: E402

__all__ = [
    "__version__",
    "ConfigurationError",
    "DimensionError",
    "EstimationError",
    "IntegratorBlowup",
    "SurfDKError",
    "HeightSurface",
    "MetricGrid",
    "drift_b_at",
    "metric_at",
    "precompute_grid",
    "GaussianPair",
    "PotentialSpec",
    "SinSquaredPotential",
]
