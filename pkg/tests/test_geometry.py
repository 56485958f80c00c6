import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from surfdk.exceptions import ConfigurationError, DimensionError
from surfdk.geometry import (
    HeightSurface,
    drift_b_at,
    drift_b_closed_form,
    drift_b_fd,
    metric_at,
    precompute_grid,
)

TWO_PI = 2 * np.pi


# ---- independent oracles -------------------------------------------------

def _symbolic_drift(height_expr):
    """b = (1/sqrt s) div(sqrt s G^-1) derived symbolically from H."""
    x, y = sp.symbols("x y", real=True)
    H = height_expr(x, y)
    p, q = sp.diff(H, x), sp.diff(H, y)
    G = sp.Matrix([[1 + p**2, p * q], [p * q, 1 + q**2]])
    s = G.det()
    flux = sp.sqrt(s) * G.inv()
    bx = (sp.diff(flux[0, 0], x) + sp.diff(flux[0, 1], y)) / sp.sqrt(s)
    by = (sp.diff(flux[1, 0], x) + sp.diff(flux[1, 1], y)) / sp.sqrt(s)
    return sp.lambdify((x, y), [bx, by], "numpy")


def _matrix_oracle(p, q):
    """G^-1 and its symmetric root by generic dense linear algebra."""
    g = np.eye(2) + np.outer([p, q], [p, q])
    g_inv = np.linalg.inv(g)
    w, v = np.linalg.eigh(g_inv)
    return g_inv, (v * np.sqrt(w)) @ v.T


SIN_DRIFT = _symbolic_drift(lambda x, y: 3 * sp.sin(x) * sp.sin(y))
FOUR_DRIFT = _symbolic_drift(lambda x, y: 4 * sp.sin(x) ** 2 * sp.sin(y) ** 2)


# ---- metric ----------------------------------------------------------------

def test_sinusoidal_flat_point():
    m = metric_at(HeightSurface.sinusoidal(3.0), (np.pi / 2, np.pi / 2))
    assert abs(m.p) < 1e-15 and abs(m.q) < 1e-15
    assert m.s == pytest.approx(1.0)
    np.testing.assert_allclose(m.g_inv, np.eye(2), atol=1e-15)
    np.testing.assert_allclose(m.g_inv_sqrt, np.eye(2), atol=1e-15)


def test_sinusoidal_steep_point():
    m = metric_at(HeightSurface.sinusoidal(3.0), (0.0, np.pi / 2))
    assert m.p == pytest.approx(3.0) and abs(m.q) < 1e-15
    assert m.s == pytest.approx(10.0)
    np.testing.assert_allclose(m.g_inv, np.diag([0.1, 1.0]), atol=1e-15)
    np.testing.assert_allclose(m.g_inv_sqrt, np.diag([1 / np.sqrt(10), 1.0]), atol=1e-15)
    np.testing.assert_allclose(m.g_inv_sqrt @ m.g_inv_sqrt.T, m.g_inv, atol=1e-15)


def test_four_peak_flat_point():
    m = metric_at(HeightSurface.four_peak(4.0), (np.pi / 2, np.pi / 2))
    assert m.s == pytest.approx(1.0)
    np.testing.assert_allclose(m.g_inv, np.eye(2), atol=1e-14)


@pytest.mark.parametrize("surface", [HeightSurface.sinusoidal(3.0), HeightSurface.four_peak(4.0)])
def test_metric_against_dense_linear_algebra(surface):
    rng = np.random.default_rng(1)
    for x, y in rng.uniform(0, TWO_PI, (50, 2)):
        m = metric_at(surface, (x, y))
        g_inv, root = _matrix_oracle(m.p, m.q)
        assert m.s == 1 + m.p**2 + m.q**2
        np.testing.assert_allclose(m.g_inv, g_inv, atol=1e-13)
        np.testing.assert_allclose(m.g_inv_sqrt, root, atol=1e-13)
        assert np.linalg.det(m.g_inv) == pytest.approx(1 / m.s, rel=1e-12)
        assert m.sqrt_det == pytest.approx(np.sqrt(m.s))


@settings(max_examples=200, deadline=None)
@given(
    st.floats(0, 8),
    st.floats(-50, 50, allow_nan=False),
    st.floats(-50, 50, allow_nan=False),
    st.sampled_from(["sinusoidal", "four_peak"]),
)
def test_metric_invariants(a, x, y, kind):
    m = metric_at(getattr(HeightSurface, kind)(a), (x, y))
    r = m.g_inv_sqrt
    assert np.allclose(r, r.T)
    np.testing.assert_allclose(r @ r.T, m.g_inv, atol=1e-12)
    # eigenvalues of G lie in [1, s]
    ev = 1 / np.linalg.eigvalsh(m.g_inv)
    assert ev.min() >= 1 - 1e-12 and ev.max() <= m.s * (1 + 1e-12)


@pytest.mark.parametrize("surface", [HeightSurface.sinusoidal(3.0), HeightSurface.four_peak(4.0)])
def test_metric_is_periodic(surface):
    pts = np.random.default_rng(2).uniform(0, TWO_PI, (20, 2))
    for x, y in pts:
        a = metric_at(surface, (x, y))
        b = metric_at(surface, (x + TWO_PI, y - TWO_PI))
        # the shifted coordinate itself is rounded, so agreement is to rounding
        np.testing.assert_allclose(a.g_inv, b.g_inv, atol=1e-13)
        np.testing.assert_allclose(a.drift, b.drift, atol=1e-12)


def test_zero_amplitude_is_flat():
    for s in (HeightSurface.sinusoidal(0.0), HeightSurface.four_peak(0.0), HeightSurface.flat()):
        m = metric_at(s, (0.3, 1.7))
        np.testing.assert_array_equal(m.g_inv, np.eye(2))
        np.testing.assert_array_equal(m.drift, [0.0, 0.0])
        assert precompute_grid(s, 8, 8).surface_area == pytest.approx(TWO_PI**2, rel=1e-15)


def test_custom_without_gradient_rejected():
    with pytest.raises(ConfigurationError):
        HeightSurface.custom(lambda x, y: 0 * x, None)


# ---- drift -----------------------------------------------------------------

def test_drift_vanishes_at_symmetric_points():
    np.testing.assert_allclose(drift_b_at(HeightSurface.sinusoidal(3.0), (np.pi / 2, np.pi / 2)), 0, atol=1e-14)
    np.testing.assert_allclose(drift_b_at(HeightSurface.four_peak(4.0), (np.pi, np.pi)), 0, atol=1e-14)


@pytest.mark.parametrize(
    "surface,oracle",
    [(HeightSurface.sinusoidal(3.0), SIN_DRIFT), (HeightSurface.four_peak(4.0), FOUR_DRIFT)],
)
def test_builtin_drift_matches_symbolic_oracle(surface, oracle):
    pts = np.random.default_rng(3).uniform(0, TWO_PI, (100, 2))
    for x, y in pts:
        np.testing.assert_allclose(drift_b_at(surface, (x, y)), oracle(x, y), atol=1e-5, rtol=0)
        # the analytic path is far tighter than the required 1e-5
        np.testing.assert_allclose(drift_b_at(surface, (x, y)), oracle(x, y), atol=1e-10, rtol=1e-10)


def test_closed_form_matches_finite_differences():
    s = HeightSurface.sinusoidal(3.0)
    np.testing.assert_allclose(drift_b_closed_form(s, (0.7, 1.3)), drift_b_fd(s, (0.7, 1.3)), atol=1e-6)
    pts = np.random.default_rng(4).uniform(0, TWO_PI, (50, 2))
    for x, y in pts:
        np.testing.assert_allclose(drift_b_closed_form(s, (x, y)), SIN_DRIFT(x, y), atol=1e-10)


def test_custom_surface_uses_finite_differences():
    a = 1.5
    surf = HeightSurface.custom(
        lambda x, y: a * np.sin(x) * np.cos(2 * y),
        lambda x, y: (a * np.cos(x) * np.cos(2 * y), -2 * a * np.sin(x) * np.sin(2 * y)),
    )
    oracle = _symbolic_drift(lambda x, y: a * sp.sin(x) * sp.cos(2 * y))
    for x, y in np.random.default_rng(5).uniform(0, TWO_PI, (30, 2)):
        np.testing.assert_allclose(drift_b_at(surf, (x, y)), oracle(x, y), atol=1e-6)


# ---- grid ------------------------------------------------------------------

def test_grid_layout():
    g = precompute_grid(HeightSurface.sinusoidal(3.0), 8, 4)
    assert g.shape == (8, 4)
    assert g.dx == pytest.approx(TWO_PI / 8) and g.dy == pytest.approx(TWO_PI / 4)
    assert g.x[3, 0] == pytest.approx(3.5 * g.dx)
    assert g.y[0, 2] == pytest.approx(2.5 * g.dy)
    assert g.surface_area == pytest.approx(np.sum(g.sqrt_det) * g.dx * g.dy)


def test_surface_area_against_fine_quadrature():
    g = precompute_grid(HeightSurface.sinusoidal(3.0), 32, 32)
    n = 1024
    c = (np.arange(n) + 0.5) * TWO_PI / n
    X, Y = np.meshgrid(c, c, indexing="ij")
    fine = np.sum(np.sqrt(1 + 9 * np.cos(X) ** 2 * np.sin(Y) ** 2 + 9 * np.sin(X) ** 2 * np.cos(Y) ** 2))
    fine *= (TWO_PI / n) ** 2
    assert g.surface_area == pytest.approx(fine, rel=0.01)


def test_four_peak_area_exceeds_base():
    assert precompute_grid(HeightSurface.four_peak(4.0), 64, 64).surface_area >= TWO_PI**2


@pytest.mark.parametrize("I,J", [(1, 8), (8, 1), (0, 0)])
def test_grid_too_small(I, J):
    with pytest.raises(DimensionError):
        precompute_grid(HeightSurface.flat(), I, J)
