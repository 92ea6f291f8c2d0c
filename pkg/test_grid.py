import numpy as np
import pytest

from conftest import random_solenoidal
from errors import NaNDetected
from grid import (Spectral, center_coords, divergence, face_to_center, gradient, grid_norm,
                  laplacian)


def test_grid_norm_constant():
    h = 1.0 / 16
    assert grid_norm(np.full((16, 16), 2.0), 1.5, h) == pytest.approx(2.0, rel=1e-12)


def test_grid_norm_zero():
    assert grid_norm(np.zeros((8, 8, 8)), 2, 1.0 / 8) == 0.0


def test_grid_norm_sine_l2():
    n = 32
    x1, _ = center_coords(n, 1.0 / n, 2)
    g = np.sin(2 * np.pi * x1) * np.ones((n, n))
    assert grid_norm(g, 2, 1.0 / n) == pytest.approx(1.0 / np.sqrt(2.0), rel=1e-10)


def test_grid_norm_max():
    g = np.zeros((8, 8))
    g[2, 3] = -5.0
    assert grid_norm(g, np.inf, 0.125) == 5.0


def test_grid_norm_nan_reports_cell():
    g = np.ones((8, 8))
    g[3, 5] = np.nan
    with pytest.raises(NaNDetected) as ei:
        grid_norm(g, 2, 0.125)
    assert ei.value.index == (3, 5)


def test_grid_norm_face_field():
    n = 8
    u = (np.full((n, n), 3.0), np.full((n, n), 4.0))
    assert grid_norm(u, np.inf, 1.0 / n) == pytest.approx(5.0)


def test_divergence_of_gradient_is_laplacian(rng):
    h = 1.0 / 12
    p = rng.normal(size=(12, 12, 12))
    np.testing.assert_allclose(divergence(gradient(p, h), h), laplacian(p, h), atol=1e-9)


def test_projection_is_divergence_free_and_idempotent(rng):
    n, d = 16, 3
    h = 1.0 / n
    spec = Spectral(n, d, h)
    u = tuple(rng.normal(size=(n,) * d) for _ in range(d))
    pu = spec.project(u)
    assert np.abs(divergence(pu, h)).max() < 1e-10
    for a, b in zip(spec.project(pu), pu):
        np.testing.assert_allclose(a, b, atol=1e-12)


def test_projection_keeps_solenoidal_field(rng):
    u = random_solenoidal(rng, 16, 2)
    for a, b in zip(Spectral(16, 2, 1.0 / 16).project(u), u):
        np.testing.assert_allclose(a, b, atol=1e-13)


def test_divergence_symbol_matches_operator(rng):
    n, d = 10, 2
    h = 1.0 / n
    spec = Spectral(n, d, h)
    u = tuple(rng.normal(size=(n,) * d) for _ in range(d))
    lhs = spec.forward(divergence(u, h))
    rhs = spec.divergence_hat([spec.forward(c) for c in u])
    np.testing.assert_allclose(lhs, rhs, atol=1e-9)


def test_poisson_solve(rng):
    n = 16
    h = 1.0 / n
    rhs = rng.normal(size=(n, n))
    phi = Spectral(n, 2, h).solve_poisson(rhs)
    np.testing.assert_allclose(laplacian(phi, h), rhs - rhs.mean(), atol=1e-9)
    assert abs(phi.mean()) < 1e-12


def test_face_to_center_of_constants():
    u = (np.full((4, 4), 1.5), np.full((4, 4), -2.0))
    c = face_to_center(u)
    assert c.shape == (2, 4, 4)
    np.testing.assert_array_equal(c[0], 1.5)
    np.testing.assert_array_equal(c[1], -2.0)


@pytest.mark.parametrize("p", [1.5, 2, np.inf])
def test_grid_norm_is_absolutely_homogeneous(rng, p):
    g = rng.normal(size=(8, 8, 8))
    h = 1.0 / 8
    assert grid_norm(-3.5 * g, p, h) == pytest.approx(3.5 * grid_norm(g, p, h), rel=1e-12)
