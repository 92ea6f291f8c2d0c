import numpy as np
import pytest

from grid import center_coords
from kinetic import (CHUNK, deposit_grid, deposit_moments, exponential_update, interpolate_grid,
                     interpolate_velocity, push_particles, support_radius)
from oracle import char_closed_form
from state import ParticleEnsemble


def _ensemble(rng, count, d, L=1.0):
    x = rng.uniform(0.0, L, size=(count, d))
    v = rng.normal(size=(count, d))
    w = rng.uniform(0.5, 1.5, size=count) / count
    return ParticleEnsemble(x=x, v=v, w=w, r0=float(np.sqrt((v * v).sum(axis=1)).max()))


def test_interpolating_constant_field(rng):
    x = rng.uniform(0, 1, size=(50, 3))
    np.testing.assert_allclose(interpolate_grid(np.full((8, 8, 8), 2.5), x, 1.0 / 8), 2.5, rtol=1e-14)


def test_interpolation_exact_for_linear_profile():
    n = 16
    h = 1.0 / n
    x1, _ = center_coords(n, h, 2)
    g = x1 * np.ones((n, n))
    pts = np.array([[0.3, 0.4], [0.55, 0.9], [0.71, 0.12]])
    np.testing.assert_allclose(interpolate_grid(g, pts, h), pts[:, 0], atol=1e-14)


def test_deposited_mass_matches_weights(rng):
    ens = _ensemble(rng, 500, 2)
    h = 1.0 / 16
    m = deposit_moments(ens, (16, 16), h)
    assert m.n.sum() * h ** 2 == pytest.approx(ens.w.sum(), rel=1e-13)
    for a in range(2):
        assert m.n_faces[a].sum() * h ** 2 == pytest.approx(ens.w.sum(), rel=1e-13)


def test_deposition_is_adjoint_of_interpolation(rng):
    n, d = 8, 3
    h = 1.0 / n
    ens = _ensemble(rng, 300, d)
    q = rng.normal(size=300)
    g = rng.normal(size=(n,) * d)
    for axis in (None, 0, 2):
        dep = deposit_grid(ens.x, q[:, None], (n,) * d, h, axis=axis)[0]
        lhs = float(np.sum(dep * g)) * h ** d
        rhs = float(np.sum(q * interpolate_grid(g, ens.x, h, axis=axis)))
        assert lhs == pytest.approx(rhs, rel=1e-12)


def test_moment_fields_are_consistent(rng):
    ens = _ensemble(rng, 2000, 2)
    m = deposit_moments(ens, (16, 16), 1.0 / 16)
    assert m.n.min() >= 0.0
    assert m.e.min() >= 0.0
    jsq = np.sum(m.j * m.j, axis=0)
    assert np.all(jsq <= 2.0 * m.n * m.e * (1 + 1e-12) + 1e-300)


def test_deposition_independent_of_thread_count(rng):
    ens = _ensemble(rng, 2 * CHUNK + 17, 2)
    one = deposit_moments(ens, (16, 16), 1.0 / 16, threads=1)
    four = deposit_moments(ens, (16, 16), 1.0 / 16, threads=4)
    np.testing.assert_array_equal(one.n, four.n)
    np.testing.assert_array_equal(one.j, four.j)
    np.testing.assert_array_equal(one.j_faces[1], four.j_faces[1])


def test_empty_ensemble_deposits_nothing():
    ens = ParticleEnsemble(x=np.zeros((0, 3)), v=np.zeros((0, 3)), w=np.zeros(0))
    m = deposit_moments(ens, (8, 8, 8), 0.125)
    assert m.n.shape == (8, 8, 8)
    assert m.n.max() == 0.0
    assert support_radius(ens) == 0.0
    assert interpolate_velocity(tuple(np.zeros((8, 8, 8)) for _ in range(3)), ens.x, 0.125).shape == (0, 3)


def test_pusher_matches_closed_form(rng):
    for _ in range(100):
        kappa = 10 ** rng.uniform(0, 2)
        dt = 10 ** rng.uniform(-3, 0)
        x0, v0, U = rng.normal(size=(3, 3))
        X, V = char_closed_form(x0, v0, U, kappa, dt)
        xp, vp = exponential_update(x0[None], v0[None], U[None], kappa, dt)
        np.testing.assert_allclose(xp[0], X, rtol=1e-13, atol=1e-13)
        np.testing.assert_allclose(vp[0], V, rtol=1e-13, atol=1e-13)


def test_push_at_rest_decays_velocity(rng):
    ens = _ensemble(rng, 40, 3)
    out = push_particles(ens, np.zeros((40, 3)), 2.0, 0.1, length=1.0)
    np.testing.assert_allclose(out.v, ens.v * np.exp(-0.2), rtol=1e-14)
    assert out.x.min() >= 0.0 and out.x.max() < 1.0
    np.testing.assert_array_equal(out.w, ens.w)


def test_push_rejects_nonpositive_drag(rng):
    ens = _ensemble(rng, 4, 2)
    with pytest.raises(ValueError):
        push_particles(ens, np.zeros((4, 2)), 0.0, 0.1)


def test_support_radius():
    ens = ParticleEnsemble(x=np.zeros((2, 2)), v=np.array([[3.0, 4.0], [0.0, 1.0]]), w=np.ones(2))
    assert support_radius(ens) == pytest.approx(5.0)
