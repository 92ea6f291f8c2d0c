import math

import numpy as np
import pandas as pd
import pytest

from functionals import (axis_marginals, axis_sliced_w1, coercivity_ratio, dissipation, drag_work,
                         energy, fluid_face_energy, grad_density_check, high_dissipation,
                         moment_ceiling_check, total_momentum, w1_to_dirac)
from grid import face_coords
from kinetic import deposit_moments
from state import FluidState, MomentFields, ParticleEnsemble, TheoryConstants


def _fluid(n, d, rho=0.0, u=None):
    u = u if u is not None else tuple(np.zeros((n,) * d) for _ in range(d))
    return FluidState(rho=np.full((n,) * d, float(rho)), u=u, p=np.zeros((n,) * d))


def _one(v, w=1.0, x=None):
    v = np.atleast_2d(np.asarray(v, dtype=float))
    x = np.full_like(v, 0.5) if x is None else np.atleast_2d(np.asarray(x, dtype=float))
    return ParticleEnsemble(x=x, v=v, w=np.full(v.shape[0], float(w)))


def _none(d):
    return ParticleEnsemble(x=np.zeros((0, d)), v=np.zeros((0, d)), w=np.zeros(0))


def _shear(n):
    X = face_coords(n, 1.0 / n, 2, 0)
    return (np.sin(2 * np.pi * X[1]) * np.ones((n, n)), np.zeros((n, n)))


def test_energy_of_single_particle():
    assert energy(_fluid(8, 3), _one([2.0, 0.0, 0.0]), 0.125) == pytest.approx(2.0)


def test_energy_of_empty_state():
    assert energy(_fluid(8, 3, rho=1.0), _none(3), 0.125) == 0.0


def test_energy_of_shear_flow():
    n = 32
    assert energy(_fluid(n, 2, rho=1.0, u=_shear(n)), _none(2), 1.0 / n) == pytest.approx(0.25, rel=1e-12)


def test_dissipation_of_drag_only():
    D = dissipation(_fluid(8, 3), _one([1.0, 0.0, 0.0]), mu=1.0, kappa=2.0, h=0.125)
    assert D == pytest.approx(2.0)


def test_dissipation_vanishes_for_rigid_alignment():
    n = 8
    u = (np.full((n, n), 0.3), np.full((n, n), -0.2))
    ens = _one([[0.3, -0.2], [0.3, -0.2]], w=0.5, x=[[0.1, 0.7], [0.6, 0.3]])
    assert dissipation(_fluid(n, 2, rho=1.0, u=u), ens, mu=1.0, kappa=3.0, h=1.0 / n) == pytest.approx(0.0, abs=1e-28)


def test_high_dissipation_of_drag_only():
    fluid = _fluid(8, 3)
    val = high_dissipation(fluid, fluid.u, _one([1.0, 0.0, 0.0]), dt=0.01, kappa=3.0, h=0.125)
    assert val == pytest.approx(9.0)


def test_high_dissipation_of_steady_aligned_state():
    n = 8
    u = (np.full((n, n), 0.3), np.full((n, n), 0.1))
    fluid = _fluid(n, 2, rho=1.0, u=u)
    assert high_dissipation(fluid, u, _one([0.3, 0.1]), dt=0.01, kappa=1.0, h=1.0 / n) == pytest.approx(0.0, abs=1e-28)


def test_total_momentum():
    n = 8
    u = (np.full((n, n), 0.1), np.full((n, n), 0.2))
    mom = total_momentum(_fluid(n, 2, rho=1.0, u=u), _one([1.0, 0.0], w=0.5), 1.0 / n)
    assert mom == pytest.approx((0.6, 0.2, 0.0))


def _constants(**kw):
    base = dict(alpha=0.25, alpha1=0.25, alpha2=0.0625, c_star=0.0, sigma=0.0, ceiling_n=1.0,
                ceiling_j=2.0, ceiling_e=3.0, e0=0.0, m0=0.0, rho_l32=0.0, f_l1=0.0, f_l1_linf=0.0)
    base.update(kw)
    return TheoryConstants(**base)


def test_ceiling_margins_without_particles():
    m = deposit_moments(_none(2), (8, 8), 0.125)
    margins = moment_ceiling_check(m, _constants())
    assert (margins.n, margins.j, margins.e) == (1.0, 2.0, 3.0)
    assert not margins.violated


def test_ceiling_violation_only_flagged_within_budget():
    m = deposit_moments(_one([1.0, 0.0], w=1.0), (8, 8), 0.125)
    assert moment_ceiling_check(m, _constants(), within_budget=True).violated
    assert not moment_ceiling_check(m, _constants(), within_budget=False).violated


def test_w1_to_dirac_two_particles():
    ens = ParticleEnsemble(x=np.array([[0.2, 0.2], [0.7, 0.4]]), v=np.array([[1.0, 0.0], [0.0, -1.0]]),
                           w=np.array([0.5, 0.5]))
    n_f = deposit_moments(ens, (8, 8), 0.125).n
    check = w1_to_dirac(ens, n_f, energy(_fluid(8, 2), ens, 0.125), 0.125)
    assert check.surrogate == pytest.approx(1.0)
    assert check.duality_bound == pytest.approx(1.0)
    assert check.holds


def test_w1_to_dirac_at_rest():
    ens = _one([[0.0, 0.0]], w=1.0)
    check = w1_to_dirac(ens, deposit_moments(ens, (8, 8), 0.125).n, 0.0, 0.125)
    assert check.surrogate == 0.0
    assert check.holds


def test_coercivity_ratio():
    assert math.isinf(coercivity_ratio(0.0, 1.0, 0.5))
    assert coercivity_ratio(2.0, 2.0, 0.5) == pytest.approx(1.0, rel=1e-12)


def test_grad_density_check():
    flat = pd.DataFrame({"gradrho_l2": [0.0, 0.0, 0.0]})
    assert grad_density_check(flat).passed
    steady = pd.DataFrame({"gradrho_l2": [1.0, 1.5, 1.9]})
    assert grad_density_check(steady).passed
    assert not grad_density_check(pd.DataFrame({"gradrho_l2": [1.0, 2.5]})).passed


def test_axis_sliced_w1_of_shifted_spike():
    n = 8
    h = 1.0 / n
    a = np.zeros((n, n))
    b = np.zeros((n, n))
    a[2, 4] = 1.0 / h ** 2
    b[3, 4] = 1.0 / h ** 2
    assert axis_sliced_w1(axis_marginals(a, h), axis_marginals(b, h), h) == pytest.approx(h)
    assert axis_sliced_w1(axis_marginals(a, h), axis_marginals(a, h), h) == 0.0


def test_energy_and_dissipation_scale_quadratically(rng):
    n, d, c = 8, 2, -2.5
    x = rng.uniform(0.0, 1.0, (6, d))
    v = rng.normal(size=(6, d))
    ens = ParticleEnsemble(x=x, v=v, w=np.full(6, 0.2))
    fluid = _fluid(n, d, rho=0.7, u=_shear(n))
    scaled_ens = ens.with_(v=c * v)
    scaled_fluid = fluid.with_(u=tuple(c * a for a in fluid.u))
    h = 1.0 / n
    assert energy(scaled_fluid, scaled_ens, h) == pytest.approx(c ** 2 * energy(fluid, ens, h), rel=1e-12)
    assert dissipation(scaled_fluid, scaled_ens, 0.3, 2.0, h) == pytest.approx(
        c ** 2 * dissipation(fluid, ens, 0.3, 2.0, h), rel=1e-12)


def test_drag_work_and_face_energy():
    n, d = 4, 2
    h = 1.0 / n
    u = (np.full((n, n), 2.0), np.zeros((n, n)))
    ones = np.ones((n, n))
    moments = MomentFields(n=ones, j=np.zeros((d, n, n)), e=ones, n_faces=(ones, ones),
                           j_faces=(3.0 * ones, ones))
    # kappa * (j . u - n |u|^2) = 0.5 * (3*2 - 1*4) per unit area
    assert drag_work(moments, u, 0.5, h) == pytest.approx(1.0)
    assert drag_work(None, u, 0.5, h) == 0.0
    assert fluid_face_energy(_fluid(n, d, rho=0.5, u=u), h) == pytest.approx(1.0)
