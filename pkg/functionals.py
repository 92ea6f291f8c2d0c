import math
from typing import NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.stats import wasserstein_distance

from fluid import velocity_gradient_norms
from grid import cell_centers, center_to_face, face_to_center, forward_diff
from kinetic import interpolate_velocity
from state import FluidState, MomentFields, ParticleEnsemble, TheoryConstants


def particle_energy(ensemble: ParticleEnsemble) -> float:
    return 0.5 * float(np.sum(ensemble.w * np.sum(ensemble.v * ensemble.v, axis=1)))


def fluid_energy(fluid: FluidState, h: float) -> float:
    uc = face_to_center(fluid.u)
    return 0.5 * float(np.sum(fluid.rho * np.sum(uc * uc, axis=0))) * h ** fluid.rho.ndim


def fluid_face_energy(fluid: FluidState, h: float) -> float:
    """1/2 sum_a rho_face u_a^2 h^d, the energy the implicit Stokes step controls."""
    d = fluid.rho.ndim
    return 0.5 * sum(float(np.sum(center_to_face(fluid.rho, a) * ua * ua)) for a, ua in enumerate(fluid.u)) * h ** d


def drag_work(moments: Optional[MomentFields], u, kappa: float, h: float) -> float:
    """Power the drag feeds into the fluid: kappa sum (j_f . u - n_f |u|^2) h^d on the face lattices."""
    if moments is None or moments.n_faces is None:
        return 0.0
    total = 0.0
    for a, ua in enumerate(u):
        total += float(np.sum(moments.j_faces[a] * ua - moments.n_faces[a] * ua * ua))
    return kappa * total * h ** len(u)


def energy(fluid: FluidState, ensemble: ParticleEnsemble, h: float) -> float:
    return fluid_energy(fluid, h) + particle_energy(ensemble)


def drag_mismatch(fluid: FluidState, ensemble: ParticleEnsemble, h: float) -> float:
    """sum_p w_p |u(x_p) - v_p|^2, the discrete ||sqrt(f)(u - v)||^2."""
    if ensemble.count == 0:
        return 0.0
    rel = interpolate_velocity(fluid.u, ensemble.x, h) - ensemble.v
    return float(np.sum(ensemble.w * np.sum(rel * rel, axis=1)))


def dissipation(fluid: FluidState, ensemble: ParticleEnsemble, mu: float, kappa: float, h: float) -> float:
    gradu_l2, _, _ = velocity_gradient_norms(fluid.u, h)
    return mu * gradu_l2 ** 2 + kappa * drag_mismatch(fluid, ensemble, h)


def high_dissipation(fluid: FluidState, u_prev, ensemble: ParticleEnsemble, dt: float,
                     kappa: float, h: float) -> float:
    # u_t is the backward difference (u - u_prev)/dt
    ut = face_to_center(tuple((a - b) / dt for a, b in zip(fluid.u, u_prev)))
    fluid_part = float(np.sum(fluid.rho * np.sum(ut * ut, axis=0))) * h ** fluid.rho.ndim
    return fluid_part + kappa ** 2 * drag_mismatch(fluid, ensemble, h)


def gradient_l2(q: np.ndarray, h: float) -> float:
    sq = sum(float(np.sum(forward_diff(q, a, h) ** 2)) for a in range(q.ndim))
    return math.sqrt(sq * h ** q.ndim)


def total_momentum(fluid: FluidState, ensemble: ParticleEnsemble, h: float) -> Tuple[float, float, float]:
    """Face-lattice fluid momentum sum rho_face u_a h^d plus particle momentum, padded to 3."""
    d = fluid.rho.ndim
    out = [0.0, 0.0, 0.0]
    for a, ua in enumerate(fluid.u):
        out[a] = float(np.sum(center_to_face(fluid.rho, a) * ua)) * h ** d
    if ensemble.count:
        pm = np.sum(ensemble.w[:, None] * ensemble.v, axis=0)
        for a in range(d):
            out[a] += float(pm[a])
    return out[0], out[1], out[2]


def moment_sups(moments: MomentFields) -> Tuple[float, float, float]:
    jmag = np.sqrt(np.sum(moments.j * moments.j, axis=0))
    return float(moments.n.max()), float(jmag.max()), float(moments.e.max())


class CeilingMargins(NamedTuple):
    n: float
    j: float
    e: float
    violated: bool


def moment_ceiling_check(moments: MomentFields, constants: TheoryConstants,
                         within_budget: bool = True) -> CeilingMargins:
    sup_n, sup_j, sup_e = moment_sups(moments)
    margins = (constants.ceiling_n - sup_n, constants.ceiling_j - sup_j, constants.ceiling_e - sup_e)
    violated = within_budget and min(margins) < 0.0
    return CeilingMargins(*margins, violated=violated)


class W1Check(NamedTuple):
    surrogate: float
    duality_bound: float
    holds: bool


def w1_to_dirac(ensemble: ParticleEnsemble, n_f: np.ndarray, energy_value: float, h: float) -> W1Check:
    """Transport cost from f to n_f x delta_{v=0} against the duality bound.

    The spatial marginals coincide, so the optimal plan keeps x and moves each velocity to 0:
    W1 = sum_p w_p |v_p| exactly.
    """
    surrogate = float(np.sum(ensemble.w * np.sqrt(np.sum(ensemble.v * ensemble.v, axis=1)))) if ensemble.count else 0.0
    mass = float(np.sum(n_f)) * h ** n_f.ndim
    bound = math.sqrt(2.0) * math.sqrt(max(mass, 0.0)) * math.sqrt(max(energy_value, 0.0))
    return W1Check(surrogate, bound, surrogate <= bound * (1.0 + 1e-10) + 1e-300)


def coercivity_ratio(energy_value: float, dissipation_value: float, alpha: float) -> float:
    """D / (2 alpha E); +inf when E = 0."""
    if energy_value <= 0.0:
        return math.inf
    return dissipation_value / (2.0 * alpha * energy_value)


class GradDensityCheck(NamedTuple):
    passed: bool
    margin: float


def grad_density_check(series, grad_rho0: Optional[float] = None) -> GradDensityCheck:
    col = series["gradrho_l2"] if isinstance(series, pd.DataFrame) else pd.Series([r.gradrho_l2 for r in series])
    values = col.to_numpy(dtype=float)
    g0 = float(values[0]) if grad_rho0 is None else grad_rho0
    margin = 2.0 * g0 - float(values.max())
    return GradDensityCheck(margin >= 0.0, margin)


def axis_marginals(n_f: np.ndarray, h: float) -> Tuple[np.ndarray, ...]:
    d = n_f.ndim
    out = []
    for a in range(d):
        others = tuple(b for b in range(d) if b != a)
        out.append(np.sum(n_f, axis=others) * h ** d if others else n_f * h)
    return tuple(out)


def axis_sliced_w1(marg_a: Sequence[np.ndarray], marg_b: Sequence[np.ndarray], h: float) -> float:
    """max over axes of the exact 1-D W1 between axis marginals (lower bound of the d-D W1)."""
    best = 0.0
    for ma, mb in zip(marg_a, marg_b):
        if ma.sum() <= 0.0 or mb.sum() <= 0.0:
            continue
        centers = cell_centers(ma.size, h)
        scale = ma.sum()
        best = max(best, scale * wasserstein_distance(centers, centers, ma, mb))
    return best
