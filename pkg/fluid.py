"""Fluid substeps: conservative upwind transport of rho and rho*u, then the generalized
Stokes problem (c I - mu lap) u + grad P = b, div u = 0 with c >= 0 allowed to vanish.

The Stokes problem is solved in its null-space form: the velocity iteration stays in the
discretely divergence-free subspace (Leray projection by fast transform, which is the
exact constant-coefficient pressure Poisson solve on the periodic MAC grid), so it is the
pressure Schur-complement iteration with the projection eliminating the pressure. The
Krylov method is preconditioned conjugate residuals with the constant-coefficient
inverse (cbar + mu lam)^{-1}; its M-norm residual is non-increasing by construction.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from errors import CFLViolation, SolverDivergence
from grid import (FaceField, Spectral, center_to_face, check_face_field, divergence,
                  face_to_center, forward_diff, laplacian)
from state import MomentFields


def courant_number(u: FaceField, dt: float, h: float) -> float:
    out = np.zeros_like(u[0])
    for a, comp in enumerate(u):
        out += np.maximum(np.roll(comp, -1, axis=a), 0.0) + np.maximum(-comp, 0.0)
    return float(out.max()) * dt / h


def _check_cfl(u: FaceField, dt: float, h: float):
    c = courant_number(u, dt, h)
    if c > 1.0 + 1e-12:
        raise CFLViolation(c)


def mass_fluxes(rho: np.ndarray, u: FaceField) -> FaceField:
    """Upwind mass flux through the low face of every cell along each axis."""
    return tuple(np.maximum(comp, 0.0) * np.roll(rho, 1, axis=a) + np.minimum(comp, 0.0) * rho
                 for a, comp in enumerate(u))


def advect_density(rho: np.ndarray, u: FaceField, dt: float, h: float) -> np.ndarray:
    _check_cfl(u, dt, h)
    out = rho.copy()
    for a, flux in enumerate(mass_fluxes(rho, u)):
        out -= (dt / h) * (np.roll(flux, -1, axis=a) - flux)
    return out


def transport_momentum(rho: np.ndarray, u: FaceField, dt: float, h: float) -> FaceField:
    """Upwind transport of the face momentum rho_face*u_a using the averaged cell mass fluxes.

    The staggered control volume of face i is the union of the halves of cells i-e_a and i,
    so its mass fluxes are averages of the cell fluxes and its mass update reproduces the
    face average of advect_density exactly.
    """
    _check_cfl(u, dt, h)
    F = mass_fluxes(rho, u)
    lam = dt / h
    out = []
    for a, ua in enumerate(u):
        m = center_to_face(rho, a) * ua
        for b in range(len(u)):
            if b == a:
                fc = 0.5 * (F[a] + np.roll(F[a], -1, axis=a))
                up = np.where(fc >= 0.0, ua, np.roll(ua, -1, axis=a))
                g = fc * up
                m = m - lam * (g - np.roll(g, 1, axis=a))
            else:
                ft = 0.5 * (np.roll(F[b], 1, axis=a) + F[b])
                up = np.where(ft >= 0.0, np.roll(ua, 1, axis=b), ua)
                g = ft * up
                m = m - lam * (np.roll(g, -1, axis=b) - g)
        out.append(m)
    return tuple(out)


@dataclass(frozen=True)
class StokesSystem:
    c_faces: FaceField      # rho/dt + kappa n_f on each face lattice, >= 0
    mu: float
    b: FaceField            # transported momentum / dt + kappa j_f
    h: float
    c: Optional[np.ndarray] = None   # cell-centered coefficient, for reporting

    @property
    def shape(self):
        return self.b[0].shape


def build_stokes_system(rho: np.ndarray, m_tilde: FaceField, moments: Optional[MomentFields],
                        dt: float, kappa: float, mu: float, h: float) -> StokesSystem:
    d = rho.ndim
    c_faces, b = [], []
    for a in range(d):
        ca = center_to_face(rho, a) / dt
        ba = m_tilde[a] / dt
        if moments is not None and moments.n_faces is not None:
            ca = ca + kappa * moments.n_faces[a]
            ba = ba + kappa * moments.j_faces[a]
        c_faces.append(ca)
        b.append(ba)
    c = rho / dt + (kappa * moments.n if moments is not None else 0.0)
    return StokesSystem(c_faces=tuple(c_faces), mu=mu, b=tuple(b), h=h, c=c)


@dataclass
class StokesResult:
    u: FaceField
    p: np.ndarray
    iters: int
    residual: float
    div_linf: float
    history: List[float] = field(default_factory=list)
    div_ok: bool = True      # div_linf <= eps_div


def _dot(x: FaceField, y: FaceField) -> float:
    return float(sum(np.sum(a * b) for a, b in zip(x, y)))


def _axpy(alpha: float, x: FaceField, y: FaceField) -> FaceField:
    return tuple(yy + alpha * xx for xx, yy in zip(x, y))


def stokes_drag_solve(system: StokesSystem, eps_lin: float, eps_div: float, max_iters: int = 500,
                      u0: Optional[FaceField] = None, project: bool = True,
                      workers: int = 1) -> StokesResult:
    b = system.b
    d = len(b)
    n = b[0].shape[0]
    h, mu = system.h, system.mu
    spec = Spectral(n, d, h, workers)
    cbar = float(np.mean([c.mean() for c in system.c_faces]))
    degenerate = max(float(c.max()) for c in system.c_faces) == 0.0

    inv = 1.0 / (cbar + mu * spec.lam_safe)
    inv[spec.zero] = 1.0 / cbar if cbar > 0 else 0.0

    def constrain(y: FaceField) -> FaceField:
        if project:
            y = spec.project(y)
        if degenerate:
            y = tuple(c - c.mean() for c in y)
        return y

    def apply_a(x: FaceField) -> FaceField:
        return tuple(c * xa - mu * laplacian(xa, h) for c, xa in zip(system.c_faces, x))

    def precond(r: FaceField) -> FaceField:
        return tuple(spec.inverse(spec.forward(ra) * inv) for ra in r)

    bnorm = np.sqrt(_dot(b, b))
    zeros = tuple(np.zeros_like(c) for c in b)
    if bnorm == 0.0:
        return StokesResult(u=zeros, p=np.zeros_like(b[0]), iters=0, residual=0.0, div_linf=0.0)

    x = constrain(u0) if u0 is not None else zeros
    iters = 0
    history: List[float] = []
    pb = constrain(b)
    m_norm = np.sqrt(max(_dot(pb, precond(pb)), 1e-300))
    residual = np.inf
    while True:
        r = constrain(_axpy(-1.0, apply_a(x), b))
        residual = np.sqrt(_dot(r, r)) / bnorm
        if residual <= eps_lin:
            break
        if iters >= max_iters:
            raise SolverDivergence(iters, residual)
        z = precond(r)
        az = constrain(apply_a(z))
        pdir, ap = z, az
        zaz = _dot(z, az)
        start = iters
        while iters < max_iters:
            map_ = precond(ap)
            denom = _dot(ap, map_)
            if denom <= 0.0 or zaz <= 0.0:
                break
            alpha = zaz / denom
            x = _axpy(alpha, pdir, x)
            r = _axpy(-alpha, ap, r)
            z = _axpy(-alpha, map_, z)
            iters += 1
            history.append(np.sqrt(max(_dot(r, z), 0.0)) / m_norm)
            if np.sqrt(_dot(r, r)) / bnorm <= eps_lin:
                break
            az = constrain(apply_a(z))
            zaz_new = _dot(z, az)
            beta = zaz_new / zaz
            zaz = zaz_new
            pdir = _axpy(beta, pdir, z)
            ap = _axpy(beta, ap, az)
        # loop back: recompute the true residual and restart if recursion drifted
        if iters == start:
            raise SolverDivergence(iters, residual)
        if iters >= max_iters:
            r = constrain(_axpy(-1.0, apply_a(x), b))
            residual = np.sqrt(_dot(r, r)) / bnorm
            if residual > eps_lin:
                raise SolverDivergence(iters, residual)
            break

    u = constrain(x)
    if project:
        y = _axpy(-1.0, apply_a(u), b)
        p = spec.pressure_from_hat([spec.forward(ya) for ya in y])
    else:
        p = np.zeros_like(b[0])
    div_linf = float(np.abs(divergence(u, h)).max())
    div_ok = div_linf <= eps_div
    if not div_ok:
        logging.warning(f"Stokes solve: |div u| = {div_linf:.3e} exceeds div_tol {eps_div:.1e}")
    return StokesResult(u=u, p=p, iters=iters, residual=float(residual), div_linf=div_linf,
                        history=history, div_ok=div_ok)


def velocity_gradient_norms(u: FaceField, h: float) -> Tuple[float, float, float]:
    """(||grad u||_L2, ||grad u||_Linf, ||u||_Linf) with staggered-native differences."""
    check_face_field(u)
    d = len(u)
    sq = 0.0
    gmax = 0.0
    for ua in u:
        for b in range(d):
            g = forward_diff(ua, b, h)
            sq += float(np.sum(g * g))
            gmax = max(gmax, float(np.abs(g).max()))
    l2 = np.sqrt(sq * h ** d)
    umax = float(np.sqrt(np.sum(face_to_center(u) ** 2, axis=0)).max())
    return float(l2), gmax, umax


def hessian_l2(u: FaceField, h: float) -> float:
    d = len(u)
    sq = 0.0
    for ua in u:
        for b in range(d):
            gb = forward_diff(ua, b, h)
            for c in range(d):
                g = forward_diff(gb, c, h)
                sq += float(np.sum(g * g))
    return float(np.sqrt(sq * h ** d))
