import math
import logging
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
import pandas as pd
from scipy import integrate
from scipy.stats import qmc

from config import SimConfig
from errors import ConfigError, SupportError
from fluid import velocity_gradient_norms
from functionals import drag_mismatch, energy
from grid import FaceField, Spectral, center_coords, grid_norm
from state import FluidState, ParticleEnsemble
from theory import InitialNorms

SCENARIOS = ("vacuum-blob", "uniform", "custom-table")


@dataclass(frozen=True)
class InitialData:
    fluid: FluidState
    ensemble: ParticleEnsemble
    norms: InitialNorms
    scenario: str


def radial_profile(name: str) -> Callable[[np.ndarray], np.ndarray]:
    if name == "top-hat":
        return lambda s: np.where(np.asarray(s) <= 1.0, 1.0, 0.0)
    if name == "bump":
        return lambda s: np.where(np.asarray(s) <= 1.0, (1.0 - np.minimum(np.asarray(s), 1.0) ** 2) ** 2, 0.0)
    raise ValueError(f"unknown profile {name}")


def ball_mass(profile: str, d: int, radius: float) -> float:
    """Integral over R^d of phi(|x|/radius)."""
    phi = radial_profile(profile)
    radial, _ = integrate.quad(lambda s: float(phi(s)) * s ** (d - 1), 0.0, 1.0)
    unit_ball = math.pi ** (d / 2) / math.gamma(d / 2 + 1)
    return d * unit_ball * radius ** d * radial


def read_table(path: str, d: int, n: int, h: float, key: str) -> np.ndarray:
    """Cell-valued field from a CSV with header x1,x2[,x3],value (points binned to cells)."""
    try:
        df = pd.read_csv(path)
    except (OSError, pd.errors.ParserError) as e:
        raise ConfigError(key, f"cannot read table {path}: {e}") from None
    cols = [f"x{a + 1}" for a in range(d)] + ["value"]
    missing = [c for c in cols if c not in df.columns]
    if missing:
        raise ConfigError(key, f"table {path} lacks columns {missing}")
    for c in cols:
        df[c] = pd.to_numeric(df[c], errors="coerce")
    df = df.dropna(subset=cols)
    if (df["value"] < 0).any():
        raise ConfigError(key, f"table {path} has negative values")
    idx = tuple(np.mod(np.floor(df[f"x{a + 1}"].to_numpy() / h).astype(np.int64), n) for a in range(d))
    grid = np.zeros((n,) * d)
    np.add.at(grid, idx, df["value"].to_numpy(dtype=float))
    return grid


def _touches_boundary(q: np.ndarray) -> bool:
    for a in range(q.ndim):
        if np.any(np.take(q, 0, axis=a) > 0) or np.any(np.take(q, q.shape[a] - 1, axis=a) > 0):
            return True
    return False


def initial_density(config: SimConfig, scenario: str) -> np.ndarray:
    n, d, h, L = config.domain.cells, config.d, config.h, config.domain.length
    rho_max = config.fluid.rho_max
    if scenario == "uniform":
        return np.full((n,) * d, rho_max)
    if scenario == "custom-table":
        if not config.fluid.density_table:
            raise ConfigError("fluid.density_table", "custom-table scenario needs a density table")
        rho = read_table(config.fluid.density_table, d, n, h, "fluid.density_table")
        if rho.max() > rho_max * (1 + 1e-12):
            raise ConfigError("fluid.density_table", f"table maximum {rho.max():.6g} exceeds rho_max {rho_max}")
    else:
        coords = center_coords(n, h, d)
        r = np.sqrt(sum((c - 0.5 * L) ** 2 for c in coords))
        R = config.fluid.blob_radius * L
        taper = 0.5 * (1.0 + np.cos(np.pi * np.clip(2.0 * r / R - 1.0, 0.0, 1.0)))
        rho = rho_max * np.where(r <= 0.5 * R, 1.0, np.where(r < R, taper, 0.0))
    if _touches_boundary(rho):
        raise SupportError("initial density support reaches the box boundary")
    return rho


def initial_velocity(config: SimConfig, spectral: Spectral) -> FaceField:
    n, d, h, L = config.domain.cells, config.d, config.h, config.domain.length
    amp = config.fluid.velocity_amplitude
    zeros = tuple(np.zeros((n,) * d) for _ in range(d))
    profile = config.fluid.velocity_profile
    if config.fluid.freeze_velocity or profile == "zero" or amp == 0.0:
        return zeros
    if profile == "shear":
        x2 = (np.arange(n) + 0.5) * h
        view = [1] * d
        view[1] = n
        u1 = amp * np.sin(2 * np.pi * x2 / L).reshape(view) * np.ones((n,) * d)
        return (u1,) + zeros[1:]
    # vortex: u = curl(0, 0, psi) from a compactly supported stream function on nodes
    axes = [np.arange(n) * h, np.arange(n) * h] + [(np.arange(n) + 0.5) * h] * (d - 2)
    coords = np.meshgrid(*axes, indexing="ij", sparse=True)
    R = config.fluid.blob_radius * L
    s = np.sqrt(sum((c - 0.5 * L) ** 2 for c in coords)) / R
    psi = np.where(s < 1.0, (1.0 - np.minimum(s, 1.0) ** 2) ** 3, 0.0)
    u1 = (np.roll(psi, -1, axis=1) - psi) / h
    u2 = -(np.roll(psi, -1, axis=0) - psi) / h
    peak = max(np.abs(u1).max(), np.abs(u2).max())
    u = (u1 * amp / peak, u2 * amp / peak) + zeros[2:]
    return spectral.project(u)


def _sample_ball(sampler: qmc.Halton, count: int, d: int, profile: str, radius: float,
                 cols: Tuple[int, int]) -> np.ndarray:
    """Deterministic rejection sampling of phi(|x|/radius) from the low-discrepancy stream."""
    phi = radial_profile(profile)
    out = []
    got = 0
    while got < count:
        q = sampler.random(max(2 * (count - got), 256))
        pts = 2.0 * q[:, cols[0]:cols[0] + d] - 1.0
        s = np.sqrt(np.sum(pts * pts, axis=1))
        keep = (s <= 1.0) & (q[:, cols[1]] <= phi(s))
        out.append(radius * pts[keep])
        got += int(keep.sum())
    return np.concatenate(out)[:count]


def _sample_table(sampler: qmc.Halton, count: int, table: np.ndarray, h: float) -> np.ndarray:
    d = table.ndim
    cdf = np.cumsum(table.reshape(-1))
    cdf = cdf / cdf[-1]
    q = sampler.random(count)
    flat = np.searchsorted(cdf, q[:, 0], side="right")
    flat = np.minimum(flat, cdf.size - 1)
    cells = np.stack(np.unravel_index(flat, table.shape), axis=1)
    return (cells + q[:, 1:1 + d]) * h


def initial_particles(config: SimConfig) -> Tuple[ParticleEnsemble, float]:
    """Returns the ensemble and sup_x n_0 of the requested spatial profile."""
    n, d, h, L = config.domain.cells, config.d, config.h, config.domain.length
    k = config.kinetic
    if k.mass == 0.0:
        return ParticleEnsemble(x=np.zeros((0, d)), v=np.zeros((0, d)), w=np.zeros(0), r0=0.0), 0.0
    sampler = qmc.Halton(d=2 * d + 3, scramble=True, seed=config.domain.seed)
    center = np.full(d, 0.5 * L)
    half = k.particles // 2 if k.symmetrize else k.particles
    table = None
    if k.density_table:
        table = read_table(k.density_table, d, n, h, "kinetic.density_table")
        if _touches_boundary(table):
            raise SupportError("initial particle support reaches the box boundary")
        sup_n0 = k.mass * table.max() / (table.sum() * h ** d)
    else:
        rx = k.blob_radius * L
        if rx > 0.5 * L - h:
            raise SupportError("initial particle support reaches the box boundary")
        sup_n0 = k.mass / ball_mass(k.profile, d, rx)
    if half:
        if table is not None:
            x = _sample_table(sampler, half, table, h)
        else:
            x = center + _sample_ball(sampler, half, d, k.profile, k.blob_radius * L, (0, 2 * d + 1))
        v = _sample_ball(sampler, half, d, k.profile, k.velocity_radius, (d, 2 * d + 2))
    else:
        x, v = np.zeros((0, d)), np.zeros((0, d))
    if k.symmetrize:
        x = np.concatenate([x, 2.0 * center - x])
        v = np.concatenate([v, -v])
        if k.particles % 2:
            x = np.concatenate([x, center[None, :]])
            v = np.concatenate([v, np.zeros((1, d))])
    if k.drift:
        v = v + np.asarray(k.drift, dtype=float)
    x = np.mod(x, L)
    w = np.full(x.shape[0], k.mass / x.shape[0])
    r0 = float(np.sqrt(np.max(np.sum(v * v, axis=1))))
    return ParticleEnsemble(x=x, v=v, w=w, r0=r0), float(sup_n0)


def make_initial_data(config: SimConfig, scenario: Optional[str] = None, threads: int = 1) -> InitialData:
    scenario = scenario or config.domain.scenario
    if scenario not in SCENARIOS:
        raise ConfigError("domain.scenario", f"unknown scenario {scenario}")
    n, d, h = config.domain.cells, config.d, config.h
    spectral = Spectral(n, d, h, threads)
    rho = initial_density(config, scenario)
    u = initial_velocity(config, spectral)
    fluid = FluidState(rho=rho, u=u, p=np.zeros((n,) * d), t=0.0)
    ensemble, sup_n0 = initial_particles(config)

    if ensemble.count:
        speed = np.sqrt(np.sum(ensemble.v * ensemble.v, axis=1))
        mean_v1 = float(np.sum(ensemble.w * speed) / ensemble.w.sum())
        mean_v2 = float(np.sum(ensemble.w * speed ** 2) / ensemble.w.sum())
    else:
        mean_v1 = mean_v2 = 0.0
    gradu_l2, _, _ = velocity_gradient_norms(u, h)
    norms = InitialNorms(
        e0=energy(fluid, ensemble, h),
        m0=gradu_l2 ** 2 + drag_mismatch(fluid, ensemble, h),
        rho_l32=grid_norm(rho, 1.5, h),
        f_l1=float(ensemble.w.sum()),
        f_l1_linf=sup_n0,
        f_l1_linf_v1=sup_n0 * (1.0 + mean_v1),
        f_l1_linf_v2=sup_n0 * (1.0 + mean_v2),
    )
    logging.info(f"Initial data [{scenario}]: E0={norms.e0:.6g} M={norms.m0:.6g} "
                 f"particles={ensemble.count} R0={ensemble.r0:.4g}")
    return InitialData(fluid=fluid, ensemble=ensemble, norms=norms, scenario=scenario)
