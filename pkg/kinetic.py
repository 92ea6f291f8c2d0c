import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from grid import FaceField
from state import MomentFields, ParticleEnsemble

# Deposition chunk size; fixed so the merge order never depends on the worker count.
CHUNK = 16384


@dataclass(frozen=True)
class CharacteristicState:
    x: np.ndarray
    v: np.ndarray
    u_p: np.ndarray


def _stencil(x: np.ndarray, h: float, n: int, offset: Sequence[float]):
    """CIC corners for lattice nodes at (i + offset_a) h: yields (flat index, weight)."""
    d = x.shape[1]
    s = x / h - np.asarray(offset, dtype=float)
    i0 = np.floor(s)
    frac = s - i0
    i0 = i0.astype(np.int64)
    for corner in itertools.product((0, 1), repeat=d):
        flat = np.zeros(x.shape[0], dtype=np.int64)
        wt = np.ones(x.shape[0])
        for a, c in enumerate(corner):
            flat = flat * n + np.mod(i0[:, a] + c, n)
            wt = wt * (frac[:, a] if c else 1.0 - frac[:, a])
        yield flat, wt


def _offsets(d: int, axis: Optional[int]) -> Tuple[float, ...]:
    return tuple(0.0 if b == axis else 0.5 for b in range(d))


def interpolate_grid(g: np.ndarray, x: np.ndarray, h: float, axis: Optional[int] = None) -> np.ndarray:
    """Multilinear interpolation of a lattice field (cell centers, or faces normal to `axis`)."""
    n = g.shape[0]
    flat_g = g.reshape(-1)
    out = np.zeros(x.shape[0])
    for flat, wt in _stencil(x, h, n, _offsets(x.shape[1], axis)):
        out += wt * flat_g[flat]
    return out


def interpolate_velocity(u: FaceField, x: np.ndarray, h: float) -> np.ndarray:
    if x.shape[0] == 0:
        return np.zeros((0, len(u)))
    return np.stack([interpolate_grid(comp, x, h, axis=a) for a, comp in enumerate(u)], axis=1)


def _deposit_chunk(x: np.ndarray, q: np.ndarray, n: int, d: int, h: float, axis: Optional[int]) -> np.ndarray:
    size = n ** d
    out = np.zeros((q.shape[1], size))
    for flat, wt in _stencil(x, h, n, _offsets(d, axis)):
        for k in range(q.shape[1]):
            out[k] += np.bincount(flat, weights=wt * q[:, k], minlength=size)
    return out


def deposit_grid(x: np.ndarray, q: np.ndarray, shape: Tuple[int, ...], h: float,
                 axis: Optional[int] = None, threads: int = 1) -> np.ndarray:
    """Deposit per-particle quantities q (N_p, k) as densities on a lattice; returns (k, *shape).

    Particles are split in fixed CHUNK-sized blocks, each deposited into a private grid,
    and the private grids are merged in block order.
    """
    n, d = shape[0], len(shape)
    if x.shape[0] == 0:
        return np.zeros((q.shape[1],) + tuple(shape))
    starts = list(range(0, x.shape[0], CHUNK))

    def work(s):
        return _deposit_chunk(x[s:s + CHUNK], q[s:s + CHUNK], n, d, h, axis)

    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, starts))
    else:
        parts = [work(s) for s in starts]
    total = parts[0]
    for part in parts[1:]:
        total = total + part
    return total.reshape((q.shape[1],) + tuple(shape)) / h ** d


def deposit_moments(ensemble: ParticleEnsemble, shape: Tuple[int, ...], h: float,
                    threads: int = 1, faces: bool = True) -> MomentFields:
    d = len(shape)
    x, v, w = ensemble.x, ensemble.v, ensemble.w
    if x.shape[0] == 0:
        x = np.zeros((0, d))
        v = np.zeros((0, d))
    q = np.column_stack([w, w[:, None] * v, 0.5 * w * np.sum(v * v, axis=1)]) if w.size else np.zeros((0, d + 2))
    cell = deposit_grid(x, q, shape, h, axis=None, threads=threads)
    n_faces = j_faces = None
    if faces:
        n_list: List[np.ndarray] = []
        j_list: List[np.ndarray] = []
        for a in range(d):
            qa = np.column_stack([w, w * v[:, a]]) if w.size else np.zeros((0, 2))
            grids = deposit_grid(x, qa, shape, h, axis=a, threads=threads)
            n_list.append(grids[0])
            j_list.append(grids[1])
        n_faces, j_faces = tuple(n_list), tuple(j_list)
    return MomentFields(n=cell[0], j=cell[1:1 + d], e=cell[1 + d], n_faces=n_faces, j_faces=j_faces)


def characteristic_state(ensemble: ParticleEnsemble, u: FaceField, h: float) -> CharacteristicState:
    return CharacteristicState(x=ensemble.x, v=ensemble.v, u_p=interpolate_velocity(u, ensemble.x, h))


def exponential_update(x: np.ndarray, v: np.ndarray, u_p: np.ndarray, kappa: float, dt: float,
                       length: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Exact solution of X' = V, V' = kappa (u_p - V) over dt with u_p frozen."""
    decay = np.exp(-kappa * dt)
    gain = -np.expm1(-kappa * dt) / kappa
    rel = v - u_p
    v_new = u_p + rel * decay
    x_new = x + u_p * dt + rel * gain
    if length is not None:
        x_new = np.mod(x_new, length)
        # np.mod can return `length` itself for tiny negative inputs
        x_new[x_new >= length] = 0.0
    return x_new, v_new


def push_particles(ensemble: ParticleEnsemble, u_p: np.ndarray, kappa: float, dt: float,
                   length: Optional[float] = None) -> ParticleEnsemble:
    if kappa <= 0:
        raise ValueError("drag coefficient must be positive")
    if ensemble.count == 0:
        return ensemble
    x_new, v_new = exponential_update(ensemble.x, ensemble.v, u_p, kappa, dt, length)
    return ensemble.with_(x=x_new, v=v_new)


def support_radius(ensemble: ParticleEnsemble) -> float:
    if ensemble.count == 0:
        return 0.0
    return float(np.sqrt(np.max(np.sum(ensemble.v * ensemble.v, axis=1))))
