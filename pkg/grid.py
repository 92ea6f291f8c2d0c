"""Periodic MAC-grid helpers shared by the fluid and kinetic solvers.

Layout: cell-centered scalars are arrays of shape (N,)*d indexed 'ij' (axis a is x_{a+1}),
cell i centered at (i+1/2)h. Velocity component a lives on the faces normal to axis a:
entry i sits at x_a = i*h, the other coordinates at cell centers. A face field is a tuple
of d such arrays. All reductions are np.sum over C-ordered arrays (pairwise summation),
so results are run-to-run identical for a given grid.
"""
from typing import Sequence, Tuple, Union

import numpy as np
import scipy.fft

from errors import NaNDetected

FaceField = Tuple[np.ndarray, ...]
Field = Union[np.ndarray, FaceField]


def _check_finite(arr: np.ndarray, where: str):
    bad = ~np.isfinite(arr)
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise NaNDetected(where, index=idx)


def check_face_field(u: FaceField, where: str = "velocity"):
    for a, comp in enumerate(u):
        _check_finite(comp, f"{where} component {a + 1}")


def face_to_center(u: FaceField) -> np.ndarray:
    """Average each face component to cell centers; returns shape (d, N, ..., N)."""
    return np.stack([0.5 * (comp + np.roll(comp, -1, axis=a)) for a, comp in enumerate(u)])


def center_to_face(q: np.ndarray, axis: int) -> np.ndarray:
    """Average a cell-centered scalar onto the faces normal to `axis`."""
    return 0.5 * (q + np.roll(q, 1, axis=axis))


def grid_norm(field: Field, p: float, h: float) -> float:
    if isinstance(field, (tuple, list)):
        check_face_field(tuple(field), "field")
        g = np.sqrt(np.sum(face_to_center(tuple(field)) ** 2, axis=0))
    else:
        _check_finite(field, "field")
        g = np.abs(field)
    if np.isinf(p):
        return float(g.max()) if g.size else 0.0
    d = g.ndim
    return float(np.sum(g ** p) * h ** d) ** (1.0 / p)


def divergence(u: FaceField, h: float) -> np.ndarray:
    out = np.zeros_like(u[0])
    for a, comp in enumerate(u):
        out += (np.roll(comp, -1, axis=a) - comp) / h
    return out


def gradient(p: np.ndarray, h: float) -> FaceField:
    return tuple((p - np.roll(p, 1, axis=a)) / h for a in range(p.ndim))


def laplacian(q: np.ndarray, h: float) -> np.ndarray:
    out = -2.0 * q.ndim * q
    for b in range(q.ndim):
        out = out + np.roll(q, -1, axis=b) + np.roll(q, 1, axis=b)
    return out / (h * h)


def forward_diff(q: np.ndarray, axis: int, h: float) -> np.ndarray:
    return (np.roll(q, -1, axis=axis) - q) / h


def cell_centers(n: int, h: float) -> np.ndarray:
    return (np.arange(n) + 0.5) * h


def face_coords(n: int, h: float, d: int, axis: int) -> Tuple[np.ndarray, ...]:
    """Open meshgrid of the physical coordinates of the faces normal to `axis`."""
    axes = [np.arange(n) * h if b == axis else cell_centers(n, h) for b in range(d)]
    return tuple(np.meshgrid(*axes, indexing="ij", sparse=True))


def center_coords(n: int, h: float, d: int) -> Tuple[np.ndarray, ...]:
    return tuple(np.meshgrid(*([cell_centers(n, h)] * d), indexing="ij", sparse=True))


class Spectral:
    """Fast-transform symbols of the periodic MAC operators.

    D (cell divergence) has symbol d_a(k) = (e^{i theta_a} - 1)/h per component, the face
    gradient has symbol -conj(d_a), and both the cell and the face Laplacian have symbol
    -lam(k) = -sum_a |d_a|^2. The zero mode is the only null mode of lam.
    """

    def __init__(self, n: int, d: int, h: float, workers: int = 1):
        self.n, self.dim, self.h = n, d, h
        self.shape = (n,) * d
        self.workers = max(int(workers), 1)
        freqs = [np.fft.fftfreq(n) * n] * (d - 1) + [np.fft.rfftfreq(n) * n]
        self.symbols = []
        for a, m in enumerate(freqs):
            view = [1] * d
            view[a] = m.size
            theta = 2.0 * np.pi * m.reshape(view) / n
            self.symbols.append((np.exp(1j * theta) - 1.0) / h)
        lam = np.zeros([f.size for f in freqs])
        for s in self.symbols:
            lam = lam + np.abs(s) ** 2
        self.lam = lam
        self.zero = (0,) * d
        self.lam_safe = lam.copy()
        self.lam_safe[self.zero] = 1.0

    def forward(self, q: np.ndarray) -> np.ndarray:
        return scipy.fft.rfftn(q, workers=self.workers)

    def inverse(self, qh: np.ndarray) -> np.ndarray:
        return scipy.fft.irfftn(qh, s=self.shape, workers=self.workers)

    def divergence_hat(self, uh: Sequence[np.ndarray]) -> np.ndarray:
        out = np.zeros_like(uh[0])
        for s, comp in zip(self.symbols, uh):
            out = out + s * comp
        return out

    def project_hat(self, uh: Sequence[np.ndarray]) -> list:
        """Leray projection onto discretely divergence-free face fields."""
        div = self.divergence_hat(uh) / self.lam_safe
        div[self.zero] = 0.0
        return [comp - np.conj(s) * div for s, comp in zip(self.symbols, uh)]

    def project(self, u: FaceField) -> FaceField:
        uh = [self.forward(c) for c in u]
        return tuple(self.inverse(c) for c in self.project_hat(uh))

    def pressure_from_hat(self, yh: Sequence[np.ndarray]) -> np.ndarray:
        """Mean-zero p with grad p equal to the gradient part of y."""
        ph = -self.divergence_hat(yh) / self.lam_safe
        ph[self.zero] = 0.0
        return self.inverse(ph)

    def solve_poisson(self, rhs: np.ndarray) -> np.ndarray:
        """Mean-zero solution of lap(phi) = rhs - mean(rhs)."""
        rh = self.forward(rhs)
        phih = -rh / self.lam_safe
        phih[self.zero] = 0.0
        return self.inverse(phih)
