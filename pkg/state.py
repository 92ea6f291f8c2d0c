from dataclasses import dataclass, field, fields, replace
from typing import Dict, Optional, Tuple

import numpy as np

from grid import FaceField


@dataclass(frozen=True)
class FluidState:
    rho: np.ndarray
    u: FaceField
    p: np.ndarray
    t: float = 0.0

    def with_(self, **kw) -> "FluidState":
        return replace(self, **kw)


@dataclass(frozen=True)
class ParticleEnsemble:
    x: np.ndarray          # (N_p, d) positions in [0, L)
    v: np.ndarray          # (N_p, d) velocities
    w: np.ndarray          # (N_p,) weights, never modified
    r0: float = 0.0        # initial support radius max_p |v_p| at t=0

    @property
    def count(self) -> int:
        return int(self.w.size)

    @property
    def dim(self) -> int:
        return int(self.x.shape[1]) if self.x.ndim == 2 else 0

    def with_(self, **kw) -> "ParticleEnsemble":
        return replace(self, **kw)


@dataclass(frozen=True)
class MomentFields:
    n: np.ndarray                      # cell-centered number density
    j: np.ndarray                      # (d, N, ..., N) cell-centered momentum density
    e: np.ndarray                      # cell-centered kinetic-energy density
    n_faces: Optional[FaceField] = None   # n_f on each face lattice (drag coefficient)
    j_faces: Optional[FaceField] = None   # j_f component a on face lattice a (drag source)


@dataclass(frozen=True)
class TheoryConstants:
    alpha: float
    alpha1: float
    alpha2: float
    c_star: float
    sigma: float
    ceiling_n: float
    ceiling_j: float
    ceiling_e: float
    e0: float
    m0: float
    rho_l32: float
    f_l1: float
    f_l1_linf: float

    def as_dict(self) -> Dict[str, float]:
        return {f.name: float(getattr(self, f.name)) for f in fields(self)}


SERIES_COLUMNS = (
    "t", "E", "D", "Ecal", "sup_nf", "sup_jf", "sup_ef", "R_supp", "w1_sur",
    "gradu_l2", "gradu_linf", "u_linf", "div_linf", "rho_l32", "gradrho_l2", "mass_f",
    "mom_x1", "mom_x2", "mom_x3", "B1", "B2", "B3",
)

AUX_COLUMNS = (
    "t", "nf_l32", "rho_min", "rho_max", "rho_mass", "hessu_l2", "p_l2", "align",
    "w1_bound", "solver_iters", "w1_nf_axis", "w1_nf_upper", "e_fluid", "drag_work",
)


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    E: float
    D: float
    Ecal: float
    sup_nf: float
    sup_jf: float
    sup_ef: float
    R_supp: float
    w1_sur: float
    gradu_l2: float
    gradu_linf: float
    u_linf: float
    div_linf: float
    rho_l32: float
    gradrho_l2: float
    mass_f: float
    mom: Tuple[float, float, float]
    B1: float = 0.0
    B2: float = 0.0
    B3: float = 0.0
    nf_l32: float = 0.0
    rho_min: float = 0.0
    rho_max: float = 0.0
    rho_mass: float = 0.0
    hessu_l2: float = 0.0
    p_l2: float = 0.0
    align: float = 0.0
    w1_bound: float = 0.0
    solver_iters: int = 0
    w1_nf_axis: float = float("nan")
    w1_nf_upper: float = float("nan")
    e_fluid: float = 0.0       # face-lattice fluid kinetic energy
    drag_work: float = 0.0     # kappa sum (j_f . u - n_f |u|^2) h^d over the step that produced u
    nf_marginals: Optional[Tuple[np.ndarray, ...]] = field(default=None, repr=False, compare=False)

    def series_row(self):
        return [self.t, self.E, self.D, self.Ecal, self.sup_nf, self.sup_jf, self.sup_ef,
                self.R_supp, self.w1_sur, self.gradu_l2, self.gradu_linf, self.u_linf,
                self.div_linf, self.rho_l32, self.gradrho_l2, self.mass_f,
                self.mom[0], self.mom[1], self.mom[2], self.B1, self.B2, self.B3]

    def aux_row(self):
        return [self.t, self.nf_l32, self.rho_min, self.rho_max, self.rho_mass, self.hessu_l2,
                self.p_l2, self.align, self.w1_bound, self.solver_iters, self.w1_nf_axis,
                self.w1_nf_upper, self.e_fluid, self.drag_work]

    def numeric_values(self):
        return self.series_row() + self.aux_row()[1:10]

    def with_(self, **kw) -> "DiagnosticsRecord":
        return replace(self, **kw)
