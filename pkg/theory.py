from dataclasses import dataclass
from typing import Optional

from state import TheoryConstants


@dataclass(frozen=True)
class InitialNorms:
    """Norms of the initial data entering the rate constants and ceilings."""
    e0: float             # initial energy
    m0: float             # initial-dissipation constant
    rho_l32: float        # ||rho0||_{L^{3/2}}
    f_l1: float           # ||f0||_{L^1_{x,v}}
    f_l1_linf: float      # ||f0||_{L^1_v(L^inf_x)}
    f_l1_linf_v1: float   # ||(1+|v|) f0||_{L^1_v(L^inf_x)}
    f_l1_linf_v2: float   # ||(1+|v|^2) f0||_{L^1_v(L^inf_x)}


def moment_ceiling_cstar(f_l1: float, f_l1_linf: float) -> float:
    """A-priori bound on sup_t ||n_f||_{L^{3/2}}."""
    return 2.0 * f_l1 ** (2.0 / 3.0) * f_l1_linf ** (1.0 / 3.0)


def rate_alpha(mu: float, kappa: float, c_s: float, rho_l32: float, c_star: float) -> float:
    return min(mu, kappa) / (2.0 + c_s * (rho_l32 + 2.0 * c_star))


def rate_alpha1(mu: float, c_s: float, rho_l32: float, f_l1: float, f_l1_linf: float) -> float:
    return min(mu, 1.0) / (2.0 + c_s * (rho_l32 + 4.0 * f_l1 ** (2.0 / 3.0) * f_l1_linf ** (1.0 / 3.0)))


def rate_alpha2(kappa: float, alpha1: float) -> float:
    return min(kappa / 2.0, alpha1 / 4.0)


def smallness_ratio(e0: float, mu: float, kappa: float, eps0: float) -> float:
    return e0 / (min(mu ** (10.0 / 7.0), mu ** 13) * kappa ** (-16) * eps0)


def theory_constants(mu: float, kappa: float, c_s: float, eps0: float, norms: InitialNorms,
                     c_star: Optional[float] = None) -> TheoryConstants:
    if c_star is None:
        c_star = moment_ceiling_cstar(norms.f_l1, norms.f_l1_linf)
    alpha = rate_alpha(mu, kappa, c_s, norms.rho_l32, c_star)
    alpha1 = rate_alpha1(mu, c_s, norms.rho_l32, norms.f_l1, norms.f_l1_linf)
    return TheoryConstants(
        alpha=alpha,
        alpha1=alpha1,
        alpha2=rate_alpha2(kappa, alpha1),
        c_star=c_star,
        sigma=smallness_ratio(norms.e0, mu, kappa, eps0),
        ceiling_n=2.0 * norms.f_l1_linf,
        ceiling_j=2.0 * norms.f_l1_linf_v1,
        ceiling_e=2.0 * norms.f_l1_linf_v2,
        e0=norms.e0,
        m0=norms.m0,
        rho_l32=norms.rho_l32,
        f_l1=norms.f_l1,
        f_l1_linf=norms.f_l1_linf,
    )


def constants_for(config, norms: InitialNorms, c_star: Optional[float] = None) -> TheoryConstants:
    if c_star is None:
        c_star = config.theory.c_star
    return theory_constants(config.fluid.viscosity, config.kinetic.drag, config.theory.sobolev_constant,
                            config.theory.smallness_margin, norms, c_star=c_star)
