"""One coupled time step (moments, transport, Stokes with drag, particle push, diagnostics)
and the run driver that owns output cadence.
"""
import os
import math
import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from config import SimConfig
from errors import NaNDetected, OracleError
from fluid import (advect_density, build_stokes_system, hessian_l2, stokes_drag_solve,
                   transport_momentum, velocity_gradient_norms)
from functionals import (CeilingMargins, axis_marginals, axis_sliced_w1, dissipation, drag_mismatch,
                         drag_work, energy, fluid_face_energy, gradient_l2, high_dissipation,
                         moment_ceiling_check, moment_sups, total_momentum, w1_to_dirac)
from grid import FaceField, divergence, grid_norm
from initial_data import make_initial_data
from kinetic import deposit_moments, interpolate_velocity, push_particles, support_radius
from oracle import CharacteristicProbe
from state import (AUX_COLUMNS, SERIES_COLUMNS, DiagnosticsRecord, FluidState, MomentFields,
                   ParticleEnsemble, TheoryConstants)
from theory import InitialNorms, constants_for
from utils import write_csv, write_fluid, write_particles

SOLVER_LOG_COLUMNS = ("step", "iters", "residual")


@dataclass
class RunState:
    fluid: FluidState
    ensemble: ParticleEnsemble
    moments: MomentFields          # deposit of the current ensemble
    u_prev: FaceField
    series: List[DiagnosticsRecord]   # append-only
    B: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    step_index: int = 0
    within_budget: bool = True
    solver_iters: int = 0
    solver_residual: float = 0.0
    div_violations: int = 0           # steps whose Stokes solve missed div_tol


def budget_integrands(rec: DiagnosticsRecord, mu: float, kappa: float) -> Tuple[float, float, float]:
    return rec.gradu_l2 ** 4 / mu ** 3, kappa * rec.u_linf, 20.0 * kappa * rec.gradu_linf


def bootstrap_account(series, mu: float, kappa: float) -> Tuple[float, float, float, bool]:
    """Left-endpoint quadrature of the bootstrap integrands over the sampled times."""
    if isinstance(series, pd.DataFrame):
        t = series["t"].to_numpy(dtype=float)
        g1 = series["gradu_l2"].to_numpy(dtype=float) ** 4 / mu ** 3
        g2 = kappa * series["u_linf"].to_numpy(dtype=float)
        g3 = 20.0 * kappa * series["gradu_linf"].to_numpy(dtype=float)
    else:
        t = np.array([r.t for r in series])
        g = np.array([budget_integrands(r, mu, kappa) for r in series]).reshape(-1, 3)
        g1, g2, g3 = g[:, 0], g[:, 1], g[:, 2]
    dt = np.diff(t)
    B = tuple(float(np.sum(gk[:-1] * dt)) for gk in (g1, g2, g3))
    return B[0], B[1], B[2], sum(B) <= 1.0


def diagnose(fluid: FluidState, ensemble: ParticleEnsemble, moments: MomentFields, u_prev: FaceField,
             config: SimConfig, solver_iters: int = 0) -> DiagnosticsRecord:
    h, dt = config.h, config.domain.dt
    mu, kappa = config.fluid.viscosity, config.kinetic.drag
    d = config.d
    E = energy(fluid, ensemble, h)
    gradu_l2, gradu_linf, u_linf = velocity_gradient_norms(fluid.u, h)
    sup_nf, sup_jf, sup_ef = moment_sups(moments)
    w1 = w1_to_dirac(ensemble, moments.n, E, h)
    return DiagnosticsRecord(
        t=fluid.t,
        E=E,
        D=dissipation(fluid, ensemble, mu, kappa, h),
        Ecal=high_dissipation(fluid, u_prev, ensemble, dt, kappa, h),
        sup_nf=sup_nf,
        sup_jf=sup_jf,
        sup_ef=sup_ef,
        R_supp=support_radius(ensemble),
        w1_sur=w1.surrogate,
        gradu_l2=gradu_l2,
        gradu_linf=gradu_linf,
        u_linf=u_linf,
        div_linf=float(np.abs(divergence(fluid.u, h)).max()),
        rho_l32=grid_norm(fluid.rho, 1.5, h),
        gradrho_l2=gradient_l2(fluid.rho, h),
        mass_f=float(np.sum(ensemble.w)),
        mom=total_momentum(fluid, ensemble, h),
        nf_l32=grid_norm(moments.n, 1.5, h),
        rho_min=float(fluid.rho.min()),
        rho_max=float(fluid.rho.max()),
        rho_mass=float(np.sum(fluid.rho)) * h ** d,
        hessu_l2=hessian_l2(fluid.u, h),
        p_l2=grid_norm(fluid.p, 2, h),
        align=drag_mismatch(fluid, ensemble, h),
        w1_bound=w1.duality_bound,
        solver_iters=solver_iters,
        e_fluid=fluid_face_energy(fluid, h),
        nf_marginals=axis_marginals(moments.n, h),
    )


def _check_record(rec: DiagnosticsRecord, step: int):
    for name, value in zip(SERIES_COLUMNS + AUX_COLUMNS[1:10], rec.numeric_values()):
        if not math.isfinite(value):
            raise NaNDetected(f"diagnostic {name}", step=step)


def initial_state(fluid: FluidState, ensemble: ParticleEnsemble, config: SimConfig, threads: int = 1) -> RunState:
    moments = deposit_moments(ensemble, config.shape, config.h, threads)
    rec = diagnose(fluid, ensemble, moments, fluid.u, config)
    _check_record(rec, 0)
    return RunState(fluid=fluid, ensemble=ensemble, moments=moments, u_prev=fluid.u, series=[rec])


def step(state: RunState, config: SimConfig, threads: int = 1) -> RunState:
    n = state.step_index + 1
    try:
        return _step(state, config, threads, n)
    except NaNDetected as e:
        if e.step is None:
            raise NaNDetected(e.where, index=e.index, step=n) from None
        raise


def _step(state: RunState, config: SimConfig, threads: int, n: int) -> RunState:
    h, dt, L = config.h, config.domain.dt, config.domain.length
    mu, kappa = config.fluid.viscosity, config.kinetic.drag
    fluid, ens = state.fluid, state.ensemble

    # (1) start-of-step moments, deposited at the end of the previous step
    moments = state.moments
    if config.fluid.freeze_velocity:
        rho_new = fluid.rho
        u_new = tuple(np.zeros_like(c) for c in fluid.u)
        p_new = np.zeros_like(fluid.p)
        iters, residual, div_ok = 0, 0.0, True
    else:
        # (2) transport
        rho_new = advect_density(fluid.rho, fluid.u, dt, h)
        m_tilde = transport_momentum(fluid.rho, fluid.u, dt, h)
        # (3) implicit viscous step with drag
        system = build_stokes_system(rho_new, m_tilde, moments, dt, kappa, mu, h)
        res = stokes_drag_solve(system, config.fluid.linear_tol, config.fluid.div_tol,
                                config.fluid.max_iters, u0=fluid.u,
                                project=not config.fluid.fault_disable_projection, workers=threads)
        u_new, p_new, iters, residual, div_ok = res.u, res.p, res.iters, res.residual, res.div_ok

    # (4) push with the new velocity
    u_p = interpolate_velocity(u_new, ens.x, h)
    ens_new = push_particles(ens, u_p, kappa, dt, length=L)
    fluid_new = FluidState(rho=rho_new, u=u_new, p=p_new, t=n * dt)

    # (5) diagnostics and accumulators
    moments_new = deposit_moments(ens_new, config.shape, h, threads)
    rec = diagnose(fluid_new, ens_new, moments_new, fluid.u, config, iters)
    g = budget_integrands(state.series[-1], mu, kappa)
    B = tuple(b + dt * gk for b, gk in zip(state.B, g))
    rec = rec.with_(B1=B[0], B2=B[1], B3=B[2], drag_work=drag_work(moments, u_new, kappa, h))
    _check_record(rec, n)
    within = state.within_budget and sum(B) <= 1.0
    if state.within_budget and not within:
        logging.warning(f"Bootstrap budget exceeded at t={rec.t:.4g}: B1+B2+B3={sum(B):.4g} > 1")
    violations = state.div_violations + (0 if div_ok else 1)
    if violations == 1 and not div_ok:
        logging.warning(f"Step {n}: divergence above div_tol {config.fluid.div_tol:.1e}; counted in div_violations")
    state.series.append(rec)
    return replace(state, fluid=fluid_new, ensemble=ens_new, moments=moments_new, u_prev=fluid.u,
                   B=B, step_index=n, within_budget=within, solver_iters=iters, solver_residual=residual,
                   div_violations=violations)


@dataclass
class RunResult:
    config: SimConfig
    scenario: str
    norms: InitialNorms
    constants: TheoryConstants           # a-priori C_* (or configured override)
    constants_realized: TheoryConstants  # C_* = max_t ||n_f||_{L^{3/2}}
    final: RunState
    solver_log: List[Tuple[int, int, float]] = field(default_factory=list)
    ceiling: Optional[CeilingMargins] = None
    probe: Dict[str, Dict[str, float]] = field(default_factory=dict)

    @property
    def series(self) -> List[DiagnosticsRecord]:
        return self.final.series

    @property
    def within_budget(self) -> bool:
        return self.final.within_budget

    @property
    def B(self) -> Tuple[float, float, float]:
        return self.final.B

    @property
    def div_violations(self) -> int:
        return self.final.div_violations

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame([r.series_row() for r in self.series], columns=list(SERIES_COLUMNS))

    def aux_frame(self) -> pd.DataFrame:
        return pd.DataFrame([r.aux_row() for r in self.series], columns=list(AUX_COLUMNS))


def spatial_concentration(series: Sequence[DiagnosticsRecord], h: float) -> List[DiagnosticsRecord]:
    """Fills the axis-sliced W1 to the final n_f and the displacement upper bound."""
    if not series or series[-1].nf_marginals is None:
        return list(series)
    final = series[-1].nf_marginals
    t = np.array([r.t for r in series])
    w1 = np.array([r.w1_sur for r in series])
    seg = np.append(np.diff(t) * w1[:-1], 0.0)
    upper = np.cumsum(seg[::-1])[::-1]
    return [r.with_(w1_nf_axis=axis_sliced_w1(r.nf_marginals, final, h), w1_nf_upper=float(upper[k]))
            for k, r in enumerate(series)]


def write_series(out_dir: str, series: Sequence[DiagnosticsRecord], solver_log):
    write_csv(os.path.join(out_dir, "series.csv"), SERIES_COLUMNS, (r.series_row() for r in series))
    write_csv(os.path.join(out_dir, "aux_series.csv"), AUX_COLUMNS, (r.aux_row() for r in series))
    write_csv(os.path.join(out_dir, "solver_log.csv"), SOLVER_LOG_COLUMNS, solver_log)


def write_snapshot(out_dir: str, state: RunState):
    snap = os.path.join(out_dir, "snapshots")
    write_particles(os.path.join(snap, f"particles_{state.step_index}.bin"), state.ensemble)
    write_fluid(os.path.join(snap, f"fluid_{state.step_index}.npz"), state.fluid)


def run(config: SimConfig, out_dir: Optional[str] = None, threads: int = 1,
        scenario: Optional[str] = None) -> RunResult:
    data = make_initial_data(config, scenario, threads)
    constants = constants_for(config, data.norms)
    h, dt = config.h, config.domain.dt
    kappa = config.kinetic.drag
    n_steps = config.n_steps
    logging.info(f"Run [{data.scenario}]: d={config.d} N={config.domain.cells} particles={data.ensemble.count} "
                 f"steps={n_steps} alpha={constants.alpha:.4g} alpha1={constants.alpha1:.4g} "
                 f"alpha2={constants.alpha2:.4g} sigma={constants.sigma:.4g}")
    if constants.sigma > 1.0:
        logging.warning(f"Smallness ratio sigma={constants.sigma:.4g} > 1: decay verdicts are informational")

    state = initial_state(data.fluid, data.ensemble, config, threads)
    worst = moment_ceiling_check(state.moments, constants, True)
    probe = None
    probe_out: Dict[str, Dict[str, float]] = {}
    pending = sorted(config.output.probe_times)
    if config.output.probe_particles > 0 and data.ensemble.count:
        probe = CharacteristicProbe.sample(data.ensemble, config.output.probe_particles, kappa,
                                           length=config.domain.length)
    cadence = config.output.snapshot_every
    log_every = cadence if cadence > 0 else max(n_steps // 10, 1)
    solver_log: List[Tuple[int, int, float]] = []

    for _ in range(n_steps):
        state = step(state, config, threads)
        n = state.step_index
        solver_log.append((n, state.solver_iters, state.solver_residual))
        m = moment_ceiling_check(state.moments, constants, state.within_budget)
        worst = CeilingMargins(min(worst.n, m.n), min(worst.j, m.j), min(worst.e, m.e), worst.violated or m.violated)
        if probe is not None:
            probe.advance(state.fluid.u, h, dt)
            while pending and state.fluid.t >= pending[0] - 0.5 * dt:
                tau = pending.pop(0)
                probe_out[repr(float(tau))] = _probe_summary(probe, state.fluid.t)
        rec = state.series[-1]
        if n % log_every == 0 or n == n_steps:
            logging.info(f"step {n}/{n_steps} t={rec.t:.4g} E={rec.E:.6g} D={rec.D:.6g} iters={state.solver_iters}")
        if out_dir and cadence > 0 and n % cadence == 0:
            write_series(out_dir, state.series, solver_log)
            write_snapshot(out_dir, state)

    state.series[:] = spatial_concentration(state.series, h)
    if config.theory.c_star is None:
        realized = max(r.nf_l32 for r in state.series)
        constants_realized = constants_for(config, data.norms, c_star=realized)
    else:
        constants_realized = constants
    if out_dir:
        write_series(out_dir, state.series, solver_log)
        write_snapshot(out_dir, state)
    for tau in pending:
        logging.warning(f"probe time {tau} lies beyond t_end={config.domain.t_end}; not sampled")
    return RunResult(config=config, scenario=data.scenario, norms=data.norms, constants=constants,
                     constants_realized=constants_realized, final=state, solver_log=solver_log,
                     ceiling=worst, probe=probe_out)


def _probe_summary(probe: CharacteristicProbe, t: float) -> Dict[str, float]:
    try:
        dets = probe.normalized_determinants()
    except OracleError as e:
        logging.warning(f"probe at t={t:.4g}: {e}")
        return {"t": t, "min_det": float("nan"), "mean_det": float("nan"), "count": probe.count}
    return {"t": t, "min_det": float(dets.min()), "mean_det": float(dets.mean()), "count": probe.count}
