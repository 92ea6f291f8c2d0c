"""Property suite over embedded reference scenarios (plus the caller's own config)."""
import copy
import math
import logging
from typing import Any, Callable, Dict, List, NamedTuple, Optional

import numpy as np
import pandas as pd

from config import SimConfig, validate_config
from coupler import RunResult, run
from errors import NSVError
from functionals import grad_density_check
from oracle import run_oracle_checks
from rates import (energy_consistency_constant, energy_defect, energy_floor, fit_exponential,
                   fluid_energy_defects, resolved)
from report import decay_for

VERIFY_COLUMNS = ["scenario", "property", "measured", "bound", "pass"]


def _doc(dimension, cells, dt, t_end, fluid, kinetic, scenario="vacuum-blob", theory=None, output=None):
    return {
        "domain": {"dimension": dimension, "length": 1.0, "cells": cells, "dt": dt, "t_end": t_end,
                   "scenario": scenario, "seed": 7},
        "fluid": fluid,
        "kinetic": kinetic,
        "theory": theory or {},
        "output": output or {"directory": "verify-out"},
    }


COUPLED_3D_FLUID = {"viscosity": 1.0, "velocity_profile": "vortex", "velocity_amplitude": 0.001}
COUPLED_2D_FLUID = {"viscosity": 0.5, "velocity_profile": "vortex", "velocity_amplitude": 0.05}

REFERENCE_SCENARIOS: Dict[str, Dict[str, Any]] = {
    "drag-only": _doc(2, 16, 0.01, 3.0,
                      {"viscosity": 1.0, "freeze_velocity": True, "velocity_profile": "zero"},
                      {"drag": 2.0, "particles": 1000, "mass": 0.1, "velocity_radius": 0.5}),
    # the shear decays like exp(-4 pi^2 t); stop well before it reaches round-off
    "pure-fluid": _doc(3, 16, 0.005, 0.5,
                       {"viscosity": 1.0, "velocity_profile": "shear", "velocity_amplitude": 0.1},
                       {"drag": 1.0, "particles": 1, "mass": 0.0}, scenario="uniform",
                       theory={"fit_t0": 0.05, "fit_t1": 0.5}),
    "coupled-3d": _doc(3, 16, 0.02, 3.0, COUPLED_3D_FLUID,
                       {"drag": 1.0, "particles": 20000, "mass": 0.1, "velocity_radius": 0.001},
                       output={"directory": "verify-out", "probe_particles": 100, "probe_times": [1.0, 2.0]}),
    "coupled-2d": _doc(2, 32, 0.01, 2.0, COUPLED_2D_FLUID,
                       {"drag": 2.0, "particles": 4000, "mass": 0.1, "velocity_radius": 0.3}),
}

# acceptance sizes; minutes of runtime, so only with verify --full
ACCEPTANCE_SCENARIOS: Dict[str, Dict[str, Any]] = {
    "coupled-3d-full": _doc(3, 32, 0.02, 5.0, COUPLED_3D_FLUID,
                            {"drag": 1.0, "particles": 100000, "mass": 0.1, "velocity_radius": 0.001},
                            output={"directory": "verify-out", "probe_particles": 100,
                                    "probe_times": [1.0, 2.0, 5.0]}),
    "coupled-2d-full": _doc(2, 64, 0.01, 2.0, COUPLED_2D_FLUID,
                            {"drag": 2.0, "particles": 10000, "mass": 0.1, "velocity_radius": 0.3}),
}

# uniform fluid at rest and one moving particle: momentum exchange audit
MOMENTUM_SCENARIO = _doc(2, 16, 0.01, 0.5, {"viscosity": 1.0, "velocity_profile": "zero"},
                         {"drag": 1.0, "particles": 1, "mass": 0.1, "velocity_radius": 0.0,
                          "drift": [0.5, 0.0], "symmetrize": False}, scenario="uniform")

# rotating smooth blob on 32^2; the refinement run doubles the cells and halves dt
DENSITY_SCENARIO = _doc(2, 32, 0.01, 0.5,
                        {"viscosity": 0.1, "velocity_profile": "vortex", "velocity_amplitude": 0.1,
                         "blob_radius": 0.4},
                        {"drag": 1.0, "particles": 500, "mass": 0.001, "velocity_radius": 0.1})


class PropertyRow(NamedTuple):
    scenario: str
    prop: str
    measured: float
    bound: float
    passed: bool


class VerifyResult(NamedTuple):
    rows: List[PropertyRow]
    warnings: List[str]

    @property
    def ok(self) -> bool:
        return all(r.passed for r in self.rows)

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=VERIFY_COLUMNS)


def with_dt(raw: Dict[str, Any], dt: float, t_end: Optional[float] = None) -> SimConfig:
    doc = copy.deepcopy(raw)
    doc["domain"]["dt"] = dt
    if t_end is not None:
        doc["domain"]["t_end"] = t_end
    return validate_config(doc)


def refined(raw: Dict[str, Any]) -> SimConfig:
    """Same scenario with twice the cells per axis and half the step (constant Courant number)."""
    doc = copy.deepcopy(raw)
    doc["domain"]["cells"] *= 2
    doc["domain"]["dt"] /= 2
    return validate_config(doc)


def run_properties(name: str, result: RunResult) -> List[PropertyRow]:
    cfg = result.config
    series = result.frame()
    aux = result.aux_frame()
    rows: List[PropertyRow] = []

    def add(prop, measured, bound, passed):
        rows.append(PropertyRow(name, prop, float(measured), float(bound), bool(passed)))

    rho_top = float(result.final.series[0].rho_max)
    add("max_principle_min", aux["rho_min"].min(), -1e-14 * rho_top, aux["rho_min"].min() >= -1e-14 * rho_top)
    add("max_principle_max", aux["rho_max"].max(), rho_top * (1 + 1e-14),
        aux["rho_max"].max() <= rho_top * (1 + 1e-14))
    mass0 = float(aux["rho_mass"].iloc[0])
    drift = float(np.max(np.abs(aux["rho_mass"].to_numpy() - mass0)))
    add("fluid_mass", drift, 1e-12 * max(mass0, 1e-300), drift <= 1e-12 * max(mass0, 1e-300))
    pmass = series["mass_f"].to_numpy()
    add("particle_mass", float(np.max(np.abs(pmass - pmass[0]))), 0.0, bool(np.all(pmass == pmass[0])))
    div = float(series["div_linf"].max())
    add("divergence", div, cfg.fluid.div_tol, div <= cfg.fluid.div_tol)
    add("stokes_div_steps", result.div_violations, 0, result.div_violations == 0)
    l32 = series["rho_l32"].to_numpy(dtype=float)
    rise = float(np.max(np.diff(l32), initial=0.0))
    # upwind rows sum to 1 + dt div u, so the norm may grow by that much per step
    allowed = l32[0] * (1e-12 + cfg.domain.dt * cfg.fluid.div_tol)
    add("rho_l32_nonincreasing", rise, allowed, rise <= allowed)
    ratio = max((r.w1_sur / r.w1_bound for r in result.series if r.w1_bound > 0), default=0.0)
    add("w1_duality", ratio, 1.0 + 1e-10, ratio <= 1.0 + 1e-10)
    grad = grad_density_check(series)
    add("grad_density", grad.margin, 0.0, grad.passed)

    if result.within_budget and result.ceiling is not None:
        margin = min(result.ceiling.n, result.ceiling.j, result.ceiling.e)
        add("moment_ceilings", margin, 0.0, not result.ceiling.violated)

    decay = decay_for(result)
    if not decay.informational:
        realized = result.constants_realized
        kept = resolved(series)
        coercive = [d / (2 * realized.alpha * e) for e, d in zip(kept["E"], kept["D"]) if e > 0]
        if coercive:
            worst = min(coercive)
            add("coercivity", worst, 1.0, worst >= 1.0)
        for v in decay.verdicts:
            if math.isinf(v.fitted_rate):
                continue
            add(f"decay_{v.check}", v.fitted_rate, v.claimed_rate, v.passed)
    for tau, pr in result.probe.items():
        if result.B[2] <= 1.0:
            add(f"probe_det_t{tau}", pr["min_det"], 0.5, math.isfinite(pr["min_det"]) and pr["min_det"] >= 0.5)
    return rows


def drag_only_rate(result: RunResult) -> PropertyRow:
    series = result.frame()
    kappa = result.config.kinetic.drag
    t0 = max(1.0, 5 * result.config.domain.dt)
    fit = fit_exponential(series["t"], series["R_supp"], t0, result.config.domain.t_end)
    rel = abs(fit.rate - kappa) / kappa
    return PropertyRow("drag-only", "support_rate_equals_kappa", rel, 1e-6, rel <= 1e-6)


def energy_inequality(raw: Dict[str, Any], threads: int, t_end: float = 0.2,
                      name: str = "coupled-2d") -> PropertyRow:
    """eps_E / dt at dt and dt/4; the ratio must drop to <= 0.7 (or the defect vanish)."""
    dt = raw["domain"]["dt"]
    scaled = []
    for k in (1, 2, 4):
        res = run(with_dt(raw, dt / k, t_end), threads=threads)
        series = res.frame()
        e0 = max(float(series["E"].iloc[0]), 1e-300)
        eps = max(energy_defect(series), 0.0)
        scaled.append(0.0 if eps <= 1e-13 * e0 else eps / (dt / k))
    if scaled[0] == 0.0 and scaled[-1] == 0.0:
        return PropertyRow(name, "energy_inequality_ratio", 0.0, 0.7, True)
    ratio = scaled[-1] / scaled[0] if scaled[0] > 0 else math.inf
    return PropertyRow(name, "energy_inequality_ratio", ratio, 0.7, ratio <= 0.7)


def fluid_energy_consistency(raw: Dict[str, Any], threads: int, t_end: float = 0.2,
                             name: str = "coupled-2d") -> List[PropertyRow]:
    """Fits c_E at dt; the dt/2 run must stay under 1.5 c_E (dt/2)^2 plus the solver floor."""
    dt = raw["domain"]["dt"]
    coarse = run(with_dt(raw, dt, t_end), threads=threads).aux_frame()
    fine = run(with_dt(raw, dt / 2, t_end), threads=threads).aux_frame()
    c_e = energy_consistency_constant(coarse)
    envelope = c_e * (dt / 2) ** 2 + energy_floor(fine)
    worst = float(np.max(fluid_energy_defects(fine), initial=0.0))
    measured = worst / envelope if envelope > 0 else (0.0 if worst <= 0 else math.inf)
    logging.info(f"fluid energy consistency: c_E={c_e:.4g} at dt={dt}")
    return [PropertyRow(name, "fluid_energy_c_E", c_e, math.inf, math.isfinite(c_e)),
            PropertyRow(name, "fluid_energy_envelope", measured, 1.5, measured <= 1.5)]


def density_norm_refinement(threads: int, raw: Optional[Dict[str, Any]] = None) -> PropertyRow:
    """Drop of ||rho||_{L^3/2} per unit time must halve (within a factor 1.5) when h halves."""
    raw = raw or DENSITY_SCENARIO
    drops = []
    for cfg in (validate_config(raw), refined(raw)):
        l32 = run(cfg, threads=threads).frame()["rho_l32"].to_numpy(dtype=float)
        drops.append((l32[0] - l32[-1]) / cfg.domain.t_end)
    ratio = drops[1] / drops[0] if drops[0] > 0 else math.inf
    return PropertyRow("rotating-blob", "rho_l32_drop_ratio", ratio, 0.5, 0.5 / 1.5 <= ratio <= 0.5 * 1.5)


def momentum_drift(threads: int) -> PropertyRow:
    rates = []
    for k in (1, 2):
        res = run(with_dt(MOMENTUM_SCENARIO, MOMENTUM_SCENARIO["domain"]["dt"] / k), threads=threads)
        mom = res.frame()[["mom_x1", "mom_x2", "mom_x3"]].to_numpy()
        drift = float(np.max(np.linalg.norm(mom - mom[0], axis=1)))
        rates.append(drift / res.config.domain.t_end)
    ratio = rates[1] / rates[0] if rates[0] > 0 else 0.0
    return PropertyRow("one-particle", "momentum_drift_ratio", ratio, 0.6, ratio <= 0.6)


def _guard(name: str, fn: Callable[[], List[PropertyRow]]) -> List[PropertyRow]:
    try:
        return fn()
    except NSVError as e:
        logging.exception(f"verify scenario {name} aborted: {e}")
        return [PropertyRow(name, f"run_error: {e}", math.nan, math.nan, False)]


def scenario_rows(name: str, raw: Dict[str, Any], threads: int = 1) -> List[PropertyRow]:
    res = run(validate_config(raw), threads=threads)
    out = run_properties(name, res)
    if name == "drag-only":
        out.append(drag_only_rate(res))
    return out


def verify(user_config: Optional[SimConfig] = None, threads: int = 1, reference: bool = True,
           oracles: bool = True, full: bool = False) -> VerifyResult:
    rows: List[PropertyRow] = []
    warnings: List[str] = []
    if user_config is not None:
        if user_config.theory_regime_warning:
            warnings.append(f"kinetic.drag={user_config.kinetic.drag} < 1: theory regime requires kappa >= 1")
        if not user_config.theory_dimension_valid:
            warnings.append("d=2: theory-rate comparisons are informational")
        rows += _guard("config", lambda: run_properties("config", run(user_config, threads=threads)))
    if reference:
        for name, raw in REFERENCE_SCENARIOS.items():
            rows += _guard(name, lambda name=name, raw=raw: scenario_rows(name, raw, threads))
        coupled_2d = REFERENCE_SCENARIOS["coupled-2d"]
        rows += _guard("coupled-2d", lambda: [energy_inequality(coupled_2d, threads)])
        rows += _guard("coupled-2d", lambda: fluid_energy_consistency(coupled_2d, threads))
        rows += _guard("rotating-blob", lambda: [density_norm_refinement(threads)])
        rows += _guard("one-particle", lambda: [momentum_drift(threads)])
    if full:
        for name, raw in ACCEPTANCE_SCENARIOS.items():
            rows += _guard(name, lambda name=name, raw=raw: scenario_rows(name, raw, threads))
        full_2d = ACCEPTANCE_SCENARIOS["coupled-2d-full"]
        rows += _guard("coupled-2d-full", lambda: [energy_inequality(full_2d, threads, t_end=2.0,
                                                                     name="coupled-2d-full")])
    if oracles:
        rows += _guard("oracle", lambda: [PropertyRow("oracle", c.check, c.measured, c.bound, c.passed)
                                          for c in run_oracle_checks()])
    for w in warnings:
        logging.warning(w)
    return VerifyResult(rows=rows, warnings=warnings)
