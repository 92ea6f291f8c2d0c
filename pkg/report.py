"""report.json: one document per run, schema_version 1 (fields listed in DESIGN.md)."""
import math
from dataclasses import asdict
from typing import Any, Dict

import numpy as np

from coupler import RunResult
from functionals import coercivity_ratio, grad_density_check
from rates import DecayReport, decay_report, energy_consistency_constant, energy_defect, resolved
from utils import utc_now_iso, write_json

SCHEMA_VERSION = 1

NOTES = [
    "Ecal uses the backward difference (u^{n+1} - u^n)/dt for u_t; the discrepancy to the exact derivative is O(dt).",
    "Pressure is reported in the mean-zero gauge of the periodic box.",
    "Probe determinants are for the forward map v0 -> V(t), normalized by exp(kappa d t).",
]


def _finite(x: float):
    return float(x) if math.isfinite(x) else None


def decay_for(result: RunResult) -> DecayReport:
    """decay_report with the run's own slack, window and regime flags."""
    cfg = result.config
    return decay_report(result.frame(), result.constants_realized, cfg.theory.slack, cfg.theory.tol,
                        cfg.fit_window, result.within_budget,
                        theory_dimension_valid=cfg.theory_dimension_valid)


def build_report(result: RunResult, decay: DecayReport) -> Dict[str, Any]:
    cfg = result.config
    series = result.frame()
    realized = result.constants_realized
    kept = resolved(series)
    E, D = kept["E"].to_numpy(), kept["D"].to_numpy()
    coercivity = [coercivity_ratio(e, d, realized.alpha) for e, d in zip(E, D)]
    grad = grad_density_check(series)
    w1_ratio = [r.w1_sur / r.w1_bound for r in result.series if r.w1_bound > 0]
    B = result.B
    probe_ok = [v["min_det"] >= 0.5 for v in result.probe.values() if math.isfinite(v["min_det"])]
    return {
        "schema_version": SCHEMA_VERSION,
        "created_at": utc_now_iso(),
        "scenario": result.scenario,
        "config": cfg.model_dump(),
        "grid": {"d": cfg.d, "N": cfg.domain.cells, "L": cfg.domain.length, "h": cfg.h,
                 "dt": cfg.domain.dt, "steps": cfg.n_steps},
        "particles": result.final.ensemble.count,
        "initial": asdict(result.norms),
        "theory_constants": result.constants.as_dict(),
        "theory_constants_realized": realized.as_dict(),
        "flags": {
            "within_budget": result.within_budget,
            "B1": B[0], "B2": B[1], "B3": B[2], "budget_sum": sum(B),
            "sigma": result.constants.sigma,
            "sigma_le_1": result.constants.sigma <= 1.0,
            "kappa_below_1": cfg.theory_regime_warning,
            "dimension_valid": cfg.theory_dimension_valid,
            "informational": decay.informational,
        },
        "fitted_rates": {k: _finite(v) for k, v in decay.fits.items()},
        "fit_window": list(decay.window),
        "verdicts": [{"check": v.check, "claimed_rate": v.claimed_rate, "fitted_rate": _finite(v.fitted_rate),
                      "pass": v.passed} for v in decay.verdicts],
        "ceiling_margins": {"n": result.ceiling.n, "j": result.ceiling.j, "e": result.ceiling.e,
                            "violated": result.ceiling.violated} if result.ceiling else None,
        "coercivity_min": _finite(min(coercivity)) if coercivity else None,
        "grad_density": {"pass": grad.passed, "margin": grad.margin},
        "w1_ratio_max": max(w1_ratio) if w1_ratio else 0.0,
        "energy_defect": energy_defect(series),
        "fluid_energy_c_E": energy_consistency_constant(result.aux_frame()),
        "div_violations": result.div_violations,
        "momentum_drift_max": float(np.max(np.abs(series[["mom_x1", "mom_x2", "mom_x3"]].to_numpy()
                                                  - series[["mom_x1", "mom_x2", "mom_x3"]].to_numpy()[0]))),
        "probe": result.probe,
        "probe_threshold_met": all(probe_ok) if probe_ok else None,
        "notes": NOTES,
    }


def write_report(path: str, doc: Dict[str, Any]):
    write_json(path, doc)
