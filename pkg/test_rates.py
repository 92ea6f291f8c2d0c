import math

import numpy as np
import pandas as pd
import pytest

from errors import FitError
from rates import (VERDICT_COLUMNS, decay_report, default_window, energy_consistency_constant, energy_defect,
                   fit_exponential, fluid_energy_defects, resolved, weighted_energy_margin, write_verdicts)
from state import TheoryConstants
from utils import read_series

T = np.linspace(0.0, 4.0, 401)


def test_fit_pure_exponential():
    fit = fit_exponential(T, np.exp(-3.0 * T))
    assert fit.rate == pytest.approx(3.0, abs=1e-9)
    assert fit.prefactor == pytest.approx(1.0, rel=1e-9)
    assert fit.residual < 1e-9
    assert fit.samples == T.size


def test_fit_perturbed_exponential():
    fit = fit_exponential(T, 5.0 * np.exp(-0.7 * T) * (1.0 + 0.01 * np.sin(T)))
    assert fit.rate == pytest.approx(0.7, abs=0.01)


def test_fit_constant_series():
    assert fit_exponential(T, np.full(T.size, 2.0)).rate == pytest.approx(0.0, abs=1e-12)


def test_fit_window_restricts_samples():
    fit = fit_exponential(T, np.exp(-T), 1.0, 2.0)
    assert fit.samples == 101


def test_fit_nonpositive_value_names_time():
    y = np.exp(-T)
    y[250] = 0.0
    with pytest.raises(FitError) as ei:
        fit_exponential(T, y)
    assert ei.value.t == pytest.approx(T[250])


def test_fit_needs_enough_samples():
    with pytest.raises(FitError):
        fit_exponential(T[:5], np.exp(-T[:5]))
    with pytest.raises(FitError):
        fit_exponential([], [])


def test_default_window():
    assert default_window(0.01, 3.0) == (1.0, 3.0)
    assert default_window(0.5, 10.0) == (2.5, 10.0)


def _constants(alpha=0.4, alpha1=0.3, alpha2=0.5, sigma=0.1):
    return TheoryConstants(alpha=alpha, alpha1=alpha1, alpha2=alpha2, c_star=0.0, sigma=sigma,
                           ceiling_n=1.0, ceiling_j=1.0, ceiling_e=1.0, e0=1.0, m0=0.0, rho_l32=0.0,
                           f_l1=0.0, f_l1_linf=0.0)


def _series(energy_rate=1.0, support_rate=1.0):
    E = np.exp(-energy_rate * T)
    return pd.DataFrame({
        "t": T, "E": E, "D": energy_rate * E,
        "R_supp": 0.5 * np.exp(-support_rate * T), "sup_jf": np.exp(-support_rate * T),
        "sup_ef": np.exp(-2 * support_rate * T), "w1_sur": 0.1 * np.exp(-support_rate * T),
    })


def test_decay_report_on_fast_decay():
    report = decay_report(_series(), _constants(), theory_dimension_valid=True)
    assert not report.informational
    assert report.window == (1.0, 4.0)
    assert report.passed == len(report.verdicts)
    assert report.fits["R_supp"] == pytest.approx(1.0, abs=1e-9)


def test_decay_report_flags_slow_energy():
    report = decay_report(_series(energy_rate=0.5), _constants(alpha=0.4), theory_dimension_valid=True)
    verdicts = {v.check: v.passed for v in report.verdicts}
    assert not verdicts["energy_rate_alpha"]
    assert not verdicts["energy_pointwise"]
    assert verdicts["support_rate"]


def test_decay_report_informational_outside_regime():
    assert decay_report(_series(), _constants(sigma=2.0), theory_dimension_valid=True).informational
    assert decay_report(_series(), _constants(), within_budget=False, theory_dimension_valid=True).informational
    assert decay_report(_series(), _constants(), theory_dimension_valid=False).informational


def test_decay_report_skips_vanishing_column():
    s = _series()
    s["w1_sur"] = 0.0
    report = decay_report(s, _constants(), theory_dimension_valid=True)
    assert math.isinf(report.fits["w1_sur"])


def test_decay_report_empty_series():
    with pytest.raises(FitError):
        decay_report(pd.DataFrame(columns=["t", "E"]), _constants(), theory_dimension_valid=True)


def test_weighted_energy_margin_of_exact_decay():
    s = _series(energy_rate=1.0)
    # exactly 1 for all t; the right-endpoint sum never exceeds it
    assert weighted_energy_margin(s, 0.5) == pytest.approx(1.0, abs=1e-12)
    assert weighted_energy_margin(s, 0.3) <= 1.0 + 1e-12


def test_energy_defect():
    s = pd.DataFrame({"t": [0.0, 0.1, 0.2], "E": [1.0, 0.9, 0.85], "D": [1.0, 1.0, 0.4]})
    assert energy_defect(s) == pytest.approx(max(-0.1 + 0.1, -0.05 + 0.04))


def test_write_verdicts(tmp_path):
    path = tmp_path / "verdicts.csv"
    write_verdicts(str(path), decay_report(_series(), _constants(), theory_dimension_valid=True))
    assert path.read_text().splitlines()[0] == ",".join(VERDICT_COLUMNS)
    df = read_series(str(path))
    assert len(df) == 9


def test_decay_report_requires_dimension_flag():
    with pytest.raises(TypeError):
        decay_report(_series(), _constants())


def test_weighted_energy_margin_ignores_initial_dissipation_spike():
    t = 0.02 * np.arange(22)
    E = np.r_[1.0, 0.5, np.full(20, 0.5)]
    D = np.r_[135.0, 25.0, np.zeros(20)]
    s = pd.DataFrame({"t": t, "E": E, "D": D})
    # D(0) belongs to no step; pairing it with the first step would add 1.35
    assert weighted_energy_margin(s, 0.3) <= 1.05


def _roundoff_series():
    s = _series(energy_rate=80.0)
    s.loc[s["t"] >= 0.7, "E"] = 1e-33
    return s


def test_resolved_drops_roundoff_tail():
    s = _roundoff_series()
    kept = resolved(s)
    assert kept["E"].min() > 1e-20
    assert kept["t"].max() < 0.6
    assert len(resolved(_series())) == T.size


def test_decay_report_fits_above_roundoff_floor():
    report = decay_report(_roundoff_series(), _constants(), window=(0.05, 4.0), theory_dimension_valid=True)
    assert report.fits["E"] == pytest.approx(80.0, rel=1e-9)


def test_fluid_energy_defects_and_constant():
    aux = pd.DataFrame({"t": [0.0, 0.1, 0.2], "e_fluid": [1.0, 0.9, 0.95], "drag_work": [0.0, -0.5, 0.2]})
    assert fluid_energy_defects(aux) == pytest.approx([-0.05, 0.03])
    # 0.03 / 0.1^2
    assert energy_consistency_constant(aux, floor=0.0) == pytest.approx(3.0)
    assert energy_consistency_constant(aux, floor=0.05) == 0.0
