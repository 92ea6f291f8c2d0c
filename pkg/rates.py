import math
import logging
from typing import List, NamedTuple, Optional, Tuple

import numpy as np
import pandas as pd

from errors import FitError
from state import TheoryConstants
from utils import write_csv

VERDICT_COLUMNS = ("check", "claimed_rate", "fitted_rate", "pass")
MIN_SAMPLES = 10
# E below this fraction of E0 is round-off residue (e.g. a machine-epsilon mean flow)
ROUNDOFF_FLOOR = 1e-20
# fluid-energy defects below this fraction of max e_fluid are at solver tolerance
ENERGY_FLOOR_REL = 1e-8


class FitResult(NamedTuple):
    rate: float
    prefactor: float
    residual: float
    samples: int


def fit_exponential(t, values, t0: Optional[float] = None, t1: Optional[float] = None) -> FitResult:
    """Least squares of log(values) on [t0, t1]: values ~ C exp(-rate t).

    residual is the max relative deviation |C exp(-rate t) / value - 1| over the window.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(values, dtype=float)
    if t.size == 0:
        raise FitError(float("nan"), "empty series")
    lo = t[0] if t0 is None else t0
    hi = t[-1] if t1 is None else t1
    tol = 1e-9 * max(abs(hi), 1.0)
    mask = (t >= lo - tol) & (t <= hi + tol)
    tw, yw = t[mask], y[mask]
    if tw.size < MIN_SAMPLES:
        raise FitError(lo, f"window [{lo:.6g}, {hi:.6g}] holds {tw.size} samples, need {MIN_SAMPLES}")
    bad = np.flatnonzero(~(yw > 0.0))
    if bad.size:
        raise FitError(float(tw[bad[0]]), f"nonpositive value {yw[bad[0]]!r}")
    slope, intercept = np.polyfit(tw, np.log(yw), 1)
    model = np.exp(intercept + slope * tw)
    return FitResult(rate=float(-slope), prefactor=float(math.exp(intercept)),
                     residual=float(np.max(np.abs(model / yw - 1.0))), samples=int(tw.size))


def default_window(dt: float, t_end: float) -> Tuple[float, float]:
    return max(1.0, 5.0 * dt), t_end


class Verdict(NamedTuple):
    check: str
    claimed_rate: float
    fitted_rate: float
    passed: bool


class DecayReport(NamedTuple):
    verdicts: List[Verdict]
    window: Tuple[float, float]
    informational: bool
    fits: dict

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.verdicts, columns=list(VERDICT_COLUMNS))

    @property
    def passed(self) -> int:
        return sum(1 for v in self.verdicts if v.passed)


def _rate(series: pd.DataFrame, column: str, window: Tuple[float, float]) -> float:
    t = series["t"].to_numpy(dtype=float)
    y = series[column].to_numpy(dtype=float)
    tol = 1e-9 * max(abs(window[1]), 1.0)
    inside = (t >= window[0] - tol) & (t <= window[1] + tol)
    if inside.any() and np.all(y[inside] == 0.0):
        return math.inf
    try:
        return fit_exponential(t, y, *window).rate
    except FitError as e:
        logging.warning(f"fit of {column} skipped: {e}")
        return math.nan


def resolved(series: pd.DataFrame) -> pd.DataFrame:
    """Leading samples with E above ROUNDOFF_FLOOR * E0; everything from the first floor hit on is dropped."""
    E = series["E"].to_numpy(dtype=float)
    if E.size == 0 or not E[0] > 0.0:
        return series
    below = np.flatnonzero(E <= ROUNDOFF_FLOOR * E[0])
    if below.size == 0:
        return series
    logging.info(f"energy reached the round-off floor at t={float(series['t'].iloc[below[0]]):.4g}; "
                 f"later samples ignored")
    return series.iloc[:below[0]]


def weighted_energy_margin(series: pd.DataFrame, alpha1: float) -> float:
    """max_t [e^{a1 t} E(t) + 1/2 int_0^t e^{a1 s} D(s) ds].

    D is taken at the right endpoint of each step, the pairing of the implicit step's
    discrete energy inequality.
    """
    t = series["t"].to_numpy(dtype=float)
    E = series["E"].to_numpy(dtype=float)
    D = series["D"].to_numpy(dtype=float)
    wt = np.exp(alpha1 * t)
    integral = np.concatenate([[0.0], np.cumsum(0.5 * wt[1:] * D[1:] * np.diff(t))])
    return float(np.max(wt * E + integral))


def energy_defect(series: pd.DataFrame) -> float:
    """max_n E(t_{n+1}) - E(t_n) + dt D(t_{n+1}): the measured energy-inequality tolerance."""
    t = series["t"].to_numpy(dtype=float)
    E = series["E"].to_numpy(dtype=float)
    D = series["D"].to_numpy(dtype=float)
    if t.size < 2:
        return 0.0
    return float(np.max(np.diff(E) + np.diff(t) * D[1:]))


def fluid_energy_defects(aux: pd.DataFrame) -> np.ndarray:
    """Per step e_fluid(t_{n+1}) - e_fluid(t_n) - dt * drag_work(t_{n+1})."""
    t = aux["t"].to_numpy(dtype=float)
    e = aux["e_fluid"].to_numpy(dtype=float)
    w = aux["drag_work"].to_numpy(dtype=float)
    if t.size < 2:
        return np.zeros(0)
    return np.diff(e) - np.diff(t) * w[1:]


def energy_floor(aux: pd.DataFrame) -> float:
    return ENERGY_FLOOR_REL * float(np.max(np.abs(aux["e_fluid"].to_numpy(dtype=float)), initial=0.0))


def energy_consistency_constant(aux: pd.DataFrame, floor: Optional[float] = None) -> float:
    """c_E = max_n (defect_n - floor)^+ / dt^2: the quadratic envelope of the implicit step."""
    defects = fluid_energy_defects(aux)
    if defects.size == 0:
        return 0.0
    if floor is None:
        floor = energy_floor(aux)
    dt = np.diff(aux["t"].to_numpy(dtype=float))
    return float(np.max(np.maximum(defects - floor, 0.0) / dt ** 2))


def decay_report(series: pd.DataFrame, constants: TheoryConstants, slack: float = 0.05, tol: float = 0.05,
                 window: Optional[Tuple[float, float]] = None, within_budget: bool = True, *,
                 theory_dimension_valid: bool) -> DecayReport:
    if series is None or len(series) == 0:
        raise FitError(float("nan"), "empty series")
    series = resolved(series)
    t = series["t"].to_numpy(dtype=float)
    if window is None:
        dt = float(t[1] - t[0]) if t.size > 1 else 0.0
        window = default_window(dt, float(t[-1]))
    informational = not (within_budget and constants.sigma <= 1.0 and theory_dimension_valid)
    a, a1, a2 = constants.alpha, constants.alpha1, constants.alpha2
    keep = 1.0 - slack

    fits = {col: _rate(series, col, window) for col in ("E", "D", "R_supp", "sup_jf", "sup_ef", "w1_sur")}
    E = series["E"].to_numpy(dtype=float)
    E0 = float(E[0])
    envelope = np.exp(-2.0 * a * t) * E0 * (1.0 + tol)
    pointwise = bool(np.all(E <= envelope))

    def at_least(value: float, rate: float) -> bool:
        return bool(value >= rate * keep) if not math.isnan(value) else False

    verdicts = [
        Verdict("energy_pointwise", 2 * a, fits["E"], pointwise),
        Verdict("energy_rate_alpha", 2 * a, fits["E"], at_least(fits["E"], 2 * a)),
        Verdict("energy_rate_alpha1", a1, fits["E"], at_least(fits["E"], a1)),
        Verdict("support_rate", a2, fits["R_supp"], at_least(fits["R_supp"], a2)),
        Verdict("jf_rate", a2, fits["sup_jf"], at_least(fits["sup_jf"], a2)),
        Verdict("ef_rate", a2, fits["sup_ef"], at_least(fits["sup_ef"], a2)),
        Verdict("weighted_energy_alpha1", a1, fits["E"],
                weighted_energy_margin(series, a1) <= E0 * (1.0 + tol)),
        Verdict("dissipation_rate_alpha1", a1, fits["D"], at_least(fits["D"], a1)),
        Verdict("w1_rate", a2, fits["w1_sur"], at_least(fits["w1_sur"], a2)),
    ]
    if informational:
        logging.info("decay verdicts are informational: run outside the budget, sigma > 1 or d != 3")
    return DecayReport(verdicts=verdicts, window=window, informational=informational, fits=fits)


def write_verdicts(path: str, report: DecayReport):
    write_csv(path, VERDICT_COLUMNS, ([v.check, v.claimed_rate, v.fitted_rate, v.passed] for v in report.verdicts))
