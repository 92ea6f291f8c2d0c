import os
import json
import math
import logging
from typing import Any, Dict, List, Literal, Optional, Tuple

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from errors import ConfigError


def talenti_constant(n: int = 3) -> float:
    """Sharp constant C_S in ||u||_{L^{2n/(n-2)}}^2 <= C_S ||grad u||_{L^2}^2 (n >= 3)."""
    return (math.gamma(n) / math.gamma(n / 2)) ** (2.0 / n) / (math.pi * n * (n - 2))


SOBOLEV_3D = talenti_constant(3)


def load_env() -> Dict[str, Any]:
    load_dotenv()
    cfg = {
        "NSV_THREADS": max(int(os.getenv("NSV_THREADS", "1")), 1),
        "NSV_LOG_LEVEL": os.getenv("NSV_LOG_LEVEL", "INFO").upper(),
        "NSV_RUNS_DB": os.getenv("NSV_RUNS_DB", "./runs.db"),
        "DATABASE_URL": os.getenv("DATABASE_URL", ""),
    }
    return cfg


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", allow_inf_nan=False, frozen=True)


class DomainSection(_Section):
    dimension: Literal[2, 3]
    length: float = Field(gt=0)
    cells: int
    dt: float
    t_end: float
    scenario: Literal["vacuum-blob", "uniform", "custom-table"] = "vacuum-blob"
    seed: int = 0

    @field_validator("cells")
    @classmethod
    def _cells(cls, v):
        if v < 8:
            raise ValueError("at least 8 cells per axis required")
        return v

    @field_validator("dt")
    @classmethod
    def _dt(cls, v):
        if v <= 0:
            raise ValueError("nonpositive time step")
        return v


class FluidSection(_Section):
    viscosity: float = Field(gt=0)
    rho_max: float = Field(default=1.0, ge=0)
    blob_radius: float = Field(default=0.25, gt=0, lt=0.5)
    velocity_profile: Literal["vortex", "shear", "zero"] = "vortex"
    velocity_amplitude: float = Field(default=0.1, ge=0)
    density_table: Optional[str] = None
    linear_tol: float = Field(default=1e-10, gt=0)
    div_tol: float = Field(default=1e-9, gt=0)
    max_iters: int = Field(default=500, ge=1)
    freeze_velocity: bool = False
    fault_disable_projection: bool = False


class KineticSection(_Section):
    drag: float = Field(gt=0)
    particles: int
    mass: float = Field(default=0.1, ge=0)
    blob_radius: float = Field(default=0.2, gt=0, lt=0.5)
    velocity_radius: float = Field(default=0.5, ge=0)
    profile: Literal["top-hat", "bump"] = "top-hat"
    drift: List[float] = Field(default_factory=list)
    symmetrize: bool = True
    density_table: Optional[str] = None

    @field_validator("particles")
    @classmethod
    def _particles(cls, v):
        if v < 1:
            raise ValueError("at least one particle required")
        return v


class TheorySection(_Section):
    sobolev_constant: float = Field(default=SOBOLEV_3D, gt=0)
    smallness_margin: float = Field(default=1.0, gt=0)
    c_star: Optional[float] = Field(default=None, ge=0)
    slack: float = Field(default=0.05, ge=0, lt=1)
    tol: float = Field(default=0.05, ge=0)
    fit_t0: Optional[float] = None
    fit_t1: Optional[float] = None


class OutputSection(_Section):
    directory: str
    snapshot_every: int = Field(default=0, ge=0)
    probe_particles: int = Field(default=0, ge=0)
    probe_times: List[float] = Field(default_factory=list)


class SimConfig(_Section):
    domain: DomainSection
    fluid: FluidSection
    kinetic: KineticSection
    theory: TheorySection = TheorySection()
    output: OutputSection

    @model_validator(mode="after")
    def _cross_checks(self):
        if self.domain.t_end < self.domain.dt:
            raise ValueError("domain.t_end must be >= domain.dt")
        if self.kinetic.drift and len(self.kinetic.drift) != self.domain.dimension:
            raise ValueError("kinetic.drift must have one entry per dimension")
        courant = self.domain.dt * self.max_initial_speed / self.h
        if courant > 1.0:
            raise ValueError(f"CFL violation: dt * max|u0| / h = {courant:.4g} > 1")
        return self

    @property
    def d(self) -> int:
        return self.domain.dimension

    @property
    def h(self) -> float:
        return self.domain.length / self.domain.cells

    @property
    def shape(self):
        return (self.domain.cells,) * self.domain.dimension

    @property
    def n_steps(self) -> int:
        return int(math.ceil(self.domain.t_end / self.domain.dt - 1e-9))

    @property
    def max_initial_speed(self) -> float:
        if self.fluid.freeze_velocity or self.fluid.velocity_profile == "zero":
            return 0.0
        return self.fluid.velocity_amplitude

    @property
    def fit_window(self) -> Optional[Tuple[float, float]]:
        """Configured fit window, or None for the default [max(1, 5 dt), t_end]."""
        if self.theory.fit_t0 is None and self.theory.fit_t1 is None:
            return None
        t0 = self.theory.fit_t0 if self.theory.fit_t0 is not None else max(1.0, 5 * self.domain.dt)
        t1 = self.theory.fit_t1 if self.theory.fit_t1 is not None else self.domain.t_end
        return t0, t1

    @property
    def theory_regime_warning(self) -> bool:
        return self.kinetic.drag < 1.0

    @property
    def theory_dimension_valid(self) -> bool:
        return self.domain.dimension == 3


def _key_of(err: Dict[str, Any]) -> str:
    loc = [str(p) for p in err.get("loc", ())]
    return ".".join(loc) if loc else "<document>"


def validate_config(raw: Dict[str, Any]) -> SimConfig:
    if not isinstance(raw, dict):
        raise ConfigError("<document>", "config must be a JSON object")
    try:
        cfg = SimConfig.model_validate(raw)
    except ValidationError as e:
        first = e.errors()[0]
        key = _key_of(first)
        if first.get("type") == "missing":
            raise ConfigError(key, "missing key") from None
        if "CFL" in first.get("msg", ""):
            key = "domain.dt"
        raise ConfigError(key, first.get("msg", "invalid value")) from None
    if cfg.theory_regime_warning:
        logging.warning(f"kinetic.drag={cfg.kinetic.drag} < 1: outside the theorem regime (kappa >= 1)")
    if not cfg.theory_dimension_valid:
        logging.info("d=2 run: theory-rate comparisons use the 3-D Sobolev constant and are informational")
    return cfg


def load_config(path: str) -> SimConfig:
    if not os.path.isfile(path):
        raise ConfigError("--config", f"config file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        try:
            raw = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError("<document>", f"invalid JSON in {path}: {e}") from None
    return validate_config(raw)
