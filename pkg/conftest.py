import copy

import numpy as np
import pytest

from config import validate_config
from grid import Spectral

BASE_DOC = {
    "domain": {"dimension": 2, "length": 1.0, "cells": 16, "dt": 0.01, "t_end": 0.05,
               "scenario": "vacuum-blob", "seed": 3},
    "fluid": {"viscosity": 1.0, "velocity_profile": "vortex", "velocity_amplitude": 0.05},
    "kinetic": {"drag": 1.0, "particles": 200, "mass": 0.1, "velocity_radius": 0.3},
    "output": {"directory": "out"},
}


def merge(doc, overrides):
    out = copy.deepcopy(doc)
    for section, values in (overrides or {}).items():
        if isinstance(values, dict):
            out.setdefault(section, {}).update(values)
        else:
            out[section] = values
    return out


@pytest.fixture(autouse=True)
def isolated_env(monkeypatch, tmp_path):
    monkeypatch.delenv("DATABASE_URL", raising=False)
    monkeypatch.delenv("NSV_THREADS", raising=False)
    monkeypatch.setenv("NSV_RUNS_DB", str(tmp_path / "runs.db"))


@pytest.fixture
def raw_config(tmp_path):
    return merge(BASE_DOC, {"output": {"directory": str(tmp_path / "out")}})


@pytest.fixture
def make_config(raw_config):
    def build(**overrides):
        return validate_config(merge(raw_config, overrides))
    return build


@pytest.fixture
def small_config(make_config):
    return make_config()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_solenoidal(rng, n, d, amp=0.1):
    h = 1.0 / n
    u = tuple(rng.normal(size=(n,) * d) for _ in range(d))
    u = Spectral(n, d, h).project(u)
    peak = max(float(np.abs(c).max()) for c in u)
    return tuple(amp * c / peak for c in u)
