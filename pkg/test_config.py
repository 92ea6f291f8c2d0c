import json
import logging
import math

import pytest

from config import SOBOLEV_3D, load_config, load_env, talenti_constant, validate_config
from conftest import BASE_DOC, merge
from errors import ConfigError


def test_valid_config_grid_spacing():
    cfg = validate_config(merge(BASE_DOC, {
        "domain": {"dimension": 2, "length": 1.0, "cells": 64, "dt": 1e-3, "t_end": 0.01},
        "fluid": {"viscosity": 1.0}, "kinetic": {"drag": 1.0},
    }))
    assert cfg.h == 1.0 / 64
    assert cfg.n_steps == 10
    assert cfg.shape == (64, 64)
    assert not cfg.theory_regime_warning


def test_weak_drag_accepted_with_warning(caplog):
    with caplog.at_level(logging.WARNING):
        cfg = validate_config(merge(BASE_DOC, {"kinetic": {"drag": 0.5}}))
    assert cfg.theory_regime_warning
    assert any("kappa >= 1" in r.message for r in caplog.records)


def test_nonpositive_time_step():
    with pytest.raises(ConfigError) as ei:
        validate_config(merge(BASE_DOC, {"domain": {"dt": -1.0}}))
    assert ei.value.key == "domain.dt"
    assert "nonpositive time step" in str(ei.value)


def test_missing_key():
    doc = merge(BASE_DOC, {})
    del doc["domain"]["cells"]
    with pytest.raises(ConfigError) as ei:
        validate_config(doc)
    assert ei.value.key == "domain.cells"
    assert "missing key" in str(ei.value)


def test_unknown_key_rejected():
    with pytest.raises(ConfigError) as ei:
        validate_config(merge(BASE_DOC, {"fluid": {"viscosty": 2.0}}))
    assert ei.value.key == "fluid.viscosty"


def test_non_finite_value_rejected():
    with pytest.raises(ConfigError):
        validate_config(merge(BASE_DOC, {"fluid": {"viscosity": math.nan}}))


def test_cfl_violation_keyed_to_dt():
    with pytest.raises(ConfigError) as ei:
        validate_config(merge(BASE_DOC, {
            "domain": {"cells": 64, "dt": 0.5, "t_end": 1.0},
            "fluid": {"velocity_profile": "shear", "velocity_amplitude": 0.1},
        }))
    assert ei.value.key == "domain.dt"
    assert "CFL" in str(ei.value)


def test_frozen_velocity_skips_cfl():
    cfg = validate_config(merge(BASE_DOC, {
        "domain": {"cells": 64, "dt": 0.5, "t_end": 1.0},
        "fluid": {"velocity_amplitude": 0.1, "freeze_velocity": True},
    }))
    assert cfg.max_initial_speed == 0.0


def test_drift_length_must_match_dimension():
    with pytest.raises(ConfigError):
        validate_config(merge(BASE_DOC, {"kinetic": {"drift": [0.1, 0.2, 0.3]}}))


def test_fit_window():
    assert validate_config(BASE_DOC).fit_window is None
    cfg = validate_config(merge(BASE_DOC, {"theory": {"fit_t1": 0.04}}))
    assert cfg.fit_window == (1.0, 0.04)


def test_load_config_missing_file(tmp_path):
    path = tmp_path / "nope.json"
    with pytest.raises(ConfigError) as ei:
        load_config(str(path))
    assert ei.value.key == "--config"
    assert str(path) in str(ei.value)


def test_load_config_invalid_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{ not json")
    with pytest.raises(ConfigError):
        load_config(str(path))


def test_load_config_round_trip(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(BASE_DOC))
    assert load_config(str(path)).domain.cells == 16


def test_talenti_constant_3d():
    assert SOBOLEV_3D == pytest.approx(0.18255, abs=1e-5)
    assert talenti_constant(3) == SOBOLEV_3D


def test_load_env_threads(monkeypatch):
    assert load_env()["NSV_THREADS"] == 1
    monkeypatch.setenv("NSV_THREADS", "4")
    assert load_env()["NSV_THREADS"] == 4
