import json

import numpy as np
import pytest

from conftest import merge
from db import list_runs
from main import EXIT_FAIL, EXIT_OK, EXIT_USAGE, main
from state import SERIES_COLUMNS
from utils import write_csv


@pytest.fixture
def config_file(tmp_path, raw_config):
    def write(**overrides):
        path = tmp_path / "config.json"
        path.write_text(json.dumps(merge(raw_config, overrides)))
        return str(path)
    return write


def test_run_writes_series_report_and_ledger(config_file, tmp_path):
    out = tmp_path / "result"
    code = main(["run", "--config", config_file(domain={"t_end": 0.03}), "--out", str(out)])
    assert code == EXIT_OK
    assert (out / "series.csv").read_text().splitlines()[0] == ",".join(SERIES_COLUMNS)
    report = json.loads((out / "report.json").read_text())
    assert report["schema_version"] == 1
    assert report["grid"]["N"] == 16
    assert len(report["verdicts"]) == 9
    assert (out / "verdicts.csv").exists()
    rows = list_runs()
    assert len(rows) == 1
    assert rows[0]["scenario"] == "vacuum-blob"
    assert rows[0]["out_dir"] == str(out)


def test_run_without_ledger(config_file, tmp_path):
    out = tmp_path / "result"
    assert main(["run", "--config", config_file(domain={"t_end": 0.01}), "--out", str(out), "--no-ledger"]) == EXIT_OK
    assert list_runs() == []


def test_missing_config_is_usage_error(tmp_path, capsys):
    path = tmp_path / "missing.json"
    assert main(["run", "--config", str(path)]) == EXIT_USAGE
    assert str(path) in capsys.readouterr().err


def test_invalid_config_is_usage_error(config_file, capsys):
    assert main(["run", "--config", config_file(domain={"dt": -1.0})]) == EXIT_USAGE
    assert "nonpositive time step" in capsys.readouterr().err


def test_unknown_command_is_usage_error():
    assert main(["simulate"]) == EXIT_USAGE


def test_threads_must_be_positive(config_file):
    assert main(["--threads", "0", "run", "--config", config_file()]) == EXIT_USAGE


def _series_file(tmp_path, rate=3.0):
    t = np.linspace(0.0, 2.0, 201)
    path = tmp_path / "series.csv"
    write_csv(str(path), ("t", "E"), zip(t, np.exp(-rate * t)))
    return str(path)


def test_fit_recovers_rate(tmp_path, capsys):
    assert main(["fit", "--series", _series_file(tmp_path), "--column", "E"]) == EXIT_OK
    out = capsys.readouterr().out
    rate = float(out.split("lambda_fit=")[1].split()[0])
    assert rate == pytest.approx(3.0, abs=1e-9)


def test_fit_unknown_column(tmp_path, capsys):
    assert main(["fit", "--series", _series_file(tmp_path), "--column", "Energy"]) == EXIT_USAGE
    assert "available: t, E" in capsys.readouterr().err


def test_fit_missing_file(tmp_path):
    assert main(["fit", "--series", str(tmp_path / "none.csv"), "--column", "E"]) == EXIT_USAGE


def test_fit_failure_exits_one(tmp_path, capsys):
    path = tmp_path / "series.csv"
    write_csv(str(path), ("t", "E"), [(0.1 * k, 1.0 if k != 7 else 0.0) for k in range(20)])
    assert main(["fit", "--series", str(path), "--column", "E"]) == EXIT_FAIL
    assert "t=0.7" in capsys.readouterr().err


def test_verify_flags_disabled_projection(config_file, capsys):
    path = config_file(domain={"t_end": 0.03}, fluid={"fault_disable_projection": True})
    assert main(["verify", "--config", path, "--only-config", "--no-oracles"]) == EXIT_FAIL
    out = capsys.readouterr().out
    assert "FAILED config/divergence" in out
    assert "FAILED config/stokes_div_steps" in out


def test_verify_warns_about_weak_drag(config_file, capsys):
    path = config_file(domain={"t_end": 0.03}, kinetic={"drag": 0.9})
    main(["verify", "--config", path, "--only-config", "--no-oracles"])
    out = capsys.readouterr().out
    assert "WARNING: kinetic.drag=0.9" in out
    assert "WARNING: d=2" in out


def test_run_list_prints_ledger(config_file, tmp_path, capsys):
    out = tmp_path / "result"
    assert main(["run", "--config", config_file(domain={"t_end": 0.01}), "--out", str(out)]) == EXIT_OK
    capsys.readouterr()
    assert main(["run", "--list"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].split()[:3] == ["run_id", "created_at", "scenario"]
    assert len(lines) == 2
    assert "vacuum-blob" in lines[1]
    assert lines[1].endswith(str(out))
    assert main(["run", "--list", "--scenario", "pure-fluid"]) == EXIT_OK
    assert len(capsys.readouterr().out.splitlines()) == 1


def test_run_without_config_is_usage_error(capsys):
    assert main(["run"]) == EXIT_USAGE
    assert "--config" in capsys.readouterr().err
