import os
import uuid
from datetime import datetime
from typing import Any, Dict, List, Optional

import pytz
from sqlalchemy import (Boolean, Column, DateTime, Float, Index, Integer, MetaData, String, Table,
                        create_engine, insert, select)

_ENGINES: Dict[str, Any] = {}
_MD = MetaData()
RUNS = Table(
    "runs", _MD,
    Column("id", Integer, primary_key=True, autoincrement=True),
    Column("run_id", String(64), nullable=False),
    Column("created_at", DateTime(timezone=True), nullable=False),
    Column("scenario", String(32), nullable=False),
    Column("dimension", Integer, nullable=False),
    Column("cells", Integer, nullable=False),
    Column("particles", Integer, nullable=False),
    Column("alpha", Float, nullable=False),
    Column("alpha1", Float, nullable=False),
    Column("alpha2", Float, nullable=False),
    Column("sigma", Float, nullable=False),
    Column("within_budget", Boolean, nullable=False),
    Column("verdicts_passed", Integer, nullable=False),
    Column("verdicts_total", Integer, nullable=False),
    Column("out_dir", String(512), nullable=False, default=""),
    sqlite_autoincrement=True,
)
Index("idx_runs_runid", RUNS.c.run_id)
Index("idx_runs_scenario", RUNS.c.scenario)


def ledger_url(db_path: Optional[str] = None) -> str:
    url = os.getenv("DATABASE_URL")
    if url:
        return url
    path = db_path or os.getenv("NSV_RUNS_DB", "./runs.db")
    d = os.path.dirname(os.path.abspath(path))
    if d and not os.path.isdir(d):
        os.makedirs(d, exist_ok=True)
    return f"sqlite:///{os.path.abspath(path)}"


def _engine(url: str):
    if url not in _ENGINES:
        eng = create_engine(url, pool_pre_ping=True, pool_recycle=3600)
        _MD.create_all(eng)
        _ENGINES[url] = eng
    return _ENGINES[url]


def new_run_id() -> str:
    return uuid.uuid4().hex


def insert_run(row: Dict[str, Any], db_path: Optional[str] = None) -> str:
    """Record one run summary; returns its run_id."""
    run_id = str(row.get("run_id") or new_run_id())
    payload = {
        "run_id": run_id,
        "created_at": datetime.now(pytz.UTC),
        "scenario": str(row["scenario"]),
        "dimension": int(row["dimension"]),
        "cells": int(row["cells"]),
        "particles": int(row["particles"]),
        "alpha": float(row["alpha"]),
        "alpha1": float(row["alpha1"]),
        "alpha2": float(row["alpha2"]),
        "sigma": float(row["sigma"]),
        "within_budget": bool(row["within_budget"]),
        "verdicts_passed": int(row["verdicts_passed"]),
        "verdicts_total": int(row["verdicts_total"]),
        "out_dir": str(row.get("out_dir", "")),
    }
    with _engine(ledger_url(db_path)).begin() as conn:
        conn.execute(insert(RUNS), [payload])
    return run_id


def list_runs(db_path: Optional[str] = None, scenario: Optional[str] = None, limit: int = 100) -> List[Dict[str, Any]]:
    stmt = select(RUNS).order_by(RUNS.c.id.desc()).limit(limit)
    if scenario:
        stmt = stmt.where(RUNS.c.scenario == scenario)
    with _engine(ledger_url(db_path)).begin() as conn:
        return [dict(r._mapping) for r in conn.execute(stmt)]
