"""
Shared pytest fixtures for the designlab test suite.

Strategy
--------
The run ledger is replaced with a fresh temporary SQLite file for every test
that needs it, and ``Config.DATA_DIR`` / ``Config.OUTPUT_DIR`` point into the
test's ``tmp_path`` so no artifact lands in the working tree.

``designlab.db`` holds a module-level ``_engine``.  The ``patched_config``
fixture swaps it for one pointing at a temp file and restores the original on
teardown via monkeypatch.

Monte Carlo tests use fixed seeds and sample counts small enough to keep the
suite quick; tolerances are stated in standard errors.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any

import numpy as np
import pytest

from sqlalchemy import create_engine, event
from sqlalchemy.orm import Session

import designlab.db as db_module

from designlab.config import Config
from designlab.db import Base
from designlab.models import BipartiteDims, ExperimentConfig
from designlab.numkit import DensityMatrix


# ---------------------------------------------------------------------------
# Engine factory
# ---------------------------------------------------------------------------


def _make_ledger_engine(path: Path):
    engine = create_engine(f"sqlite:///{path}")

    @event.listens_for(engine, "connect")
    def set_pragma(dbapi_connection, _):
        cur = dbapi_connection.cursor()
        cur.execute("PRAGMA journal_mode=WAL")
        cur.close()

    return engine


# ---------------------------------------------------------------------------
# Core fixtures
# ---------------------------------------------------------------------------


@pytest.fixture()
def patched_config(tmp_path: Path, monkeypatch):
    """
    Point the ledger engine and every data directory at ``tmp_path``.
    Restores the originals on teardown via monkeypatch.
    """
    engine = _make_ledger_engine(tmp_path / "runs.db")
    monkeypatch.setattr(db_module, "_engine", engine)
    monkeypatch.setattr(Config, "DATA_DIR", tmp_path)
    monkeypatch.setattr(Config, "OUTPUT_DIR", tmp_path / "runs")
    monkeypatch.setattr(Config, "RUNS_DB_PATH", tmp_path / "runs.db")
    monkeypatch.delenv(Config.SEED_ENV_VAR, raising=False)

    yield {
        "db_path": tmp_path / "runs.db",
        "output_dir": tmp_path / "runs",
        "engine": engine,
    }

    engine.dispose()


@pytest.fixture()
def ledger_db(patched_config):
    """Initialised run ledger; yields an open Session."""
    engine = patched_config["engine"]
    Base.metadata.create_all(engine)
    with Session(engine) as session:
        yield session


@pytest.fixture()
def rng():
    return np.random.default_rng(20240611)


# ---------------------------------------------------------------------------
# Data factory helpers
# ---------------------------------------------------------------------------


def make_density_matrix(d: int, rank: int | None = None, seed: int = 0) -> DensityMatrix:
    """Random full-rank (or rank-``rank``) mixed state of dimension ``d``."""
    gen = np.random.default_rng(seed)
    rank = rank or d
    g = gen.standard_normal((d, rank)) + 1j * gen.standard_normal((d, rank))
    rho = g @ g.conj().T
    return DensityMatrix(matrix=rho / np.trace(rho).real)


def make_dims(d_S: int = 2, d_E: int = 4) -> BipartiteDims:
    return BipartiteDims(d_S=d_S, d_E=d_E)


def make_experiment_config(**overrides: Any) -> ExperimentConfig:
    """Small, seeded Haar entropy experiment; override any field."""
    data: dict = {
        "kind": "entropy",
        "ensemble": {"name": "haar"},
        "dims": {"d_S": 2, "d_E": 4},
        "samples": 2_000,
        "batch_size": 500,
        "grid": [0.0, 0.25, 0.5, 1.0],
        "seed": 7,
    }
    data.update(overrides)
    return ExperimentConfig.model_validate(data)
