"""
Run ledger: one row per certification or experiment run.

Timestamps and artifact paths live here and only here, so the CSV/JSON
payloads a run writes stay byte-identical across reproductions.
"""

import time

from typing import List, Optional

from sqlalchemy import (
    Boolean,
    Integer,
    String,
    TypeDecorator,
    create_engine,
    event,
    select,
)
from sqlalchemy.orm import DeclarativeBase, Mapped, Session, mapped_column

from designlab.config import Config


def _make_engine():
    engine = create_engine(f"sqlite:///{Config.RUNS_DB_PATH}")

    @event.listens_for(engine, "connect")
    def set_pragma(dbapi_connection, _connection_record):
        cursor = dbapi_connection.cursor()
        cursor.execute("PRAGMA journal_mode=WAL")
        cursor.close()

    return engine


_engine = _make_engine()


def get_db_session() -> Session:
    """Create a new SQLAlchemy session for the ledger."""
    return Session(_engine)


class Seed(TypeDecorator):
    """Unsigned 64-bit seeds kept in SQLite's signed INTEGER by two's complement."""

    impl = Integer
    cache_ok = True

    def process_bind_param(self, value, dialect):
        if value is not None and value >= 2**63:
            return value - 2**64
        return value

    def process_result_value(self, value, dialect):
        if value is not None and value < 0:
            return value + 2**64
        return value


class Base(DeclarativeBase):
    pass


class RunRecord(Base):
    """A finished run.

    ``config_hash`` is the reproduction key: two rows with the same hash and
    seed describe the same computation and point at identical artifacts.
    """

    __tablename__ = "run"

    id: Mapped[int] = mapped_column(Integer, primary_key=True, autoincrement=True)
    command: Mapped[str] = mapped_column(String, nullable=False, index=True)
    kind: Mapped[Optional[str]] = mapped_column(String, nullable=True)
    seed: Mapped[Optional[int]] = mapped_column(Seed, nullable=True)
    config_hash: Mapped[Optional[str]] = mapped_column(String, nullable=True, index=True)
    version: Mapped[str] = mapped_column(String, nullable=False, default=Config.VERSION)
    passed: Mapped[Optional[bool]] = mapped_column(Boolean, nullable=True)
    csv_path: Mapped[Optional[str]] = mapped_column(String, nullable=True)
    json_path: Mapped[Optional[str]] = mapped_column(String, nullable=True)

    # Milliseconds since the epoch
    time_created: Mapped[int] = mapped_column(Integer, nullable=False)


def init_db():
    """Create tables if they don't exist."""
    Config.DATA_DIR.mkdir(parents=True, exist_ok=True)
    Base.metadata.create_all(_engine)


# ---------------------------------------------------------------------------
# Run helpers
# ---------------------------------------------------------------------------


def record_run(
    command: str,
    kind: Optional[str] = None,
    seed: Optional[int] = None,
    config_hash: Optional[str] = None,
    passed: Optional[bool] = None,
    csv_path: Optional[str] = None,
    json_path: Optional[str] = None,
) -> RunRecord:
    """Append a run to the ledger and return the stored row."""
    with get_db_session() as db:
        row = RunRecord(
            command=command,
            kind=kind,
            seed=seed,
            config_hash=config_hash,
            version=Config.VERSION,
            passed=passed,
            csv_path=csv_path,
            json_path=json_path,
            time_created=int(time.time() * 1000),
        )
        db.add(row)
        db.commit()
        db.refresh(row)
        return row


def list_runs(command: Optional[str] = None, limit: int = 50) -> List[RunRecord]:
    """Newest runs first, optionally only those of one command."""
    query = select(RunRecord).order_by(RunRecord.time_created.desc(), RunRecord.id.desc())
    if command is not None:
        query = query.where(RunRecord.command == command)
    with get_db_session() as db:
        return list(db.scalars(query.limit(limit)).all())


def get_run(run_id: int) -> Optional[RunRecord]:
    """Return the RunRecord with the given id, or None."""
    with get_db_session() as db:
        return db.get(RunRecord, run_id)


def find_runs_by_hash(config_hash: str) -> List[RunRecord]:
    """Every run of the same config, oldest first."""
    with get_db_session() as db:
        return list(
            db.scalars(
                select(RunRecord)
                .where(RunRecord.config_hash == config_hash)
                .order_by(RunRecord.id)
            ).all()
        )
