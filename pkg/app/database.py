import os
from pathlib import Path
from typing import Optional

from sqlalchemy.engine import Engine
from sqlmodel import Session, SQLModel, create_engine

from app.errors import DecoderError

# Import the table models so they are registered on SQLModel.metadata
from app.models import GenerationRecord, RunRecord  # noqa: F401

DATABASE_FILENAME = "runs.db"

ENGINE: Optional[Engine] = None


def database_url(out_dir: Path) -> str:
    return os.environ.get("APP_DATABASE_URL", f"sqlite:///{out_dir / DATABASE_FILENAME}")


def configure(out_dir: Path) -> Engine:
    """Point the module engine at the ledger of out_dir (or APP_DATABASE_URL when set)."""
    global ENGINE
    if ENGINE is not None:
        ENGINE.dispose()
    ENGINE = create_engine(database_url(out_dir))
    return ENGINE


def get_engine() -> Engine:
    if ENGINE is None:
        raise DecoderError("run ledger is not configured; call app.startup.startup(out_dir) first")
    return ENGINE


def create_tables():
    SQLModel.metadata.create_all(get_engine())


def get_session():
    return Session(get_engine())


def reset_db():
    """Wipe all tables in the database. Use with caution - for testing only!"""
    SQLModel.metadata.drop_all(get_engine())
    SQLModel.metadata.create_all(get_engine())
