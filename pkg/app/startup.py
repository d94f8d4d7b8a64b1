from pathlib import Path

from sqlalchemy.engine import Engine

from app.database import configure, create_tables


def startup(out_dir: Path) -> Engine:
    # called before a command touches the output directory
    out_dir.mkdir(parents=True, exist_ok=True)
    engine = configure(out_dir)
    create_tables()
    return engine
