from collections.abc import Generator
from pathlib import Path

import numpy as np
import pytest

from app.database import reset_db
from app.genome import Genome, new_initial
from app.models import RunConfig
from app.startup import startup


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def ledger(tmp_path: Path) -> Generator[Path, None, None]:
    """Output directory with a fresh SQLite run ledger."""
    out_dir = tmp_path / "run"
    startup(out_dir)
    reset_db()
    yield out_dir


@pytest.fixture
def smoke_config(ledger: Path) -> RunConfig:
    return RunConfig(
        d=3,
        pop_size=10,
        generations=3,
        puzzles_per_rate=5,
        heldout_size=40,
        seed=7,
        out_dir=str(ledger),
    )


@pytest.fixture
def bitflip_genome(rng: np.random.Generator) -> Genome:
    """Minimal d=3 bitflip decoder genome."""
    return new_initial(9, 4, rng)
