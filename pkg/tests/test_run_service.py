import csv
import json

import pytest

from app.database import reset_db
from app.errors import ConfigError
from app.genome import new_initial
from app.models import GenomeDocument
from app.perspectives import input_size, output_size
from app.run_service import RunService
from app.startup import startup
from app.toric_code import NoiseKind


def _rows(path):
    with path.open(newline="") as handle:
        return list(csv.DictReader(handle))


@pytest.mark.sqlmodel
def test_train_writes_run_artifacts(smoke_config, ledger):
    summary = RunService.train(smoke_config)

    manifest = json.loads((ledger / "manifest.json").read_text())
    champion = GenomeDocument.load(ledger / "champion.json")
    history = _rows(ledger / "history.csv")

    assert summary.manifest_id == manifest["manifest_id"]
    assert summary.generations_recorded == 3
    assert summary.finished_at is not None
    assert champion.manifest == manifest["manifest_id"]
    assert champion.to_genome().n_in == 9
    assert [int(row["generation"]) for row in history] == [0, 1, 2]
    assert {row["manifest"] for row in history} == {manifest["manifest_id"]}
    assert float(history[-1]["champion_heldout"]) == summary.champion_heldout
    assert not (ledger / "monitor.csv").exists()


@pytest.mark.sqlmodel
def test_runs_are_listed(smoke_config):
    assert RunService.list_runs() == []
    first = RunService.train(smoke_config)
    second = RunService.train(smoke_config.model_copy(update={"generations": 2}))
    runs = RunService.list_runs()
    assert [run.id for run in runs] == [first.id, second.id]
    assert [run.generations_recorded for run in runs] == [3, 2]
    assert runs[0].manifest_id != runs[1].manifest_id


@pytest.mark.sqlmodel
@pytest.mark.parametrize("workers", [1, 4, 8])
def test_reruns_reproduce_the_champion(smoke_config, ledger, tmp_path, workers):
    RunService.train(smoke_config)
    again = tmp_path / "again"
    startup(again)
    reset_db()
    RunService.train(smoke_config.model_copy(update={"out_dir": str(again), "workers": workers}))
    assert (again / "champion.json").read_bytes() == (ledger / "champion.json").read_bytes()
    assert (again / "history.csv").read_bytes() == (ledger / "history.csv").read_bytes()


@pytest.mark.sqlmodel
def test_monitor_csv(smoke_config, ledger):
    RunService.train(smoke_config.model_copy(update={"monitor_games": 5, "monitor_rates": [0.0, 0.1]}))
    rows = _rows(ledger / "monitor.csv")
    assert len(rows) == 6
    assert {float(row["p_error"]) for row in rows} == {0.0, 0.1}
    assert all(float(row["logical_fidelity"]) == 1.0 for row in rows if float(row["p_error"]) == 0.0)


@pytest.mark.sqlmodel
def test_seed_genome_is_transplanted_to_the_run_distance(smoke_config, ledger, bitflip_genome):
    seed_path = ledger / "seed.json"
    GenomeDocument.from_genome(bitflip_genome, NoiseKind.BITFLIP, 3).save(seed_path)
    cfg = smoke_config.model_copy(update={"d": 5, "generations": 1, "seed_genome": str(seed_path)})

    population, registry = RunService.seeded_population(cfg)
    assert population is not None and registry is not None
    assert len(population) == cfg.pop_size
    assert all(g.n_in == 25 for g in population)

    RunService.train(cfg)
    assert GenomeDocument.load(ledger / "champion.json").to_genome().n_in == 25


def test_without_seed_genome_evolution_starts_fresh(smoke_config):
    assert RunService.seeded_population(smoke_config) == (None, None)


@pytest.mark.parametrize(
    "genome_d,genome_mode,run_d,run_mode",
    [
        (5, NoiseKind.BITFLIP, 3, NoiseKind.BITFLIP),
        (3, NoiseKind.BITFLIP, 3, NoiseKind.DEPOLARIZING),
    ],
)
def test_unusable_seed_genomes_are_config_errors(smoke_config, ledger, rng, genome_d, genome_mode, run_d, run_mode):
    genome = new_initial(input_size(genome_d, genome_mode), output_size(genome_mode), rng)
    seed_path = ledger / "seed.json"
    GenomeDocument.from_genome(genome, genome_mode, genome_d).save(seed_path)
    cfg = smoke_config.model_copy(update={"d": run_d, "mode": run_mode, "seed_genome": str(seed_path)})
    with pytest.raises(ConfigError) as e:
        RunService.seeded_population(cfg)
    assert e.value.key == "seed_genome"
