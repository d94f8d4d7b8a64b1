import csv
import json
import logging
from datetime import datetime
from pathlib import Path
from typing import Optional

from sqlmodel import col, func, select

from app.config import canonical_config, write_manifest
from app.database import get_session
from app.errors import ConfigError
from app.evolution import SEED_STREAM, EvolutionResult, GenerationStats, evolve, stream
from app.genome import Genome, InnovationRegistry, param_count
from app.models import GenerationRecord, GenomeDocument, RunConfig, RunRecord, RunSummary
from app.perspectives import input_size, output_size
from app.transplant import seed_population, transplant

logger = logging.getLogger(__name__)

CHAMPION_FILENAME = "champion.json"
HISTORY_FILENAME = "history.csv"
MONITOR_FILENAME = "monitor.csv"

HISTORY_COLUMNS = [
    "generation",
    "best_fitness",
    "mean_fitness",
    "n_species",
    "champion_heldout",
    "param_count_champion",
    "manifest",
]
MONITOR_COLUMNS = ["generation", "p_error", "logical_fidelity", "manifest"]


class RunService:
    """Service layer for training runs and the run ledger."""

    @staticmethod
    def seeded_population(cfg: RunConfig) -> tuple[Optional[list[Genome]], Optional[InnovationRegistry]]:
        """Population grown from cfg.seed_genome, transplanted up to cfg.d when it was trained smaller."""
        if cfg.seed_genome is None:
            return None, None
        document = GenomeDocument.load(Path(cfg.seed_genome))
        if document.mode != cfg.mode:
            raise ConfigError("seed_genome", f"genome was trained for {document.mode}, the run is {cfg.mode}")
        if document.d > cfg.d:
            raise ConfigError("seed_genome", f"genome was trained at d={document.d}, larger than the run's d={cfg.d}")
        genome = document.to_genome()
        if document.d < cfg.d:
            genome = transplant(genome, document.d, cfg.d, cfg.mode)
        registry = InnovationRegistry.for_arity(input_size(cfg.d, cfg.mode), output_size(cfg.mode))
        population = seed_population(
            genome, cfg.pop_size, cfg.mutation_rates(), registry, stream(cfg.seed, SEED_STREAM), cfg.seed_random_fraction
        )
        logger.info(f"seeded {cfg.pop_size} genomes from {cfg.seed_genome} (d={document.d})")
        return population, registry

    @staticmethod
    def train(cfg: RunConfig) -> RunSummary:
        """Run evolution, keeping champion.json and the ledger current after every generation.

        Expects the ledger to be configured for cfg.out_dir (app.startup.startup).
        """
        out_dir = Path(cfg.out_dir)
        manifest = write_manifest(cfg, out_dir)
        champion_path = out_dir / CHAMPION_FILENAME
        population, registry = RunService.seeded_population(cfg)
        run_id = RunService.create_run(cfg, manifest, champion_path)

        def on_generation(stats: GenerationStats, champion: Genome) -> None:
            GenomeDocument.from_genome(champion, cfg.mode, cfg.d, manifest, cfg.sigmoid_slope).save(champion_path)
            RunService.record_generation(run_id, stats)

        result = evolve(cfg, cfg.seed, cfg.workers, population, registry, on_generation)
        RunService.write_history(result, out_dir / HISTORY_FILENAME, manifest)
        if cfg.monitor_games > 0:
            RunService.write_monitor(result, out_dir / MONITOR_FILENAME, manifest)
        return RunService.finish_run(run_id, result)

    @staticmethod
    def create_run(cfg: RunConfig, manifest: str, champion_path: Path) -> int:
        with get_session() as session:
            run = RunRecord(
                manifest_id=manifest,
                mode=cfg.mode.value,
                d=cfg.d,
                seed=cfg.seed,
                pop_size=cfg.pop_size,
                generations=cfg.generations,
                config_json=json.dumps(canonical_config(cfg), sort_keys=True),
                champion_path=str(champion_path),
            )
            session.add(run)
            session.commit()
            session.refresh(run)
            if run.id is None:
                raise RuntimeError("run was not assigned an id")
            return run.id

    @staticmethod
    def record_generation(run_id: int, stats: GenerationStats) -> None:
        with get_session() as session:
            session.add(
                GenerationRecord(
                    run_id=run_id,
                    generation=stats.generation,
                    best_fitness=stats.best_fitness,
                    mean_fitness=stats.mean_fitness,
                    n_species=stats.n_species,
                    champion_heldout=stats.champion_heldout,
                    param_count_champion=stats.param_count_champion,
                )
            )
            session.commit()

    @staticmethod
    def finish_run(run_id: int, result: EvolutionResult) -> RunSummary:
        with get_session() as session:
            run = session.get(RunRecord, run_id)
            if run is None:
                raise RuntimeError(f"run {run_id} vanished from the ledger")
            run.champion_heldout = result.champion_heldout
            run.champion_param_count = param_count(result.champion)
            run.finished_at = datetime.utcnow()
            session.add(run)
            session.commit()
            session.refresh(run)
            return RunSummary.from_run(run, len(result.history))

    @staticmethod
    def list_runs() -> list[RunSummary]:
        """All ledger runs, oldest first."""
        with get_session() as session:
            counts = dict(
                session.exec(
                    select(GenerationRecord.run_id, func.count(col(GenerationRecord.id))).group_by(
                        GenerationRecord.run_id
                    )
                ).all()
            )
            runs = session.exec(select(RunRecord).order_by(col(RunRecord.id))).all()
            return [RunSummary.from_run(run, counts.get(run.id, 0)) for run in runs]

    @staticmethod
    def write_history(result: EvolutionResult, path: Path, manifest: str) -> None:
        with path.open("w", encoding="utf-8", newline="") as handle:
            writer = csv.DictWriter(handle, fieldnames=HISTORY_COLUMNS, lineterminator="\n")
            writer.writeheader()
            for stats in result.history:
                writer.writerow(
                    {
                        "generation": stats.generation,
                        "best_fitness": stats.best_fitness,
                        "mean_fitness": stats.mean_fitness,
                        "n_species": stats.n_species,
                        "champion_heldout": stats.champion_heldout,
                        "param_count_champion": stats.param_count_champion,
                        "manifest": manifest,
                    }
                )

    @staticmethod
    def write_monitor(result: EvolutionResult, path: Path, manifest: str) -> None:
        with path.open("w", encoding="utf-8", newline="") as handle:
            writer = csv.DictWriter(handle, fieldnames=MONITOR_COLUMNS, lineterminator="\n")
            writer.writeheader()
            for stats in result.history:
                for p, fidelity in stats.monitor.items():
                    writer.writerow(
                        {"generation": stats.generation, "p_error": p, "logical_fidelity": fidelity, "manifest": manifest}
                    )
