import json
from datetime import datetime
from enum import StrEnum
from pathlib import Path
from typing import Optional

from pydantic import ValidationError
from sqlmodel import Field, SQLModel

from app.errors import ContractViolation
from app.genome import ConnectionGene, Genome, MutationRates, NodeGene, NodeKind, check_invariants
from app.perspectives import input_size, output_size
from app.toric_code import NoiseKind

GENOME_FORMAT_VERSION = 1


class SelectionScheme(StrEnum):
    TRUNCATION = "truncation"
    TOURNAMENT = "tournament"


def default_training_rates(mode: NoiseKind) -> list[float]:
    rates = [0.01, 0.05, 0.1, 0.15]
    return rates + [0.2] if mode == NoiseKind.DEPOLARIZING else rates


def default_eval_grid(mode: NoiseKind) -> list[float]:
    grid = [0.01, 0.03, 0.05, 0.07, 0.09, 0.11, 0.13, 0.15]
    return grid + [0.17, 0.2] if mode == NoiseKind.DEPOLARIZING else grid


# Non-persistent schemas (configuration, validated from TOML/JSON files)
class EvolutionConfig(SQLModel, table=False):
    mode: NoiseKind = Field(default=NoiseKind.BITFLIP)
    d: int = Field(default=3, ge=2)
    pop_size: int = Field(default=150, ge=2)
    generations: int = Field(default=600, ge=1)

    connection_rate: float = Field(default=0.1, ge=0.0, le=1.0)
    node_rate: float = Field(default=0.1, ge=0.0, le=1.0)
    weight_rate: float = Field(default=0.5, ge=0.0, le=1.0)
    bias_rate: float = Field(default=0.1, ge=0.0, le=1.0)
    toggle_rate: float = Field(default=0.01, ge=0.0, le=1.0)
    structural_add_fraction: float = Field(default=0.5, ge=0.0, le=1.0)
    weight_sigma: float = Field(default=0.5, gt=0.0)
    weight_replace_rate: float = Field(default=0.1, ge=0.0, le=1.0)

    c1: float = Field(default=1.0, ge=0.0)
    c2: float = Field(default=1.0, ge=0.0)
    c3: float = Field(default=0.5, ge=0.0)
    compatibility_threshold: float = Field(default=3.0, ge=0.0)
    elitism: int = Field(default=2, ge=0)
    survival_fraction: float = Field(default=0.2, gt=0.0, le=1.0)
    stagnation_limit: int = Field(default=15, ge=1)
    selection: SelectionScheme = Field(default=SelectionScheme.TRUNCATION)
    tournament_size: int = Field(default=3, ge=1)

    training_rates: Optional[list[float]] = Field(default=None)
    puzzles_per_rate: int = Field(default=100, ge=1)
    heldout_size: int = Field(default=5000, ge=1)
    max_steps_multiplier: int = Field(default=4, ge=1)
    sigmoid_slope: float = Field(default=1.0, gt=0.0)
    depolarizing_per_pauli: bool = Field(default=False)

    monitor_rates: list[float] = Field(default_factory=lambda: [0.01, 0.05, 0.1, 0.15])
    monitor_games: int = Field(default=0, ge=0)

    seed_genome: Optional[str] = Field(default=None)
    seed_random_fraction: float = Field(default=0.0, ge=0.0, le=1.0)

    def rates_for_training(self) -> list[float]:
        return self.training_rates if self.training_rates is not None else default_training_rates(self.mode)

    def max_steps(self) -> int:
        return self.max_steps_multiplier * self.d * self.d

    def mutation_rates(self) -> MutationRates:
        return MutationRates(
            connection_rate=self.connection_rate,
            node_rate=self.node_rate,
            weight_rate=self.weight_rate,
            bias_rate=self.bias_rate,
            toggle_rate=self.toggle_rate,
            structural_add_fraction=self.structural_add_fraction,
            weight_sigma=self.weight_sigma,
            weight_replace_rate=self.weight_replace_rate,
        )


class RunConfig(EvolutionConfig, table=False):
    seed: int = Field(default=0, ge=0)
    workers: int = Field(default=1, ge=1)
    out_dir: str = Field(default="runs/default")
    eval_p_grid: Optional[list[float]] = Field(default=None)
    eval_games: int = Field(default=10_000, ge=1)
    matching_limit: int = Field(default=20, ge=2)
    count_overlimit_as_loss: bool = Field(default=False)

    def eval_grid(self) -> list[float]:
        return self.eval_p_grid if self.eval_p_grid is not None else default_eval_grid(self.mode)


class FidelityPoint(SQLModel, table=False):
    p_error: float = Field(ge=0.0, le=1.0)
    games_played: int = Field(ge=0)
    games_won: int = Field(ge=0)
    logical_fidelity: float = Field(ge=0.0, le=1.0)
    wilson_low: Optional[float] = Field(default=None)
    wilson_high: Optional[float] = Field(default=None)


# Genome documents (versioned JSON)
class NodeGeneRecord(SQLModel, table=False):
    id: int
    kind: NodeKind
    bias: float


class ConnectionGeneRecord(SQLModel, table=False):
    innovation: int
    in_node: int = Field(alias="in")
    out_node: int = Field(alias="out")
    weight: float
    enabled: bool


class GenomeDocument(SQLModel, table=False):
    format_version: int = Field(default=GENOME_FORMAT_VERSION)
    n_in: int = Field(ge=1)
    n_out: int = Field(ge=1)
    mode: NoiseKind
    d: int = Field(ge=2)
    sigmoid_slope: float = Field(default=1.0, gt=0.0)
    nodes: list[NodeGeneRecord]
    connections: list[ConnectionGeneRecord]
    manifest: Optional[str] = Field(default=None)

    @classmethod
    def from_genome(
        cls, genome: Genome, mode: NoiseKind, d: int, manifest: Optional[str] = None, sigmoid_slope: float = 1.0
    ) -> "GenomeDocument":
        return cls.model_validate(
            {
                "n_in": genome.n_in,
                "n_out": genome.n_out,
                "mode": mode,
                "d": d,
                "sigmoid_slope": sigmoid_slope,
                "nodes": [{"id": n.id, "kind": n.kind, "bias": n.bias} for _, n in sorted(genome.nodes.items())],
                "connections": [
                    {"innovation": c.innovation, "in": c.in_node, "out": c.out_node, "weight": c.weight, "enabled": c.enabled}
                    for c in genome.genes()
                ],
                "manifest": manifest,
            }
        )

    def to_genome(self) -> Genome:
        nodes = {n.id: NodeGene(n.id, n.kind, n.bias) for n in self.nodes}
        connections = {
            c.innovation: ConnectionGene(c.innovation, c.in_node, c.out_node, c.weight, c.enabled)
            for c in self.connections
        }
        genome = Genome(nodes, connections)
        if genome.n_in != self.n_in or genome.n_out != self.n_out:
            raise ContractViolation(
                f"document declares {self.n_in}x{self.n_out} but its nodes give {genome.n_in}x{genome.n_out}"
            )
        expected = (input_size(self.d, self.mode), output_size(self.mode))
        if (self.n_in, self.n_out) != expected:
            raise ContractViolation(
                f"document arity {self.n_in}x{self.n_out} does not fit a d={self.d} {self.mode} decoder "
                f"({expected[0]}x{expected[1]})"
            )
        check_invariants(genome)
        return genome

    def to_json(self) -> str:
        # stdlib float repr is the shortest round-trip form, so reloading is bit-exact
        return json.dumps(self.model_dump(mode="json", by_alias=True), indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "GenomeDocument":
        try:
            document = cls.model_validate(json.loads(text))
        except (json.JSONDecodeError, ValidationError) as e:
            raise ContractViolation(f"not a genome document: {e}") from e
        if document.format_version != GENOME_FORMAT_VERSION:
            raise ContractViolation(f"unsupported genome format_version {document.format_version}")
        return document

    def save(self, path: Path) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path: Path) -> "GenomeDocument":
        if not path.is_file():
            raise ContractViolation(f"genome file {path} does not exist")
        return cls.from_json(path.read_text(encoding="utf-8"))


# Persistent models (run ledger)
class RunRecord(SQLModel, table=True):
    __tablename__ = "runs"  # type: ignore[assignment]

    id: Optional[int] = Field(default=None, primary_key=True)
    manifest_id: str = Field(max_length=64, index=True)
    mode: str = Field(max_length=20)
    d: int
    seed: int
    pop_size: int
    generations: int
    config_json: str
    champion_path: str = Field(default="")
    champion_heldout: Optional[float] = Field(default=None)
    champion_param_count: Optional[int] = Field(default=None)
    started_at: datetime = Field(default_factory=datetime.utcnow)
    finished_at: Optional[datetime] = Field(default=None)


class GenerationRecord(SQLModel, table=True):
    __tablename__ = "generations"  # type: ignore[assignment]

    id: Optional[int] = Field(default=None, primary_key=True)
    run_id: int = Field(foreign_key="runs.id", index=True)
    generation: int
    best_fitness: float
    mean_fitness: float
    n_species: int
    champion_heldout: float
    param_count_champion: int


class RunSummary(SQLModel, table=False):
    id: int
    manifest_id: str
    mode: str
    d: int
    seed: int
    generations_recorded: int
    champion_heldout: Optional[float]
    champion_param_count: Optional[int]
    started_at: str
    finished_at: Optional[str]

    @classmethod
    def from_run(cls, run: RunRecord, generations_recorded: int) -> "RunSummary":
        return cls(
            id=run.id or 0,
            manifest_id=run.manifest_id,
            mode=run.mode,
            d=run.d,
            seed=run.seed,
            generations_recorded=generations_recorded,
            champion_heldout=run.champion_heldout,
            champion_param_count=run.champion_param_count,
            started_at=run.started_at.isoformat(),
            finished_at=run.finished_at.isoformat() if run.finished_at is not None else None,
        )
