"""The generation loop: fitness by playing decoding games, speciation, explicit
fitness sharing and reproduction.

Every random draw comes from a stream keyed by (seed, purpose, ...), so results do
not depend on how fitness evaluation is scheduled across worker processes.
"""

import logging
import math
from collections.abc import Callable, Iterator, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from app.errors import ContractViolation, NetworkCompileError
from app.game import GameMode, play_game
from app.genome import (
    Genome,
    InnovationRegistry,
    MutationRates,
    compatibility_distance,
    crossover,
    mutate,
    new_initial,
    param_count,
)
from app.models import EvolutionConfig, SelectionScheme
from app.network import compile_genome
from app.perspectives import input_size, output_size
from app.toric_code import NoiseKind, NoiseModel, ToricState, apply_noise, new_state

logger = logging.getLogger(__name__)

PUZZLE_STREAM = 1
HELDOUT_STREAM = 2
INIT_STREAM = 3
OFFSPRING_STREAM = 4
MONITOR_STREAM = 5
SEED_STREAM = 6


def stream(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng([seed, *keys])


@dataclass(frozen=True, eq=False)
class PuzzleSet:
    d: int
    kind: NoiseKind
    frames: np.ndarray
    p_errors: np.ndarray

    def __len__(self) -> int:
        return self.frames.shape[0]

    def states(self) -> Iterator[ToricState]:
        for frame in self.frames:
            yield ToricState(self.d, frame.copy())

    def chunks(self, n: int) -> list["PuzzleSet"]:
        bounds = np.linspace(0, len(self), n + 1).astype(int)
        return [
            PuzzleSet(self.d, self.kind, self.frames[lo:hi], self.p_errors[lo:hi])
            for lo, hi in zip(bounds[:-1], bounds[1:])
            if hi > lo
        ]

    @classmethod
    def generate(
        cls,
        d: int,
        kind: NoiseKind,
        rates: Sequence[float],
        per_rate: int,
        rng: np.random.Generator,
        per_pauli: bool = False,
    ) -> "PuzzleSet":
        """per_rate noisy states at each rate, grouped by rate in the given order."""
        frames, labels = [], []
        for p in rates:
            model = NoiseModel(kind, p, per_pauli)
            for _ in range(per_rate):
                state, _ = apply_noise(new_state(d), model, rng)
                frames.append(state.frame)
                labels.append(p)
        return cls(d, kind, np.array(frames, dtype=np.uint8).reshape(-1, 2 * d * d), np.array(labels))


@dataclass
class Species:
    id: int
    representative: Genome
    members: list[Genome] = field(default_factory=list)
    best_fitness_ever: float = -math.inf
    stagnation: int = 0

    @property
    def fitnesses(self) -> list[float]:
        return [g.fitness if g.fitness is not None else 0.0 for g in self.members]

    @property
    def mean_fitness(self) -> float:
        return float(np.mean(self.fitnesses)) if self.members else 0.0

    def update_stagnation(self) -> None:
        best = max(self.fitnesses, default=-math.inf)
        if best > self.best_fitness_ever:
            self.best_fitness_ever = best
            self.stagnation = 0
        else:
            self.stagnation += 1


@dataclass(frozen=True)
class GenerationStats:
    generation: int
    best_fitness: float
    mean_fitness: float
    n_species: int
    champion_heldout: float
    param_count_champion: int
    monitor: dict[float, float] = field(default_factory=dict)


@dataclass
class EvolutionResult:
    champion: Genome
    champion_heldout: float
    history: list[GenerationStats]
    population: list[Genome]


def count_wins(genome: Genome, puzzles: PuzzleSet, mode: GameMode, max_steps: int, slope: float = 1.0) -> int:
    net = compile_genome(genome, slope)
    return sum(play_game(net, state, puzzles.kind, mode, max_steps) for state in puzzles.states())


def evaluate_fitness(g: Genome, puzzles: PuzzleSet, max_steps: int, slope: float = 1.0) -> float:
    """Fraction of puzzles won under the training rules."""
    if len(puzzles) == 0:
        raise ContractViolation("fitness needs at least one puzzle")
    try:
        wins = count_wins(g, puzzles, GameMode.TRAINING, max_steps, slope)
    except NetworkCompileError as e:
        logger.warning(f"genome failed to compile, recording fitness 0: {e}")
        return 0.0
    return wins / len(puzzles)


def _fitness_task(args: tuple[Genome, PuzzleSet, int, float]) -> float:
    genome, puzzles, max_steps, slope = args
    return evaluate_fitness(genome, puzzles, max_steps, slope)


def _wins_task(args: tuple[Genome, PuzzleSet, int, float]) -> int:
    genome, puzzles, max_steps, slope = args
    return count_wins(genome, puzzles, GameMode.EVALUATION, max_steps, slope)


class FitnessEvaluator:
    """Runs independent evaluation tasks serially or on a process pool; results come back in task order."""

    def __init__(self, workers: int, max_steps: int, slope: float = 1.0):
        self.workers = workers
        self.max_steps = max_steps
        self.slope = slope
        self._executor: Optional[ProcessPoolExecutor] = None

    def __enter__(self) -> "FitnessEvaluator":
        if self.workers > 1:
            self._executor = ProcessPoolExecutor(max_workers=self.workers)
        return self

    def __exit__(self, *exc) -> None:
        if self._executor is not None:
            self._executor.shutdown()
            self._executor = None

    def _map(self, fn: Callable, tasks: list) -> list:
        if self._executor is None:
            return [fn(task) for task in tasks]
        chunksize = max(1, len(tasks) // (4 * self.workers))
        return list(self._executor.map(fn, tasks, chunksize=chunksize))

    def fitness(self, population: Sequence[Genome], puzzles: PuzzleSet) -> list[float]:
        return self._map(_fitness_task, [(g, puzzles, self.max_steps, self.slope) for g in population])

    def fidelity(self, genome: Genome, puzzles: PuzzleSet) -> float:
        """Fraction of puzzles won under the evaluation rules."""
        try:
            compile_genome(genome, self.slope)
        except NetworkCompileError as e:
            logger.warning(f"genome failed to compile, recording fidelity 0: {e}")
            return 0.0
        parts = puzzles.chunks(max(1, self.workers))
        wins = self._map(_wins_task, [(genome, part, self.max_steps, self.slope) for part in parts])
        return sum(wins) / len(puzzles)


def speciate(
    population: Sequence[Genome], previous: Sequence[Species], cfg: EvolutionConfig, next_species_id: int
) -> tuple[list[Species], int]:
    """Place each genome in the first species whose representative lies within the threshold.

    Representatives carry over from the previous generation; afterwards each
    species adopts the member closest to its old representative. Empty species
    are dropped.
    """

    def distance(a: Genome, b: Genome) -> float:
        return compatibility_distance(a, b, cfg.c1, cfg.c2, cfg.c3)

    species = [Species(s.id, s.representative, [], s.best_fitness_ever, s.stagnation) for s in previous]
    for genome in population:
        for s in species:
            if distance(genome, s.representative) < cfg.compatibility_threshold:
                s.members.append(genome)
                break
        else:
            species.append(Species(next_species_id, genome, [genome]))
            next_species_id += 1

    species = [s for s in species if s.members]
    for s in species:
        s.representative = min(s.members, key=lambda g: distance(g, s.representative))
    return species, next_species_id


def largest_remainder(quotas: Sequence[float], total: int) -> list[int]:
    """Round non-negative quotas to integers summing exactly to total."""
    floors = [math.floor(q) for q in quotas]
    leftover = total - sum(floors)
    by_remainder = sorted(range(len(quotas)), key=lambda i: (-(quotas[i] - floors[i]), i))
    for i in by_remainder[: max(0, leftover)]:
        floors[i] += 1
    return floors


def _same_genes(g: Genome, champion: Optional[Genome]) -> bool:
    return champion is not None and g.nodes == champion.nodes and g.connections == champion.connections


def allocate_offspring(
    species: Sequence[Species], pop_size: int, stagnation_limit: int, champion: Optional[Genome] = None
) -> list[int]:
    """Next-generation species sizes N_j * mean_j / mean (explicit fitness sharing).

    Species stagnant for longer than stagnation_limit get nothing unless one of
    their members carries the champion's genes; quotas of the survivors are
    rescaled to pop_size. A population with zero total fitness falls back to
    equal shares per surviving species.
    """
    eligible = [
        s.stagnation <= stagnation_limit or any(_same_genes(g, champion) for g in s.members) for s in species
    ]
    if not any(eligible):
        logger.warning("every species is stagnant and none holds the champion; keeping all of them")
        eligible = [True] * len(species)

    survivors = [s for s, keep in zip(species, eligible) if keep]
    total_fitness = sum(sum(s.fitnesses) for s in survivors)
    if total_fitness <= 0.0:
        logger.info("population has zero fitness, allocating equal shares per species")
        shares = [pop_size / len(survivors)] * len(survivors)
    else:
        population_mean = sum(sum(s.fitnesses) for s in species) / sum(len(s.members) for s in species)
        raw = [len(s.members) * s.mean_fitness / population_mean for s in survivors]
        scale = pop_size / sum(raw)
        shares = [q * scale for q in raw]

    rounded = iter(largest_remainder(shares, pop_size))
    return [next(rounded) if keep else 0 for keep in eligible]


def _pick_parent(ranked: list[Genome], pool: list[Genome], cfg: EvolutionConfig, rng: np.random.Generator) -> Genome:
    match cfg.selection:
        case SelectionScheme.TOURNAMENT:
            entrants = rng.integers(len(ranked), size=min(cfg.tournament_size, len(ranked)))
            return ranked[int(entrants.min())]
        case _:
            return pool[int(rng.integers(len(pool)))]


def reproduce(
    species: Sequence[Species],
    sizes: Sequence[int],
    registry: InnovationRegistry,
    cfg: EvolutionConfig,
    seed: int,
    generation: int,
    rates: Optional[MutationRates] = None,
) -> list[Genome]:
    """Elites copied unchanged, remaining slots filled by mutated crossovers of the top members."""
    if sum(sizes) != cfg.pop_size:
        raise ContractViolation(f"species sizes sum to {sum(sizes)}, expected {cfg.pop_size}")
    rates = rates if rates is not None else cfg.mutation_rates()

    offspring: list[Genome] = []
    child_index = 0
    for s, size in zip(species, sizes):
        if size == 0:
            continue
        ranked = sorted(s.members, key=lambda g: -(g.fitness or 0.0))
        for elite in ranked[: min(cfg.elitism, size)]:
            clone = elite.copy()
            clone.fitness = None
            offspring.append(clone)
        pool = ranked[: max(1, math.ceil(cfg.survival_fraction * len(ranked)))]
        for _ in range(size - min(cfg.elitism, size, len(ranked))):
            rng = stream(seed, OFFSPRING_STREAM, generation, child_index)
            child_index += 1
            first, second = _pick_parent(ranked, pool, cfg, rng), _pick_parent(ranked, pool, cfg, rng)
            offspring.append(mutate(crossover(first, second, rng), rates, registry, rng))

    registry.advance_generation()
    return offspring


def initial_population(cfg: EvolutionConfig, seed: int, registry: InnovationRegistry) -> list[Genome]:
    n_in, n_out = input_size(cfg.d, cfg.mode), output_size(cfg.mode)
    return [new_initial(n_in, n_out, stream(seed, INIT_STREAM, i), registry) for i in range(cfg.pop_size)]


def generations_to_target(history: Sequence[GenerationStats], rate: float, target: float) -> Optional[int]:
    """First generation whose monitored fidelity at rate reaches target."""
    for stats in history:
        if stats.monitor.get(rate, -1.0) >= target:
            return stats.generation
    return None


def evolve(
    cfg: EvolutionConfig,
    seed: int,
    workers: int = 1,
    population: Optional[list[Genome]] = None,
    registry: Optional[InnovationRegistry] = None,
    on_generation: Optional[Callable[[GenerationStats, Genome], None]] = None,
) -> EvolutionResult:
    """Run cfg.generations generations and return the best held-out genome ever seen."""
    n_in, n_out = input_size(cfg.d, cfg.mode), output_size(cfg.mode)
    if registry is None:
        registry = InnovationRegistry.for_arity(n_in, n_out)
    if population is None:
        population = initial_population(cfg, seed, registry)
    if len(population) != cfg.pop_size:
        raise ContractViolation(f"population holds {len(population)} genomes, expected {cfg.pop_size}")
    for genome in population:
        if genome.n_in != n_in or genome.n_out != n_out:
            raise ContractViolation(f"genome arity {genome.n_in}x{genome.n_out} does not match {n_in}x{n_out}")
        registry.reserve(genome)

    rates = cfg.rates_for_training()
    heldout = PuzzleSet.generate(
        cfg.d, cfg.mode, rates, max(1, cfg.heldout_size // len(rates)), stream(seed, HELDOUT_STREAM),
        cfg.depolarizing_per_pauli,
    )
    monitor_sets = {
        p: PuzzleSet.generate(cfg.d, cfg.mode, [p], cfg.monitor_games, stream(seed, MONITOR_STREAM, i),
                              cfg.depolarizing_per_pauli)
        for i, p in enumerate(cfg.monitor_rates)
    } if cfg.monitor_games > 0 else {}

    species: list[Species] = []
    next_species_id = 0
    champion, champion_heldout = population[0], -1.0
    history: list[GenerationStats] = []

    with FitnessEvaluator(workers, cfg.max_steps(), cfg.sigmoid_slope) as evaluator:
        for generation in range(cfg.generations):
            puzzles = PuzzleSet.generate(
                cfg.d, cfg.mode, rates, cfg.puzzles_per_rate, stream(seed, PUZZLE_STREAM, generation),
                cfg.depolarizing_per_pauli,
            )
            fitnesses = evaluator.fitness(population, puzzles)
            for genome, fitness in zip(population, fitnesses):
                genome.fitness = fitness
            best = population[int(np.argmax(fitnesses))]

            score = evaluator.fidelity(best, heldout)
            if score > champion_heldout:
                champion, champion_heldout = best.copy(), score

            species, next_species_id = speciate(population, species, cfg, next_species_id)
            for s in species:
                s.update_stagnation()

            stats = GenerationStats(
                generation=generation,
                best_fitness=float(max(fitnesses)),
                mean_fitness=float(np.mean(fitnesses)),
                n_species=len(species),
                champion_heldout=champion_heldout,
                param_count_champion=param_count(champion),
                monitor={p: evaluator.fidelity(best, monitor_set) for p, monitor_set in monitor_sets.items()},
            )
            history.append(stats)
            logger.info(
                f"generation {generation}: best {stats.best_fitness:.4f} mean {stats.mean_fitness:.4f} "
                f"species {stats.n_species} champion held-out {champion_heldout:.4f} "
                f"({stats.param_count_champion} parameters)"
            )
            if on_generation is not None:
                on_generation(stats, champion)

            if generation + 1 < cfg.generations:
                sizes = allocate_offspring(species, cfg.pop_size, cfg.stagnation_limit, champion)
                population = reproduce(species, sizes, registry, cfg, seed, generation)

    return EvolutionResult(champion, champion_heldout, history, population)
