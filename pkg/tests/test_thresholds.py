"""Threshold sweeps, desk-scale training and transfer checks.

The sweeps and training runs are slow; run them with `pytest -m slow`.
"""

import itertools
from concurrent.futures import ProcessPoolExecutor

import networkx as nx
import numpy as np
import pytest

from app.evaluation_service import EvaluationService, crossing_point, game_rng
from app.evolution import SEED_STREAM, EvolutionResult, evolve, generations_to_target, initial_population, stream
from app.genome import Genome, InnovationRegistry, param_count
from app.models import EvolutionConfig, GenomeDocument
from app.mwpm import (
    DEFAULT_MATCHING_LIMIT,
    min_weight_matching,
    mwpm_correct,
    plaquette_path,
    star_path,
    torus_distance,
)
from app.toric_code import (
    NoiseKind,
    NoiseModel,
    PauliType,
    ToricState,
    apply_chain,
    apply_noise,
    is_logical_error,
    measure_syndrome,
    new_state,
)
from app.transplant import seed_population, transplant

GAMES = 10_000
WORKERS = 4
TRAINING_SEEDS = [1, 2, 3]

DESK = EvolutionConfig(d=3, pop_size=100, generations=600)
GROWN = EvolutionConfig(d=5, pop_size=100, generations=150, monitor_rates=[0.05], monitor_games=1000)


def _blossom_pairs(defects: list[tuple[int, int]], d: int) -> set:
    graph = nx.Graph()
    for a, b in itertools.combinations(defects, 2):
        graph.add_edge(a, b, weight=torus_distance(a, b, d))
    return nx.min_weight_matching(graph)


def _exact_correct(puzzle: ToricState) -> ToricState:
    """Subset matching within the limit, blossom matching above it; both are exact."""
    syndrome = measure_syndrome(puzzle)
    plaquettes, stars = syndrome.plaquette_defects(), syndrome.star_defects()
    if max(len(plaquettes), len(stars)) <= DEFAULT_MATCHING_LIMIT:
        return mwpm_correct(puzzle)
    d, state = puzzle.d, puzzle
    for a, b in _blossom_pairs(plaquettes, d):
        state = apply_chain(state, plaquette_path(a, b, d), PauliType.X)
    for a, b in _blossom_pairs(stars, d):
        state = apply_chain(state, star_path(a, b, d), PauliType.Z)
    return state


def _exact_decode(puzzle: ToricState) -> bool:
    return not is_logical_error(_exact_correct(puzzle))


def _exact_wins(task: tuple) -> int:
    d, mode, p, p_index, lo, hi = task
    model = NoiseModel(mode, p)
    return sum(_exact_decode(apply_noise(new_state(d), model, game_rng(0, p_index, k))[0]) for k in range(lo, hi))


def _fidelities(d: int, mode: NoiseKind, grid: list[float]) -> list[float]:
    bounds = np.linspace(0, GAMES, WORKERS + 1).astype(int)
    tasks = [
        (d, mode, p, i, int(lo), int(hi)) for i, p in enumerate(grid) for lo, hi in zip(bounds[:-1], bounds[1:])
    ]
    with ProcessPoolExecutor(max_workers=WORKERS) as executor:
        wins = list(executor.map(_exact_wins, tasks))
    return [sum(wins[i * WORKERS : (i + 1) * WORKERS]) / GAMES for i in range(len(grid))]


def _curve(genome: Genome, d: int, grid: list[float], games: int) -> list[float]:
    document = GenomeDocument.from_genome(genome, NoiseKind.BITFLIP, d)
    return [p.logical_fidelity for p in EvaluationService.genome_curve(document, grid, games, seed=9, workers=WORKERS)]


@pytest.fixture(scope="module")
def desk_runs() -> list[EvolutionResult]:
    return [evolve(DESK, seed=seed, workers=WORKERS) for seed in TRAINING_SEEDS]


@pytest.fixture(scope="module")
def desk_champion(desk_runs) -> Genome:
    return max(desk_runs, key=lambda run: run.champion_heldout).champion


def test_crowded_syndromes_are_still_matched_exactly():
    """Syndromes past the subset-matching limit are cleared instead of counted as losses."""
    rng = np.random.default_rng(7)
    crowded = 0
    while crowded < 20:
        puzzle, _ = apply_noise(new_state(7), NoiseModel.depolarizing(0.2), rng)
        syndrome = measure_syndrome(puzzle)
        if max(len(syndrome.plaquette_defects()), len(syndrome.star_defects())) <= DEFAULT_MATCHING_LIMIT:
            continue
        crowded += 1
        assert measure_syndrome(_exact_correct(puzzle)).is_empty


def test_blossom_and_subset_matching_agree_on_weight():
    rng = np.random.default_rng(11)
    for _ in range(50):
        cells = rng.choice(49, size=2 * int(rng.integers(1, 9)), replace=False)
        defects = [(int(k) // 7, int(k) % 7) for k in sorted(cells)]
        blossom = sum(torus_distance(a, b, 7) for a, b in _blossom_pairs(defects, 7))
        subset = sum(torus_distance(a, b, 7) for a, b in min_weight_matching(defects, 7))
        assert blossom == subset


@pytest.mark.slow
def test_bitflip_matching_threshold():
    grid = [0.08, 0.09, 0.10, 0.11, 0.12]
    crossing = crossing_point(grid, _fidelities(5, NoiseKind.BITFLIP, grid), _fidelities(7, NoiseKind.BITFLIP, grid))
    assert crossing is not None
    assert 0.09 <= crossing <= 0.12


@pytest.mark.slow
def test_depolarizing_matching_threshold():
    grid = [0.13, 0.14, 0.15, 0.16, 0.17]
    crossing = crossing_point(
        grid, _fidelities(5, NoiseKind.DEPOLARIZING, grid), _fidelities(7, NoiseKind.DEPOLARIZING, grid)
    )
    assert crossing is not None
    assert 0.13 <= crossing <= 0.17


@pytest.mark.slow
def test_desk_scale_training_tracks_matching(desk_runs, desk_champion):
    assert len(desk_runs) >= 3
    grid = [0.01, 0.05, 0.10]
    evolved = _curve(desk_champion, 3, grid, GAMES)
    matching = [
        p.logical_fidelity
        for p in EvaluationService.baseline_curve(3, NoiseKind.BITFLIP, grid, GAMES, seed=9, workers=WORKERS)
    ]
    for p, ours, reference in zip(grid, evolved, matching):
        tolerance = 0.10 if p >= 0.10 else 0.05
        assert abs(ours - reference) <= tolerance, f"p={p}: evolved {ours:.4f} vs matching {reference:.4f}"


@pytest.mark.slow
def test_desk_champion_stays_small(desk_champion):
    assert param_count(desk_champion) <= 200


@pytest.mark.slow
def test_transplanted_champion_beats_random_genomes_at_low_noise(desk_champion):
    (transplanted,) = _curve(transplant(desk_champion, 3, 5, NoiseKind.BITFLIP), 5, [0.01], games=1000)

    large = DESK.model_copy(update={"d": 5})
    randoms = initial_population(large, seed=2, registry=InnovationRegistry.for_arity(25, 4))
    best_random = max(_curve(g, 5, [0.01], games=1000)[0] for g in randoms)
    assert transplanted > best_random


@pytest.mark.slow
def test_transplanted_seed_reaches_target_sooner(desk_champion):
    grown = transplant(desk_champion, 3, 5, NoiseKind.BITFLIP)
    seeded_generations, fresh_generations = [], []
    for seed in TRAINING_SEEDS:
        registry = InnovationRegistry.for_arity(25, 4)
        population = seed_population(
            grown, GROWN.pop_size, GROWN.mutation_rates(), registry, stream(seed, SEED_STREAM)
        )
        seeded = evolve(GROWN, seed, WORKERS, population, registry)
        fresh = evolve(GROWN, seed, WORKERS)
        seeded_generations.append(generations_to_target(seeded.history, 0.05, 0.8))
        fresh_generations.append(generations_to_target(fresh.history, 0.05, 0.8))

    assert None not in seeded_generations
    never = GROWN.generations
    assert sum(seeded_generations) < sum(never if g is None else g for g in fresh_generations)
