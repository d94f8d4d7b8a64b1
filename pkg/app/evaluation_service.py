"""Logical-fidelity curves for evolved decoders and the matching baseline."""

import csv
import hashlib
import json
import logging
import math
from collections.abc import Sequence
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import IO, Optional

import numpy as np
from scipy.stats import norm

from app.errors import ContractViolation
from app.game import GameMode, play_game
from app.genome import Genome
from app.models import FidelityPoint, GenomeDocument
from app.mwpm import DEFAULT_MATCHING_LIMIT, mwpm_decode
from app.network import compile_genome
from app.perspectives import input_size, output_size
from app.toric_code import NoiseKind, NoiseModel, apply_noise, new_state

logger = logging.getLogger(__name__)

CURVE_COLUMNS = ["p_error", "games_played", "games_won", "logical_fidelity"]
WILSON_COLUMNS = ["wilson_low", "wilson_high"]


def game_rng(seed: int, p_index: int, game_index: int) -> np.random.Generator:
    return np.random.default_rng([seed, p_index, game_index])


def wilson_interval(wins: int, games: int, confidence: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial success rate."""
    if games == 0:
        return 0.0, 1.0
    z = float(norm.ppf(0.5 + confidence / 2))
    phat = wins / games
    denom = 1 + z * z / games
    center = (phat + z * z / (2 * games)) / denom
    half = z * math.sqrt(phat * (1 - phat) / games + z * z / (4 * games * games)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def crossing_point(
    grid: Sequence[float], first: Sequence[float], second: Sequence[float]
) -> Optional[float]:
    """Error rate where two fidelity curves over the same grid first cross, by linear interpolation."""
    diff = np.asarray(first, dtype=np.float64) - np.asarray(second, dtype=np.float64)
    for k in range(len(diff) - 1):
        if diff[k] == 0.0:
            return float(grid[k])
        if diff[k] * diff[k + 1] < 0.0:
            t = diff[k] / (diff[k] - diff[k + 1])
            return float(grid[k] + t * (grid[k + 1] - grid[k]))
    if len(diff) and diff[-1] == 0.0:
        return float(grid[-1])
    return None


# Worker tasks; module level so the process pool can pickle them
def _genome_wins(args: tuple) -> int:
    genome, d, mode, per_pauli, p, p_index, lo, hi, seed, max_steps, slope = args
    net = compile_genome(genome, slope)
    model = NoiseModel(mode, p, per_pauli)
    wins = 0
    for game_index in range(lo, hi):
        puzzle, _ = apply_noise(new_state(d), model, game_rng(seed, p_index, game_index))
        wins += play_game(net, puzzle, mode, GameMode.EVALUATION, max_steps)
    return wins


def _baseline_wins(args: tuple) -> int:
    d, mode, per_pauli, p, p_index, lo, hi, seed, limit, overlimit_as_loss = args
    model = NoiseModel(mode, p, per_pauli)
    wins = 0
    for game_index in range(lo, hi):
        puzzle, _ = apply_noise(new_state(d), model, game_rng(seed, p_index, game_index))
        wins += mwpm_decode(puzzle, limit, overlimit_as_loss)
    return wins


def _game_ranges(games: int, workers: int) -> list[tuple[int, int]]:
    bounds = np.linspace(0, games, max(1, workers) + 1).astype(int)
    return [(int(lo), int(hi)) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]


def _run_curve(fn, tasks_by_p: list[list[tuple]], p_grid: Sequence[float], games: int, workers: int,
               wilson: bool) -> list[FidelityPoint]:
    flat = [task for tasks in tasks_by_p for task in tasks]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(fn, flat))
    else:
        results = [fn(task) for task in flat]

    points, k = [], 0
    for p, tasks in zip(p_grid, tasks_by_p):
        wins = sum(results[k : k + len(tasks)])
        k += len(tasks)
        low, high = wilson_interval(wins, games) if wilson else (None, None)
        points.append(
            FidelityPoint(
                p_error=p, games_played=games, games_won=wins, logical_fidelity=wins / games,
                wilson_low=low, wilson_high=high,
            )
        )
        logger.info(f"p={p}: {wins}/{games} games won")
    return points


def _check_grid(p_grid: Sequence[float], games: int) -> None:
    if games < 1:
        raise ContractViolation(f"a fidelity point needs at least one game, got {games}")
    if not p_grid:
        raise ContractViolation("the error-rate grid is empty")
    if any(not 0.0 <= p <= 1.0 for p in p_grid):
        raise ContractViolation(f"error rates must lie in [0, 1], got {list(p_grid)}")


def curve_manifest(**params) -> str:
    payload = json.dumps(params, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class EvaluationService:
    """Plays batches of evaluation games; game k at grid point i always draws from stream (seed, i, k)."""

    @staticmethod
    def genome_curve(
        document: GenomeDocument,
        p_grid: Sequence[float],
        games: int,
        seed: int,
        workers: int = 1,
        max_steps_multiplier: int = 4,
        per_pauli: bool = False,
        wilson: bool = False,
    ) -> list[FidelityPoint]:
        _check_grid(p_grid, games)
        genome = document.to_genome()
        EvaluationService.check_arity(genome, document.d, document.mode)
        compile_genome(genome, document.sigmoid_slope)
        max_steps = max_steps_multiplier * document.d * document.d
        tasks = [
            [
                (genome, document.d, document.mode, per_pauli, p, i, lo, hi, seed, max_steps, document.sigmoid_slope)
                for lo, hi in _game_ranges(games, workers)
            ]
            for i, p in enumerate(p_grid)
        ]
        return _run_curve(_genome_wins, tasks, p_grid, games, workers, wilson)

    @staticmethod
    def baseline_curve(
        d: int,
        mode: NoiseKind,
        p_grid: Sequence[float],
        games: int,
        seed: int,
        workers: int = 1,
        limit: int = DEFAULT_MATCHING_LIMIT,
        overlimit_as_loss: bool = False,
        per_pauli: bool = False,
        wilson: bool = False,
    ) -> list[FidelityPoint]:
        _check_grid(p_grid, games)
        if d < 2:
            raise ContractViolation(f"code distance must be at least 2, got {d}")
        tasks = [
            [(d, mode, per_pauli, p, i, lo, hi, seed, limit, overlimit_as_loss) for lo, hi in _game_ranges(games, workers)]
            for i, p in enumerate(p_grid)
        ]
        return _run_curve(_baseline_wins, tasks, p_grid, games, workers, wilson)

    @staticmethod
    def check_arity(genome: Genome, d: int, mode: NoiseKind) -> None:
        expected = (input_size(d, mode), output_size(mode))
        if (genome.n_in, genome.n_out) != expected:
            raise ContractViolation(
                f"genome arity {genome.n_in}x{genome.n_out} does not fit a d={d} {mode} decoder "
                f"({expected[0]}x{expected[1]})"
            )

    @staticmethod
    def write_csv(points: Sequence[FidelityPoint], handle: IO[str], manifest: str, wilson: bool = False) -> None:
        columns = CURVE_COLUMNS + (WILSON_COLUMNS if wilson else []) + ["manifest"]
        writer = csv.DictWriter(handle, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        for point in points:
            writer.writerow({**point.model_dump(), "manifest": manifest})

    @staticmethod
    def save_csv(points: Sequence[FidelityPoint], path: Path, manifest: str, wilson: bool = False) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="") as handle:
            EvaluationService.write_csv(points, handle, manifest, wilson)
