"""The toric code decoding game as an episodic environment."""

from dataclasses import dataclass, field
from enum import StrEnum

from app.network import Phenotype
from app.perspectives import GlobalAction, generate_perspectives, select_action
from app.toric_code import NoiseKind, Syndrome, ToricState, apply_pauli, is_logical_error, measure_syndrome


class GameMode(StrEnum):
    TRAINING = "training"
    EVALUATION = "evaluation"


@dataclass(frozen=True, eq=False)
class StepResult:
    syndrome: Syndrome
    reward: float
    terminated: bool
    truncated: bool


@dataclass
class DecodingGame:
    """One game on a pre-noised puzzle.

    Reward is 1 when the syndrome is cleared without a logical error and 0
    otherwise. Training games end with reward 0 as soon as a move repeats;
    evaluation games are truncated after max_steps moves.
    """

    puzzle: ToricState
    mode: GameMode
    max_steps: int
    state: ToricState = field(init=False)
    steps: int = field(init=False, default=0)
    taken: set[GlobalAction] = field(init=False, default_factory=set)

    def __post_init__(self):
        self.state = self.puzzle

    def reset(self) -> Syndrome:
        self.state = self.puzzle
        self.steps = 0
        self.taken = set()
        return measure_syndrome(self.state)

    def step(self, action: GlobalAction) -> StepResult:
        if self.mode == GameMode.TRAINING and action in self.taken:
            return StepResult(measure_syndrome(self.state), 0.0, terminated=True, truncated=False)
        self.taken.add(action)
        self.state = apply_pauli(self.state, action.qubit, action.pauli)
        self.steps += 1
        syndrome = measure_syndrome(self.state)
        if syndrome.is_empty:
            return StepResult(syndrome, self.final_reward(), terminated=True, truncated=False)
        return StepResult(syndrome, 0.0, terminated=False, truncated=self.steps >= self.max_steps)

    def final_reward(self) -> float:
        return 0.0 if is_logical_error(self.state) else 1.0


def play_game(net: Phenotype, puzzle: ToricState, kind: NoiseKind, mode: GameMode, max_steps: int) -> bool:
    """Decode puzzle with net; True when the game is won."""
    game = DecodingGame(puzzle, mode, max_steps)
    syndrome = game.reset()
    if syndrome.is_empty:
        return game.final_reward() == 1.0
    while True:
        action = select_action(net, generate_perspectives(syndrome, kind))
        result = game.step(action)
        if result.terminated or result.truncated:
            return result.reward == 1.0
        syndrome = result.syndrome
