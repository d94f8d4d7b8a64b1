"""Toric code simulation on a d x d periodic lattice.

Qubits live on edges. Horizontal edge h(r, c) has index r*d + c, vertical edge
v(r, c) has index d*d + r*d + c. Plaquette (r, c) is bounded by
h(r, c), h(r+1, c), v(r, c), v(r, c+1); star (r, c) touches
h(r, c), h(r, c-1), v(r, c), v(r-1, c). All coordinates wrap modulo d.

The frame stores the accumulated Pauli (errors times corrections) per qubit in
binary symplectic form: bit 0 is the X component, bit 1 the Z component.
"""

from collections.abc import Iterable
from dataclasses import dataclass
from enum import IntEnum, StrEnum

import numpy as np

from app.errors import ContractViolation


class PauliType(IntEnum):
    I = 0  # noqa: E741
    X = 1
    Z = 2
    Y = 3

    def compose(self, other: "PauliType") -> "PauliType":
        """Product modulo phase; the symplectic encoding makes this an XOR."""
        return PauliType(self ^ other)

    @property
    def has_x(self) -> bool:
        return bool(self & 1)

    @property
    def has_z(self) -> bool:
        return bool(self & 2)


class NoiseKind(StrEnum):
    BITFLIP = "bitflip"
    DEPOLARIZING = "depolarizing"


@dataclass(frozen=True)
class NoiseModel:
    kind: NoiseKind
    p_error: float
    per_pauli: bool = False

    def __post_init__(self):
        if not 0.0 <= self.p_error <= 1.0:
            raise ContractViolation(f"p_error must lie in [0, 1], got {self.p_error}")
        if self.per_pauli and self.kind == NoiseKind.DEPOLARIZING and self.p_error > 1.0 / 3.0:
            raise ContractViolation(f"per-Pauli depolarizing noise needs p_error <= 1/3, got {self.p_error}")

    @classmethod
    def bitflip(cls, p_error: float) -> "NoiseModel":
        return cls(NoiseKind.BITFLIP, p_error)

    @classmethod
    def depolarizing(cls, p_error: float, per_pauli: bool = False) -> "NoiseModel":
        return cls(NoiseKind.DEPOLARIZING, p_error, per_pauli)


@dataclass(frozen=True, eq=False)
class ToricState:
    d: int
    frame: np.ndarray

    def __post_init__(self):
        if self.d < 2:
            raise ContractViolation(f"code distance must be at least 2, got {self.d}")
        if self.frame.shape != (2 * self.d * self.d,):
            raise ContractViolation(f"frame must hold {2 * self.d * self.d} qubits, got shape {self.frame.shape}")
        self.frame.setflags(write=False)

    @property
    def n_qubits(self) -> int:
        return 2 * self.d * self.d

    def pauli(self, qubit: int) -> PauliType:
        return PauliType(int(self.frame[qubit]))

    def with_frame(self, frame: np.ndarray) -> "ToricState":
        return ToricState(self.d, frame)


@dataclass(frozen=True, eq=False)
class Syndrome:
    plaquettes: np.ndarray
    stars: np.ndarray

    @property
    def d(self) -> int:
        return self.plaquettes.shape[0]

    @property
    def is_empty(self) -> bool:
        return not self.plaquettes.any() and not self.stars.any()

    def plaquette_defects(self) -> list[tuple[int, int]]:
        return [(int(r), int(c)) for r, c in np.argwhere(self.plaquettes)]

    def star_defects(self) -> list[tuple[int, int]]:
        return [(int(r), int(c)) for r, c in np.argwhere(self.stars)]


def h_index(d: int, r: int, c: int) -> int:
    return (r % d) * d + (c % d)


def v_index(d: int, r: int, c: int) -> int:
    return d * d + (r % d) * d + (c % d)


def new_state(d: int) -> ToricState:
    """Groundstate with an all-identity frame."""
    if d < 2:
        raise ContractViolation(f"code distance must be at least 2, got {d}")
    return ToricState(d, np.zeros(2 * d * d, dtype=np.uint8))


def apply_pauli(state: ToricState, qubit: int, op: PauliType) -> ToricState:
    if not 0 <= qubit < state.n_qubits:
        raise ContractViolation(f"qubit {qubit} outside [0, {state.n_qubits})")
    if op == PauliType.I:
        raise ContractViolation("identity is not a move")
    frame = state.frame.copy()
    frame[qubit] ^= np.uint8(op)
    return state.with_frame(frame)


def apply_chain(state: ToricState, qubits: Iterable[int], op: PauliType) -> ToricState:
    """Apply op to every listed qubit; repeated qubits compose."""
    frame = state.frame.copy()
    np.bitwise_xor.at(frame, np.fromiter(qubits, dtype=np.intp), np.uint8(op))
    return state.with_frame(frame)


def apply_noise(state: ToricState, model: NoiseModel, rng: np.random.Generator) -> tuple[ToricState, int]:
    """Inject independent single-qubit errors; returns the new state and the number of qubits hit.

    The random stream is consumed identically for every p_error so that games keyed
    by the same generator stay aligned across error rates.
    """
    n = state.n_qubits
    draws = rng.random(n)
    match model.kind:
        case NoiseKind.BITFLIP:
            ops = np.where(draws < model.p_error, PauliType.X, PauliType.I).astype(np.uint8)
        case NoiseKind.DEPOLARIZING if model.per_pauli:
            p = model.p_error
            ops = np.select(
                [draws < p, draws < 2 * p, draws < 3 * p],
                [PauliType.X, PauliType.Y, PauliType.Z],
                default=PauliType.I,
            ).astype(np.uint8)
        case NoiseKind.DEPOLARIZING:
            choice = rng.integers(1, 4, size=n, dtype=np.uint8)
            ops = np.where(draws < model.p_error, choice, PauliType.I).astype(np.uint8)
        case _:
            raise ContractViolation(f"unknown noise kind {model.kind!r}")
    return state.with_frame(state.frame ^ ops), int(np.count_nonzero(ops))


def measure_syndrome(state: ToricState) -> Syndrome:
    d = state.d
    x_part = state.frame & 1
    z_part = (state.frame >> 1) & 1
    hx, vx = x_part[: d * d].reshape(d, d), x_part[d * d :].reshape(d, d)
    hz, vz = z_part[: d * d].reshape(d, d), z_part[d * d :].reshape(d, d)
    plaquettes = hx ^ np.roll(hx, -1, axis=0) ^ vx ^ np.roll(vx, -1, axis=1)
    stars = hz ^ np.roll(hz, 1, axis=1) ^ vz ^ np.roll(vz, 1, axis=0)
    return Syndrome(plaquettes.astype(np.uint8), stars.astype(np.uint8))


def has_logical_error(state: ToricState) -> tuple[tuple[bool, bool], tuple[bool, bool]]:
    """Homology class of the frame as parities over fixed cuts.

    X support is counted on row 0 of horizontal edges and column 0 of vertical
    edges (cycles of the lattice, commuting with every star); Z support on row 0
    of vertical edges and column 0 of horizontal edges (dual cycles, commuting
    with every plaquette).
    """
    if not measure_syndrome(state).is_empty:
        raise ContractViolation("logical class is undefined while the syndrome is non-empty")
    d = state.d
    x_part = (state.frame & 1).astype(np.intp)
    z_part = ((state.frame >> 1) & 1).astype(np.intp)
    h_x, v_x = x_part[: d * d].reshape(d, d), x_part[d * d :].reshape(d, d)
    h_z, v_z = z_part[: d * d].reshape(d, d), z_part[d * d :].reshape(d, d)
    x_logical = (bool(h_x[0, :].sum() % 2), bool(v_x[:, 0].sum() % 2))
    z_logical = (bool(v_z[0, :].sum() % 2), bool(h_z[:, 0].sum() % 2))
    return x_logical, z_logical


def is_logical_error(state: ToricState) -> bool:
    x_logical, z_logical = has_logical_error(state)
    return any(x_logical) or any(z_logical)
