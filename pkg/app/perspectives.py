"""Translated syndrome views and the mapping from network outputs back to moves.

Input layout (saved genomes depend on it): the shifted plaquette grid row-major,
followed in depolarizing mode by the shifted star grid row-major. The centered
defect always sits at grid cell (0, 0).

Output layout: slot = index % 4 picks a neighbouring edge of the centered
defect, index // 4 picks the Pauli from (X, Y, Z). Bitflip networks have only
the four X outputs.
"""

import math
from collections.abc import Sequence
from dataclasses import dataclass
from enum import StrEnum
from typing import TYPE_CHECKING

import numpy as np

from app.errors import ContractViolation
from app.toric_code import NoiseKind, PauliType, Syndrome, h_index, v_index

if TYPE_CHECKING:
    from app.network import Phenotype

OUTPUT_PAULIS = (PauliType.X, PauliType.Y, PauliType.Z)
SLOTS_PER_DEFECT = 4


class DefectKind(StrEnum):
    PLAQUETTE = "plaquette"
    STAR = "star"


# (vertical edge?, row, col) in the shifted frame, for slots 0..3
_PLAQUETTE_SLOTS = ((False, 0, 0), (False, 1, 0), (True, 0, 0), (True, 0, 1))
_STAR_SLOTS = ((False, 0, 0), (False, 0, -1), (True, 0, 0), (True, -1, 0))


@dataclass(frozen=True, eq=False)
class Perspective:
    defect_kind: DefectKind
    shift: tuple[int, int]
    input: np.ndarray


@dataclass(frozen=True)
class GlobalAction:
    qubit: int
    pauli: PauliType


def input_size(d: int, kind: NoiseKind) -> int:
    return d * d if kind == NoiseKind.BITFLIP else 2 * d * d


def output_size(kind: NoiseKind) -> int:
    return SLOTS_PER_DEFECT if kind == NoiseKind.BITFLIP else SLOTS_PER_DEFECT * len(OUTPUT_PAULIS)


def kind_for_outputs(n_out: int) -> NoiseKind:
    match n_out:
        case 4:
            return NoiseKind.BITFLIP
        case 12:
            return NoiseKind.DEPOLARIZING
        case _:
            raise ContractViolation(f"networks must have 4 or 12 outputs, got {n_out}")


def distance_for_inputs(n_in: int, kind: NoiseKind) -> int:
    cells = n_in if kind == NoiseKind.BITFLIP else n_in // 2
    d = math.isqrt(cells)
    if d * d != cells or input_size(d, kind) != n_in:
        raise ContractViolation(f"{n_in} inputs do not describe a {kind} lattice")
    return d


def generate_perspectives(syndrome: Syndrome, kind: NoiseKind) -> list[Perspective]:
    """One view per defect, each translated so its defect lands on cell (0, 0)."""
    if syndrome.is_empty:
        raise ContractViolation("no perspectives exist for an empty syndrome")
    d = syndrome.d
    centers = [(DefectKind.PLAQUETTE, rc) for rc in syndrome.plaquette_defects()]
    if kind == NoiseKind.DEPOLARIZING:
        centers += [(DefectKind.STAR, rc) for rc in syndrome.star_defects()]

    perspectives = []
    for defect_kind, (r, c) in centers:
        shift = ((-r) % d, (-c) % d)
        plaquettes = np.roll(syndrome.plaquettes, shift, axis=(0, 1)).ravel()
        if kind == NoiseKind.DEPOLARIZING:
            stars = np.roll(syndrome.stars, shift, axis=(0, 1)).ravel()
            view = np.concatenate([plaquettes, stars])
        else:
            view = plaquettes
        perspectives.append(Perspective(defect_kind, shift, view.astype(np.float64)))
    return perspectives


def decode_action(p: Perspective, action_index: int, d: int) -> GlobalAction:
    kind = NoiseKind.BITFLIP if p.input.shape[0] == d * d else NoiseKind.DEPOLARIZING
    if not 0 <= action_index < output_size(kind):
        raise ContractViolation(f"action index {action_index} outside [0, {output_size(kind)}) for {kind}")
    slot, pauli_index = action_index % SLOTS_PER_DEFECT, action_index // SLOTS_PER_DEFECT
    vertical, r, c = (_PLAQUETTE_SLOTS if p.defect_kind == DefectKind.PLAQUETTE else _STAR_SLOTS)[slot]
    dr, dc = p.shift
    edge = v_index if vertical else h_index
    return GlobalAction(edge(d, r - dr, c - dc), OUTPUT_PAULIS[pauli_index])


def select_action(net: "Phenotype", perspectives: Sequence[Perspective]) -> GlobalAction:
    """Best move over all perspectives; ties go to the earliest perspective, then the lowest output."""
    if not perspectives:
        raise ContractViolation("select_action needs at least one perspective")
    kind = kind_for_outputs(net.n_out)
    inputs = np.stack([p.input for p in perspectives])
    if inputs.shape[1] != net.n_in:
        raise ContractViolation(f"network expects {net.n_in} inputs, perspectives carry {inputs.shape[1]}")
    d = distance_for_inputs(net.n_in, kind)
    outputs = net.activate_batch(inputs)
    best_perspective, best_output = divmod(int(np.argmax(outputs)), net.n_out)
    return decode_action(perspectives[best_perspective], best_output, d)
