"""Genome transplantation: lifting a trained small-lattice decoder onto a larger lattice."""

import logging
import math

import numpy as np

from app.errors import ContractViolation
from app.genome import (
    Genome,
    InnovationRegistry,
    MutationRates,
    NodeGene,
    NodeKind,
    check_invariants,
    input_node_id,
    input_position,
    mutate,
    new_initial,
)
from app.perspectives import input_size, output_size
from app.toric_code import NoiseKind

logger = logging.getLogger(__name__)


def _signed_offset(index: int, d: int) -> int:
    return index if index <= (d - 1) // 2 else index - d


def embed_position(position: int, d1: int, d2: int) -> int:
    """Input position on the d2 lattice seeing the same cell, relative to the centered defect, as position on d1."""
    block, cell = divmod(position, d1 * d1)
    r, c = divmod(cell, d1)
    r2, c2 = _signed_offset(r, d1) % d2, _signed_offset(c, d1) % d2
    return block * d2 * d2 + r2 * d2 + c2


def transplant(g: Genome, d1: int, d2: int, mode: NoiseKind) -> Genome:
    """Return g rewired for distance d2.

    Existing inputs move to the cell at the same signed offset from the centered
    defect; the added inputs carry no connections. Hidden and output genes,
    weights, biases and innovations are untouched.
    """
    if d2 <= d1:
        raise ContractViolation(f"transplantation only grows the lattice, got d1={d1} d2={d2}")
    if d1 % 2 == 0 or d2 % 2 == 0:
        raise ContractViolation(f"the central window is only defined for odd distances, got d1={d1} d2={d2}")
    n_in1, n_in2 = input_size(d1, mode), input_size(d2, mode)
    if g.n_in != n_in1 or g.n_out != output_size(mode):
        raise ContractViolation(
            f"genome arity {g.n_in}x{g.n_out} does not fit a d={d1} {mode} decoder ({n_in1}x{output_size(mode)})"
        )

    remap = {node_id: input_node_id(embed_position(input_position(node_id), d1, d2)) for node_id in g.input_ids}
    child = g.copy()
    child.fitness = None
    child.nodes = {n.id: n for n in child.nodes.values() if n.kind != NodeKind.INPUT}
    child.nodes.update({input_node_id(p): NodeGene(input_node_id(p), NodeKind.INPUT) for p in range(n_in2)})
    for gene in child.connections.values():
        gene.in_node = remap.get(gene.in_node, gene.in_node)

    check_invariants(child)
    logger.info(f"transplanted d={d1} genome to d={d2}: {n_in2 - n_in1} new unconnected inputs")
    return child


def seed_population(
    g: Genome,
    pop_size: int,
    rates: MutationRates,
    registry: InnovationRegistry,
    rng: np.random.Generator,
    random_fraction: float = 0.0,
) -> list[Genome]:
    """A pristine copy of g, mutated copies of g, then random_fraction of the slots as fresh minimal genomes.

    The pristine copy is always kept, so the fresh share is capped at pop_size - 1.
    """
    if pop_size < 1:
        raise ContractViolation(f"pop_size must be positive, got {pop_size}")
    if not 0.0 <= random_fraction <= 1.0:
        raise ContractViolation(f"random_fraction must lie in [0, 1], got {random_fraction}")
    registry.reserve(g)
    n_random = min(pop_size - 1, math.floor(random_fraction * pop_size))

    pristine = g.copy()
    pristine.fitness = None
    population = [pristine]
    population.extend(mutate(g, rates, registry, rng) for _ in range(pop_size - 1 - n_random))
    population.extend(new_initial(g.n_in, g.n_out, rng, registry) for _ in range(n_random))
    return population
