"""Feed-forward phenotype compiled from a genome."""

from collections.abc import Sequence
from dataclasses import dataclass

import networkx as nx
import numpy as np
from scipy.special import expit

from app.errors import ContractViolation, NetworkCompileError
from app.genome import Genome, NodeKind, input_position

_KIND_RANK = {NodeKind.INPUT: 0, NodeKind.HIDDEN: 1, NodeKind.OUTPUT: 2}


@dataclass(frozen=True, eq=False)
class Phenotype:
    n_in: int
    n_out: int
    eval_order: tuple[int, ...]
    biases: tuple[float, ...]
    sources: tuple[np.ndarray, ...]
    weights: tuple[np.ndarray, ...]
    output_positions: np.ndarray
    slope: float = 1.0

    def activate(self, inputs: Sequence[float] | np.ndarray) -> np.ndarray:
        x = np.asarray(inputs, dtype=np.float64)
        if x.shape != (self.n_in,):
            raise ContractViolation(f"network expects {self.n_in} inputs, got shape {x.shape}")
        return self.activate_batch(x[np.newaxis, :])[0]

    def activate_batch(self, inputs: np.ndarray) -> np.ndarray:
        """Evaluate every row of inputs; returns shape (rows, n_out)."""
        if inputs.ndim != 2 or inputs.shape[1] != self.n_in:
            raise ContractViolation(f"network expects rows of {self.n_in} inputs, got shape {inputs.shape}")
        values = np.zeros((inputs.shape[0], self.n_in + len(self.eval_order)))
        values[:, : self.n_in] = inputs
        for k, (bias, src, w) in enumerate(zip(self.biases, self.sources, self.weights)):
            values[:, self.n_in + k] = expit(self.slope * (values[:, src] @ w + bias))
        return values[:, self.output_positions]


def compile_genome(g: Genome, slope: float = 1.0) -> Phenotype:
    """Realise g as a feed-forward evaluator.

    Hidden nodes are never pruned, even when they cannot influence an output, so
    the network size always matches param_count.
    """
    graph = g.graph()
    if not nx.is_directed_acyclic_graph(graph):
        cycle = nx.find_cycle(graph)
        back_in, back_out = cycle[-1][:2]
        raise NetworkCompileError(f"enabled connections form a cycle closed by {back_in} -> {back_out}")

    order = [
        n
        for n in nx.lexicographical_topological_sort(graph, key=lambda n: (_KIND_RANK[g.nodes[n].kind], n))
        if g.nodes[n].kind != NodeKind.INPUT
    ]
    n_in = g.n_in
    position = {node_id: input_position(node_id) for node_id in g.input_ids}
    position.update({node_id: n_in + k for k, node_id in enumerate(order)})

    incoming: dict[int, list[tuple[int, float]]] = {node_id: [] for node_id in order}
    for gene in g.enabled_genes():
        incoming[gene.out_node].append((position[gene.in_node], gene.weight))

    return Phenotype(
        n_in=n_in,
        n_out=g.n_out,
        eval_order=tuple(order),
        biases=tuple(g.nodes[n].bias for n in order),
        sources=tuple(np.array([s for s, _ in incoming[n]], dtype=np.intp) for n in order),
        weights=tuple(np.array([w for _, w in incoming[n]], dtype=np.float64) for n in order),
        output_positions=np.array([position[n] for n in g.output_ids], dtype=np.intp),
        slope=slope,
    )


def activate(p: Phenotype, inputs: Sequence[float] | np.ndarray) -> np.ndarray:
    return p.activate(inputs)
