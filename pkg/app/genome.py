"""Genetic encoding: node and connection genes, mutation, crossover and distance.

Node ids follow a fixed convention: inputs are -1 .. -n_in (input position p has
id -(p + 1)), outputs are 0 .. n_out - 1 and hidden nodes start at n_out. The
initial full connection from input position p to output o has innovation
p * n_out + o. Outputs never act as connection sources.
"""

import copy
import logging
from dataclasses import dataclass, field
from enum import StrEnum

import networkx as nx
import numpy as np

from app.errors import ContractViolation

logger = logging.getLogger(__name__)


class NodeKind(StrEnum):
    INPUT = "input"
    HIDDEN = "hidden"
    OUTPUT = "output"


@dataclass(slots=True)
class NodeGene:
    id: int
    kind: NodeKind
    bias: float = 0.0


@dataclass(slots=True)
class ConnectionGene:
    innovation: int
    in_node: int
    out_node: int
    weight: float
    enabled: bool = True


@dataclass
class Genome:
    nodes: dict[int, NodeGene]
    connections: dict[int, ConnectionGene]
    fitness: float | None = None

    @property
    def input_ids(self) -> list[int]:
        return sorted((n.id for n in self.nodes.values() if n.kind == NodeKind.INPUT), reverse=True)

    @property
    def output_ids(self) -> list[int]:
        return sorted(n.id for n in self.nodes.values() if n.kind == NodeKind.OUTPUT)

    @property
    def hidden_ids(self) -> list[int]:
        return sorted(n.id for n in self.nodes.values() if n.kind == NodeKind.HIDDEN)

    @property
    def n_in(self) -> int:
        return len(self.input_ids)

    @property
    def n_out(self) -> int:
        return len(self.output_ids)

    def genes(self) -> list[ConnectionGene]:
        """Connection genes in innovation order."""
        return [self.connections[k] for k in sorted(self.connections)]

    def enabled_genes(self) -> list[ConnectionGene]:
        return [c for c in self.genes() if c.enabled]

    def pairs(self) -> set[tuple[int, int]]:
        return {(c.in_node, c.out_node) for c in self.connections.values()}

    def graph(self) -> nx.DiGraph:
        """Directed graph of all nodes and enabled connections."""
        g = nx.DiGraph()
        g.add_nodes_from(self.nodes)
        g.add_edges_from((c.in_node, c.out_node) for c in self.connections.values() if c.enabled)
        return g

    def copy(self) -> "Genome":
        return copy.deepcopy(self)


@dataclass
class MutationRates:
    connection_rate: float = 0.1
    node_rate: float = 0.1
    weight_rate: float = 0.5
    bias_rate: float = 0.1
    toggle_rate: float = 0.01
    structural_add_fraction: float = 0.5
    weight_sigma: float = 0.5
    weight_replace_rate: float = 0.1

    @classmethod
    def frozen(cls) -> "MutationRates":
        return cls(connection_rate=0.0, node_rate=0.0, weight_rate=0.0, bias_rate=0.0, toggle_rate=0.0)


@dataclass
class InnovationRegistry:
    """Hands out innovation numbers and hidden node ids.

    Within one generation the same structural novelty receives the same numbers;
    the memos are cleared when the generation advances. Input-to-output pairs of
    the initial layout keep their number for the whole run.
    """

    next_innovation: int
    next_node_id: int
    generation: int = 0
    layout: dict[tuple[int, int], int] = field(default_factory=dict)
    connection_memo: dict[tuple[int, int], int] = field(default_factory=dict)
    split_memo: dict[int, tuple[int, int, int]] = field(default_factory=dict)

    @classmethod
    def for_arity(cls, n_in: int, n_out: int) -> "InnovationRegistry":
        layout = {(input_node_id(p), o): p * n_out + o for p in range(n_in) for o in range(n_out)}
        return cls(next_innovation=n_in * n_out, next_node_id=n_out, layout=layout)

    def reserve(self, genome: Genome) -> None:
        """Move the counters past everything genome uses and adopt its numbering.

        Layout pairs whose number genome spends on a different pair are renumbered
        on next use.
        """
        if genome.connections:
            self.next_innovation = max(self.next_innovation, max(genome.connections) + 1)
        self.next_node_id = max(self.next_node_id, max(genome.nodes) + 1)
        used = {c.innovation: (c.in_node, c.out_node) for c in genome.connections.values()}
        self.layout = {pair: k for pair, k in self.layout.items() if used.get(k, pair) == pair}
        for innovation, pair in used.items():
            if pair[1] in genome.output_ids and genome.nodes[pair[0]].kind == NodeKind.INPUT:
                self.layout[pair] = innovation
            self.connection_memo.setdefault(pair, innovation)

    def connection_innovation(self, in_node: int, out_node: int) -> int:
        key = (in_node, out_node)
        if key in self.layout:
            return self.layout[key]
        if key not in self.connection_memo:
            self.connection_memo[key] = self.next_innovation
            self.next_innovation += 1
        return self.connection_memo[key]

    def split(self, innovation: int, in_node: int, out_node: int) -> tuple[int, int, int]:
        """(new node id, innovation into it, innovation out of it) for splitting a connection."""
        if innovation not in self.split_memo:
            node_id = self.new_node_id()
            self.split_memo[innovation] = (node_id, self._fresh_innovation(), self._fresh_innovation())
            _, inn_in, inn_out = self.split_memo[innovation]
            self.connection_memo.setdefault((in_node, node_id), inn_in)
            self.connection_memo.setdefault((node_id, out_node), inn_out)
        return self.split_memo[innovation]

    def new_node_id(self) -> int:
        node_id = self.next_node_id
        self.next_node_id += 1
        return node_id

    def advance_generation(self) -> None:
        self.generation += 1
        self.connection_memo.clear()
        self.split_memo.clear()

    def _fresh_innovation(self) -> int:
        innovation = self.next_innovation
        self.next_innovation += 1
        return innovation


def input_node_id(position: int) -> int:
    return -(position + 1)


def input_position(node_id: int) -> int:
    return -node_id - 1


def new_initial(
    n_in: int, n_out: int, rng: np.random.Generator, registry: InnovationRegistry | None = None
) -> Genome:
    """Fully connected input-to-output genome with N(0, 1) weights and output biases.

    Without a registry the canonical layout innovations p * n_out + o are used.
    """
    if n_in < 1 or n_out < 1:
        raise ContractViolation(f"a genome needs at least one input and one output, got {n_in}x{n_out}")
    nodes = {input_node_id(p): NodeGene(input_node_id(p), NodeKind.INPUT) for p in range(n_in)}
    biases = rng.normal(0.0, 1.0, size=n_out)
    nodes.update({o: NodeGene(o, NodeKind.OUTPUT, float(biases[o])) for o in range(n_out)})
    weights = rng.normal(0.0, 1.0, size=(n_in, n_out))
    connections = {}
    for p in range(n_in):
        for o in range(n_out):
            innovation = (
                registry.connection_innovation(input_node_id(p), o) if registry is not None else p * n_out + o
            )
            connections[innovation] = ConnectionGene(innovation, input_node_id(p), o, float(weights[p, o]))
    return Genome(nodes, connections)


def _perturb(value: float, rates: MutationRates, rng: np.random.Generator) -> float:
    if rng.random() < rates.weight_replace_rate:
        return float(rng.normal(0.0, 1.0))
    return value + float(rng.normal(0.0, rates.weight_sigma))


def _creates_cycle(graph: nx.DiGraph, in_node: int, out_node: int) -> bool:
    return in_node == out_node or nx.has_path(graph, out_node, in_node)


def _add_connection(g: Genome, registry: InnovationRegistry, rng: np.random.Generator) -> bool:
    graph = g.graph()
    existing = g.pairs()
    sources = [n for n in sorted(g.nodes) if g.nodes[n].kind != NodeKind.OUTPUT]
    targets = [n for n in sorted(g.nodes) if g.nodes[n].kind != NodeKind.INPUT]
    candidates = []
    for out_node in targets:
        downstream = nx.descendants(graph, out_node) | {out_node}
        candidates.extend(
            (in_node, out_node)
            for in_node in sources
            if (in_node, out_node) not in existing and in_node not in downstream
        )
    if not candidates:
        return False
    in_node, out_node = candidates[int(rng.integers(len(candidates)))]
    innovation = registry.connection_innovation(in_node, out_node)
    if innovation in g.connections:
        logger.debug(f"innovation {innovation} already carried by this genome, skipping add-connection")
        return False
    g.connections[innovation] = ConnectionGene(innovation, in_node, out_node, float(rng.normal(0.0, 1.0)))
    return True


def _remove_connection(g: Genome, rng: np.random.Generator) -> bool:
    if not g.connections:
        return False
    innovations = sorted(g.connections)
    del g.connections[innovations[int(rng.integers(len(innovations)))]]
    return True


def _add_node(g: Genome, registry: InnovationRegistry, rng: np.random.Generator) -> bool:
    enabled = g.enabled_genes()
    if not enabled:
        return False
    split = enabled[int(rng.integers(len(enabled)))]
    node_id, inn_in, inn_out = registry.split(split.innovation, split.in_node, split.out_node)
    if node_id in g.nodes or inn_in in g.connections or inn_out in g.connections:
        # the genome already carries this split (inherited), so number it afresh
        node_id = registry.new_node_id()
        inn_in = registry.connection_innovation(split.in_node, node_id)
        inn_out = registry.connection_innovation(node_id, split.out_node)
    split.enabled = False
    g.nodes[node_id] = NodeGene(node_id, NodeKind.HIDDEN, 0.0)
    g.connections[inn_in] = ConnectionGene(inn_in, split.in_node, node_id, 1.0)
    g.connections[inn_out] = ConnectionGene(inn_out, node_id, split.out_node, split.weight)
    return True


def _remove_node(g: Genome, rng: np.random.Generator) -> bool:
    hidden = g.hidden_ids
    if not hidden:
        return False
    node_id = hidden[int(rng.integers(len(hidden)))]
    del g.nodes[node_id]
    for innovation in [k for k, c in g.connections.items() if node_id in (c.in_node, c.out_node)]:
        del g.connections[innovation]
    return True


def mutate(g: Genome, rates: MutationRates, registry: InnovationRegistry, rng: np.random.Generator) -> Genome:
    """Return a mutated copy of g.

    Structural add/remove events are one attempt per genome; weight, bias and
    toggle rates apply per gene. Mutations finding no legal site are skipped.
    """
    child = g.copy()
    child.fitness = None

    if rng.random() < rates.connection_rate:
        if rng.random() < rates.structural_add_fraction:
            _add_connection(child, registry, rng)
        else:
            _remove_connection(child, rng)
    if rng.random() < rates.node_rate:
        if rng.random() < rates.structural_add_fraction:
            _add_node(child, registry, rng)
        else:
            _remove_node(child, rng)

    for gene in child.genes():
        if rng.random() < rates.weight_rate:
            gene.weight = _perturb(gene.weight, rates, rng)
    for node_id in sorted(child.nodes):
        node = child.nodes[node_id]
        if node.kind != NodeKind.INPUT and rng.random() < rates.bias_rate:
            node.bias = _perturb(node.bias, rates, rng)
    for gene in child.genes():
        if rng.random() < rates.toggle_rate:
            if gene.enabled:
                gene.enabled = False
            elif not _creates_cycle(child.graph(), gene.in_node, gene.out_node):
                gene.enabled = True
    return child


def crossover(a: Genome, b: Genome, rng: np.random.Generator) -> Genome:
    """Matching genes take weight and enabled flag from either parent with equal probability;
    disjoint and excess genes are each inherited with probability 1/2."""
    if a.input_ids != b.input_ids or a.output_ids != b.output_ids:
        raise ContractViolation(f"parents differ in arity: {a.n_in}x{a.n_out} vs {b.n_in}x{b.n_out}")

    inherited: list[tuple[ConnectionGene, Genome]] = []
    for innovation in sorted(set(a.connections) | set(b.connections)):
        gene_a, gene_b = a.connections.get(innovation), b.connections.get(innovation)
        if gene_a is not None and gene_b is not None:
            donor = a if rng.random() < 0.5 else b
            inherited.append((donor.connections[innovation], donor))
        elif rng.random() < 0.5:
            gene = gene_a if gene_a is not None else gene_b
            assert gene is not None
            inherited.append((gene, a if gene_a is not None else b))

    nodes = {n.id: copy.copy(n) for n in a.nodes.values() if n.kind != NodeKind.HIDDEN}
    for node_id in nodes:
        if nodes[node_id].kind == NodeKind.OUTPUT and rng.random() >= 0.5:
            nodes[node_id] = copy.copy(b.nodes[node_id])

    connections: dict[int, ConnectionGene] = {}
    seen_pairs: set[tuple[int, int]] = set()
    graph = nx.DiGraph()
    for gene, donor in inherited:
        pair = (gene.in_node, gene.out_node)
        if pair in seen_pairs:
            continue
        seen_pairs.add(pair)
        for node_id in pair:
            if node_id not in nodes:
                carriers = [p for p in (a, b) if node_id in p.nodes]
                source = carriers[int(rng.integers(len(carriers)))] if len(carriers) > 1 else donor
                nodes[node_id] = copy.copy(source.nodes[node_id])
        child_gene = copy.copy(gene)
        if child_gene.enabled:
            if graph.has_node(pair[0]) and graph.has_node(pair[1]) and _creates_cycle(graph, *pair):
                child_gene.enabled = False
            else:
                graph.add_edge(*pair)
        connections[child_gene.innovation] = child_gene
    return Genome(nodes, connections)


def compatibility_distance(a: Genome, b: Genome, c1: float, c2: float, c3: float) -> float:
    """c1*E/N + c2*D/N + c3*W over connection genes, N the larger genome's gene count."""
    if not a.connections and not b.connections:
        return 0.0
    max_a = max(a.connections, default=-1)
    max_b = max(b.connections, default=-1)
    excess = disjoint = 0
    weight_diffs = []
    for innovation in set(a.connections) | set(b.connections):
        gene_a, gene_b = a.connections.get(innovation), b.connections.get(innovation)
        if gene_a is not None and gene_b is not None:
            weight_diffs.append(abs(gene_a.weight - gene_b.weight))
        elif innovation > (max_b if gene_a is not None else max_a):
            excess += 1
        else:
            disjoint += 1
    n_genes = max(len(a.connections), len(b.connections))
    mean_diff = float(np.mean(weight_diffs)) if weight_diffs else 0.0
    return c1 * excess / n_genes + c2 * disjoint / n_genes + c3 * mean_diff


def param_count(g: Genome) -> int:
    """Enabled connections plus one bias per non-input node."""
    return sum(1 for c in g.connections.values() if c.enabled) + sum(
        1 for n in g.nodes.values() if n.kind != NodeKind.INPUT
    )


def check_invariants(g: Genome) -> None:
    """Raise ContractViolation when g breaks a structural invariant."""
    for innovation, gene in g.connections.items():
        if innovation != gene.innovation:
            raise ContractViolation(f"gene keyed {innovation} carries innovation {gene.innovation}")
        if gene.in_node not in g.nodes or gene.out_node not in g.nodes:
            raise ContractViolation(f"gene {innovation} references a missing node")
        if g.nodes[gene.out_node].kind == NodeKind.INPUT:
            raise ContractViolation(f"gene {innovation} feeds input node {gene.out_node}")
    if not nx.is_directed_acyclic_graph(g.graph()):
        raise ContractViolation("enabled connections contain a cycle")
