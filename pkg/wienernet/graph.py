"""
graph.py - Undirected interaction graphs and their two-hop closure

Nodes are 0-based internally (1-based only in reports). Edges are stored as
sorted pairs (i < j) in a frozenset, so a Graph is immutable and hashable and
can be shared across concurrent trials.

Edge-list file format:
    <node_count>
    i j
    i j
    ...
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import FrozenSet, Iterable, List, Tuple

import networkx as nx
import numpy as np

from wienernet.errors import GraphError

Pair = Tuple[int, int]


def canonical_pair(i: int, j: int) -> Pair:
    """Return (min, max) of an unordered pair."""
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True)
class Graph:
    """Undirected graph G = (V, E) with node_count = p + 1."""
    node_count: int
    edges: FrozenSet[Pair] = field(default_factory=frozenset)

    def __post_init__(self):
        if self.node_count < 1:
            raise GraphError(
                message=f"Graph needs at least one node (got {self.node_count})",
                context={"node_count": self.node_count},
            )
        canonical = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise GraphError(
                    message=f"Self-loop on node {i + 1} is not allowed",
                    suggestion="Self-dynamics live on the diagonal of h, not in E.",
                    context={"pair": (i, j)},
                )
            if not (0 <= i < self.node_count and 0 <= j < self.node_count):
                raise GraphError(
                    message=f"Edge ({i}, {j}) has an endpoint outside 0..{self.node_count - 1}",
                    context={"pair": (i, j), "node_count": self.node_count},
                )
            canonical.add(canonical_pair(i, j))
        object.__setattr__(self, "edges", frozenset(canonical))

    @property
    def p(self) -> int:
        return self.node_count - 1

    def sorted_edges(self) -> List[Pair]:
        return sorted(self.edges)

    def adjacency(self) -> np.ndarray:
        """Boolean adjacency matrix (symmetric, zero diagonal)."""
        adj = np.zeros((self.node_count, self.node_count), dtype=bool)
        for i, j in self.edges:
            adj[i, j] = adj[j, i] = True
        return adj

    def neighbors(self, node: int) -> List[int]:
        return sorted(j for pair in self.edges if node in pair for j in pair if j != node)

    def degree(self, node: int) -> int:
        return sum(1 for pair in self.edges if node in pair)

    @property
    def max_degree(self) -> int:
        if self.node_count == 0:
            return 0
        return int(self.adjacency().sum(axis=1).max())

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(self.node_count))
        g.add_edges_from(self.sorted_edges())
        return g


@dataclass(frozen=True)
class TwoHopSet:
    """E_M = E plus all pairs sharing a common neighbor."""
    pairs: FrozenSet[Pair]
    strict_two_hop: FrozenSet[Pair]

    def degree(self, node: int) -> int:
        return sum(1 for pair in self.pairs if node in pair)

    def max_degree(self, node_count: int) -> int:
        """d = max over nodes of the E_M-degree."""
        if not self.pairs:
            return 0
        return max(self.degree(i) for i in range(node_count))


# ============================================================================
# Generators
# ============================================================================

def graph_from_edges(node_count: int, pairs: Iterable[Pair]) -> Graph:
    return Graph(node_count=node_count, edges=frozenset(canonical_pair(int(i), int(j)) for i, j in pairs))


def _from_networkx(g: nx.Graph, order: List) -> Graph:
    index = {node: k for k, node in enumerate(order)}
    return graph_from_edges(len(order), ((index[u], index[v]) for u, v in g.edges()))


def grid_graph(rows: int, cols: int) -> Graph:
    """
    Two-dimensional 4-neighbor lattice, nodes numbered row-major.

    (5, 5) gives 25 nodes (p = 24) and 40 edges.
    """
    if rows < 1 or cols < 1:
        raise GraphError(
            message=f"Grid dimensions must be positive (got {rows} x {cols})",
            context={"rows": rows, "cols": cols},
        )
    g = nx.grid_2d_graph(rows, cols)
    order = [(r, c) for r in range(rows) for c in range(cols)]
    return _from_networkx(g, order)


def chain_graph(n: int) -> Graph:
    """Path 0 - 1 - ... - (n-1)."""
    if n < 1:
        raise GraphError(message=f"Chain needs at least one node (got {n})")
    return _from_networkx(nx.path_graph(n), list(range(n)))


def complete_graph(n: int) -> Graph:
    if n < 1:
        raise GraphError(message=f"Complete graph needs at least one node (got {n})")
    return _from_networkx(nx.complete_graph(n), list(range(n)))


def random_tree(n: int, seed: int) -> Graph:
    """Uniform random labeled tree via a random Prufer sequence."""
    if n < 1:
        raise GraphError(message=f"Tree needs at least one node (got {n})")
    if n == 1:
        return Graph(node_count=1)
    if n == 2:
        return graph_from_edges(2, [(0, 1)])
    rng = np.random.default_rng(seed)
    sequence = [int(v) for v in rng.integers(0, n, size=n - 2)]
    return _from_networkx(nx.from_prufer_sequence(sequence), list(range(n)))


# ============================================================================
# Two-hop closure
# ============================================================================

def two_hop_closure(g: Graph) -> TwoHopSet:
    """
    E_M = {(i, j) : (ij) in E or i, j share a neighbor}, i != j.
    """
    adj = g.adjacency().astype(np.int64)
    common = (adj @ adj) > 0
    reach = common | adj.astype(bool)
    np.fill_diagonal(reach, False)
    rows, cols = np.nonzero(np.triu(reach, k=1))
    pairs = frozenset((int(i), int(j)) for i, j in zip(rows, cols))
    return TwoHopSet(pairs=pairs, strict_two_hop=frozenset(pairs - g.edges))


def two_hop_degree_bound_holds(g: Graph) -> bool:
    """max E_M-degree <= (max E-degree)^2."""
    closure = two_hop_closure(g)
    return closure.max_degree(g.node_count) <= g.max_degree ** 2


# ============================================================================
# Edge-list I/O
# ============================================================================

def save_graph(g: Graph, path: Path) -> None:
    lines = [str(g.node_count)] + [f"{i} {j}" for i, j in g.sorted_edges()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_graph(path: Path) -> Graph:
    path = Path(path)
    raw = [line.strip() for line in path.read_text(encoding="utf-8").splitlines()]
    raw = [line for line in raw if line and not line.startswith("#")]
    if not raw:
        raise GraphError(message=f"Edge-list file {path.name} is empty", context={"file": str(path)})
    try:
        node_count = int(raw[0])
        pairs = []
        for line_no, line in enumerate(raw[1:], start=2):
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"line {line_no}: expected 'i j', got {line!r}")
            pairs.append((int(parts[0]), int(parts[1])))
    except ValueError as e:
        raise GraphError(
            message=f"Malformed edge-list file {path.name}",
            suggestion="First line is the node count, then one 'i j' pair per line (0-based).",
            context={"file": str(path)},
            cause=e,
        )
    return graph_from_edges(node_count, pairs)
