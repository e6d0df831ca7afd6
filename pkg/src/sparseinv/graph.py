"""Dimension-weighted sparsity graphs and their condensation.

Nodes are partition blocks weighted by their number of states.  An edge
``(i, j)`` means that the dynamics of block ``j`` read some state of block
``i``.  Self-loops are never stored since they cannot change pasts or
strongly connected components.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

from scipy.cluster.hierarchy import DisjointSet

from .poly import Polynomial
from .sysmodel import Partition, SystemDef


class GraphError(ValueError):
    pass


class CyclicGraphError(GraphError):
    pass


@dataclass(frozen=True)
class SparsityGraph:
    names: tuple[str, ...]
    variables: tuple[tuple[int, ...], ...]
    edges: frozenset[tuple[int, int]]

    @property
    def weights(self) -> tuple[int, ...]:
        return tuple(len(v) for v in self.variables)

    def __len__(self) -> int:
        return len(self.names)

    def successors(self, i: int) -> list[int]:
        return sorted(j for (a, j) in self.edges if a == i)

    def predecessors(self, j: int) -> list[int]:
        return sorted(i for (i, b) in self.edges if b == j)

    def out_degree(self, i: int) -> int:
        return sum(1 for (a, _) in self.edges if a == i)

    def is_acyclic(self) -> bool:
        return all(len(c) == 1 for c in strongly_connected_components(self))

    def index(self, node: int | str) -> int:
        if isinstance(node, str):
            try:
                return self.names.index(node)
            except ValueError:
                raise GraphError(f"unknown node {node!r}") from None
        if not 0 <= node < len(self.names):
            raise GraphError(f"unknown node {node}")
        return node


@dataclass(frozen=True)
class CondensedGraph:
    graph: SparsityGraph
    node_of: tuple[int, ...]
    original: SparsityGraph

    def members(self, node: int) -> list[int]:
        return [b for b, c in enumerate(self.node_of) if c == node]


def build_graph(sys: SystemDef) -> SparsityGraph:
    """Sparsity graph of ``sys.f`` under ``sys.partition``."""
    owner = sys.partition.block_of()
    edges = set()
    for j, blk in enumerate(sys.partition.blocks):
        for m in blk:
            for v in sys.f[m].support():
                i = owner[v]
                if i != j:
                    edges.add((i, j))
    return SparsityGraph(sys.partition.names, sys.partition.blocks, frozenset(edges))


def strongly_connected_components(g: SparsityGraph) -> list[list[int]]:
    """Tarjan's algorithm, iterative; components come out in reverse topological order."""
    adj = {i: g.successors(i) for i in range(len(g))}
    index: dict[int, int] = {}
    low: dict[int, int] = {}
    on_stack: set[int] = set()
    stack: list[int] = []
    comps: list[list[int]] = []
    counter = 0
    for root in range(len(g)):
        if root in index:
            continue
        work = [(root, 0)]
        while work:
            v, k = work.pop()
            if k == 0:
                index[v] = low[v] = counter
                counter += 1
                stack.append(v)
                on_stack.add(v)
            recurse = False
            nbrs = adj[v]
            while k < len(nbrs):
                w = nbrs[k]
                k += 1
                if w not in index:
                    work.append((v, k))
                    work.append((w, 0))
                    recurse = True
                    break
                if w in on_stack:
                    low[v] = min(low[v], index[w])
            if recurse:
                continue
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == v:
                        break
                comps.append(sorted(comp))
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
    return comps


def condense(g: SparsityGraph) -> CondensedGraph:
    """Contract every strongly connected component to one node.

    Condensed nodes are ordered by their smallest member block so the
    result is deterministic.
    """
    comps = sorted(strongly_connected_components(g), key=min)
    node_of = [0] * len(g)
    for c, comp in enumerate(comps):
        for b in comp:
            node_of[b] = c
    names, variables = [], []
    for comp in comps:
        names.append("+".join(g.names[b] for b in comp))
        variables.append(tuple(sorted(v for b in comp for v in g.variables[b])))
    edges = frozenset((node_of[i], node_of[j]) for i, j in g.edges if node_of[i] != node_of[j])
    return CondensedGraph(SparsityGraph(tuple(names), tuple(variables), edges),
                          tuple(node_of), g)


def _dag(g: SparsityGraph | CondensedGraph) -> SparsityGraph:
    dag = g.graph if isinstance(g, CondensedGraph) else g
    if not dag.is_acyclic():
        raise CyclicGraphError("graph has cycles; condense it first")
    return dag


def leafs(g: SparsityGraph | CondensedGraph) -> list[int]:
    dag = _dag(g)
    out = [i for i in range(len(dag)) if dag.out_degree(i) == 0]
    assert out or not len(dag)
    return out


def past(g: SparsityGraph | CondensedGraph, node: int | str) -> set[int]:
    """The node together with everything that reaches it."""
    dag = g.graph if isinstance(g, CondensedGraph) else g
    start = dag.index(node)
    seen = {start}
    frontier = [start]
    while frontier:
        j = frontier.pop()
        for i in dag.predecessors(j):
            if i not in seen:
                seen.add(i)
                frontier.append(i)
    return seen


def past_variables(g: SparsityGraph | CondensedGraph, node: int | str) -> tuple[int, ...]:
    dag = g.graph if isinstance(g, CondensedGraph) else g
    return tuple(sorted(v for i in past(g, node) for v in dag.variables[i]))


def omega(g: SparsityGraph | CondensedGraph) -> int:
    """Largest dimension-weighted past (attained at a leaf)."""
    dag = _dag(g)
    w = dag.weights
    return max((sum(w[i] for i in past(dag, leaf)) for leaf in leafs(dag)), default=0)


def minimal_factorization(constraints: Iterable[Polynomial], num_vars: int) -> Partition:
    """Finest partition with every constraint's support inside one block."""
    ds = DisjointSet(range(num_vars))
    for p in constraints:
        supp = sorted(p.support())
        for a, b in zip(supp, supp[1:]):
            ds.merge(a, b)
    blocks = sorted((tuple(sorted(s)) for s in ds.subsets()), key=min)
    return Partition(tuple(blocks))


def is_factorization(constraints: Iterable[Polynomial], blocks: Sequence[Iterable[int]]) -> bool:
    cells = [set(b) for b in blocks]
    return all(any(p.support() <= c for c in cells) for p in constraints)


def to_dot(g: SparsityGraph | CondensedGraph, var_names: Sequence[str] | None = None,
           title: str = "sparsity") -> str:
    dag = g.graph if isinstance(g, CondensedGraph) else g
    lines = [f'digraph "{title}" {{', "  rankdir=LR;"]
    for i, name in enumerate(dag.names):
        members = ", ".join(var_names[v] if var_names else str(v) for v in dag.variables[i])
        lines.append(f'  n{i} [label="{name}\\nweight={dag.weights[i]}\\n({members})"];')
    for i, j in sorted(dag.edges):
        lines.append(f"  n{i} -> n{j};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def summary(g: CondensedGraph, var_names: Sequence[str] | None = None) -> dict:
    """Pasts, leafs and omega as a JSON-ready dictionary."""
    dag = g.graph
    lv = leafs(g)

    def label(vs):
        return [var_names[v] for v in vs] if var_names else list(vs)

    return {
        "nodes": [
            {"name": dag.names[i], "weight": dag.weights[i], "variables": label(dag.variables[i]),
             "members": [g.original.names[b] for b in g.members(i)]}
            for i in range(len(dag))
        ],
        "edges": [[dag.names[i], dag.names[j]] for i, j in sorted(dag.edges)],
        "leafs": [dag.names[i] for i in lv],
        "pasts": {dag.names[i]: sorted(dag.names[j] for j in past(g, i)) for i in lv},
        "subsystem_dims": {dag.names[i]: len(past_variables(g, i)) for i in lv},
        "omega": omega(g),
    }


def summary_json(g: CondensedGraph, var_names: Sequence[str] | None = None) -> str:
    return json.dumps(summary(g, var_names), indent=2, sort_keys=True)
