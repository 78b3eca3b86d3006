"""Deterministic synthetic graphs and datasets.

Fixtures stand in for downloaded benchmarks where tests need realistic
scale: a two-class molecule-like dataset with ring structure and node
labels (sized like the smallest common bioinformatics benchmark), a
planted-redundancy dataset whose class signal lives in triangles while
squares carry label-independent noise, and sparse random datasets for
timing studies.  Everything is a pure function of its seed.
"""

from __future__ import annotations

import numpy as np

from .graph_io import Dataset, Graph


def cycle_graph(k: int, offset: int = 0) -> Graph:
    return Graph(k + offset, tuple(((i % k) + offset, ((i + 1) % k) + offset) for i in range(k)))


def path_graph(k: int) -> Graph:
    return Graph(k, tuple((i, i + 1) for i in range(k - 1)))


def complete_graph(k: int) -> Graph:
    return Graph(k, tuple((i, j) for i in range(k) for j in range(i + 1, k)))


def disjoint_union(a: Graph, b: Graph) -> Graph:
    shifted = tuple((u + a.num_nodes, v + a.num_nodes) for u, v in b.edges)
    labels = None
    if a.node_labels is not None and b.node_labels is not None:
        labels = a.node_labels + b.node_labels
    return Graph(a.num_nodes + b.num_nodes, a.edges + shifted, labels, a.graph_label)


def gnp_random_graph(n: int, p: float, rng: np.random.Generator,
                     labels: int | None = None) -> Graph:
    edges = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < p]
    node_labels = tuple(int(x) for x in rng.integers(0, labels, size=n)) if labels else None
    return Graph(n, tuple(edges), node_labels)


def _ring_chain(num_rings: int, ring_size: int, labels: list[int],
                rng: np.random.Generator) -> tuple[list[tuple[int, int]], list[int], int]:
    """Chain of rings fused edge-to-edge; returns (edges, node_labels, num_nodes)."""
    edges: list[tuple[int, int]] = []
    node_labels: list[int] = []

    def new_node(lab: int) -> int:
        node_labels.append(lab)
        return len(node_labels) - 1

    ring = [new_node(int(rng.choice(labels))) for _ in range(ring_size)]
    for i in range(ring_size):
        edges.append((ring[i], ring[(i + 1) % ring_size]))
    for _ in range(num_rings - 1):
        # fuse on the last ring's final edge
        a, b = ring[-2], ring[-1]
        fresh = [new_node(int(rng.choice(labels))) for _ in range(ring_size - 2)]
        chain = [a] + fresh + [b]
        for u, v in zip(chain, chain[1:]):
            edges.append((u, v))
        ring = chain
    return edges, node_labels, len(node_labels)


def _attach_tail(edges, node_labels, anchor: int, tail_labels: list[int]) -> None:
    prev = anchor
    for lab in tail_labels:
        node_labels.append(lab)
        nxt = len(node_labels) - 1
        edges.append((prev, nxt))
        prev = nxt


def mutag_like_dataset(seed: int = 0, size: int = 188) -> Dataset:
    """Two-class molecule-like fixture with 7 node-label kinds.

    Class 1 graphs are chains of fused hexagons with electron-rich tails,
    class 0 graphs carry pentagons and shorter chains; tails and ring
    decorations overlap across classes so the separation is not purely a
    node count artifact.
    """
    rng = np.random.default_rng([seed, 1909])
    n_pos = int(round(size * 125 / 188))
    graphs = []
    for gi in range(size):
        label = 1 if gi < n_pos else 0
        if label == 1:
            rings = int(rng.integers(2, 4))
            edges, node_labels, _ = _ring_chain(rings, 6, [0, 0, 0, 1], rng)
            for _ in range(int(rng.integers(1, 3))):
                anchor = int(rng.integers(0, len(node_labels)))
                _attach_tail(edges, node_labels, anchor, [2, int(rng.choice([3, 4]))])
        else:
            rings = int(rng.integers(1, 3))
            ring_size = int(rng.choice([5, 5, 6]))
            edges, node_labels, _ = _ring_chain(rings, ring_size, [0, 1, 5], rng)
            for _ in range(int(rng.integers(0, 3))):
                anchor = int(rng.integers(0, len(node_labels)))
                _attach_tail(edges, node_labels, anchor, [int(rng.choice([2, 6]))])
        graphs.append(Graph(len(node_labels), tuple(edges), tuple(node_labels), label))
    order = rng.permutation(size)
    return Dataset("MUTAGLIKE", tuple(graphs[i] for i in order), 2)


def planted_redundancy_dataset(per_class: int = 24, seed: int = 0) -> Dataset:
    """Binary dataset where triangles carry the class signal.

    Both classes share a path backbone.  Class 1 attaches several
    consistently-labeled triangles, class 0 few; squares with randomly
    labeled corners are planted independently of the class.
    """
    rng = np.random.default_rng([seed, 4242])
    graphs = []
    for label in (0, 1):
        for _ in range(per_class):
            backbone = 6
            edges = [(i, i + 1) for i in range(backbone - 1)]
            node_labels = [0] * backbone
            n_tri = 4 if label == 1 else 1
            for _ in range(n_tri):
                anchor = int(rng.integers(0, backbone))
                a = len(node_labels); node_labels.append(1)
                b = len(node_labels); node_labels.append(1)
                edges += [(anchor, a), (a, b), (b, anchor)]
            for _ in range(int(rng.integers(0, 4))):
                anchor = int(rng.integers(0, backbone))
                corners = [len(node_labels) + i for i in range(3)]
                node_labels += [int(x) for x in rng.integers(2, 6, size=3)]
                edges += [(anchor, corners[0]), (corners[0], corners[1]),
                          (corners[1], corners[2]), (corners[2], anchor)]
            graphs.append(Graph(len(node_labels), tuple(edges), tuple(node_labels), label))
    order = rng.permutation(len(graphs))
    return Dataset("PLANTED", tuple(graphs[i] for i in order), 2)


def sparse_random_dataset(name: str, num_graphs: int, avg_nodes: int,
                          seed: int = 0) -> Dataset:
    """Connected sparse random graphs with a few planted rings, for timing."""
    rng = np.random.default_rng([seed, 7001])
    graphs = []
    for gi in range(num_graphs):
        n = max(4, int(rng.normal(avg_nodes, avg_nodes / 4)))
        edges = [(int(rng.integers(0, i)), i) for i in range(1, n)]  # random tree
        extra = int(0.25 * n)
        for _ in range(extra):
            u, v = rng.integers(0, n, size=2)
            if u != v:
                edges.append((min(u, v), max(u, v)))
        graphs.append(Graph(n, tuple(set(edges)), None, gi % 2))
    return Dataset(name, tuple(graphs), 2)
