"""Graph dataset loaders.

Two on-disk formats are supported:

* the standard TU layout (``<name>_A.txt``, ``<name>_graph_indicator.txt``,
  ``<name>_graph_labels.txt``, optional ``<name>_node_labels.txt``), and
* a one-graph edge-list format: first line ``n m``, then ``m`` lines
  ``u v`` with 0-indexed endpoints, optionally followed by ``label L``.

All indices are converted to 0-based, edges are stored once as
``(min, max)`` pairs, and labels are remapped to contiguous ids.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np


class DataError(ValueError):
    """Malformed dataset file or invalid graph structure."""


@dataclass(frozen=True)
class Graph:
    """An undirected labeled graph with canonical edge storage."""

    num_nodes: int
    edges: tuple[tuple[int, int], ...]
    node_labels: tuple[int, ...] | None = None
    graph_label: int | None = None

    def __post_init__(self):
        if self.num_nodes < 0:
            raise DataError("num_nodes must be nonnegative")
        canon = set()
        for u, v in self.edges:
            if u == v:
                raise DataError(f"self-loop at node {u}")
            if not (0 <= u < self.num_nodes and 0 <= v < self.num_nodes):
                raise DataError(f"edge ({u}, {v}) out of range for {self.num_nodes} nodes")
            canon.add((min(u, v), max(u, v)))
        object.__setattr__(self, "edges", tuple(sorted(canon)))
        if self.node_labels is not None:
            if len(self.node_labels) != self.num_nodes:
                raise DataError("node_labels length must equal num_nodes")
            object.__setattr__(self, "node_labels", tuple(int(x) for x in self.node_labels))

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def neighbor_sets(self) -> list[set[int]]:
        adj: list[set[int]] = [set() for _ in range(self.num_nodes)]
        for u, v in self.edges:
            adj[u].add(v)
            adj[v].add(u)
        return adj

    def neighbor_csr(self) -> tuple[np.ndarray, np.ndarray]:
        """Neighbor lists as (indptr, indices) int32 arrays, sorted per row."""
        adj = self.neighbor_sets()
        indptr = np.zeros(self.num_nodes + 1, dtype=np.int32)
        for i, s in enumerate(adj):
            indptr[i + 1] = indptr[i] + len(s)
        indices = np.empty(int(indptr[-1]), dtype=np.int32)
        for i, s in enumerate(adj):
            indices[indptr[i]:indptr[i + 1]] = sorted(s)
        return indptr, indices

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.num_nodes, dtype=np.int64)
        for u, v in self.edges:
            deg[u] += 1
            deg[v] += 1
        return deg

    def relabel(self, perm: list[int] | np.ndarray) -> "Graph":
        """Apply a node permutation: new index of node i is perm[i]."""
        perm = list(perm)
        if sorted(perm) != list(range(self.num_nodes)):
            raise DataError("perm must be a permutation of the node indices")
        edges = tuple((perm[u], perm[v]) for u, v in self.edges)
        labels = None
        if self.node_labels is not None:
            labels = [0] * self.num_nodes
            for i, lab in enumerate(self.node_labels):
                labels[perm[i]] = lab
            labels = tuple(labels)
        return Graph(self.num_nodes, edges, labels, self.graph_label)


@dataclass(frozen=True)
class Dataset:
    name: str
    graphs: tuple[Graph, ...]
    num_classes: int

    def __post_init__(self):
        counts = [0] * self.num_classes
        for g in self.graphs:
            if g.graph_label is None or not (0 <= g.graph_label < self.num_classes):
                raise DataError(f"graph label {g.graph_label} outside [0, {self.num_classes})")
            counts[g.graph_label] += 1
        if self.num_classes and min(counts) == 0:
            raise DataError("every class needs at least one graph")

    def labels(self) -> np.ndarray:
        return np.array([g.graph_label for g in self.graphs], dtype=np.int64)

    @property
    def has_node_labels(self) -> bool:
        return all(g.node_labels is not None for g in self.graphs)

    def num_node_label_kinds(self) -> int:
        if not self.has_node_labels:
            return 0
        return 1 + max(max(g.node_labels) for g in self.graphs if g.num_nodes)

    def max_degree(self) -> int:
        return max((int(g.degrees().max()) if g.num_nodes else 0) for g in self.graphs)


@dataclass(frozen=True)
class FeatureMatrix:
    """Dense row-per-entity real feature matrix."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise DataError("feature matrix must be 2-dimensional")
        if not np.all(np.isfinite(v)):
            raise DataError("feature matrix contains NaN/Inf")
        object.__setattr__(self, "values", v)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


def _read_lines(path: str) -> list[str]:
    if not os.path.isfile(path):
        raise DataError(f"missing required file: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read().splitlines()


def _parse_int_pair(line: str, path: str, lineno: int) -> tuple[int, int]:
    parts = [p for p in line.replace(",", " ").split() if p]
    if len(parts) != 2:
        raise DataError(f"{path}:{lineno}: expected two integers, got {line!r}")
    try:
        return int(parts[0]), int(parts[1])
    except ValueError as exc:
        raise DataError(f"{path}:{lineno}: unparseable pair {line!r}") from exc


def _parse_int(line: str, path: str, lineno: int) -> int:
    try:
        return int(float(line.strip()))
    except ValueError as exc:
        raise DataError(f"{path}:{lineno}: unparseable integer {line!r}") from exc


def parse_tu_dataset(directory: str, name: str) -> Dataset:
    """Parse a dataset stored in the TU layout under ``directory``.

    Adjacency pairs are symmetrized and deduplicated, graph ids must be
    contiguous and monotone, and all labels are remapped to 0-based ids.
    """
    prefix = os.path.join(directory, name)
    indicator_path = f"{prefix}_graph_indicator.txt"
    adjacency_path = f"{prefix}_A.txt"
    glabel_path = f"{prefix}_graph_labels.txt"
    nlabel_path = f"{prefix}_node_labels.txt"

    indicator = []
    for i, line in enumerate(_read_lines(indicator_path), 1):
        if line.strip():
            indicator.append(_parse_int(line, indicator_path, i))
    if not indicator:
        raise DataError(f"{indicator_path}: empty graph indicator")
    num_graphs = indicator[-1]
    if indicator[0] != 1:
        raise DataError(f"{indicator_path}: graph ids must start at 1")
    prev = 1
    for gid in indicator:
        if gid < prev or gid > prev + 1:
            raise DataError(f"{indicator_path}: non-contiguous graph ids ({prev} -> {gid})")
        prev = gid

    # node -> (graph, local index), both 0-based
    node_graph = np.array(indicator, dtype=np.int64) - 1
    sizes = np.bincount(node_graph, minlength=num_graphs)
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    raw_glabels = []
    for i, line in enumerate(_read_lines(glabel_path), 1):
        if line.strip():
            raw_glabels.append(_parse_int(line, glabel_path, i))
    if len(raw_glabels) != num_graphs:
        raise DataError(
            f"{glabel_path}: {len(raw_glabels)} labels for {num_graphs} graphs")
    classes = sorted(set(raw_glabels))
    class_map = {c: i for i, c in enumerate(classes)}
    glabels = [class_map[c] for c in raw_glabels]

    node_labels = None
    if os.path.isfile(nlabel_path):
        raw = []
        for i, line in enumerate(_read_lines(nlabel_path), 1):
            if line.strip():
                raw.append(_parse_int(line, nlabel_path, i))
        if len(raw) != len(indicator):
            raise DataError(f"{nlabel_path}: {len(raw)} labels for {len(indicator)} nodes")
        kinds = sorted(set(raw))
        kind_map = {k: i for i, k in enumerate(kinds)}
        node_labels = [kind_map[k] for k in raw]

    edge_sets: list[set[tuple[int, int]]] = [set() for _ in range(num_graphs)]
    for i, line in enumerate(_read_lines(adjacency_path), 1):
        if not line.strip():
            continue
        a, b = _parse_int_pair(line, adjacency_path, i)
        if not (1 <= a <= len(indicator) and 1 <= b <= len(indicator)):
            raise DataError(f"{adjacency_path}:{i}: node id out of range")
        ga, gb = node_graph[a - 1], node_graph[b - 1]
        if ga != gb:
            raise DataError(f"{adjacency_path}:{i}: edge crosses graphs {ga + 1} and {gb + 1}")
        u = a - 1 - offsets[ga]
        v = b - 1 - offsets[ga]
        if u == v:
            raise DataError(f"{adjacency_path}:{i}: self-loop on node {a}")
        edge_sets[ga].add((min(u, v), max(u, v)))

    graphs = []
    for gi in range(num_graphs):
        lo, hi = offsets[gi], offsets[gi + 1]
        labels = tuple(node_labels[lo:hi]) if node_labels is not None else None
        graphs.append(Graph(int(hi - lo), tuple(edge_sets[gi]), labels, glabels[gi]))
    return Dataset(name, tuple(graphs), len(classes))


def write_tu_dataset(dataset: Dataset, directory: str) -> None:
    """Serialize a dataset back to the TU layout (1-indexed files)."""
    os.makedirs(directory, exist_ok=True)
    prefix = os.path.join(directory, dataset.name)
    with open(f"{prefix}_graph_indicator.txt", "w", encoding="utf-8") as fh:
        for gi, g in enumerate(dataset.graphs, 1):
            for _ in range(g.num_nodes):
                fh.write(f"{gi}\n")
    with open(f"{prefix}_graph_labels.txt", "w", encoding="utf-8") as fh:
        for g in dataset.graphs:
            fh.write(f"{g.graph_label}\n")
    offset = 0
    with open(f"{prefix}_A.txt", "w", encoding="utf-8") as fh:
        for g in dataset.graphs:
            for u, v in g.edges:
                fh.write(f"{offset + u + 1}, {offset + v + 1}\n")
                fh.write(f"{offset + v + 1}, {offset + u + 1}\n")
            offset += g.num_nodes
    if dataset.has_node_labels:
        with open(f"{prefix}_node_labels.txt", "w", encoding="utf-8") as fh:
            for g in dataset.graphs:
                for lab in g.node_labels:
                    fh.write(f"{lab}\n")


def parse_edge_list(path: str) -> Graph:
    """Parse the one-graph edge-list format."""
    lines = [ln for ln in _read_lines(path)]
    body = [(i, ln) for i, ln in enumerate(lines, 1) if ln.strip()]
    if not body:
        raise DataError(f"{path}: empty edge list")
    n, m = _parse_int_pair(body[0][1], path, body[0][0])
    if n < 0 or m < 0:
        raise DataError(f"{path}:{body[0][0]}: negative header counts")
    if len(body) < 1 + m:
        raise DataError(f"{path}: header promises {m} edges, found {len(body) - 1}")
    edges = []
    for lineno, line in body[1:1 + m]:
        edges.append(_parse_int_pair(line, path, lineno))
    label = None
    for lineno, line in body[1 + m:]:
        parts = line.split()
        if len(parts) == 2 and parts[0] == "label":
            label = _parse_int(parts[1], path, lineno)
        else:
            raise DataError(f"{path}:{lineno}: unexpected trailing line {line!r}")
    return Graph(n, tuple(edges), None, label)


def write_edge_list(g: Graph, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{g.num_nodes} {g.num_edges}\n")
        for u, v in g.edges:
            fh.write(f"{u} {v}\n")
        if g.graph_label is not None:
            fh.write(f"label {g.graph_label}\n")


def initial_node_features(
    g: Graph,
    scheme: str,
    max_degree: int = 0,
    num_labels: int | None = None,
) -> FeatureMatrix:
    """Initial per-node features.

    ``label-onehot`` needs node labels; ``num_labels`` fixes the one-hot
    width so every graph of a dataset gets the same dimensionality.
    ``degree-onehot`` clips degrees to ``max_degree``.
    """
    n = g.num_nodes
    if scheme == "constant":
        return FeatureMatrix(np.ones((n, 1)))
    if scheme == "degree-onehot":
        if max_degree < 0:
            raise DataError("max_degree must be nonnegative")
        out = np.zeros((n, max_degree + 1))
        deg = np.minimum(g.degrees(), max_degree)
        out[np.arange(n), deg] = 1.0
        return FeatureMatrix(out)
    if scheme == "label-onehot":
        if g.node_labels is None:
            raise DataError("label-onehot requested on an unlabeled graph")
        width = num_labels if num_labels is not None else (max(g.node_labels) + 1 if n else 1)
        labels = np.array(g.node_labels, dtype=np.int64)
        if n and labels.max() >= width:
            raise DataError("node label outside the declared label count")
        out = np.zeros((n, width))
        out[np.arange(n), labels] = 1.0
        return FeatureMatrix(out)
    raise DataError(f"unknown feature scheme {scheme!r}")


def dataset_node_features(dataset: Dataset, scheme: str = "auto") -> list[FeatureMatrix]:
    """Features for every graph with dataset-consistent dimensions.

    ``auto`` uses label one-hots when node labels exist, else degree
    one-hots with the dataset maximum degree.
    """
    if scheme == "auto":
        scheme = "label-onehot" if dataset.has_node_labels else "degree-onehot"
    if scheme == "label-onehot":
        width = dataset.num_node_label_kinds()
        return [initial_node_features(g, scheme, num_labels=width) for g in dataset.graphs]
    if scheme == "degree-onehot":
        md = dataset.max_degree()
        return [initial_node_features(g, scheme, max_degree=md) for g in dataset.graphs]
    return [initial_node_features(g, scheme) for g in dataset.graphs]
