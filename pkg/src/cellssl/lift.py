"""Lift graphs to 2-dimensional cellular complexes.

A 2-cell is glued onto every induced (chordless) cycle of length at most
``ring_size``; 0-cells are the graph nodes and 1-cells its edges, so the
1-skeleton of the lifted complex is the input graph.  The module also
materializes the four neighborhood tables (boundary, coboundary, lower and
upper adjacency) used by message passing and color refinement.

Cycle enumeration dispatches to the compiled kernel when the extension
module built from ``_fastcycles.pyx`` is importable, unless
``CELLSSL_PURE_CYCLES=1`` forces the pure-Python twin.  Very large graphs
(where a dense adjacency matrix would be wasteful) always take the pure
path.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import _cycles
from .graph_io import DataError, FeatureMatrix, Graph

try:
    from . import _fastcycles
except ImportError:  # extension not built; pure fallback
    _fastcycles = None

# Dense n x n chord table above this size is not worth it.
_DENSE_LIMIT = 8192


def cycle_kernel_name() -> str:
    if _fastcycles is None or os.environ.get("CELLSSL_PURE_CYCLES") == "1":
        return "python"
    return "cython"


def _kernel_cycles(g: Graph, max_len: int) -> list[tuple[int, ...]]:
    indptr, indices = g.neighbor_csr()
    if cycle_kernel_name() == "cython" and g.num_nodes <= _DENSE_LIMIT:
        return _fastcycles.chordless_cycles(g.num_nodes, indptr, indices, max_len)
    return _cycles.chordless_cycles(g.num_nodes, indptr, indices, max_len)


def enumerate_induced_cycles(g: Graph, m: int) -> list[tuple[int, ...]]:
    """Vertex sets of all chordless cycles of length <= m, as sorted tuples.

    The result is ordered by (length, lexicographic vertex order).
    """
    if m < 3:
        raise ValueError("ring size m must be at least 3")
    cycles = _kernel_cycles(g, m)
    sets = [tuple(sorted(c)) for c in cycles]
    sets.sort(key=lambda t: (len(t), t))
    return sets


@dataclass(frozen=True)
class Cell:
    id: int
    dim: int
    boundary: tuple[int, ...]
    vertex_set: tuple[int, ...]


@dataclass(frozen=True)
class CellularComplex:
    cells_by_dim: tuple[tuple[Cell, ...], tuple[Cell, ...], tuple[Cell, ...]]
    skeleton: Graph
    ring_size: int

    @property
    def n0(self) -> int:
        return len(self.cells_by_dim[0])

    @property
    def n1(self) -> int:
        return len(self.cells_by_dim[1])

    @property
    def n2(self) -> int:
        return len(self.cells_by_dim[2])

    @property
    def num_cells(self) -> int:
        return self.n0 + self.n1 + self.n2

    def all_cells(self):
        for cells in self.cells_by_dim:
            yield from cells

    def cell(self, cell_id: int) -> Cell:
        if cell_id < self.n0:
            return self.cells_by_dim[0][cell_id]
        if cell_id < self.n0 + self.n1:
            return self.cells_by_dim[1][cell_id - self.n0]
        return self.cells_by_dim[2][cell_id - self.n0 - self.n1]

    def dim_offset(self, dim: int) -> int:
        return (0, self.n0, self.n0 + self.n1)[dim]

    def to_graph(self) -> Graph:
        """Read the 0/1-skeleton back as a graph."""
        edges = tuple(c.boundary for c in self.cells_by_dim[1])
        return Graph(self.n0, edges, self.skeleton.node_labels, self.skeleton.graph_label)


def lift_graph(g: Graph, m: int) -> CellularComplex:
    """Glue a 2-cell onto every induced cycle of length <= m.

    Cell ids are dimension-major: nodes, then edges in canonical order,
    then 2-cells in (length, lexicographic) order.
    """
    zero_cells = tuple(Cell(i, 0, (), (i,)) for i in range(g.num_nodes))
    edge_ids = {e: g.num_nodes + k for k, e in enumerate(g.edges)}
    one_cells = tuple(
        Cell(edge_ids[e], 1, e, e) for e in g.edges
    )
    adj = g.neighbor_sets()
    two_cells = []
    next_id = g.num_nodes + g.num_edges
    for verts in enumerate_induced_cycles(g, m):
        boundary = sorted(
            edge_ids[(u, v)]
            for i, u in enumerate(verts)
            for v in verts[i + 1:]
            if v in adj[u]
        )
        if len(boundary) != len(verts):
            raise DataError(f"cycle {verts} does not induce exactly its own edges")
        two_cells.append(Cell(next_id, 2, tuple(boundary), verts))
        next_id += 1
    return CellularComplex((zero_cells, one_cells, tuple(two_cells)), g, m)


@dataclass(frozen=True)
class NeighborhoodTables:
    """Per cell id: boundary, coboundary, lower and upper adjacency id lists."""

    boundary: tuple[tuple[int, ...], ...]
    coboundary: tuple[tuple[int, ...], ...]
    lower: tuple[tuple[int, ...], ...]
    upper: tuple[tuple[int, ...], ...]

    def of(self, kind: str, cell_id: int) -> tuple[int, ...]:
        return getattr(self, kind)[cell_id]


def build_neighborhoods(x: CellularComplex) -> NeighborhoodTables:
    """Materialize the four neighborhood tables of a complex.

    Upper adjacency links cells sharing a coboundary cell, lower adjacency
    cells sharing a boundary cell; both exclude the cell itself.  Boundary
    and lower adjacency are empty for 0-cells, coboundary and upper
    adjacency for 2-cells.
    """
    total = x.num_cells
    boundary: list[tuple[int, ...]] = [()] * total
    cobnd: list[set[int]] = [set() for _ in range(total)]
    lower: list[set[int]] = [set() for _ in range(total)]
    upper: list[set[int]] = [set() for _ in range(total)]

    for cell in x.all_cells():
        for b in cell.boundary:
            if b >= total or x.cell(b).dim != cell.dim - 1:
                raise DataError(f"cell {cell.id}: dangling boundary reference {b}")
        boundary[cell.id] = tuple(sorted(cell.boundary))
        for b in cell.boundary:
            cobnd[b].add(cell.id)

    # cells on a common rim share that coboundary cell: upper adjacency
    for cell in x.all_cells():
        members = boundary[cell.id]
        for i, a in enumerate(members):
            for b in members[i + 1:]:
                upper[a].add(b)
                upper[b].add(a)
    # cells whose rims share a cell: lower adjacency
    for cell_id in range(total):
        co = sorted(cobnd[cell_id])
        for i, a in enumerate(co):
            for b in co[i + 1:]:
                lower[a].add(b)
                lower[b].add(a)

    return NeighborhoodTables(
        boundary=tuple(boundary),
        coboundary=tuple(tuple(sorted(s)) for s in cobnd),
        lower=tuple(tuple(sorted(s)) for s in lower),
        upper=tuple(tuple(sorted(s)) for s in upper),
    )


def initial_cell_features(
    x: CellularComplex, node_feats: FeatureMatrix
) -> tuple[FeatureMatrix, FeatureMatrix, FeatureMatrix]:
    """Per-dimension features: nodes keep theirs, higher cells average their vertices."""
    if node_feats.rows != x.n0:
        raise DataError(f"feature rows {node_feats.rows} != {x.n0} nodes")
    base = node_feats.values
    out = [base]
    for dim in (1, 2):
        cells = x.cells_by_dim[dim]
        mat = np.zeros((len(cells), node_feats.dim))
        for i, c in enumerate(cells):
            mat[i] = base[list(c.vertex_set)].mean(axis=0)
        out.append(mat)
    return tuple(FeatureMatrix(m) for m in out)


def dump_complex(x: CellularComplex) -> str:
    """Text dump, one line per cell: ``dim id : boundary ids``."""
    lines = []
    for cell in x.all_cells():
        bnd = " ".join(str(b) for b in cell.boundary)
        lines.append(f"{cell.dim} {cell.id} : {bnd}".rstrip())
    return "\n".join(lines) + "\n"
