"""Color refinement on graphs and on cellular complexes.

Plain 1-WL refines node colors by hashed neighbor multisets.  The cellular
variant refines every cell's color with four neighborhood multisets keyed
by type (boundary, coboundary, lower, upper), never mixing colors across
dimensions.  Canonical tuples are interned in a shared dictionary so that
colorings of two structures refined together are exactly comparable;
refinement of a pair runs interleaved and stops once the joint partition
is stable.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

from .graph_io import Graph
from .lift import CellularComplex, NeighborhoodTables, build_neighborhoods


class ColorContext:
    """Injective canonical-tuple -> fresh-integer dictionary."""

    def __init__(self):
        self._table: dict[tuple, int] = {}

    def color(self, key: tuple) -> int:
        c = self._table.get(key)
        if c is None:
            c = len(self._table)
            self._table[key] = c
        return c


@dataclass
class Coloring:
    """Cell id -> color after ``iteration`` refinement rounds."""

    colors: dict[int, int]
    iteration: int


@dataclass
class ColorHistogram:
    """Per-dimension multiset of final colors."""

    per_dim: dict[int, Counter]
    iterations: int
    context: ColorContext = field(repr=False, compare=False, default=None)


def distinguishes(a: ColorHistogram, b: ColorHistogram) -> bool:
    """True iff any per-dimension color multiset differs.

    Both histograms must come from the same interleaved refinement run
    (shared color dictionary), otherwise color ids are incomparable.
    """
    if a.context is None or a.context is not b.context:
        raise ValueError("histograms come from incompatible color dictionaries")
    dims = set(a.per_dim) | set(b.per_dim)
    return any(a.per_dim.get(d, Counter()) != b.per_dim.get(d, Counter()) for d in dims)


def _partition_signature(all_colorings: list[dict[int, int]]) -> int:
    # refinement is monotone, so the class count identifies the partition
    colors = set()
    for cm in all_colorings:
        colors.update(cm.values())
    return len(colors)


class _GraphRefiner:
    def __init__(self, g: Graph, ctx: ColorContext):
        self.adj = g.neighbor_sets()
        labels = g.node_labels if g.node_labels is not None else [0] * g.num_nodes
        self.colors = {v: ctx.color(("init", 0, labels[v])) for v in range(g.num_nodes)}
        self.ctx = ctx

    def step(self) -> None:
        old = self.colors
        self.colors = {
            v: self.ctx.color((0, old[v], tuple(sorted(old[u] for u in self.adj[v]))))
            for v in old
        }

    def histogram(self, iterations: int) -> ColorHistogram:
        return ColorHistogram({0: Counter(self.colors.values())}, iterations, self.ctx)


class _ComplexRefiner:
    def __init__(self, x: CellularComplex, ctx: ColorContext, tables: NeighborhoodTables | None):
        self.x = x
        self.tables = tables if tables is not None else build_neighborhoods(x)
        self.ctx = ctx
        labels = x.skeleton.node_labels
        self.dims = {c.id: c.dim for c in x.all_cells()}
        self.colors = {}
        for c in x.all_cells():
            feat = labels[c.id] if (c.dim == 0 and labels is not None) else 0
            self.colors[c.id] = ctx.color(("init", c.dim, feat))

    def step(self) -> None:
        old = self.colors
        t = self.tables
        new = {}
        for cid, dim in self.dims.items():
            key = (
                dim,
                old[cid],
                tuple(sorted(old[s] for s in t.boundary[cid])),
                tuple(sorted(old[s] for s in t.coboundary[cid])),
                tuple(sorted(old[s] for s in t.lower[cid])),
                tuple(sorted(old[s] for s in t.upper[cid])),
            )
            new[cid] = self.ctx.color(key)
        self.colors = new

    def histogram(self, iterations: int) -> ColorHistogram:
        per_dim = {0: Counter(), 1: Counter(), 2: Counter()}
        for cid, dim in self.dims.items():
            per_dim[dim][self.colors[cid]] += 1
        return ColorHistogram(per_dim, iterations, self.ctx)


def _run(refiners: list, max_iters: int) -> int:
    """Interleaved refinement until the joint partition is stable."""
    signature = _partition_signature([r.colors for r in refiners])
    for t in range(1, max_iters + 1):
        for r in refiners:
            r.step()
        new_sig = _partition_signature([r.colors for r in refiners])
        if new_sig == signature:
            return t
        signature = new_sig
    return max_iters


def wl_refine_graph(g: Graph, max_iters: int, ctx: ColorContext | None = None) -> ColorHistogram:
    """1-WL color refinement; stops at partition stability."""
    if max_iters < 1:
        raise ValueError("max_iters must be at least 1")
    ctx = ctx if ctx is not None else ColorContext()
    r = _GraphRefiner(g, ctx)
    t = _run([r], max_iters)
    return r.histogram(t)


def cwl_refine(
    x: CellularComplex,
    max_iters: int,
    ctx: ColorContext | None = None,
    tables: NeighborhoodTables | None = None,
) -> ColorHistogram:
    """Cellular color refinement over all cells; stops at partition stability."""
    if max_iters < 1:
        raise ValueError("max_iters must be at least 1")
    ctx = ctx if ctx is not None else ColorContext()
    r = _ComplexRefiner(x, ctx, tables)
    t = _run([r], max_iters)
    return r.histogram(t)


def wl_pair(g1: Graph, g2: Graph, max_iters: int | None = None):
    """Refine two graphs together; returns (hist1, hist2, iterations)."""
    ctx = ColorContext()
    cap = max_iters if max_iters is not None else g1.num_nodes + g2.num_nodes + 1
    r1, r2 = _GraphRefiner(g1, ctx), _GraphRefiner(g2, ctx)
    t = _run([r1, r2], cap)
    return r1.histogram(t), r2.histogram(t), t


def cwl_pair(x1: CellularComplex, x2: CellularComplex, max_iters: int | None = None):
    """Refine two complexes together; returns (hist1, hist2, iterations)."""
    ctx = ColorContext()
    cap = max_iters if max_iters is not None else x1.num_cells + x2.num_cells + 1
    r1 = _ComplexRefiner(x1, ctx, None)
    r2 = _ComplexRefiner(x2, ctx, None)
    t = _run([r1, r2], cap)
    return r1.histogram(t), r2.histogram(t), t
