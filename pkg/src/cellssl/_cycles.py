"""Pure-Python chordless cycle enumeration.

Candidate-extension search anchored at each cycle's smallest vertex: paths
grow only from the anchor, may only visit vertices larger than it, and any
chord discards the candidate immediately.  Each chordless cycle of length
at most ``max_len`` is produced exactly once; orientation is collapsed by
requiring the second path vertex to be smaller than the closing vertex.

A compiled twin with identical output lives in ``_fastcycles.pyx``.
"""

from __future__ import annotations


def chordless_cycles(n: int, indptr, indices, max_len: int) -> list[tuple[int, ...]]:
    """Vertex tuples (in cycle order) of all chordless cycles, length <= max_len.

    ``indptr``/``indices`` is the CSR neighbor structure of a simple
    undirected graph with sorted rows.
    """
    if max_len < 3:
        raise ValueError("max_len must be at least 3")
    nbrs = [[int(w) for w in indices[indptr[v]:indptr[v + 1]]] for v in range(n)]
    adj = [set(row) for row in nbrs]
    out: list[tuple[int, ...]] = []

    def extend(anchor: int, path: list[int], in_path: set[int]) -> None:
        tail = path[-1]
        can_grow = len(path) <= max_len - 2
        for w in nbrs[tail]:
            if w <= anchor or w in in_path:
                continue
            adj_w = adj[w]
            chord = False
            for p in path[1:-1]:
                if p in adj_w:
                    chord = True
                    break
            if chord:
                continue
            if anchor in adj_w:
                if path[1] < w:
                    out.append(tuple(path) + (w,))
            elif can_grow:
                path.append(w)
                in_path.add(w)
                extend(anchor, path, in_path)
                path.pop()
                in_path.remove(w)

    for v in range(n):
        for u in nbrs[v]:
            if u > v:
                extend(v, [v, u], {v, u})
    return out
