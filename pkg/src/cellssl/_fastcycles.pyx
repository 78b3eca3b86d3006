# cython: boundscheck=False, wraparound=False, initializedcheck=False
"""Compiled chordless cycle kernel; mirrors ``_cycles.chordless_cycles``.

Same candidate-extension search, iterative instead of recursive, with a
dense adjacency matrix for O(1) chord checks.  Output order and content
match the pure-Python twin exactly.
"""

import numpy as np

cimport numpy as cnp


def chordless_cycles(int n, indptr_arr, indices_arr, int max_len):
    if max_len < 3:
        raise ValueError("max_len must be at least 3")
    cdef cnp.int32_t[::1] indptr = np.ascontiguousarray(indptr_arr, dtype=np.int32)
    cdef cnp.int32_t[::1] indices = np.ascontiguousarray(indices_arr, dtype=np.int32)
    cdef cnp.uint8_t[:, ::1] adj = np.zeros((max(n, 1), max(n, 1)), dtype=np.uint8)
    cdef cnp.int32_t[::1] path = np.zeros(max_len + 2, dtype=np.int32)
    cdef cnp.int64_t[::1] cursor = np.zeros(max_len + 2, dtype=np.int64)
    cdef cnp.uint8_t[::1] on_path = np.zeros(max(n, 1), dtype=np.uint8)
    cdef list out = []
    cdef int v, u, w, depth, i, tail, chord, grow_limit
    cdef Py_ssize_t j

    for v in range(n):
        for j in range(indptr[v], indptr[v + 1]):
            adj[v, indices[j]] = 1

    grow_limit = max_len - 2
    for v in range(n):
        for j in range(indptr[v], indptr[v + 1]):
            u = indices[j]
            if u <= v:
                continue
            path[0] = v
            path[1] = u
            on_path[v] = 1
            on_path[u] = 1
            depth = 1
            cursor[1] = indptr[u]
            while depth >= 1:
                tail = path[depth]
                if cursor[depth] < indptr[tail + 1]:
                    w = indices[cursor[depth]]
                    cursor[depth] += 1
                    if w <= v or on_path[w]:
                        continue
                    chord = 0
                    for i in range(1, depth):
                        if adj[w, path[i]]:
                            chord = 1
                            break
                    if chord:
                        continue
                    if adj[w, v]:
                        if path[1] < w:
                            out.append(tuple([path[i] for i in range(depth + 1)] + [w]))
                    elif depth + 1 <= grow_limit:
                        depth += 1
                        path[depth] = w
                        on_path[w] = 1
                        cursor[depth] = indptr[w]
                else:
                    on_path[tail] = 0
                    depth -= 1
            on_path[v] = 0
    return out
