"""Slow sequential references for checking the parallel kernels.

Everything here is plain single-threaded Python over lists.  The only thing
shared with the kernels is :func:`pwshed.grid.neighbors`, which has its own
brute-force tests.
"""
from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass

import numpy as np

from .grid import Connectivity, as_grid, check_connectivity, neighbors


@dataclass(frozen=True)
class OracleReport:
    partitions_equal: bool
    region_counts: tuple[int, int]
    first_mismatch: int | None = None


def _neighbor_table(dims, conn):
    n = int(np.prod(dims))
    return [neighbors(p, conn, dims) for p in range(n)]


def sequential_steps(img, conn: Connectivity, visit_seed: int | None = None):
    """Steps I-IV one iteration at a time; returns (states, labels) lists.

    The states are those left by step II; plateau resolution runs Jacobi
    sweeps over a frontier, which is the synchronous schedule with the same
    tie-break (largest-index donor).  ``visit_seed`` shuffles the order in
    which each sweep visits its pixels, which must not matter.
    """
    shuffle = random.Random(visit_seed).shuffle if visit_seed is not None else None
    grid = as_grid(img)
    check_connectivity(grid.dims, conn)
    I = [int(v) for v in grid.flat()]
    nb = _neighbor_table(grid.dims, conn)
    n = len(I)

    S = [0] * n
    L = [0] * n
    for p in range(n):
        if not nb[p]:
            S[p], L[p] = 1, p
            continue
        q = nb[p][0]
        for r in nb[p][1:]:
            if I[r] <= I[q]:
                q = r
        if I[q] < I[p]:
            S[p], L[p] = 0, q
        elif I[q] > I[p]:
            S[p], L[p] = 1, p
        elif q > p:
            S[p], L[p] = 2, q
        else:
            S[p], L[p] = 3, p

    # ring-by-ring plateau resolution
    fresh = [p for p in range(n) if S[p] == 0]
    while fresh:
        candidates = sorted({q for p in fresh for q in nb[p] if S[q] >= 2 and I[q] == I[p]})
        if shuffle:
            shuffle(candidates)
        updates = []
        for p in candidates:
            donors = [q for q in nb[p] if S[q] == 0 and I[q] == I[p]]
            updates.append((p, donors[-1]))
        for p, q in updates:
            S[p], L[p] = 0, q
        fresh = [p for p, _ in updates]

    root = list(range(n))
    for p in range(n):
        path = []
        r = p
        while L[r] != r:
            path.append(r)
            r = L[r]
        for q in path:
            root[q] = r
        root[p] = r

    # minimal plateaux: connected components of state >= 2 pixels
    merged = {}
    seen = [False] * n
    for start in range(n):
        if S[start] < 2 or seen[start]:
            continue
        comp = []
        queue = deque([start])
        seen[start] = True
        while queue:
            p = queue.popleft()
            comp.append(p)
            for q in nb[p]:
                if S[q] >= 2 and not seen[q]:
                    seen[q] = True
                    queue.append(q)
        label = min(root[p] for p in comp)
        for p in comp:
            merged[root[p]] = label
    return S, [merged.get(r, r) for r in root]


def sequential_watershed(img, conn: Connectivity | None = None,
                         visit_seed: int | None = None) -> np.ndarray:
    grid = as_grid(img)
    conn = conn or Connectivity.default_for(grid.ndim)
    _, labels = sequential_steps(grid, conn, visit_seed)
    return np.array(labels, dtype=np.int64).reshape(grid.dims)


def plateau_distance_map(img, conn: Connectivity | None = None) -> np.ndarray:
    """BFS distance inside each plateau from pixels that have a lower neighbour.

    Pixels with a strictly lower neighbour are at distance 0; pixels that no
    such pixel reaches through equal-intensity steps (minima, minimal
    plateaux) get -1.
    """
    grid = as_grid(img)
    conn = conn or Connectivity.default_for(grid.ndim)
    I = [int(v) for v in grid.flat()]
    nb = _neighbor_table(grid.dims, conn)
    dist = [-1] * len(I)
    queue = deque()
    for p in range(len(I)):
        if any(I[q] < I[p] for q in nb[p]):
            dist[p] = 0
            queue.append(p)
    while queue:
        p = queue.popleft()
        for q in nb[p]:
            if dist[q] < 0 and I[q] == I[p]:
                dist[q] = dist[p] + 1
                queue.append(q)
    return np.array(dist, dtype=np.int64).reshape(grid.dims)


def compare_partitions(a, b) -> OracleReport:
    """Equality of the equivalence relations two label fields induce."""
    a = np.asarray(a).reshape(-1)
    b = np.asarray(b).reshape(-1)
    if a.shape != b.shape:
        raise ValueError(f"label fields differ in size: {a.size} vs {b.size}")
    counts = (len(np.unique(a)), len(np.unique(b)))
    fwd, back = {}, {}
    for p, (x, y) in enumerate(zip(a.tolist(), b.tolist())):
        if fwd.setdefault(x, y) != y or back.setdefault(y, x) != x:
            return OracleReport(False, counts, p)
    return OracleReport(True, counts, None)


def labels_identical(a, b) -> bool:
    return np.array_equal(np.asarray(a).reshape(-1), np.asarray(b).reshape(-1))


def follow_to_root(labels) -> np.ndarray:
    """Naive per-pixel link following."""
    L = np.asarray(labels).reshape(-1).tolist()
    out = []
    for p in range(len(L)):
        r = p
        while L[r] != r:
            r = L[r]
        out.append(r)
    return np.array(out, dtype=np.int64)


def longest_chain(labels) -> int:
    """Length, in links, of the longest label path before a self-loop."""
    L = np.asarray(labels).reshape(-1).tolist()
    depth = [-1] * len(L)
    for start in range(len(L)):
        path = []
        p = start
        while depth[p] < 0 and L[p] != p:
            path.append(p)
            p = L[p]
        if L[p] == p:
            depth[p] = 0
        base = depth[p]
        for q in reversed(path):
            base += 1
            depth[q] = base
    return max(depth, default=0)


def reduction_bound(length: int, reduction_rate: int) -> int:
    """ceil(log_{RR+1} length) in exact integer arithmetic (0 for length <= 1)."""
    passes, reach = 0, 1
    while reach < length:
        reach *= reduction_rate + 1
        passes += 1
    return passes


def boundary_min_heights(img, labels, conn: Connectivity | None = None) -> dict[int, int]:
    """Lowest pass height per root, by a double loop over adjacent pixel pairs."""
    grid = as_grid(img)
    conn = conn or Connectivity.default_for(grid.ndim)
    I = [int(v) for v in grid.flat()]
    L = np.asarray(labels).reshape(-1).tolist()
    out = {}
    for p in range(len(I)):
        for q in neighbors(p, conn, grid.dims):
            if L[q] != L[p]:
                h = max(I[p], I[q])
                if h < out.get(L[p], h + 1):
                    out[L[p]] = h
    return out
