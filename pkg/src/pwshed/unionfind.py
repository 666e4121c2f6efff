"""Concurrent disjoint sets stored in a label array.

A label array doubles as the parent store: ``labels[x] == x`` marks a root.
Union always hangs the larger root under the smaller one (min-root rule)
through a compare-and-swap on the root's slot, so any batch of unions,
in any order or interleaving, ends with every component rooted at its
smallest index.  There is no union by rank on purpose: it would break that
guarantee.
"""
from __future__ import annotations

import numpy as np
from numba import njit, prange

from ._parallel import atomic_cas, worker_count


@njit(cache=True)
def find(labels, x):
    # Path halving: only non-roots are rewritten, and only to an ancestor,
    # which stays valid under concurrent root linking.
    x = np.int64(x)
    while True:
        parent = np.int64(labels[x])
        if parent == x:
            return x
        grand = np.int64(labels[parent])
        if grand != parent:
            labels[x] = grand
        x = grand


@njit(cache=True)
def union(labels, p, q):
    while True:
        a = find(labels, p)
        b = find(labels, q)
        if a == b:
            return
        if a > b:
            a, b = b, a
        # b may have been linked by another worker since find(); retry then.
        if atomic_cas(labels, b, b, a) == b:
            return


@njit(cache=True, parallel=True)
def union_pairs(labels, ps, qs):
    for i in prange(ps.shape[0]):
        union(labels, ps[i], qs[i])


@njit(cache=True, parallel=True)
def flatten(labels):
    """Point every element straight at its root."""
    for x in prange(labels.shape[0]):
        labels[x] = find(labels, x)


class DisjointSet:
    """Disjoint sets over ``range(n)`` or over an existing label array.

    >>> ds = DisjointSet(10)
    >>> ds.union(7, 3)
    >>> ds.find(7)
    3
    """

    def __init__(self, n_or_labels):
        if np.isscalar(n_or_labels):
            self.labels = np.arange(int(n_or_labels), dtype=np.int32)
        else:
            self.labels = np.asarray(n_or_labels)
            if self.labels.ndim != 1:
                raise ValueError("label store must be one-dimensional")

    def __len__(self):
        return self.labels.shape[0]

    def _check(self, x):
        if not 0 <= x < len(self):
            raise IndexError(f"element {x} outside 0..{len(self) - 1}")

    def find(self, x: int) -> int:
        self._check(x)
        return int(find(self.labels, x))

    def union(self, p: int, q: int) -> None:
        self._check(p)
        self._check(q)
        union(self.labels, p, q)

    def union_many(self, pairs, workers: int | None = None) -> None:
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        if pairs.size and (pairs.min() < 0 or pairs.max() >= len(self)):
            raise IndexError("pair element outside the set")
        with worker_count(workers):
            union_pairs(self.labels, pairs[:, 0].copy(), pairs[:, 1].copy())

    def flatten(self, workers: int | None = None) -> np.ndarray:
        with worker_count(workers):
            flatten(self.labels)
        return self.labels
