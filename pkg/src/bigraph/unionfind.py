"""Array-backed union-find (path halving, union by size), compiled with numba."""
from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _find(parent, x):
    while parent[x] != x:
        parent[x] = parent[parent[x]]
        x = parent[x]
    return x


@njit(cache=True)
def _label(n, us, vs):
    parent = np.arange(n, dtype=np.int64)
    size = np.ones(n, dtype=np.int64)
    for e in range(us.shape[0]):
        a = _find(parent, us[e])
        b = _find(parent, vs[e])
        if a == b:
            continue
        if size[a] < size[b]:
            a, b = b, a
        parent[b] = a
        size[a] += size[b]
    roots = np.empty(n, dtype=np.int64)
    for x in range(n):
        roots[x] = _find(parent, x)
    return roots


def component_roots(n: int, edges: np.ndarray) -> np.ndarray:
    """Representative vertex of each vertex's component."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    return _label(int(n), np.ascontiguousarray(edges[:, 0]), np.ascontiguousarray(edges[:, 1]))


class UnionFind:
    """Incremental interface for small problems (oracle, tests)."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, x: int) -> int:
        parent = self.parent
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(self, a: int, b: int) -> bool:
        a, b = self.find(a), self.find(b)
        if a == b:
            return False
        if self.size[a] < self.size[b]:
            a, b = b, a
        self.parent[b] = a
        self.size[a] += self.size[b]
        return True
