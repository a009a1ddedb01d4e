"""Sparse sampling of G(n, P) and component statistics.

Vertex ids are laid out in contiguous type blocks: type 0 occupies
``[0, n_0)``, type 1 ``[n_0, n_0 + n_1)`` and so on. Each unordered pair of
type blocks (a <= b) is sampled independently by geometric skipping over a
linear pair index, so the cost is O(n + m) rather than O(n^2).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, TextIO

import numpy as np
from numba import njit

from . import rng as _rng
from .errors import CapacityExceeded, ValidationError
from .params import ProbMatrix, TypeCounts, as_prob_matrix, as_type_counts, validate
from .unionfind import component_roots

P_SKIP_ALL = 1e-12
P_EMIT_ALL = 1.0 - 1e-12
DEFAULT_EDGE_BUDGET = 200_000_000


@dataclass(frozen=True, eq=False)
class SampledGraph:
    n: TypeCounts
    edges: np.ndarray  # (m, 2) int64, u < v, sorted by (u, v)
    seed: int

    @property
    def n_total(self) -> int:
        return self.n.n_total

    @property
    def m(self) -> int:
        return int(self.edges.shape[0])

    def type_of(self, v):
        """Type index of vertex id(s) ``v``."""
        return np.searchsorted(self.n.offsets()[1:], v, side="right")

    def type_labels(self) -> np.ndarray:
        return np.repeat(np.arange(self.n.k, dtype=np.int64), self.n.n)

    def adjacency(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR adjacency (indptr, indices), neighbours sorted ascending."""
        nt = self.n_total
        u, v = self.edges[:, 0], self.edges[:, 1]
        src = np.concatenate((u, v))
        dst = np.concatenate((v, u))
        order = np.lexsort((dst, src))
        counts = np.bincount(src, minlength=nt)
        indptr = np.zeros(nt + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        return indptr, dst[order]

    def union(self, other: "SampledGraph", seed: Optional[int] = None) -> "SampledGraph":
        if other.n != self.n:
            raise ValidationError("graphs on different vertex sets")
        nt = self.n_total
        keys = np.union1d(self.edges[:, 0] * nt + self.edges[:, 1],
                          other.edges[:, 0] * nt + other.edges[:, 1])
        edges = np.column_stack((keys // nt, keys % nt))
        edges.flags.writeable = False
        return SampledGraph(self.n, edges, self.seed if seed is None else seed)


@dataclass(frozen=True, eq=False)
class ComponentStats:
    comp_sizes: np.ndarray  # descending
    per_type: np.ndarray  # (components, k), rows aligned with comp_sizes
    labels: np.ndarray  # vertex -> row index into comp_sizes
    s_L: Optional[np.ndarray] = None

    @property
    def L1(self) -> int:
        return int(self.comp_sizes[0]) if self.comp_sizes.size else 0

    @property
    def L2(self) -> int:
        return int(self.comp_sizes[1]) if self.comp_sizes.size > 1 else 0

    @property
    def n_components(self) -> int:
        return int(self.comp_sizes.size)

    def component_of(self, v: int) -> int:
        return int(self.comp_sizes[self.labels[v]])

    def __eq__(self, other):
        if not isinstance(other, ComponentStats):
            return NotImplemented
        same_sL = (self.s_L is None and other.s_L is None) or (
            self.s_L is not None and other.s_L is not None and np.array_equal(self.s_L, other.s_L)
        )
        return (np.array_equal(self.comp_sizes, other.comp_sizes)
                and np.array_equal(self.per_type, other.per_type)
                and np.array_equal(self.labels, other.labels) and same_sL)


def _blocks(k: int):
    b = 0
    for a in range(k):
        for c in range(a, k):
            yield b, a, c
            b += 1


def _block_pairs(na: int, nb: int, same: bool) -> int:
    return na * (na - 1) // 2 if same else na * nb


def _index_to_pairs(t: np.ndarray, na: int, nb: int, same: bool):
    """Linear pair index -> local (u, v) offsets within a block."""
    if not same:
        return t // nb, t % nb
    # t = v (v - 1) / 2 + u with 0 <= u < v
    v = np.floor((1.0 + np.sqrt(1.0 + 8.0 * t.astype(np.float64))) / 2.0).astype(np.int64)
    tri = v * (v - 1) // 2
    hi = tri > t
    while np.any(hi):
        v[hi] -= 1
        tri = v * (v - 1) // 2
        hi = tri > t
    lo = (v + 1) * v // 2 <= t
    while np.any(lo):
        v[lo] += 1
        lo = (v + 1) * v // 2 <= t
    return t - v * (v - 1) // 2, v


def skip_positions(N: int, p: float, gen: np.random.Generator) -> np.ndarray:
    """Sorted indices in [0, N) each included independently with probability p.

    Gaps between successive hits are geometric: floor(log U / log(1 - p)) + 1.
    """
    if N <= 0 or p < P_SKIP_ALL:
        return np.empty(0, dtype=np.int64)
    if p > P_EMIT_ALL:
        return np.arange(N, dtype=np.int64)
    log_q = math.log1p(-p)
    expected = N * p
    batch = int(expected + 6.0 * math.sqrt(expected) + 16)
    cap = float(N + 1)
    out = []
    cur = -1
    while True:
        u = 1.0 - gen.random(batch)  # (0, 1]
        gaps = np.minimum(np.floor(np.log(u) / log_q), cap).astype(np.int64) + 1
        pos = cur + np.cumsum(gaps)
        # pos increases until it first reaches N; wrap-around can only happen after that
        over = pos >= N
        if over.any():
            out.append(pos[: int(np.argmax(over))])
            break
        out.append(pos)
        cur = int(pos[-1])
        remaining = (N - 1 - cur) * p
        batch = int(remaining + 6.0 * math.sqrt(remaining) + 16)
    return np.concatenate(out) if len(out) > 1 else out[0]


def _check_budget(n: TypeCounts, P: ProbMatrix, budget: int) -> None:
    expected = 0.0
    for _, a, c in _blocks(n.k):
        expected += _block_pairs(n[a], n[c], a == c) * float(P.p[a, c])
    if expected > budget:
        raise CapacityExceeded(f"expected {expected:.3g} edges exceeds budget {budget}")


def _assemble(n: TypeCounts, parts: list, seed: int) -> SampledGraph:
    if parts:
        edges = np.concatenate(parts)
    else:
        edges = np.empty((0, 2), dtype=np.int64)
    if edges.shape[0]:
        edges = edges[np.lexsort((edges[:, 1], edges[:, 0]))]
    edges.flags.writeable = False
    return SampledGraph(n=n, edges=edges, seed=int(seed))


def _block_edges(n, offs, a, c, t):
    same = a == c
    lu, lv = _index_to_pairs(t, n[a], n[c], same)
    return np.column_stack((lu + offs[a], lv + offs[c]))


def sample(n, P, seed: int, edge_budget: int = DEFAULT_EDGE_BUDGET) -> SampledGraph:
    """Draw G(n, P): each pair {u, v} of types (i, j) is an edge w.p. p_ij."""
    P, n = as_prob_matrix(P), as_type_counts(n)
    validate(P, n)
    _check_budget(n, P, edge_budget)
    offs = n.offsets()
    parts = []
    for b, a, c in _blocks(n.k):
        N = _block_pairs(n[a], n[c], a == c)
        t = skip_positions(N, float(P.p[a, c]), _rng.generator(seed, b))
        if t.size:
            parts.append(_block_edges(n, offs, a, c, t))
    return _assemble(n, parts, seed)


def sample_coupled(n, P_low, P_high, seed: int,
                   edge_budget: int = DEFAULT_EDGE_BUDGET) -> tuple[SampledGraph, SampledGraph]:
    """Monotone coupling of G(n, P_low) and G(n, P_high) with E_low a subset of E_high.

    The high graph is drawn by skipping; each of its pairs is then kept in the
    low graph iff its counter-based uniform U(seed, block, t) is below
    p_low / p_high. Both marginals are exact.
    """
    P_low, P_high, n = as_prob_matrix(P_low), as_prob_matrix(P_high), as_type_counts(n)
    validate(P_low, n)
    validate(P_high, n)
    if np.any(P_low.p > P_high.p):
        raise ValidationError("P_low must be entrywise <= P_high")
    _check_budget(n, P_high, edge_budget)
    offs = n.offsets()
    lo_parts, hi_parts = [], []
    for b, a, c in _blocks(n.k):
        N = _block_pairs(n[a], n[c], a == c)
        ph, pl = float(P_high.p[a, c]), float(P_low.p[a, c])
        t = skip_positions(N, ph, _rng.generator(seed, b))
        if not t.size:
            continue
        hi_parts.append(_block_edges(n, offs, a, c, t))
        if pl <= 0.0:
            continue
        keep = _rng.pair_uniforms(seed, b, t) * ph < pl
        if keep.any():
            lo_parts.append(_block_edges(n, offs, a, c, t[keep]))
    return _assemble(n, lo_parts, seed), _assemble(n, hi_parts, seed)


def components(G: SampledGraph, L: Optional[Sequence[float]] = None) -> ComponentStats:
    """Exact connected components with per-type tallies.

    With a threshold vector ``L`` also returns ``s_L``: for each type i the
    number of type-i vertices in components holding at least ``L[j]``
    vertices of type j for some j.
    """
    nt = G.n_total
    roots = component_roots(nt, G.edges)
    uniq, inverse = np.unique(roots, return_inverse=True)
    types = G.type_labels()
    k = G.n.k
    per_type = np.zeros((uniq.size, k), dtype=np.int64)
    np.add.at(per_type, (inverse, types), 1)
    sizes = per_type.sum(axis=1)
    # descending size; ties broken by smallest representative for determinism
    order = np.lexsort((uniq, -sizes))
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    s_L = None
    if L is not None:
        L = np.asarray(L, dtype=np.float64)
        if L.shape != (k,):
            raise ValidationError(f"threshold vector must have {k} entries")
        large = np.any(per_type >= L[None, :], axis=1)
        s_L = per_type[large].sum(axis=0)
    return ComponentStats(
        comp_sizes=sizes[order],
        per_type=per_type[order],
        labels=rank[inverse],
        s_L=s_L,
    )


def _single_batch(N: int, p: float) -> int:
    """Uniforms skip_positions draws in its first batch (0 when it draws none)."""
    if N <= 0 or p < P_SKIP_ALL or p > P_EMIT_ALL:
        return 0
    expected = N * p
    return int(expected + 6.0 * math.sqrt(expected) + 16)


@njit(cache=True)
def _small_stats(gaps, starts, Ns, same, na, nb, offa, offb, emit_all, nt, root, out):
    parent = np.empty(nt, dtype=np.int64)
    size = np.empty(nt, dtype=np.int64)
    for s in range(gaps.shape[0]):
        for x in range(nt):
            parent[x] = x
            size[x] = 1
        for b in range(Ns.shape[0]):
            N = Ns[b]
            pos = -1
            k = starts[b]
            while True:
                if emit_all[b]:
                    pos += 1
                elif k < starts[b + 1]:
                    pos += gaps[s, k]
                    k += 1
                else:
                    break
                if pos >= N:
                    break
                if same[b]:
                    v = 1
                    while v * (v + 1) // 2 <= pos:
                        v += 1
                    u = pos - v * (v - 1) // 2
                else:
                    u = pos // nb[b]
                    v = pos % nb[b]
                x = u + offa[b]
                y = v + offb[b]
                while parent[x] != x:
                    x = parent[x]
                while parent[y] != y:
                    y = parent[y]
                if x != y:
                    if size[x] < size[y]:
                        x, y = y, x
                    parent[y] = x
                    size[x] += size[y]
        l1 = 0
        l2 = 0
        nc = 0
        for x in range(nt):
            if parent[x] == x:
                nc += 1
                if size[x] > l1:
                    l2 = l1
                    l1 = size[x]
                elif size[x] > l2:
                    l2 = size[x]
        r = root
        while parent[r] != r:
            r = parent[r]
        out[s, 0] = l1
        out[s, 1] = l2
        out[s, 2] = nc
        out[s, 3] = size[r]


SMALL_GRAPH_MAX_PAIRS = 15


def small_graph_stats(n, P, seeds: Sequence[int], root: int = 0) -> dict:
    """L1, L2, component count and root-component size of ``sample(n, P, s)``
    for every seed s, without building the graphs.

    Uses the same per-block streams and gap rule as :func:`sample`, so each
    row equals what ``components(sample(n, P, s))`` reports. Restricted to
    graphs whose blocks all fit in the first batch of uniforms.
    """
    P, n = as_prob_matrix(P), as_type_counts(n)
    validate(P, n)
    nt = n.n_total
    if nt * (nt - 1) // 2 > SMALL_GRAPH_MAX_PAIRS:
        raise ValidationError(f"small_graph_stats handles at most {SMALL_GRAPH_MAX_PAIRS} pairs")
    if not 0 <= root < nt:
        raise ValidationError("root vertex out of range")
    offs = n.offsets()
    blocks = list(_blocks(n.k))
    Ns = np.array([_block_pairs(n[a], n[c], a == c) for _, a, c in blocks], dtype=np.int64)
    ps = [float(P.p[a, c]) for _, a, c in blocks]
    sizes = [_single_batch(int(N), p) for N, p in zip(Ns, ps)]
    starts = np.zeros(len(blocks) + 1, dtype=np.int64)
    np.cumsum(sizes, out=starts[1:])
    seeds = [int(s) for s in seeds]
    u = np.empty((len(seeds), int(starts[-1])), dtype=np.float64)
    for bi, (b, _, _) in enumerate(blocks):
        if sizes[bi] == 0:
            continue
        lo, hi = starts[bi], starts[bi + 1]
        for r, s in enumerate(seeds):
            u[r, lo:hi] = _rng.generator(s, b).random(sizes[bi])
    gaps = np.empty(u.shape, dtype=np.int64)
    for bi in range(len(blocks)):
        if sizes[bi] == 0:
            continue
        lo, hi = starts[bi], starts[bi + 1]
        log_q = math.log1p(-ps[bi])
        g = np.log(1.0 - u[:, lo:hi]) / log_q
        gaps[:, lo:hi] = np.minimum(np.floor(g), float(Ns[bi] + 1)).astype(np.int64) + 1
    out = np.empty((len(seeds), 4), dtype=np.int64)
    _small_stats(gaps, starts, Ns,
                 np.array([a == c for _, a, c in blocks]),
                 np.array([n[a] for _, a, _ in blocks], dtype=np.int64),
                 np.array([n[c] for _, _, c in blocks], dtype=np.int64),
                 np.array([offs[a] for _, a, _ in blocks], dtype=np.int64),
                 np.array([offs[c] for _, _, c in blocks], dtype=np.int64),
                 np.array([p > P_EMIT_ALL for p in ps]), nt, int(root), out)
    return {"L1": out[:, 0], "L2": out[:, 1], "comp_count": out[:, 2],
            "root_component": out[:, 3]}


def write_edge_list(G: SampledGraph, fh: TextIO) -> None:
    """One ``u v`` line per edge, decimal ids, sorted by (u, v)."""
    for u, v in G.edges.tolist():
        fh.write(f"{u} {v}\n")


def read_edge_list(fh: TextIO, n) -> SampledGraph:
    n = as_type_counts(n)
    rows = [tuple(int(x) for x in line.split()) for line in fh if line.strip()]
    edges = np.array(rows, dtype=np.int64).reshape(-1, 2)
    return _assemble(n, [edges] if rows else [], 0)
