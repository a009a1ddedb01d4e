"""Brute-force ground truth used to check the fast paths.

Nothing in here shares code with the simulation or solver routines it is
meant to check: enumeration walks every edge subset explicitly, the
extinction oracle iterates plain powers, and the progeny oracle sums
matrix powers term by term.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import Divergent, TooLarge, ValidationError
from .params import as_prob_matrix, as_type_counts, validate

MAX_PAIRS = 22

STATISTICS = ("L1", "L2", "comp_count", "sL", "root_component")


@dataclass(frozen=True)
class ExactDistribution:
    support: tuple  # ((value, probability), ...) sorted by value
    mean: float
    variance: float

    def prob(self, value) -> float:
        for v, p in self.support:
            if v == value:
                return p
        return 0.0

    def total(self) -> float:
        return math.fsum(p for _, p in self.support)


@njit(cache=True)
def _enumerate(nt, us, vs, probs, types, k, l, root):
    C = us.shape[0]
    S = 1 << C
    out = np.empty((S, 5), dtype=np.int64)
    weight = np.empty(S, dtype=np.float64)
    parent = np.empty(nt, dtype=np.int64)
    size = np.empty(nt, dtype=np.int64)
    cnt = np.empty((nt, k), dtype=np.int64)
    for mask in range(S):
        w = 1.0
        for x in range(nt):
            parent[x] = x
            size[x] = 1
        for e in range(C):
            if (mask >> e) & 1:
                w *= probs[e]
                a = us[e]
                while parent[a] != a:
                    a = parent[a]
                b = vs[e]
                while parent[b] != b:
                    b = parent[b]
                if a != b:
                    if size[a] < size[b]:
                        a, b = b, a
                    parent[b] = a
                    size[a] += size[b]
            else:
                w *= 1.0 - probs[e]
        weight[mask] = w
        for x in range(nt):
            for j in range(k):
                cnt[x, j] = 0
        for x in range(nt):
            r = x
            while parent[r] != r:
                r = parent[r]
            cnt[r, types[x]] += 1
        l1 = 0
        l2 = 0
        ncomp = 0
        s_total = 0
        for x in range(nt):
            if parent[x] == x:
                ncomp += 1
                sz = size[x]
                if sz > l1:
                    l2 = l1
                    l1 = sz
                elif sz > l2:
                    l2 = sz
                large = False
                for j in range(k):
                    if cnt[x, j] >= l[j]:
                        large = True
                if large:
                    s_total += sz
        r = root
        while parent[r] != r:
            r = parent[r]
        out[mask, 0] = l1
        out[mask, 1] = l2
        out[mask, 2] = ncomp
        out[mask, 3] = s_total
        out[mask, 4] = size[r]
    return out, weight


def enumerate_exact(n, P, statistic: str = "L1", L=None, root: int = 0) -> ExactDistribution:
    """Exact distribution of a component statistic of G(n, P) by visiting
    every edge subset.

    ``statistic`` is one of ``L1``, ``L2``, ``comp_count``, ``sL`` (total
    number of vertices in components with at least ``L[j]`` vertices of some
    type j) or ``root_component`` (size of the component of vertex ``root``).
    """
    P, n = as_prob_matrix(P), as_type_counts(n)
    validate(P, n)
    if statistic not in STATISTICS:
        raise ValidationError(f"unknown statistic {statistic!r}; choose from {STATISTICS}")
    nt = n.n_total
    C = nt * (nt - 1) // 2
    if C > MAX_PAIRS:
        raise TooLarge(f"{C} vertex pairs; enumeration is limited to {MAX_PAIRS}")
    if statistic == "sL" and L is None:
        raise ValidationError("statistic 'sL' needs thresholds L")
    if not 0 <= root < nt:
        raise ValidationError("root vertex out of range")
    types = np.repeat(np.arange(n.k), n.n).astype(np.int64)
    us, vs, probs = [], [], []
    for u in range(nt):
        for v in range(u + 1, nt):
            us.append(u)
            vs.append(v)
            probs.append(P.p[types[u], types[v]])
    l = np.full(n.k, np.inf) if L is None else np.asarray(L, dtype=np.float64)
    vals, w = _enumerate(nt, np.array(us, dtype=np.int64), np.array(vs, dtype=np.int64),
                         np.array(probs, dtype=np.float64), types, n.k, l, root)
    col = vals[:, STATISTICS.index(statistic)]
    order = np.argsort(col, kind="stable")
    col, w = col[order], w[order]
    cuts = np.flatnonzero(np.diff(col)) + 1
    support = []
    for vseg, wseg in zip(np.split(col, cuts), np.split(w, cuts)):
        mass = math.fsum(wseg.tolist())
        if mass > 0.0:  # values reachable only through probability-0 edge sets
            support.append((int(vseg[0]), mass))
    mean = math.fsum(v * p for v, p in support)
    var = math.fsum((v - mean) ** 2 * p for v, p in support)
    return ExactDistribution(support=tuple(support), mean=mean, variance=var)


def extinction_truncated(n, P, root_type: int, generations: int) -> float:
    """Probability that the process rooted at ``root_type`` is extinct by
    generation ``generations``: q(0) = 0 and
    q_i(t + 1) = prod_j (1 - p_ij (1 - q_j(t)))^{n_j}.

    This is a lower bound on the extinction probability and nondecreasing
    in ``generations``.
    """
    P, n = as_prob_matrix(P), as_type_counts(n)
    validate(P, n)
    p = P.p.tolist()
    k = n.k
    nn = [int(x) for x in n]
    q = [0.0] * k
    for _ in range(int(generations)):
        q = [math.prod((1.0 - p[i][j] * (1.0 - q[j])) ** nn[j] for j in range(k))
             for i in range(k)]
    return q[root_type]


def progeny_series(H, T: int) -> np.ndarray:
    """Partial sum I + H + H^2 + ... + H^T of a 2 x 2 matrix."""
    H = np.asarray(H, dtype=np.float64)
    if H.shape != (2, 2):
        raise ValidationError("progeny_series expects a 2 x 2 matrix")
    if np.any(H < 0):
        raise ValidationError("offspring means must be nonnegative")
    a, b, c, d = (float(x) for x in H.ravel())
    rows_ge_one = a + b >= 1.0 and c + d >= 1.0
    if rows_ge_one and T > 1000:
        raise Divergent("every row sum is >= 1; the series does not converge")
    # running power (w x; y z) and sum (s00 s01; s10 s11)
    w, x, y, z = 1.0, 0.0, 0.0, 1.0
    s00, s01, s10, s11 = 1.0, 0.0, 0.0, 1.0
    for _ in range(int(T)):
        w, x, y, z = w * a + x * c, w * b + x * d, y * a + z * c, y * b + z * d
        if w == 0.0 and x == 0.0 and y == 0.0 and z == 0.0:
            break
        s00 += w
        s01 += x
        s10 += y
        s11 += z
    out = np.array([[s00, s01], [s10, s11]])
    if not np.all(np.isfinite(out)):
        raise Divergent("series overflowed")
    return out
