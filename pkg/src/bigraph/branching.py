"""Simulation of the 2-type binomial branching process and its couplings
with breadth-first exploration of G(n, P).

Plain simulation draws offspring in aggregate: the type-j children of a
generation with Z_a individuals of type a are Binomial(Z_a * n_j, p_aj),
summed over a, which has exactly the law of the individual draws. Many
independent runs are advanced together as numpy arrays.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from numba import njit

from . import rng as _rng
from .errors import InvalidReduction, ValidationError
from .graphgen import SampledGraph
from .params import as_prob_matrix, as_type_counts, validate

DEFAULT_MAX_GENERATIONS = 1_000_000
MIN_SURVIVE_THRESHOLD = 10_000


class Stop(str, enum.Enum):
    EXTINCT = "Extinct"
    CAP_TOTAL = "CapTotal"
    CAP_GENERATIONS = "CapGenerations"
    CAP_WIDTH = "CapWidth"


class ExploreStop(str, enum.Enum):
    REACHED_LJ = "ReachedLj"
    BOUNDARY_CAP = "BoundaryCap"
    EXHAUSTED = "Exhausted"


_STOP_CODES = [Stop.EXTINCT, Stop.CAP_TOTAL, Stop.CAP_GENERATIONS, Stop.CAP_WIDTH]
_RUNNING = -1


@dataclass(frozen=True)
class StopConfig:
    """Caps for simulation and stopped exploration; ``math.inf`` disables one.

    ``l`` are the per-type totals at which a stopped exploration halts and
    ``width_cap`` the number of reached-but-unexplored vertices at which it
    halts (for plain simulation: the generation size at which it halts).
    """

    l: tuple = (math.inf, math.inf)
    width_cap: float = math.inf
    max_total: float = math.inf
    max_generations: float = DEFAULT_MAX_GENERATIONS

    def __post_init__(self):
        caps = tuple(self.l) + (self.width_cap, self.max_total, self.max_generations)
        if any(not c > 0 for c in caps):
            raise ValidationError("all caps must be positive")
        object.__setattr__(self, "l", tuple(float(x) for x in self.l))


@dataclass(frozen=True)
class BranchingOutcome:
    totals: tuple
    width: int
    generations: int
    stop: Stop


@dataclass(frozen=True)
class ExploreResult:
    tree_totals: tuple
    stopped: bool
    stop_reason: ExploreStop
    boundary_count: int


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float
    reps: int
    threshold: float = math.nan

    def within(self, target: float, k: float = 3.0, slack: float = 0.0) -> bool:
        return abs(self.value - target) <= k * self.stderr + slack


@dataclass
class BatchResult:
    totals: np.ndarray  # (reps, 2)
    width: np.ndarray
    generations: np.ndarray
    stop: np.ndarray  # index into _STOP_CODES
    hit_width: np.ndarray  # reached a generation of size >= watch_width

    def outcome(self, r: int) -> BranchingOutcome:
        return BranchingOutcome(
            totals=tuple(int(x) for x in self.totals[r]),
            width=int(self.width[r]),
            generations=int(self.generations[r]),
            stop=_STOP_CODES[int(self.stop[r])],
        )

    @property
    def extinct(self) -> np.ndarray:
        return self.stop == 0


def default_survive_threshold(eps: float) -> int:
    """max(1e4, ceil(100 / eps^2)); near-critical excursions live at scale eps^-2."""
    if not eps > 0:
        return MIN_SURVIVE_THRESHOLD
    return max(MIN_SURVIVE_THRESHOLD, math.ceil(100.0 / eps**2))


def population_limit(n) -> int:
    # a generation below this size keeps size * n_j and the next totals below 2^63
    return 2**62 // (2 * int(max(as_type_counts(n).n)) + 1)


def run_batch(z0: np.ndarray, n, P, gen: np.random.Generator, *,
              max_total: float = math.inf, width_cap: float = math.inf,
              max_generations: float = DEFAULT_MAX_GENERATIONS,
              watch_width: float = math.inf) -> BatchResult:
    """Advance independent processes from initial generations ``z0`` (reps x 2).

    Totals include the initial generation. A process stops at extinction, or
    once its total reaches ``max_total``, a generation reaches ``width_cap``,
    or ``max_generations`` generations have been produced (checked in that
    order). Reported width is saturated at ``width_cap``. ``max_total`` is
    clipped so that binomial trial counts stay inside int64; an uncapped
    supercritical run therefore ends as CapTotal rather than overflowing.
    """
    P, n = as_prob_matrix(P), as_type_counts(n)
    p = P.p
    nn = n.n
    max_total = min(max_total, population_limit(n))
    z = np.array(z0, dtype=np.int64).reshape(-1, 2)
    reps = z.shape[0]
    totals = z.copy()
    gsize = z.sum(axis=1)
    width = gsize.copy()
    gens = np.zeros(reps, dtype=np.int64)
    stop = np.full(reps, _RUNNING, dtype=np.int64)
    hit = gsize >= watch_width
    stop[gsize == 0] = 0
    active = np.flatnonzero(stop == _RUNNING)
    zact = z[active]
    while active.size:
        new = np.zeros_like(zact)
        for j in range(2):
            for a in range(2):
                if p[a, j] > 0.0:
                    new[:, j] += gen.binomial(zact[:, a] * nn[j], p[a, j])
        gens[active] += 1
        totals[active] += new
        size = new.sum(axis=1)
        width[active] = np.maximum(width[active], size)
        hit[active] |= size >= watch_width
        code = np.full(active.size, _RUNNING, dtype=np.int64)
        code[gens[active] >= max_generations] = 2
        code[size >= width_cap] = 3
        code[totals[active].sum(axis=1) >= max_total] = 1
        code[size == 0] = 0
        done = code != _RUNNING
        stop[active[done]] = code[done]
        keep = ~done
        active = active[keep]
        zact = new[keep]
    if math.isfinite(width_cap):
        width = np.minimum(width, int(width_cap))
    return BatchResult(totals=totals, width=width, generations=gens, stop=stop, hit_width=hit)


def _root_z(root_type: int, reps: int) -> np.ndarray:
    if root_type not in (0, 1):
        raise ValidationError("root_type must be 0 or 1")
    z = np.zeros((reps, 2), dtype=np.int64)
    z[:, root_type] = 1
    return z


def simulate_many(root_type: int, n, P, caps: StopConfig, reps: int, seed: int) -> BatchResult:
    validate(P, n)
    return run_batch(_root_z(root_type, reps), n, P, _rng.generator(seed, 0xB7),
                     max_total=caps.max_total, width_cap=caps.width_cap,
                     max_generations=caps.max_generations)


def simulate(root_type: int, n, P, caps: StopConfig, seed: int) -> BranchingOutcome:
    """One generation-by-generation run of the process rooted at ``root_type``."""
    return simulate_many(root_type, n, P, caps, 1, seed).outcome(0)


def _eps(n, P) -> float:
    from .theory import perron_frobenius

    return perron_frobenius(validate(P, n)) - 1.0


def survival_curve(root_type: int, n, P, thresholds: Sequence[float], reps: int,
                   seed: int) -> list:
    """Survival estimates at several thresholds from one shared set of runs.

    Runs are simulated up to the largest threshold; a run counts as
    surviving threshold T if its total reached T before extinction. Raising
    T can therefore never raise the estimate.
    """
    thresholds = [float(t) for t in thresholds]
    top = max(thresholds)
    res = run_batch(_root_z(root_type, reps), n, P, _rng.generator(seed, 0x5A),
                    max_total=top)
    # totals only grow while the process is alive, so reaching t at all means
    # reaching it before extinction
    reached = res.totals.sum(axis=1)
    out = []
    for t in thresholds:
        k = int(np.count_nonzero(reached >= t))
        phat = k / reps
        out.append(Estimate(phat, math.sqrt(phat * (1.0 - phat) / reps), reps, t))
    return out


def estimate_survival(root_type: int, n, P, survive_threshold: Optional[float] = None,
                      reps: int = 10_000, seed: int = 0) -> Estimate:
    """Fraction of runs whose total population reaches ``survive_threshold``
    before dying out, with its binomial standard error."""
    P, n = as_prob_matrix(P), as_type_counts(n)
    if survive_threshold is None:
        survive_threshold = default_survive_threshold(_eps(n, P))
    return survival_curve(root_type, n, P, [survive_threshold], reps, seed)[0]


def width_conditional_extinction(n, P, m: float, reps: int, seed: int, root_type: int = 0,
                                 survive_threshold: Optional[float] = None,
                                 max_generations: float = DEFAULT_MAX_GENERATIONS) -> Estimate:
    """Monte Carlo estimate of P(some generation has size >= m, and the process dies out).

    A run whose total reaches ``survive_threshold`` is treated as surviving.
    The default threshold is the survival default or 20 m, whichever is larger.
    """
    P, n = as_prob_matrix(P), as_type_counts(n)
    if survive_threshold is None:
        survive_threshold = max(default_survive_threshold(_eps(n, P)), 20 * m)
    res = run_batch(_root_z(root_type, reps), n, P, _rng.generator(seed, 0x3D),
                    max_total=survive_threshold, max_generations=max_generations,
                    watch_width=m)
    k = int(np.count_nonzero(res.hit_width & res.extinct))
    phat = k / reps
    return Estimate(phat, math.sqrt(phat * (1.0 - phat) / reps), reps, survive_threshold)


def dual_edge_frequency(i: int, j: int, n, P, reps: int, seed: int,
                        survive_threshold: Optional[float] = None) -> Estimate:
    """Conditional Monte Carlo for P(root of type i links to one fixed type-j
    candidate | the process dies out).

    The labelled candidate's indicator is drawn separately; the remaining
    n_j - 1 candidates of type j and all candidates of the other type are
    drawn in aggregate. Runs reaching ``survive_threshold`` are treated as
    surviving.
    """
    P, n = as_prob_matrix(P), as_type_counts(n)
    p = P.p
    if survive_threshold is None:
        survive_threshold = default_survive_threshold(_eps(n, P))
    gen = _rng.generator(seed, 0xD0)
    edge = gen.random(reps) < p[i, j]
    z1 = np.zeros((reps, 2), dtype=np.int64)
    z1[:, j] = edge + gen.binomial(n[j] - 1, p[i, j], size=reps)
    z1[:, 1 - j] = gen.binomial(n[1 - j], p[i, 1 - j], size=reps)
    res = run_batch(z1, n, P, gen, max_total=survive_threshold)
    ext = res.extinct
    n_ext = int(np.count_nonzero(ext))
    if n_ext == 0:
        return Estimate(math.nan, math.inf, 0, survive_threshold)
    phat = float(np.count_nonzero(edge & ext)) / n_ext
    return Estimate(phat, math.sqrt(phat * (1.0 - phat) / n_ext), n_ext, survive_threshold)


# --- stopped exploration on a sampled graph -------------------------------------


@njit(cache=True)
def _explore(indptr, indices, types, v, l, width_cap, stamp, mark, queue, totals):
    totals[:] = 0
    totals[types[v]] = 1
    stamp[v] = mark
    head = 0
    tail = 0
    queue[tail] = v
    tail += 1
    boundary = 1
    k = l.shape[0]
    while head < tail:
        x = queue[head]
        head += 1
        for e in range(indptr[x], indptr[x + 1]):
            y = indices[e]
            if stamp[y] == mark:
                continue
            stamp[y] = mark
            t = types[y]
            totals[t] += 1
            queue[tail] = y
            tail += 1
            boundary += 1
            for j in range(k):
                if totals[j] >= l[j]:
                    return 1, boundary
            if boundary >= width_cap:
                return 2, boundary
        boundary -= 1
    return 0, boundary


class Explorer:
    """Reusable stopped-BFS state for one graph (CSR plus a visit stamp)."""

    def __init__(self, G: SampledGraph):
        self.G = G
        self.indptr, self.indices = G.adjacency()
        self.types = G.type_labels()
        nt = G.n_total
        self._stamp = np.zeros(nt, dtype=np.int64)
        self._queue = np.empty(max(nt, 1), dtype=np.int64)
        self._totals = np.zeros(G.n.k, dtype=np.int64)
        self._mark = 0

    def explore(self, v: int, cfg: StopConfig) -> ExploreResult:
        if not 0 <= v < self.G.n_total:
            raise ValidationError(f"vertex {v} not in graph")
        l = np.asarray(cfg.l, dtype=np.float64)
        if l.shape != (self.G.n.k,):
            raise ValidationError("threshold vector length must equal the number of types")
        self._mark += 1
        code, boundary = _explore(self.indptr, self.indices, self.types, int(v), l,
                                  float(cfg.width_cap), self._stamp, self._mark,
                                  self._queue, self._totals)
        reason = (ExploreStop.EXHAUSTED, ExploreStop.REACHED_LJ, ExploreStop.BOUNDARY_CAP)[code]
        return ExploreResult(
            tree_totals=tuple(int(x) for x in self._totals),
            stopped=code != 0,
            stop_reason=reason,
            boundary_count=int(boundary),
        )


def explore_stopped(G: SampledGraph, v: int, cfg: StopConfig) -> ExploreResult:
    """Breadth-first exploration of v's component that halts as soon as some
    type j has l_j reached vertices, or ``width_cap`` vertices are reached
    but not yet fully explored, even midway through a vertex's neighbours."""
    return Explorer(G).explore(v, cfg)


# --- couplings -------------------------------------------------------------------


def _labelled_hits(gen, p: float, nj: int) -> np.ndarray:
    if p <= 0.0:
        return np.zeros(nj, dtype=bool)
    return gen.random(nj) < p


def coupled_upper(v_type: int, n, P, caps: StopConfig, seed: int):
    """Explore v's component while growing a dominating branching tree.

    Each real individual flips a coin for every one of the n_j labelled
    candidates of each type j. Hits on unused labels become real vertices of
    the component tree; hits on labels already in the tree become fictional
    vertices whose (unlabelled) subtrees count only toward the branching
    totals. Returns ``(graph_totals, branching_totals)``; the branching side
    may be truncated at ``caps.max_total``.
    """
    P, n = as_prob_matrix(P), as_type_counts(n)
    validate(P, n)
    p = P.p
    gen = _rng.generator(seed, 0xC1)
    used = [np.zeros(n[0], dtype=bool), np.zeros(n[1], dtype=bool)]
    used[v_type][0] = True
    graph = [0, 0]
    graph[v_type] = 1
    fictional = np.zeros(2, dtype=np.int64)
    queue = [v_type]
    head = 0
    while head < len(queue):
        a = queue[head]
        head += 1
        for j in range(2):
            hits = _labelled_hits(gen, p[a, j], n[j])
            if not hits.any():
                continue
            fresh = hits & ~used[j]
            k_new = int(np.count_nonzero(fresh))
            fictional[j] += int(np.count_nonzero(hits)) - k_new
            if k_new:
                used[j] |= fresh
                graph[j] += k_new
                queue.extend([j] * k_new)
    branching = np.array(graph, dtype=np.int64)
    if fictional.any():
        room = caps.max_total - branching.sum()
        if room > 0:
            res = run_batch(fictional[None, :], n, P, gen, max_total=room,
                            max_generations=caps.max_generations)
            branching += res.totals[0]
        else:
            branching += fictional
    return tuple(graph), tuple(int(x) for x in branching)


def coupled_lower(v_type: int, n, P, m: Sequence[int], caps: StopConfig, seed: int):
    """Explore v's component together with an embedded process on n - m.

    A vertex of the embedded (reduced) tree offers, for each type j, the
    first n_j - m_j still-unused labels to the reduced process; the same coin
    flips decide the component tree, where all unused labels are tested. If
    fewer than n_j - m_j labels remain the offer is truncated to what is
    left. ``overflow`` is set once the component tree holds at least m_r
    vertices of some type r; while it is unset the offer is never truncated,
    so the reduced tree is an exact copy of the process on n - m and is
    contained in the component tree.

    Returns ``(graph_totals, reduced_totals, overflow)``.
    """
    P, n = as_prob_matrix(P), as_type_counts(n)
    validate(P, n)
    m = tuple(int(x) for x in m)
    if len(m) != 2 or any(x < 0 for x in m) or m[0] > n[0] or m[1] > n[1]:
        raise InvalidReduction(f"reduction {m} must satisfy 0 <= m <= n = {n.tolist()}")
    p = P.p
    gen = _rng.generator(seed, 0xC2)
    used = [np.zeros(n[0], dtype=bool), np.zeros(n[1], dtype=bool)]
    used[v_type][0] = True
    graph = [0, 0]
    graph[v_type] = 1
    reduced = [0, 0]
    reduced[v_type] = 1
    offer = (n[0] - m[0], n[1] - m[1])
    queue = [(v_type, True)]
    head = 0
    while head < len(queue):
        a, in_reduced = queue[head]
        head += 1
        if graph[0] + graph[1] > caps.max_total:
            break
        for j in range(2):
            free = np.flatnonzero(~used[j])
            if free.size == 0:
                continue
            hits = _labelled_hits(gen, p[a, j], free.size)
            if not hits.any():
                continue
            chosen = free[hits]
            used[j][chosen] = True
            graph[j] += chosen.size
            if in_reduced:
                # free is in label order, so the offered labels are free[:offer[j]]
                n_red = int(np.count_nonzero(hits[: offer[j]]))
                reduced[j] += n_red
                queue.extend([(j, True)] * n_red)
                queue.extend([(j, False)] * (chosen.size - n_red))
            else:
                queue.extend([(j, False)] * chosen.size)
    overflow = any(m[r] == 0 or graph[r] >= m[r] for r in range(2))
    return tuple(graph), tuple(reduced), overflow
