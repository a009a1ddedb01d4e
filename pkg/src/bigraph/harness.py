"""Seeded Monte Carlo experiments on G(n, P).

Replication r of an experiment with master seed s always uses the seed
``derive_seed(s, stream, r)``, so records do not depend on execution order
or on the number of worker processes.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import graphgen, theory
from .errors import OmegaTooSmall, RegimeMismatch, ValidationError
from .params import (
    SUBCRITICAL,
    SUPERCRITICAL,
    ProbMatrix,
    alpha_omega,
    as_prob_matrix,
    as_type_counts,
    diagnose,
    ratio_instance,
    validate,
)
from .rng import derive_seed

SCHEMA_VERSION = 1

# Every desk-scale slack used by a pass/fail decision.
TOLERANCES = {
    "weak_super_L1_rel": 0.10,  # |mean L1/n - rho| / rho
    "weak_super_type_rel": 0.12,  # |mean |L1 ∩ V_i|/n_i - rho_i| / rho_i
    "weak_super_L2_over_L1": 0.20,  # max L2/L1
    "weak_super_rho_over_2eps": (0.85, 1.0),
    "weak_sub_n23_factor": 0.5,  # max L1 <= factor * n^(2/3)
    "const_super_abs": 0.02,  # |mean L1/n - rho_eps|
    "const_sub_factor": 5.0,  # max L1 <= factor * eps^-2 * log n
    "merge_fraction_min": 0.9,
    "rank_p_min": 0.001,
    "sL_band": (0.85, 1.15),  # mean s_iL / (2 eps n_i)
    "sweep_neg_L1": 0.01,
    "sweep_pos_rel": 0.10,
    "sweep_L2_over_L1": 0.05,
    "const_super_L2_over_L1": 0.05,
    "omega_flag_below": 50.0,
    "sigma_k": 3.0,  # Monte Carlo agreement, in standard errors
    "solver_residual": 1e-10,
    "dual_inverse_rel": 1e-10,  # closed form vs matrix inverse, relative to max(1, |e|)
    "rho_over_2eps_small_eps": (0.95, 1.0),
    "width_factor": 0.1,  # P(width >= m and extinct) <= factor * eps
}

REGIMES = ("weak_super", "weak_sub", "const_super", "const_sub")

CSV_HEADER = ("rep", "seed", "L1", "L2", "n_components",
              "L1_type1", "L1_type2", "sL_type1", "sL_type2")

# seed-stream identifiers
_S_REGIME, _S_SWEEP, _S_SPRINKLE_A, _S_SPRINKLE_B, _S_DIRECT, _S_SL = range(1, 7)


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("BIGRAPH_WORKERS", "1")))
    except ValueError:
        return 1


def _map(fn: Callable, items: list, workers: Optional[int]) -> list:
    workers = default_workers() if workers is None else max(1, int(workers))
    if workers == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


# --- sprinkling ---------------------------------------------------------------


@dataclass(frozen=True)
class SprinklePair:
    Pa: ProbMatrix
    Pb: ProbMatrix
    eps: float
    alpha: float
    omega: float
    l: tuple

    def identity_residual_ulps(self, P) -> float:
        """Largest |pa + pb - pa pb - p| over the cross entries, in ulps of p."""
        P = as_prob_matrix(P)
        worst = 0.0
        for i, j in ((0, 1), (1, 0)):
            pa, pb, p = self.Pa.p[i, j], self.Pb.p[i, j], P.p[i, j]
            r = abs((pa + pb - pa * pb) - p)
            worst = max(worst, r / np.spacing(p) if p > 0 else r)
        return worst


def _compose(pa, pb):
    return pa + pb - pa * pb


def make_sprinkle(n, P) -> SprinklePair:
    """Split P into a first round P^a and a sparse cross-type second round
    P^b with p^a + p^b - p^a p^b = p, so that G(n,P^a) ∪ G(n,P^b) ~ G(n,P).

    p^b_12 = min(eps / (n_big log omega), p_12 / log omega) with
    omega = alpha eps^3 n_small and alpha = min(1, mu_{small,big} / eps).
    """
    P, n = as_prob_matrix(P), as_type_counts(n)
    M = validate(P, n)
    rep = diagnose(M, n)
    eps = rep.epsilon
    if not eps > 0:
        raise OmegaTooSmall("sprinkling needs a supercritical instance (eps > 0)")
    alpha, omega = alpha_omega(M, n, eps)
    # log omega < 1 would make p^b exceed p_12, leaving no valid first round
    if not omega >= math.e:
        raise OmegaTooSmall(f"omega = {omega:.4g} < e; no split with p^b <= p_12")
    lw = math.log(omega)
    p12 = float(P.p[0, 1])
    n_big = max(n)
    pb = min(eps / (n_big * lw), p12 / lw)
    pa = (p12 - pb) / (1.0 - pb)
    # nudge pa by ulps so the composition holds as exactly as floating point allows
    best, best_r = pa, abs(_compose(pa, pb) - p12)
    for direction in (1.0, -1.0):
        cand = pa
        for _ in range(4):
            cand = float(np.nextafter(cand, direction * math.inf))
            r = abs(_compose(cand, pb) - p12)
            if r < best_r:
                best, best_r = cand, r
    pa = max(best, 0.0)
    Pa = ProbMatrix([[P.p[0, 0], pa], [pa, P.p[1, 1]]])
    Pb = ProbMatrix([[0.0, pb], [pb, 0.0]])
    l = tuple(eps * float(nj) / lw for nj in n)
    return SprinklePair(Pa=Pa, Pb=Pb, eps=eps, alpha=alpha, omega=omega, l=l)


def merge_bound(omega: float) -> float:
    """1 - 10 log(omega) exp(-omega / (4 log^3 omega)), the union-bound merge guarantee."""
    lw = math.log(omega)
    return 1.0 - 10.0 * lw * math.exp(-omega / (4.0 * lw**3))


# --- statistics -----------------------------------------------------------------


def mann_whitney(x: Sequence[float], y: Sequence[float]) -> tuple[float, float]:
    """Two-sided Mann-Whitney U test, normal approximation with tie correction
    and continuity correction. Returns (U of x, p-value)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n1, n2 = x.size, y.size
    allv = np.concatenate((x, y))
    order = np.argsort(allv, kind="mergesort")
    sorted_v = allv[order]
    ranks = np.empty(allv.size, dtype=np.float64)
    # average ranks over ties
    i = 0
    N = allv.size
    tie_term = 0.0
    while i < N:
        j = i
        while j + 1 < N and sorted_v[j + 1] == sorted_v[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        t = j - i + 1
        tie_term += t**3 - t
        i = j + 1
    u1 = ranks[:n1].sum() - n1 * (n1 + 1) / 2.0
    mu = n1 * n2 / 2.0
    var = n1 * n2 / 12.0 * ((N + 1) - tie_term / (N * (N - 1)))
    if var <= 0:
        return u1, 1.0
    z = (abs(u1 - mu) - 0.5) / math.sqrt(var)
    p = math.erfc(max(z, 0.0) / math.sqrt(2.0))
    return u1, min(1.0, p)


def summarize(values: Sequence[float]) -> dict:
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return {"mean": math.nan, "sd": math.nan, "ci95": [math.nan, math.nan],
                "min": math.nan, "max": math.nan}
    mean = float(v.mean())
    sd = float(v.std(ddof=1)) if v.size > 1 else 0.0
    half = 1.96 * sd / math.sqrt(v.size)
    return {"mean": mean, "sd": sd, "ci95": [mean - half, mean + half],
            "min": float(v.min()), "max": float(v.max())}


# --- reports --------------------------------------------------------------------


@dataclass
class ExperimentReport:
    regime: str
    n: list
    P: list
    master_seed: int
    records: list
    theory: dict = field(default_factory=dict)
    criteria: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.criteria.values())

    def aggregates(self) -> dict:
        """Recomputed from ``records`` on every call."""
        if not self.records:
            return {}
        nt = float(sum(self.n))
        L1 = [r["L1"] for r in self.records]
        L2 = [r["L2"] for r in self.records]
        out = {
            "reps": len(self.records),
            "L1": summarize(L1),
            "L1_over_n": summarize([x / nt for x in L1]),
            "L2_over_L1": summarize([b / a if a else 0.0 for a, b in zip(L1, L2)]),
        }
        for i, ni in enumerate(self.n):
            out[f"L1_type{i + 1}_over_n{i + 1}"] = summarize(
                [r["L1_type"][i] / ni for r in self.records])
            if self.records[0].get("sL") is not None:
                out[f"sL_type{i + 1}"] = summarize([r["sL"][i] for r in self.records])
        return out

    def to_dict(self, include_timing: bool = False) -> dict:
        d = {
            "schema_version": SCHEMA_VERSION,
            "regime": self.regime,
            "n": self.n,
            "P": self.P,
            "master_seed": self.master_seed,
            "reps": len(self.records),
            "aggregates": self.aggregates(),
            "theory": self.theory,
            "criteria": self.criteria,
            "passed": self.passed,
        }
        if self.extra:
            d["extra"] = self.extra
        if include_timing:
            d["wall_time"] = self.wall_time
        return d

    def to_json(self, include_timing: bool = False) -> str:
        return json.dumps(self.to_dict(include_timing), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.records:
            sL = r.get("sL") or [None, None]
            w.writerow([r["rep"], r["seed"], r["L1"], r["L2"], r["n_components"],
                        r["L1_type"][0], r["L1_type"][1],
                        "" if sL[0] is None else sL[0], "" if sL[1] is None else sL[1]])
        return buf.getvalue()


def _criterion(value, threshold, passed, **extra) -> dict:
    d = {"value": value, "threshold": threshold, "passed": bool(passed)}
    d.update(extra)
    return d


def _record(rep: int, seed: int, stats: graphgen.ComponentStats) -> dict:
    return {
        "rep": rep,
        "seed": seed,
        "L1": stats.L1,
        "L2": stats.L2,
        "n_components": stats.n_components,
        "L1_type": [int(x) for x in stats.per_type[0]],
        "sL": None if stats.s_L is None else [int(x) for x in stats.s_L],
    }


def _one_graph(args) -> dict:
    rep, seed, n, P, L = args
    G = graphgen.sample(n, P, seed)
    return _record(rep, seed, graphgen.components(G, L))


# --- experiments ----------------------------------------------------------------


def _weighted_rho(rho, n) -> float:
    return (rho[0] * n[0] + rho[1] * n[1]) / (n[0] + n[1])


def run_regime(regime: str, n, P=None, *, eps: Optional[float] = None,
               ratio: float = 0.5, reps: int = 30, master_seed: int = 0,
               workers: Optional[int] = None) -> ExperimentReport:
    """Replicate G(n, P) and check the largest-component law of ``regime``.

    Either ``P`` is given, or ``eps`` and ``ratio`` build P with both row
    sums 1 + eps (supercritical regimes) or 1 - eps (subcritical regimes).
    """
    if regime not in REGIMES:
        raise ValidationError(f"unknown regime {regime!r}; choose from {REGIMES}")
    n = as_type_counts(n)
    if P is None:
        if eps is None:
            raise ValidationError("give either P or eps")
        rows = 1.0 + eps if regime.endswith("super") else 1.0 - eps
        P = ratio_instance(n, rows, ratio)
    P = as_prob_matrix(P)
    M = validate(P, n)
    diag = diagnose(M, n)
    want = SUPERCRITICAL if regime.endswith("super") else SUBCRITICAL
    if diag.classification != want:
        raise RegimeMismatch(f"{regime} needs a {want} instance, got {diag.classification} "
                             f"(lambda = {diag.lam:.6g})")
    t0 = time.perf_counter()
    theo = {"lambda": diag.lam, "epsilon": diag.epsilon,
            "condition_super": diag.condition_super, "condition_sub": diag.condition_sub}
    L = None
    if want == SUPERCRITICAL:
        rho = theory.solve_survival(M, n).rho
        theo.update({"rho": list(rho), "rho_weighted": _weighted_rho(rho, n),
                     "two_eps": 2.0 * diag.epsilon, "rho_eps": theory.rho_epsilon(diag.epsilon)})
        try:
            sp = make_sprinkle(n, P)
            L = sp.l
            theo.update({"omega": sp.omega, "alpha": sp.alpha, "l": list(sp.l)})
        except OmegaTooSmall:
            pass
    jobs = [(r, derive_seed(master_seed, _S_REGIME, r), n, P, L) for r in range(reps)]
    records = _map(_one_graph, jobs, workers)
    rep = ExperimentReport(regime=regime, n=n.tolist(), P=P.tolist(),
                           master_seed=int(master_seed), records=records, theory=theo)
    _judge(rep, diag)
    rep.wall_time = time.perf_counter() - t0
    return rep


def _judge(rep: ExperimentReport, diag) -> None:
    tol = TOLERANCES
    agg = rep.aggregates()
    nt = sum(rep.n)
    L1max = agg["L1"]["max"]
    eps = abs(diag.epsilon)
    if rep.regime == "weak_super":
        target = rep.theory["rho_weighted"]
        mean = agg["L1_over_n"]["mean"]
        rel = abs(mean - target) / target
        rep.criteria["L1_over_n_vs_rho"] = _criterion(rel, tol["weak_super_L1_rel"],
                                                      rel <= tol["weak_super_L1_rel"],
                                                      mean=mean, target=target)
        for i in range(2):
            target_i = rep.theory["rho"][i]
            m_i = agg[f"L1_type{i + 1}_over_n{i + 1}"]["mean"]
            rel_i = abs(m_i - target_i) / target_i
            rep.criteria[f"type{i + 1}_vs_rho{i + 1}"] = _criterion(
                rel_i, tol["weak_super_type_rel"], rel_i <= tol["weak_super_type_rel"],
                mean=m_i, target=target_i)
        r21 = agg["L2_over_L1"]["max"]
        rep.criteria["max_L2_over_L1"] = _criterion(r21, tol["weak_super_L2_over_L1"],
                                                    r21 <= tol["weak_super_L2_over_L1"])
        ratio = rep.theory["rho_weighted"] / rep.theory["two_eps"]
        lo, hi = tol["weak_super_rho_over_2eps"]
        rep.criteria["rho_over_2eps"] = _criterion(ratio, [lo, hi], lo <= ratio <= hi)
    elif rep.regime == "weak_sub":
        bound = tol["weak_sub_n23_factor"] * nt ** (2.0 / 3.0)
        rep.criteria["max_L1"] = _criterion(L1max, bound, L1max <= bound)
    elif rep.regime == "const_super":
        target = rep.theory["rho_eps"]
        mean = agg["L1_over_n"]["mean"]
        err = abs(mean - target)
        rep.criteria["L1_over_n_vs_rho_eps"] = _criterion(err, tol["const_super_abs"],
                                                          err <= tol["const_super_abs"],
                                                          mean=mean, target=target)
        r21 = agg["L2_over_L1"]["max"]
        rep.criteria["max_L2_over_L1"] = _criterion(r21, tol["const_super_L2_over_L1"],
                                                    r21 <= tol["const_super_L2_over_L1"])
    elif rep.regime == "const_sub":
        bound = tol["const_sub_factor"] * eps**-2 * math.log(nt)
        rep.criteria["max_L1"] = _criterion(L1max, bound, L1max <= bound)


def _sweep_point(args):
    idx, eps, n, ratio, reps, master_seed = args
    P = ratio_instance(n, 1.0 + eps, ratio)
    L1, L2 = [], []
    nt = n.n_total
    for r in range(reps):
        seed = derive_seed(master_seed, _S_SWEEP, idx, r)
        st = graphgen.components(graphgen.sample(n, P, seed))
        L1.append(st.L1 / nt)
        L2.append(st.L2 / nt)
    M = validate(P, n)
    rho = theory.solve_survival(M, n).rho
    row = {
        "eps": eps,
        "mean_L1_over_n": float(np.mean(L1)),
        "mean_L2_over_n": float(np.mean(L2)),
        "rho": _weighted_rho(rho, n),
        "rho_eps": theory.rho_epsilon(eps) if eps > 0 else 0.0,
    }
    return row


def sweep_epsilon(eps_grid: Sequence[float], n, ratio: float = 0.5, reps: int = 10,
                  master_seed: int = 0, workers: Optional[int] = None) -> list:
    """Phase-diagram table: one row per eps with mean L1/n, mean L2/n and the
    solver's survival probability, for P with both row sums 1 + eps."""
    n = as_type_counts(n)
    jobs = [(i, float(e), n, ratio, reps, master_seed) for i, e in enumerate(eps_grid)]
    return _map(_sweep_point, jobs, workers)


def sweep_inversions(table: list) -> int:
    """Number of adjacent decreases of mean L1/n along increasing eps."""
    rows = sorted(table, key=lambda r: r["eps"])
    return sum(1 for a, b in zip(rows, rows[1:]) if b["mean_L1_over_n"] < a["mean_L1_over_n"])


def _merged(stats_a: graphgen.ComponentStats, stats_u: graphgen.ComponentStats,
            l: Sequence[float]) -> bool:
    """Do all witnessed components of the first round lie in one union component?"""
    half = np.asarray(l, dtype=np.float64) / 2.0
    witnessed = np.flatnonzero(np.any(stats_a.per_type >= half[None, :], axis=1))
    if witnessed.size <= 1:
        return True
    # one member vertex per witnessed component
    order = np.argsort(stats_a.labels, kind="stable")
    members = order[np.searchsorted(stats_a.labels[order], witnessed)]
    return np.unique(stats_u.labels[members]).size == 1


def _sprinkle_rep(args):
    r, master_seed, n, P, sp = args
    sa = derive_seed(master_seed, _S_SPRINKLE_A, r)
    sb = derive_seed(master_seed, _S_SPRINKLE_B, r)
    sd = derive_seed(master_seed, _S_DIRECT, r)
    Ga = graphgen.sample(n, sp.Pa, sa)
    Gb = graphgen.sample(n, sp.Pb, sb)
    Gu = Ga.union(Gb)
    st_a = graphgen.components(Ga, sp.l)
    st_u = graphgen.components(Gu, sp.l)
    st_d = graphgen.components(graphgen.sample(n, P, sd), sp.l)
    rec_u = _record(r, sa, st_u)
    rec_d = _record(r, sd, st_d)
    return rec_u, rec_d, _merged(st_a, st_u, sp.l)


def two_round_exposure(n, P, master_seed: int = 0, reps: int = 200,
                       workers: Optional[int] = None) -> ExperimentReport:
    """Sample G(n,P^a) ∪ G(n,P^b) and G(n,P) side by side.

    Reports the composition-identity residual, a rank test comparing the L1
    samples of the union and the direct graph, and the fraction of
    replications in which every first-round component with a witness type
    (at least l_j / 2 vertices of type j) ends up in one union component.
    """
    P, n = as_prob_matrix(P), as_type_counts(n)
    t0 = time.perf_counter()
    sp = make_sprinkle(n, P)
    jobs = [(r, master_seed, n, P, sp) for r in range(reps)]
    out = _map(_sprinkle_rep, jobs, workers)
    rec_u = [o[0] for o in out]
    rec_d = [o[1] for o in out]
    merged = [bool(o[2]) for o in out]
    _, pval = mann_whitney([r["L1"] for r in rec_u], [r["L1"] for r in rec_d])
    resid = sp.identity_residual_ulps(P)
    frac = sum(merged) / max(1, len(merged))
    tol = TOLERANCES
    rep = ExperimentReport(regime="sprinkle", n=n.tolist(), P=P.tolist(),
                           master_seed=int(master_seed), records=rec_u)
    rep.theory = {"epsilon": sp.eps, "alpha": sp.alpha, "omega": sp.omega, "l": list(sp.l),
                  "Pa": sp.Pa.tolist(), "Pb": sp.Pb.tolist(),
                  "merge_bound": merge_bound(sp.omega)}
    rep.criteria = {
        "composition_identity_ulps": _criterion(resid, 1.0, resid <= 1.0),
        "rank_test_p": _criterion(pval, tol["rank_p_min"], pval > tol["rank_p_min"]),
        "merge_fraction": _criterion(frac, tol["merge_fraction_min"],
                                     frac >= tol["merge_fraction_min"],
                                     omega_flag=sp.omega < tol["omega_flag_below"]),
    }
    rep.extra = {"direct_records": rec_d, "merged": merged}
    rep.wall_time = time.perf_counter() - t0
    return rep


def _sl_rep(args):
    r, master_seed, n, P, L = args
    seed = derive_seed(master_seed, _S_SL, r)
    st = graphgen.components(graphgen.sample(n, P, seed), L)
    return _record(r, seed, st)


def estimate_sL(n, P, L: Sequence[float], reps: int = 30, master_seed: int = 0,
                workers: Optional[int] = None) -> dict:
    """Monte Carlo mean of s_{i,L}, the number of type-i vertices in components
    with at least l_j vertices of type j for some j."""
    P, n = as_prob_matrix(P), as_type_counts(n)
    M = validate(P, n)
    L = tuple(float(x) for x in L)
    jobs = [(r, master_seed, n, P, L) for r in range(reps)]
    recs = _map(_sl_rep, jobs, workers)
    eps = diagnose(M, n).epsilon
    out = {"L": list(L), "reps": reps, "mean": [], "sd": [], "ci95": [],
           "diagnostics": {"epsilon": eps}}
    for i in range(n.k):
        s = summarize([rec["sL"][i] for rec in recs])
        out["mean"].append(s["mean"])
        out["sd"].append(s["sd"])
        out["ci95"].append(s["ci95"])
    if eps > 0:
        out["diagnostics"]["eps2_l"] = [eps**2 * l for l in L]
        out["diagnostics"]["l_over_eps_n"] = [l / (eps * nj) for l, nj in zip(L, n)]
        out["ratio_to_2eps_n"] = [m / (2 * eps * nj) for m, nj in zip(out["mean"], n)]
    out["records"] = recs
    return out
