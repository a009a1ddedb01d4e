"""The acceptance suite: twelve pass/fail checks shared by ``bigraph verify``
and the test suite.

Each check returns a :class:`CriterionResult`. ``quick=True`` shrinks the
replication counts (not the thresholds) and skips runtime limits; it is
what ``verify --quick`` runs.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import branching, graphgen, harness, oracle, theory
from .errors import NonpositiveDenominator
from .params import ProbMatrix, ratio_instance, row_sum_instance, validate
from .rng import derive_seed, generator

TOL = harness.TOLERANCES

# seconds allowed per criterion at full scale
RUNTIME_LIMITS = {1: 10, 2: 5, 3: 60, 4: 60, 5: 120, 6: 120, 7: 60, 8: 120, 9: 60, 10: 180, 11: 60}

# frozen at build time from the bisection solver; regression constant
RHO_EPS_0_2 = 0.3136983310412176

WEAK_SUPER_N = (200_000, 200_000)
WEAK_SUPER_P = row_sum_instance(WEAK_SUPER_N, 1.08, 0.3)


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    details: dict = field(default_factory=dict)
    seconds: float = 0.0
    limit: float = math.inf

    def line(self, timing: bool = False) -> str:
        status = "PASS" if self.passed else "FAIL"
        text = f"[{status}] criterion {self.number:2d}: {self.name}"
        return text + (f" ({self.seconds:.1f} s)" if timing else "")

    def to_dict(self, include_timing: bool = False) -> dict:
        d = {"number": self.number, "name": self.name, "passed": self.passed,
             "details": self.details}
        if include_timing:
            d["seconds"] = self.seconds
            d["limit"] = self.limit
        return d


def random_instance(gen: np.random.Generator, lam_lo: float, lam_hi: float):
    """Random (n, P) with n_i log-uniform in [10, 10^6] and Perron root in [lam_lo, lam_hi]."""
    while True:
        n = tuple(int(10 ** gen.uniform(1.0, 6.0)) for _ in range(2))
        mu11, mu22 = gen.uniform(0.0, 2.0, size=2)
        mu21 = gen.uniform(0.01, 2.0)
        p12 = mu21 / n[0]
        mu = np.array([[mu11, p12 * n[1]], [mu21, mu22]])
        target = gen.uniform(lam_lo, lam_hi)
        mu *= target / theory.perron_frobenius(mu)
        p = np.array([[mu[0, 0] / n[0], mu[1, 0] / n[0]], [mu[1, 0] / n[0], mu[1, 1] / n[1]]])
        if p.max() <= 1.0:
            return n, ProbMatrix(p)


def _timed(number: int, name: str, quick: bool, body: Callable[[], tuple]) -> CriterionResult:
    t0 = time.perf_counter()
    passed, details = body()
    dt = time.perf_counter() - t0
    limit = RUNTIME_LIMITS.get(number, math.inf)
    if not quick and dt > limit:
        passed = False
        details["runtime_exceeded"] = True
    return CriterionResult(number, name, bool(passed), details, dt, limit)


def solver_correctness(quick: bool = False, seed: int = 0) -> CriterionResult:
    count = 100 if quick else 1000

    def body():
        gen = generator(seed, 1)
        nonzero = 0
        for _ in range(count):
            n, P = random_instance(gen, 0.2, 0.999)
            if theory.solve_survival(validate(P, n), n).rho != (0.0, 0.0):
                nonzero += 1
        worst = 0.0
        for _ in range(count):
            n, P = random_instance(gen, 1.001, 4.0)
            sol = theory.solve_survival(validate(P, n), n)
            worst = max(worst, *theory.survival_residuals(P, n, sol.rho))
        ok = nonzero == 0 and worst <= TOL["solver_residual"]
        return ok, {"instances": count, "subcritical_nonzero": nonzero, "max_residual": worst}

    return _timed(1, "solver correctness", quick, body)


def asymptotic_survival(quick: bool = False, seed: int = 0) -> CriterionResult:
    def body():
        n = (100_000_000, 100_000_000)
        grid = (0.1, 0.05, 0.02, 0.01)
        ratios = []
        for eps in grid:
            P = ratio_instance(n, 1.0 + eps, 0.5)
            rho = theory.solve_survival(validate(P, n), n).rho
            ratios.append(0.5 * (rho[0] + rho[1]) / (2.0 * eps))
        lo, hi = TOL["rho_over_2eps_small_eps"]
        at_002 = ratios[grid.index(0.02)]
        increasing = all(b > a for a, b in zip(ratios, ratios[1:]))
        ok = lo <= at_002 <= hi and increasing and ratios[-1] < 1.0
        return ok, {"eps": list(grid), "rho_over_2eps": ratios}

    return _timed(2, "survival probability tends to 2 eps", quick, body)


def dual_process(quick: bool = False, seed: int = 0) -> CriterionResult:
    runs = 100_000 if quick else 1_000_000
    count = 100 if quick else 1000

    def body():
        details = {}
        ok = True
        n, P = (3, 2), ProbMatrix([[0.4, 0.5], [0.5, 0.3]])
        rho = theory.solve_survival(validate(P, n), n)
        D = theory.dual_matrix(P, rho, n)
        mc = []
        for i, j in ((0, 1), (1, 0)):
            est = branching.dual_edge_frequency(i, j, n, P, runs, seed=derive_seed(seed, 3, i))
            good = est.within(float(D.pi[i, j]), k=TOL["sigma_k"])
            ok &= good
            mc.append({"entry": [i, j], "estimate": est.value, "stderr": est.stderr,
                       "pi": float(D.pi[i, j]), "within": good})
        details["conditional_mc"] = mc

        gen = generator(seed, 3)
        worst = 0.0
        for _ in range(count):
            n_r, P_r = random_instance(gen, 1.001, 4.0)
            D_r = theory.dual_matrix(P_r, theory.solve_survival(validate(P_r, n_r), n_r), n_r)
            e = theory.expected_dual_sizes(D_r).e
            ref = np.linalg.inv(np.eye(2) - D_r.h)
            worst = max(worst, float(np.max(np.abs(e - ref) / np.maximum(1.0, np.abs(ref)))))
        ok &= worst <= TOL["dual_inverse_rel"]
        details["inverse_max_rel_error"] = worst

        grid = []
        for eps in (0.05, 0.1, 0.2):
            nn = (1_000_000, 1_000_000)
            Pg = ratio_instance(nn, 1.0 + eps, 0.5)
            Dg = theory.dual_matrix(Pg, theory.solve_survival(validate(Pg, nn), nn), nn)
            try:
                e_max = float(theory.expected_dual_sizes(Dg).e.max())
            except NonpositiveDenominator:
                e_max = math.inf
            good = e_max <= 1.0 / eps
            ok &= good
            grid.append({"eps": eps, "max_expectation": e_max, "bound": 1.0 / eps})
        details["grid"] = grid
        return ok, details

    return _timed(3, "dual process", quick, body)


def coupling(quick: bool = False, seed: int = 0) -> CriterionResult:
    runs = 1000 if quick else 10_000

    def body():
        n = (300, 200)
        P = ratio_instance(n, 1.1, 0.5)
        caps = branching.StopConfig(max_total=2000)
        upper_fail = 0
        for s in range(runs):
            g, b = branching.coupled_upper(s % 2, n, P, caps, derive_seed(seed, 4, 0, s))
            upper_fail += not (g[0] <= b[0] and g[1] <= b[1])
        lower_fail = overflow = 0
        for s in range(runs):
            g, r, over = branching.coupled_lower(s % 2, n, P, (30, 20), caps,
                                                 derive_seed(seed, 4, 1, s))
            if over:
                overflow += 1
                continue
            lower_fail += not (r[0] <= g[0] and r[1] <= g[1])
        ok = upper_fail == 0 and lower_fail == 0
        return ok, {"runs": runs, "upper_violations": upper_fail,
                    "lower_violations": lower_fail, "lower_overflow_runs": overflow}

    return _timed(4, "branching couplings", quick, body)


def exact_oracle(quick: bool = False, seed: int = 0) -> CriterionResult:
    seeds = 10_000 if quick else 100_000

    def body():
        n = (3, 2)
        gen = generator(seed, 5)
        rows = []
        ok = True
        for idx in range(5):
            a, b, c = gen.uniform(0.05, 0.95, size=3)
            P = ProbMatrix([[a, b], [b, c]])
            mc = graphgen.small_graph_stats(n, P, [derive_seed(seed, 5, idx, s) for s in range(seeds)])
            row = {"P": P.tolist()}
            for stat in ("L1", "root_component"):
                ex = oracle.enumerate_exact(n, P, stat, root=0)
                mean = float(np.mean(mc[stat]))
                se = math.sqrt(ex.variance / seeds)
                good = abs(mean - ex.mean) <= TOL["sigma_k"] * se
                ok &= good
                row[stat] = {"mc": mean, "exact": ex.mean, "se": se, "within": good}
            rows.append(row)
        return ok, {"seeds": seeds, "instances": rows}

    return _timed(5, "Monte Carlo matches exact enumeration", quick, body)


def _regime(number: int, name: str, regime: str, quick: bool, seed: int, reps: int,
            quick_reps: int, **kw) -> CriterionResult:
    def body():
        rep = harness.run_regime(regime, reps=quick_reps if quick else reps,
                                 master_seed=derive_seed(seed, number), **kw)
        return rep.passed, {"criteria": rep.criteria, "theory": rep.theory}

    return _timed(number, name, quick, body)


def weak_supercritical(quick: bool = False, seed: int = 0) -> CriterionResult:
    return _regime(6, "weakly supercritical giant", "weak_super", quick, seed, 30, 3,
                   n=WEAK_SUPER_N, P=WEAK_SUPER_P)


def weak_subcritical(quick: bool = False, seed: int = 0) -> CriterionResult:
    return _regime(7, "weakly subcritical components", "weak_sub", quick, seed, 30, 3,
                   n=(200_000, 200_000), eps=0.08)


def const_supercritical(quick: bool = False, seed: int = 0) -> CriterionResult:
    def body():
        rep = harness.run_regime("const_super", (500_000, 500_000), eps=0.2,
                                 reps=2 if quick else 20, master_seed=derive_seed(seed, 8))
        frozen = abs(rep.theory["rho_eps"] - RHO_EPS_0_2) <= 1e-12
        crit = rep.criteria["L1_over_n_vs_rho_eps"]
        return crit["passed"] and frozen, {"criteria": rep.criteria, "rho_eps": rep.theory["rho_eps"],
                                           "rho_eps_frozen": RHO_EPS_0_2}

    return _timed(8, "constant supercritical giant", quick, body)


def const_subcritical(quick: bool = False, seed: int = 0) -> CriterionResult:
    return _regime(9, "constant subcritical components", "const_sub", quick, seed, 30, 3,
                   n=(500_000, 500_000), eps=0.3)


def sprinkling(quick: bool = False, seed: int = 0) -> CriterionResult:
    def body():
        rep = harness.two_round_exposure(WEAK_SUPER_N, WEAK_SUPER_P, master_seed=derive_seed(seed, 10),
                                         reps=20 if quick else 200)
        return rep.passed, {"criteria": rep.criteria,
                            "omega": rep.theory["omega"], "merge_bound": rep.theory["merge_bound"]}

    return _timed(10, "two-round exposure", quick, body)


def width_bound(quick: bool = False, seed: int = 0) -> CriterionResult:
    def body():
        eps, m = 0.1, 500
        n = (1_000_000, 1_000_000)
        P = ratio_instance(n, 1.0 + eps, 0.5)
        est = branching.width_conditional_extinction(n, P, m, 10_000 if quick else 100_000,
                                                     seed=derive_seed(seed, 11))
        bound = TOL["width_factor"] * eps
        return est.value <= bound, {"estimate": est.value, "stderr": est.stderr, "bound": bound,
                                    "reps": est.reps, "survive_threshold": est.threshold}

    return _timed(11, "wide trees rarely die out", quick, body)


CRITERIA = (solver_correctness, asymptotic_survival, dual_process, coupling, exact_oracle,
            weak_supercritical, weak_subcritical, const_supercritical, const_subcritical,
            sprinkling, width_bound)


def suite_report(results: list) -> str:
    """Deterministic JSON for a list of results (timings left out)."""
    return json.dumps({"schema_version": harness.SCHEMA_VERSION,
                       "results": [r.to_dict() for r in results]},
                      indent=2, sort_keys=True)


def determinism(seed: int = 0, first: list = None) -> CriterionResult:
    """Run the quick suite (again) and compare the JSON byte for byte."""
    t0 = time.perf_counter()
    a = suite_report(first if first is not None else [c(quick=True, seed=seed) for c in CRITERIA])
    b = suite_report([c(quick=True, seed=seed) for c in CRITERIA])
    return CriterionResult(12, "quick suite is reproducible", a == b,
                           {"bytes": len(a)}, time.perf_counter() - t0)


def run_suite(quick: bool = False, seed: int = 0, only=None,
              echo: Callable[[str], None] = None) -> list:
    """Run criteria 1-12 (or the numbers in ``only``) and return their results."""
    wanted = set(range(1, 13)) if only is None else set(only)
    results = []
    for number, check in enumerate(CRITERIA, start=1):
        if number in wanted:
            res = check(quick=quick, seed=seed)
            results.append(res)
            if echo:
                echo(res.line())
    if 12 in wanted:
        first = results if quick and len(results) == len(CRITERIA) else None
        res = determinism(seed, first)
        results.append(res)
        if echo:
            echo(res.line())
    return results
