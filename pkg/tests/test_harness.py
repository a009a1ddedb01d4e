import csv
import io
import json
import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from scipy import stats

from bigraph import harness, params, theory
from bigraph.errors import OmegaTooSmall, RegimeMismatch, ValidationError

SMALL_N = (20_000, 20_000)


@st.composite
def sprinkle_instances(draw):
    n = (draw(st.integers(10**4, 10**7)), draw(st.integers(10**4, 10**7)))
    lam = draw(st.floats(1.02, 3.0))
    ratio = draw(st.floats(0.05, 0.95))
    # keep both cross expectations below the row sum
    P = params.row_sum_instance(n, lam, ratio * lam * min(1.0, n[0] / n[1]))
    M = params.validate(P, n)
    alpha, omega = params.alpha_omega(M, n, lam - 1.0)
    assume(omega >= math.e)
    return n, P


@given(sprinkle_instances())
def test_sprinkle_invariants(inst):
    n, P = inst
    sp = harness.make_sprinkle(n, P)
    assert sp.identity_residual_ulps(P) <= 1.0
    assert sp.Pb.p[0, 0] == 0.0 and sp.Pb.p[1, 1] == 0.0
    assert sp.Pa.p[0, 0] == P.p[0, 0] and sp.Pa.p[1, 1] == P.p[1, 1]
    lw = math.log(sp.omega)
    assert sp.Pb.p[0, 1] == min(sp.eps / (max(n) * lw), P.p[0, 1] / lw)
    assert sp.l == pytest.approx((sp.eps * n[0] / lw, sp.eps * n[1] / lw), rel=1e-15)


def test_sprinkle_needs_large_omega():
    with pytest.raises(OmegaTooSmall):
        harness.make_sprinkle((1000, 1000), params.ratio_instance((1000, 1000), 1.05, 0.5))
    with pytest.raises(OmegaTooSmall):
        harness.make_sprinkle((1000, 1000), params.ratio_instance((1000, 1000), 0.9, 0.5))
    # omega just above 1: log omega < 1 would push p^b past p_12
    n = (125_000, 125_000)
    with pytest.raises(OmegaTooSmall):
        harness.make_sprinkle(n, np.full((2, 2), 4.08e-06))


def test_merge_bound_value():
    w = 1000.0
    lw = math.log(w)
    assert harness.merge_bound(w) == 1 - 10 * lw * math.exp(-w / (4 * lw**3))
    assert harness.merge_bound(102.0) < 0  # vacuous at the criterion instance


samples = st.lists(st.integers(0, 30), min_size=2, max_size=60)


@given(samples, samples)
def test_mann_whitney_matches_scipy(x, y):
    assume(len(set(x + y)) > 1)
    u, p = harness.mann_whitney(x, y)
    ref = stats.mannwhitneyu(x, y, use_continuity=True, alternative="two-sided",
                             method="asymptotic")
    assert u == pytest.approx(ref.statistic, abs=1e-9)
    assert p == pytest.approx(ref.pvalue, rel=1e-9, abs=1e-12)


def test_mann_whitney_constant_samples():
    assert harness.mann_whitney([1, 1, 1], [1, 1])[1] == 1.0


def test_summarize():
    s = harness.summarize([1.0, 2.0, 3.0])
    assert s["mean"] == 2.0 and s["sd"] == 1.0
    assert s["ci95"] == pytest.approx([2 - 1.96 / math.sqrt(3), 2 + 1.96 / math.sqrt(3)])
    assert math.isnan(harness.summarize([])["mean"])


@pytest.fixture(scope="module")
def small_report():
    return harness.run_regime("const_super", SMALL_N, eps=0.3, reps=6, master_seed=17, workers=1)


def test_report_records(small_report):
    rep = small_report
    assert len(rep.records) == 6
    assert [r["rep"] for r in rep.records] == list(range(6))
    assert len({r["seed"] for r in rep.records}) == 6
    assert rep.aggregates() == rep.aggregates()
    assert rep.aggregates()["reps"] == 6
    assert rep.aggregates()["L1"]["mean"] == np.mean([r["L1"] for r in rep.records])


def test_report_reproducible_across_workers(small_report):
    again = harness.run_regime("const_super", SMALL_N, eps=0.3, reps=6, master_seed=17, workers=2)
    assert again.records == small_report.records
    assert again.to_json() == small_report.to_json()
    other = harness.run_regime("const_super", SMALL_N, eps=0.3, reps=6, master_seed=18, workers=1)
    assert other.records != small_report.records


def test_report_json_round_trip(small_report):
    d = json.loads(small_report.to_json())
    assert d["schema_version"] == harness.SCHEMA_VERSION
    assert d["reps"] == 6 and d["regime"] == "const_super"
    assert "wall_time" not in d
    assert "wall_time" in json.loads(small_report.to_json(include_timing=True))


def test_report_csv(small_report):
    rows = list(csv.reader(io.StringIO(small_report.to_csv())))
    assert tuple(rows[0]) == harness.CSV_HEADER
    assert len(rows) == 7
    assert int(rows[1][2]) == small_report.records[0]["L1"]


def test_regime_mismatch():
    n = (1000, 1000)
    with pytest.raises(RegimeMismatch):
        harness.run_regime("weak_super", n, params.ratio_instance(n, 0.9, 0.5), reps=1)
    with pytest.raises(RegimeMismatch):
        harness.run_regime("const_sub", n, params.ratio_instance(n, 1.2, 0.5), reps=1)
    with pytest.raises(ValidationError):
        harness.run_regime("supercritical", n, eps=0.1)


def test_sweep_empty_grid():
    assert harness.sweep_epsilon([], (100, 100)) == []


def test_sweep_crossing_zero():
    n = (500_000, 500_000)
    table = harness.sweep_epsilon([-0.1, 0.3], n, reps=3, master_seed=4)
    lo, hi = table
    assert lo["mean_L1_over_n"] < 0.01
    assert abs(hi["mean_L1_over_n"] - hi["rho_eps"]) <= 0.10 * hi["rho_eps"]
    assert hi["mean_L2_over_n"] / hi["mean_L1_over_n"] < 0.05


def test_sweep_inversions():
    rows = [{"eps": e, "mean_L1_over_n": v} for e, v in [(0.3, 0.4), (0.1, 0.2), (0.2, 0.1)]]
    assert harness.sweep_inversions(rows) == 1
    assert harness.sweep_inversions([]) == 0


def test_sL_all_vertices_at_unit_threshold():
    out = harness.estimate_sL((300, 200), np.full((2, 2), 0.003), (1, 1), reps=4)
    assert out["mean"] == [300.0, 200.0] and out["sd"] == [0.0, 0.0]


def test_sL_near_two_eps_n():
    n = (200_000, 200_000)
    P = params.row_sum_instance(n, 1.08, 0.3)
    sp = harness.make_sprinkle(n, P)
    out = harness.estimate_sL(n, P, sp.l, reps=10, master_seed=3)
    lo, hi = harness.TOLERANCES["sL_band"]
    for r in out["ratio_to_2eps_n"]:
        assert lo <= r <= hi


def test_sL_subcritical_is_empty():
    n = (100_000, 100_000)
    P = params.ratio_instance(n, 0.7, 0.5)
    out = harness.estimate_sL(n, P, (500, 500), reps=5)
    for m, nj in zip(out["mean"], n):
        assert m / nj < 1e-4


def test_tolerance_table_is_complete():
    tol = harness.TOLERANCES
    assert tol["weak_super_L1_rel"] == 0.10 and tol["weak_super_type_rel"] == 0.12
    assert tol["merge_fraction_min"] == 0.9 and tol["rank_p_min"] == 0.001
    assert tol["sL_band"] == (0.85, 1.15)


def test_two_round_exposure_small():
    n = (200_000, 200_000)
    P = params.row_sum_instance(n, 1.08, 0.3)
    rep = harness.two_round_exposure(n, P, master_seed=2, reps=10)
    assert len(rep.records) == 10 and len(rep.extra["direct_records"]) == 10
    assert rep.criteria["composition_identity_ulps"]["passed"]
    assert rep.criteria["merge_fraction"]["omega_flag"] == (rep.theory["omega"] < 50)


def test_witness_rule_uses_half_threshold():
    from bigraph import graphgen

    # two first-round components of 2 type-1 vertices each; l = (4, 4) makes both witnesses
    n = (4, 1)
    Ga = graphgen.SampledGraph(params.TypeCounts(n), np.array([[0, 1], [2, 3]]), 0)
    joined = graphgen.SampledGraph(params.TypeCounts(n), np.array([[0, 1], [1, 2], [2, 3]]), 0)
    sa = graphgen.components(Ga)
    assert not harness._merged(sa, graphgen.components(Ga), (4, 4))
    assert harness._merged(sa, graphgen.components(joined), (4, 4))
    assert harness._merged(sa, graphgen.components(Ga), (5, 5))  # 2 < 5/2: no witnesses


def test_weighted_target_uses_solver():
    n = (10**6, 5 * 10**5)
    P = params.ratio_instance(n, 1.1, 0.3)
    rho = theory.solve_survival(params.validate(P, n), n).rho
    assert harness._weighted_rho(rho, n) == pytest.approx((rho[0] * 2 + rho[1]) / 3, rel=1e-15)
