import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bigraph import params, theory
from bigraph.errors import (
    AsymmetricMatrix,
    DimensionMismatch,
    ProbabilityOutOfRange,
    UnsupportedK,
    ValidationError,
)

# zero or comfortably normal: ulp statements are meaningless for subnormals
probs = st.one_of(st.just(0.0), st.floats(1e-200, 1.0))
counts = st.integers(1, 10**7)


@st.composite
def instances(draw):
    a, b, c = draw(probs), draw(probs), draw(probs)
    return params.ProbMatrix([[a, b], [b, c]]), params.TypeCounts((draw(counts), draw(counts)))


def test_validate_zero_matrix():
    M = params.validate([[0, 0], [0, 0]], (5, 5))
    assert M.mu.tolist() == [[0, 0], [0, 0]]


def test_validate_products():
    M = params.validate([[0.1, 0.2], [0.2, 0.3]], (10, 20))
    assert np.allclose(M.mu, [[1, 4], [2, 6]], rtol=0, atol=1e-15)


def test_asymmetric_rejected():
    with pytest.raises(AsymmetricMatrix):
        params.validate([[0.1, 0.2], [0.3, 0.1]], (10, 10))


def test_out_of_range_rejected():
    with pytest.raises(ProbabilityOutOfRange):
        params.ProbMatrix([[1.5, 0], [0, 0]])
    with pytest.raises(ProbabilityOutOfRange):
        params.ProbMatrix([[math.nan, 0], [0, 0]])


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        params.validate([[0.1]], (3, 4))


def test_type_counts_positive():
    with pytest.raises(ValidationError):
        params.TypeCounts((3, 0))
    n = params.TypeCounts((3, 4))
    assert n.n_total == 7
    assert n.offsets().tolist() == [0, 3, 7]


def test_types_are_read_only():
    P = params.ProbMatrix([[0.1, 0.2], [0.2, 0.3]])
    with pytest.raises(ValueError):
        P.p[0, 0] = 0.5


def test_diagnose_critical():
    rep = params.diagnose(params.ExpectationMatrix([[0.5, 0.5], [0.5, 0.5]]), (100, 100))
    assert rep.lam == 1.0
    assert rep.classification == params.CRITICAL


def test_diagnose_subcritical_diagonal():
    rep = params.diagnose(params.ExpectationMatrix([[0.3, 0], [0, 0.4]]), (10, 10))
    assert rep.lam == pytest.approx(0.4, abs=1e-15)
    assert rep.classification == params.SUBCRITICAL


def test_diagnose_condition_value():
    n = (10**6, 10**6)
    P = params.row_sum_instance(n, 1.05, 0.5)
    rep = params.diagnose(params.validate(P, n), n)
    assert rep.epsilon == pytest.approx(0.05, abs=1e-12)
    # eps^3 * n2 * min(1, mu21 / eps) = 125 * 1
    assert rep.condition_super == pytest.approx(125.0, rel=1e-9)
    assert rep.condition_sub == pytest.approx(125.0, rel=1e-9)


def test_diagnose_needs_two_types():
    with pytest.raises(UnsupportedK):
        params.diagnose(params.ExpectationMatrix([[0.5]]), (3,))


def test_classification_tolerance():
    assert params.classify(1.0 + 5e-10) == params.CRITICAL
    assert params.classify(1.0 + 2e-9) == params.SUPERCRITICAL
    assert params.classify(1.0 - 2e-9) == params.SUBCRITICAL


def test_row_sum_instance_rows():
    n = (300_000, 100_000)
    P = params.row_sum_instance(n, 1.08, 0.3)
    M = params.validate(P, n)
    assert np.allclose(M.row_sums(), 1.08, rtol=1e-14)
    assert M[1, 0] == pytest.approx(0.3, rel=1e-14)


@given(instances())
def test_lambda_matches_theory(inst):
    P, n = inst
    M = params.validate(P, n)
    assert params.diagnose(M, n).lam == theory.perron_frobenius(M)


@given(instances())
def test_expectation_is_exact_product(inst):
    P, n = inst
    M = params.validate(P, n)
    for i in range(2):
        for j in range(2):
            assert M.mu[i, j] == P.p[i, j] * float(n[j])
    assert np.all(M.mu >= 0)


@settings(max_examples=500)
@given(instances(), st.floats(0.01, 1.0))
def test_scaling_multiplies_lambda(inst, c):
    P, n = inst
    M = params.validate(P, n)
    Mc = params.validate(P.scaled(c), n)
    lam, lam_c = params.diagnose(M, n).lam, params.diagnose(Mc, n).lam
    assert np.all(np.abs(Mc.mu - c * M.mu) <= 2 * np.spacing(Mc.mu))
    assert abs(lam_c - c * lam) <= 2 * np.spacing(lam_c)


@given(instances())
def test_type_swap_leaves_lambda(inst):
    P, n = inst
    lam = params.diagnose(params.validate(P, n), n).lam
    lam_s = params.diagnose(params.validate(P.swapped(), n.swapped()), n.swapped()).lam
    assert abs(lam - lam_s) <= 2 * np.spacing(lam)
