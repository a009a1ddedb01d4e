"""Closed-form and fixed-point quantities of the 2-type binomial branching process.

All routines work on 2 x 2 inputs. The survival solver runs in
survival-probability space (rho = 1 - q) so that tiny survival
probabilities near criticality keep full relative precision.
"""
from __future__ import annotations

import decimal
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (
    InvalidEpsilon,
    NoConvergence,
    NonpositiveDenominator,
    UnsupportedK,
)
from .params import CRITICAL_TOL, ExpectationMatrix, as_prob_matrix, as_type_counts

STEP_TOL = 1e-13
RESIDUAL_TOL = 1e-12
MAX_ITER = 10_000_000
# plain iterations before switching to Newton
WARMUP_ITER = 64
# working precision for the Perron root; the result is rounded to float once
_PF_CONTEXT = decimal.Context(prec=60)


@dataclass(frozen=True)
class SurvivalPair:
    rho: tuple
    residual: tuple
    iterations: int

    def as_dict(self) -> dict:
        return {"rho": list(self.rho), "residual": list(self.residual),
                "iterations": self.iterations}


@dataclass(frozen=True)
class DualSpec:
    pi: np.ndarray
    h: np.ndarray
    d: float

    def as_dict(self) -> dict:
        return {"pi": self.pi.tolist(), "h": self.h.tolist(), "d": self.d}


@dataclass(frozen=True)
class ProgenyExpectation:
    """e[i][j]: expected number of type-j individuals in a tree rooted at type i."""

    e: np.ndarray

    def row_totals(self) -> np.ndarray:
        return self.e.sum(axis=1)

    def as_dict(self) -> dict:
        return {"e": self.e.tolist()}


def _mat2(M) -> np.ndarray:
    mu = M.mu if isinstance(M, ExpectationMatrix) else np.asarray(M, dtype=np.float64)
    if mu.shape != (2, 2):
        raise UnsupportedK(f"expected a 2 x 2 matrix, got shape {mu.shape}")
    return mu


def perron_frobenius(M) -> float:
    """Largest eigenvalue of a nonnegative 2 x 2 matrix, correctly rounded.

    Evaluates ((a + d) + sqrt((a - d)^2 + 4bc)) / 2 in 60-digit decimal
    arithmetic. The root form never cancels. For an ExpectationMatrix built
    from (P, n) the entries are the exact products p_ij * n_j, so scaling P
    by c moves lambda by c to within a couple of ulps.
    """
    mu = _mat2(M)
    if not np.all(np.isfinite(mu)):
        a, b, c, d = (float(x) for x in mu.ravel())
        return 0.5 * (a + d) + 0.5 * math.sqrt((a - d) ** 2 + 4.0 * b * c)
    src = M.source if isinstance(M, ExpectationMatrix) else None
    with decimal.localcontext(_PF_CONTEXT):
        if src is not None:
            p, n = src
            A, B, C, D = (decimal.Decimal(float(p[i, j])) * int(n[j])
                          for i, j in ((0, 0), (0, 1), (1, 0), (1, 1)))
        else:
            A, B, C, D = (decimal.Decimal(float(x)) for x in mu.ravel())
        lam = ((A + D) + ((A - D) ** 2 + 4 * B * C).sqrt()) / 2
    return float(lam)


def _log_extinction(p_row, n, rho):
    # log of prod_j (1 - p_ij rho_j)^{n_j}
    return n[0] * math.log1p(-p_row[0] * rho[0]) + n[1] * math.log1p(-p_row[1] * rho[1])


def _phi(p, n, rho):
    """Survival map rho -> 1 - prod_j (1 - p_ij rho_j)^{n_j}, plus log terms."""
    s0 = _log_extinction(p[0], n, rho)
    s1 = _log_extinction(p[1], n, rho)
    return (-math.expm1(s0), -math.expm1(s1)), (s0, s1)


def survival_residuals(P, n, rho) -> tuple:
    """|F_i(rho_1, rho_2)| for both types."""
    P, n = as_prob_matrix(P), as_type_counts(n)
    p = P.p.tolist()
    nn = (float(n[0]), float(n[1]))
    with np.errstate(divide="ignore"):
        (f0, f1), _ = _phi(p, nn, rho)
    return (abs(f0 - rho[0]), abs(f1 - rho[1]))


def solve_survival(M: ExpectationMatrix, n, trace: Optional[list] = None) -> SurvivalPair:
    """Survival probabilities (rho_1, rho_2) of the 2-type binomial process.

    Returns (0, 0) when the Perron-Frobenius eigenvalue is at most
    1 + CRITICAL_TOL. Otherwise iterates the extinction map upward from
    q = (0, 0), which converges monotonically to the smallest fixed point,
    and then polishes with Newton. Newton started below the smallest fixed
    point of a convex map stays below it, so the polish cannot jump to the
    trivial root.

    If ``trace`` is a list, every iterate is appended to it as an
    extinction-probability pair q = 1 - rho.
    """
    mu = _mat2(M)
    n = as_type_counts(n)
    if n.k != 2:
        raise UnsupportedK("solve_survival needs k = 2")
    lam = perron_frobenius(mu)
    if lam <= 1.0 + CRITICAL_TOL:
        return SurvivalPair(rho=(0.0, 0.0), residual=(0.0, 0.0), iterations=0)

    nn = (float(n[0]), float(n[1]))
    p = [[float(mu[i, j]) / nn[j] for j in range(2)] for i in range(2)]

    def record(r):
        if trace is not None:
            trace.append((1.0 - r[0], 1.0 - r[1]))

    rho = (1.0, 1.0)
    record(rho)
    it = 0
    next_newton = WARMUP_ITER
    converged = False
    with np.errstate(divide="ignore"):
        while it < MAX_ITER:
            new, _ = _phi(p, nn, rho)
            it += 1
            step = max(abs(new[0] - rho[0]), abs(new[1] - rho[1]))
            rho = new
            record(rho)
            if step < STEP_TOL:
                converged = True
                break
            if it >= next_newton and rho[0] < 1.0 and rho[1] < 1.0:
                polished = _newton(p, nn, rho, record)
                if polished is not None:
                    rho, n_newton = polished
                    it += n_newton
                    converged = True
                    break
                # back off; singular Jacobians occur for reducible M
                next_newton = 2 * it
        f, _ = _phi(p, nn, rho)
    res = (abs(f[0] - rho[0]), abs(f[1] - rho[1]))
    if not converged and max(res) > RESIDUAL_TOL:
        raise NoConvergence(f"survival iteration hit the cap with residual {max(res):.3g}")
    return SurvivalPair(rho=(float(rho[0]), float(rho[1])), residual=res, iterations=it)


def _newton(p, nn, rho, record, max_steps: int = 100):
    """Newton on G(rho) = rho - phi(rho); returns None if it misbehaves."""
    r = list(rho)
    for k in range(1, max_steps + 1):
        (f0, f1), (s0, s1) = _phi(p, nn, r)
        g0, g1 = r[0] - f0, r[1] - f1
        if max(abs(g0), abs(g1)) <= RESIDUAL_TOL * 1e-2:
            return (r[0], r[1]), k
        e0, e1 = math.exp(s0), math.exp(s1)
        # d phi_i / d rho_j
        j00 = e0 * nn[0] * p[0][0] / (1.0 - p[0][0] * r[0])
        j01 = e0 * nn[1] * p[0][1] / (1.0 - p[0][1] * r[1])
        j10 = e1 * nn[0] * p[1][0] / (1.0 - p[1][0] * r[0])
        j11 = e1 * nn[1] * p[1][1] / (1.0 - p[1][1] * r[1])
        a, b, c, d = 1.0 - j00, -j01, -j10, 1.0 - j11
        det = a * d - b * c
        if not math.isfinite(det) or det <= 0.0:
            return None
        d0 = (d * g0 - b * g1) / det
        d1 = (-c * g0 + a * g1) / det
        new = (r[0] - d0, r[1] - d1)
        if not (0.0 <= new[0] <= 1.0 and 0.0 <= new[1] <= 1.0):
            return None
        step = max(abs(d0), abs(d1))
        r = list(new)
        record(new)
        if step < STEP_TOL:
            (f0, f1), _ = _phi(p, nn, r)
            if max(abs(r[0] - f0), abs(r[1] - f1)) <= RESIDUAL_TOL:
                return (r[0], r[1]), k
    return None


def dual_matrix(P, rho: SurvivalPair, n) -> DualSpec:
    """Edge probabilities of the process conditioned on extinction,
    pi_ij = p_ij (1 - rho_j) / (1 - rho_j p_ij), and h_ij = pi_ij n_j."""
    P, n = as_prob_matrix(P), as_type_counts(n)
    if P.k != 2 or n.k != 2:
        raise UnsupportedK("dual_matrix needs k = 2")
    r = np.asarray(rho.rho if isinstance(rho, SurvivalPair) else rho, dtype=np.float64)
    p = P.p
    pi = p * (1.0 - r)[None, :] / (1.0 - r[None, :] * p)
    h = pi * n.n.astype(np.float64)[None, :]
    d = 1.0 - h[0, 0] - h[1, 1] + h[0, 0] * h[1, 1] - h[0, 1] * h[1, 0]
    return DualSpec(pi=pi, h=h, d=float(d))


def _progeny(h: np.ndarray) -> ProgenyExpectation:
    d = 1.0 - h[0, 0] - h[1, 1] + h[0, 0] * h[1, 1] - h[0, 1] * h[1, 0]
    if not d > 0.0 or perron_frobenius(h) >= 1.0:
        raise NonpositiveDenominator(
            f"offspring matrix is not subcritical (d = {d:.6g}); expected sizes are infinite"
        )
    e = np.array([
        [(1.0 - h[1, 1]) / d, h[0, 1] / d],
        [h[1, 0] / d, (1.0 - h[0, 0]) / d],
    ])
    return ProgenyExpectation(e=e)


def expected_dual_sizes(D: DualSpec) -> ProgenyExpectation:
    """Expected per-type totals of the dual tree, from the closed forms
    e_ii = (1 - h_{3-i,3-i}) / d and e_{i,3-i} = h_{i,3-i} / d."""
    return _progeny(np.asarray(D.h, dtype=np.float64))


def expected_primal_sizes(M) -> ProgenyExpectation:
    """Same closed forms applied to a subcritical expectation matrix M.

    Row i sums to (1 + mu_{i,3-i} - mu_{3-i,3-i}) / (1 - tr M + det M).
    """
    return _progeny(_mat2(M))


def rho_epsilon(eps: float) -> float:
    """Positive root of 1 - rho - exp(-(1 + eps) rho) = 0 for eps > 0."""
    if not (eps > 0.0) or not math.isfinite(eps):
        raise InvalidEpsilon(f"eps must be a positive finite number, got {eps!r}")
    c = 1.0 + eps

    def f(r):
        return -math.expm1(-c * r) - r

    # f > 0 below the root, f(1) < 0; lo is inside the positive region
    lo, hi = 0.5 * eps / (c * c), 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if f(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    r = 0.5 * (lo + hi)
    for _ in range(8):
        fp = -1.0 + c * math.exp(-c * r)
        if fp == 0.0:
            break
        nr = r - f(r) / fp
        if not lo <= nr <= hi or nr == r:
            break
        r = nr
    return r
