"""Parameter types for the k-type binomial random graph and regime diagnostics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (
    AsymmetricMatrix,
    DimensionMismatch,
    ProbabilityOutOfRange,
    UnsupportedK,
    ValidationError,
)

CRITICAL_TOL = 1e-9

SUBCRITICAL = "subcritical"
CRITICAL = "critical"
SUPERCRITICAL = "supercritical"


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class ProbMatrix:
    """Symmetric k x k matrix of edge probabilities."""

    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.float64)
        if p.ndim != 2 or p.shape[0] != p.shape[1] or p.shape[0] < 1:
            raise DimensionMismatch(f"P must be a square k x k matrix, got shape {p.shape}")
        if not np.all(np.isfinite(p)) or np.any(p < 0.0) or np.any(p > 1.0):
            raise ProbabilityOutOfRange("every entry of P must lie in [0, 1]")
        if not np.array_equal(p, p.T):
            raise AsymmetricMatrix("P must be symmetric (bit-exact)")
        object.__setattr__(self, "p", _frozen(p))

    @property
    def k(self) -> int:
        return self.p.shape[0]

    def __getitem__(self, idx):
        return float(self.p[idx])

    def __eq__(self, other):
        return isinstance(other, ProbMatrix) and np.array_equal(self.p, other.p)

    def __hash__(self):
        return hash(self.p.tobytes())

    def scaled(self, c: float) -> "ProbMatrix":
        return ProbMatrix(self.p * c)

    def swapped(self) -> "ProbMatrix":
        """Relabel types 1 <-> 2 (conjugation by the swap permutation)."""
        return ProbMatrix(self.p[::-1, ::-1])

    def tolist(self) -> list:
        return self.p.tolist()


@dataclass(frozen=True, eq=False)
class TypeCounts:
    """Vertex counts per type. No ordering convention is imposed."""

    n: np.ndarray

    def __post_init__(self):
        raw = np.asarray(self.n)
        if raw.ndim != 1 or raw.size < 1:
            raise DimensionMismatch("n must be a non-empty vector")
        if not np.all(np.equal(np.mod(raw, 1), 0)):
            raise ValidationError("vertex counts must be integers")
        n = raw.astype(np.int64)
        if np.any(n < 1):
            raise ValidationError("every vertex count must be >= 1")
        object.__setattr__(self, "n", _frozen(n))

    @property
    def k(self) -> int:
        return self.n.shape[0]

    @property
    def n_total(self) -> int:
        return int(self.n.sum())

    def __getitem__(self, i) -> int:
        return int(self.n[i])

    def __iter__(self):
        return (int(x) for x in self.n)

    def __eq__(self, other):
        return isinstance(other, TypeCounts) and np.array_equal(self.n, other.n)

    def __hash__(self):
        return hash(self.n.tobytes())

    def offsets(self) -> np.ndarray:
        """First vertex id of each type block (length k+1)."""
        return np.concatenate(([0], np.cumsum(self.n))).astype(np.int64)

    def swapped(self) -> "TypeCounts":
        return TypeCounts(self.n[::-1])

    def tolist(self) -> list:
        return [int(x) for x in self.n]


@dataclass(frozen=True, eq=False)
class ExpectationMatrix:
    """mu[i][j] = p[i][j] * n[j]: expected type-j neighbours of a type-i vertex.

    ``source`` keeps the (p, n) it was built from, when known, so that
    quantities such as the Perron root can use the exact products.
    """

    mu: np.ndarray
    source: Optional[tuple] = field(default=None, repr=False)

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=np.float64)
        if mu.ndim != 2 or mu.shape[0] != mu.shape[1]:
            raise DimensionMismatch(f"M must be square, got shape {mu.shape}")
        if np.any(mu < 0.0) or not np.all(np.isfinite(mu)):
            raise ValidationError("expectation entries must be finite and >= 0")
        object.__setattr__(self, "mu", _frozen(mu))

    @property
    def k(self) -> int:
        return self.mu.shape[0]

    def __getitem__(self, idx):
        return float(self.mu[idx])

    def row_sums(self) -> np.ndarray:
        return self.mu.sum(axis=1)

    def tolist(self) -> list:
        return self.mu.tolist()


@dataclass(frozen=True)
class RegimeReport:
    lam: float
    epsilon: float
    row_sums: tuple
    condition_super: float
    condition_sub: float
    classification: str

    def as_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "epsilon": self.epsilon,
            "row_sums": list(self.row_sums),
            "condition_super": self.condition_super,
            "condition_sub": self.condition_sub,
            "classification": self.classification,
        }


def as_prob_matrix(P) -> ProbMatrix:
    return P if isinstance(P, ProbMatrix) else ProbMatrix(P)


def as_type_counts(n) -> TypeCounts:
    return n if isinstance(n, TypeCounts) else TypeCounts(n)


def expectation(P, n) -> ExpectationMatrix:
    P, n = as_prob_matrix(P), as_type_counts(n)
    return ExpectationMatrix(P.p * n.n.astype(np.float64)[None, :], source=(P.p, n.n))


def validate(P, n) -> ExpectationMatrix:
    """Check (P, n) for consistency and return the expectation matrix.

    ``P`` and ``n`` may be raw sequences; they are converted (and validated)
    on the way in.
    """
    P, n = as_prob_matrix(P), as_type_counts(n)
    if P.k != n.k:
        raise DimensionMismatch(f"P is {P.k}x{P.k} but n has {n.k} entries")
    return expectation(P, n)


def classify(lam: float, tol: float = CRITICAL_TOL) -> str:
    if lam > 1.0 + tol:
        return SUPERCRITICAL
    if lam < 1.0 - tol:
        return SUBCRITICAL
    return CRITICAL


def diagnose(M: ExpectationMatrix, n) -> RegimeReport:
    """Perron-Frobenius eigenvalue, distance to criticality and the size
    conditions for the weakly super- and subcritical regimes.

    The conditions are evaluated with "type 2" meaning the smaller class,
    so ``condition_super = |eps|**3 * n_min * min(1, mu[small, big] / |eps|)``.
    They are plain numbers; judging whether they are "large" is up to the
    caller.
    """
    from .theory import perron_frobenius

    n = as_type_counts(n)
    if M.k != 2 or n.k != 2:
        raise UnsupportedK("regime diagnostics are implemented for k = 2 only")
    lam = perron_frobenius(M)
    eps = lam - 1.0
    small = 1 if n[1] <= n[0] else 0
    big = 1 - small
    n_small = float(n[small])
    mu_cross = M[small, big]
    # both conditions measure the distance to criticality, so use |eps|
    dist = abs(eps)
    if dist == 0.0:
        alpha = 1.0 if mu_cross > 0 else 0.0
    else:
        alpha = min(1.0, mu_cross / dist)
    cond_sub = dist**3 * n_small
    return RegimeReport(
        lam=lam,
        epsilon=eps,
        row_sums=tuple(float(x) for x in M.row_sums()),
        condition_super=cond_sub * alpha,
        condition_sub=cond_sub,
        classification=classify(lam),
    )


def row_sum_instance(n: Sequence[int], rows: float, mu21: float) -> ProbMatrix:
    """Symmetric 2-type P whose expectation matrix has both row sums ``rows``
    and cross entry ``mu[1][0] = mu21`` (type 2 -> type 1 neighbours).

    Symmetry forces ``mu[0][1] = mu21 * n2 / n1``; the diagonal takes the rest.
    """
    n1, n2 = int(n[0]), int(n[1])
    p12 = mu21 / n1
    mu12 = p12 * n2
    mu11 = rows - mu12
    mu22 = rows - mu21
    if mu11 < 0 or mu22 < 0:
        raise ValidationError(
            f"cross expectations ({mu12:g}, {mu21:g}) exceed the row sum {rows:g}"
        )
    return ProbMatrix([[mu11 / n1, p12], [p12, mu22 / n2]])


def ratio_instance(n: Sequence[int], rows: float, ratio: float) -> ProbMatrix:
    """Like :func:`row_sum_instance` with ``mu21 = ratio * rows``.

    Keeping ``ratio`` fixed while varying ``rows`` preserves the shape of M.
    """
    if not 0.0 <= ratio <= 1.0:
        raise ValidationError("ratio must lie in [0, 1]")
    return row_sum_instance(n, rows, ratio * rows)


def alpha_omega(M: ExpectationMatrix, n, eps: float) -> tuple[float, float]:
    """alpha = min(1, mu21 / eps) and omega = alpha * eps**3 * n_min."""
    n = as_type_counts(n)
    small = 1 if n[1] <= n[0] else 0
    mu_cross = M[small, 1 - small]
    alpha = min(1.0, mu_cross / eps)
    return alpha, alpha * eps**3 * float(min(n))


def log_omega_threshold(n, eps: float, omega: float) -> tuple[float, ...]:
    """Large-component thresholds l_j = eps * n_j / log(omega)."""
    n = as_type_counts(n)
    lw = math.log(omega)
    return tuple(eps * float(nj) / lw for nj in n)
