"""Two-type binomial random graphs G(n, P), their branching-process
approximations, and Monte Carlo checks of the giant-component laws."""
from .errors import (
    BigraphError,
    CapacityExceeded,
    NumericError,
    ValidationError,
)
from .params import ProbMatrix, TypeCounts, diagnose, expectation, validate
from .theory import (
    dual_matrix,
    expected_dual_sizes,
    expected_primal_sizes,
    perron_frobenius,
    rho_epsilon,
    solve_survival,
)
from .graphgen import components, sample, sample_coupled

__version__ = "0.1.0"

__all__ = [
    "BigraphError", "CapacityExceeded", "NumericError", "ValidationError",
    "ProbMatrix", "TypeCounts", "diagnose", "expectation", "validate",
    "dual_matrix", "expected_dual_sizes", "expected_primal_sizes", "perron_frobenius",
    "rho_epsilon", "solve_survival", "components", "sample", "sample_coupled",
]
