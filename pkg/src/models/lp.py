"""Linear program records used by the simplex solver and the cell builder."""

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from src.models.errors import ConfigError


class Relation(Enum):
    """Row relation of a linear constraint."""
    LE = "<="
    GE = ">="
    EQ = "="


class LpStatus(Enum):
    """Terminal status of a solve."""
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass(frozen=True, eq=False)
class LinearProgram:
    """Minimise ``objective @ x`` subject to row relations and variable boxes.

    Attributes:
        objective: Cost vector, one entry per variable
        constraint_matrix: Row coefficients, shape (rows, variables)
        constraint_bounds: Per-row (relation, right-hand side)
        variable_bounds: Per-variable (lo, hi); infinite ends are allowed
    """
    objective: np.ndarray
    constraint_matrix: np.ndarray
    constraint_bounds: tuple[tuple[Relation, float], ...]
    variable_bounds: tuple[tuple[float, float], ...]

    def __post_init__(self):
        c = np.asarray(self.objective, dtype=float)
        a = np.asarray(self.constraint_matrix, dtype=float)
        n = c.shape[0]
        if a.size == 0:
            a = a.reshape(0, n)
        object.__setattr__(self, "objective", c)
        object.__setattr__(self, "constraint_matrix", a)
        object.__setattr__(self, "constraint_bounds", tuple(self.constraint_bounds))
        object.__setattr__(self, "variable_bounds", tuple(self.variable_bounds))

        if c.ndim != 1 or a.ndim != 2:
            raise ConfigError("objective must be a vector and constraint_matrix a matrix")
        if a.shape[1] != n:
            raise ConfigError(
                f"constraint_matrix has {a.shape[1]} columns but objective has {n} entries"
            )
        if len(self.constraint_bounds) != a.shape[0]:
            raise ConfigError(
                f"{len(self.constraint_bounds)} row bounds for {a.shape[0]} rows"
            )
        if len(self.variable_bounds) != n:
            raise ConfigError(f"{len(self.variable_bounds)} variable bounds for {n} variables")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(a))):
            raise ConfigError("all LP coefficients must be finite")
        for relation, bound in self.constraint_bounds:
            if not isinstance(relation, Relation) or not math.isfinite(bound):
                raise ConfigError(f"invalid row bound ({relation!r}, {bound!r})")
        for j, (lo, hi) in enumerate(self.variable_bounds):
            if math.isnan(lo) or math.isnan(hi) or lo > hi:
                raise ConfigError(f"variable {j} has invalid bounds [{lo}, {hi}]")
            if lo == math.inf or hi == -math.inf:
                raise ConfigError(f"variable {j} has an empty box [{lo}, {hi}]")

    @property
    def num_variables(self) -> int:
        return int(self.objective.shape[0])

    @property
    def num_constraints(self) -> int:
        return int(self.constraint_matrix.shape[0])


@dataclass(frozen=True, eq=False)
class LpCertificate:
    """Data that lets a caller re-verify optimality.

    Attributes:
        basis: Indices of the basic columns of the internal standard form
        duals: One multiplier per constraint row of the original LP
        reduced_costs: ``objective - constraint_matrix.T @ duals``
    """
    basis: tuple[int, ...]
    duals: np.ndarray
    reduced_costs: np.ndarray


@dataclass(frozen=True, eq=False)
class LpSolution:
    """Outcome of ``solve_lp``.

    ``dual_bound`` is a lower bound on the optimum recomputed from the row
    multipliers in the certificate; it is ``inf`` for infeasible programs.
    """
    status: LpStatus
    objective_value: float
    variable_values: np.ndarray
    certificate: LpCertificate | None = None
    pivots: int = 0
    dual_bound: float = -math.inf

    @property
    def is_optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


@dataclass(frozen=True)
class SolverSettings:
    """Numerical knobs of the simplex solver."""
    feasibility_tol: float = 1e-9
    pivot_tol: float = 1e-11
    max_pivots: int = 100_000
    # Largest accepted relative gap between the primal value and its dual bound
    optimality_tol: float = 1e-7

    def __post_init__(self):
        if self.feasibility_tol <= 0 or self.pivot_tol <= 0 or self.optimality_tol <= 0:
            raise ConfigError("solver tolerances must be positive")
        if self.max_pivots < 1:
            raise ConfigError("max_pivots must be >= 1")


@dataclass(frozen=True)
class CertificateReport:
    """Residuals of a certificate check; all should be near zero."""
    primal_infeasibility: float
    dual_sign_violation: float
    complementary_slackness: float
    objective_gap: float
    details: list[str] = field(default_factory=list)

    def within(self, tol: float) -> bool:
        return max(
            self.primal_infeasibility,
            self.dual_sign_violation,
            self.complementary_slackness,
            self.objective_gap,
        ) <= tol
