"""Dense two-phase bounded-variable primal simplex.

Variables are shifted so every column has lower bound 0 and an optional
finite upper bound; rows become equalities through slack columns and an
artificial identity seeds phase 1. Columns and rows are equilibrated by their
largest coefficient before pivoting. Entering columns follow Bland's rule
(smallest eligible index); the leaving row is the smallest basic index among
the ratio ties whose pivot is not tiny next to the other ties. A given LP
always takes the same pivot path.

Every answer is checked before it is returned. An optimum must satisfy its
rows and boxes and sit within ``optimality_tol`` of the Lagrangian bound of
its own multipliers; an infeasible verdict must come with a Farkas
certificate. A rejected attempt is repeated with a fresh factorisation after
every pivot and a stricter pivot threshold, and ``LpNumericalError`` is
raised when that fails too.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from src.models.errors import LpNumericalError
from src.models.lp import (
    CertificateReport,
    LinearProgram,
    LpCertificate,
    LpSolution,
    LpStatus,
    Relation,
    SolverSettings,
)

logger = logging.getLogger(__name__)

# (refactorisation period in pivots, relative pivot threshold) per attempt
ATTEMPTS = ((10, 1e-12), (1, 1e-9))

# Bases worse conditioned than this are not trusted
MAX_CONDITION = 1e13

# Among ratio ties, pivots smaller than this share of the largest are skipped
TIE_PIVOT_SHARE = 0.1


class _UnstableBasis(Exception):
    """The current basis can no longer be factorised reliably."""


@dataclass
class _StandardForm:
    """``full @ y = rhs``, ``0 <= y <= upper``, with ``x = offset + mapping @ y[:n_mapped]``.

    ``row_factor`` holds the scale and sign applied to each original row, so
    multipliers ``w`` of the standard form are ``w * row_factor`` for the
    original rows.
    """
    full: np.ndarray
    rhs: np.ndarray
    upper: np.ndarray
    cost: np.ndarray
    offset: np.ndarray
    mapping: np.ndarray
    row_factor: np.ndarray
    n_mapped: int
    n_slack: int

    @property
    def artificial_columns(self) -> np.ndarray:
        start = self.n_mapped + self.n_slack
        return np.arange(start, start + self.full.shape[0])


def _standard_form(lp: LinearProgram) -> _StandardForm:
    n = lp.num_variables
    m = lp.num_constraints
    offset = np.zeros(n)
    columns: list[tuple[int, float]] = []
    upper: list[float] = []
    for j, (lo, hi) in enumerate(lp.variable_bounds):
        if math.isfinite(lo):
            offset[j] = lo
            columns.append((j, 1.0))
            upper.append(hi - lo)
        elif math.isfinite(hi):
            offset[j] = hi
            columns.append((j, -1.0))
            upper.append(math.inf)
        else:
            columns.append((j, 1.0))
            upper.append(math.inf)
            columns.append((j, -1.0))
            upper.append(math.inf)

    mapping = np.zeros((n, len(columns)))
    for col, (j, s) in enumerate(columns):
        mapping[j, col] = s

    a = lp.constraint_matrix
    rhs = np.array([bound for _, bound in lp.constraint_bounds], dtype=float) - a @ offset
    body = a @ mapping

    col_max = np.max(np.abs(body), axis=0)
    col_scale = np.where(col_max > 0.0, 1.0 / np.where(col_max > 0.0, col_max, 1.0), 1.0)
    body = body * col_scale
    mapping = mapping * col_scale
    mapped_upper = np.array(upper) / col_scale

    row_max = np.max(np.abs(body), axis=1) if body.shape[1] else np.zeros(m)
    row_scale = np.where(row_max > 0.0, 1.0 / np.where(row_max > 0.0, row_max, 1.0), 1.0)

    slack_rows = [i for i, (rel, _) in enumerate(lp.constraint_bounds) if rel is not Relation.EQ]
    slacks = np.zeros((m, len(slack_rows)))
    for col, i in enumerate(slack_rows):
        slacks[i, col] = 1.0 if lp.constraint_bounds[i][0] is Relation.LE else -1.0

    row_factor = row_scale * np.where(rhs < 0.0, -1.0, 1.0)
    body = np.hstack([body, slacks]) * row_factor[:, None]
    rhs = rhs * row_factor
    full = np.hstack([body, np.eye(m)])

    n_mapped = len(columns)
    cost = np.zeros(full.shape[1])
    cost[:n_mapped] = lp.objective @ mapping
    return _StandardForm(
        full=full,
        rhs=rhs,
        upper=np.concatenate([mapped_upper, np.full(len(slack_rows), math.inf), np.full(m, math.inf)]),
        cost=cost,
        offset=offset,
        mapping=mapping,
        row_factor=row_factor,
        n_mapped=n_mapped,
        n_slack=len(slack_rows),
    )


def _signed_multipliers(lp: LinearProgram, duals: np.ndarray) -> np.ndarray:
    """Clip multipliers to the sign their row allows (``<=``: nonpositive, ``>=``: nonnegative)."""
    y = np.array(duals, dtype=float)
    for i, (rel, _) in enumerate(lp.constraint_bounds):
        if rel is Relation.LE:
            y[i] = min(y[i], 0.0)
        elif rel is Relation.GE:
            y[i] = max(y[i], 0.0)
    return y


def lagrangian_bound(
    lp: LinearProgram,
    duals: np.ndarray,
    objective: np.ndarray | None = None,
    zero_tol: float = 1e-9,
) -> float:
    """Lower bound on ``min objective @ x`` implied by row multipliers.

    Multipliers of the wrong sign are clipped to zero first, so any vector
    gives a valid bound. With ``objective`` all zero, a positive value proves
    the program infeasible (Farkas).

    Args:
        lp: The program
        duals: One multiplier per row
        objective: Cost vector to bound; defaults to ``lp.objective``
        zero_tol: Reduced costs this small are treated as zero on columns
            with an infinite box end

    Returns:
        The bound; ``-inf`` when a reduced cost points along an unbounded box
    """
    c = lp.objective if objective is None else np.asarray(objective, dtype=float)
    a = lp.constraint_matrix
    if a.shape[0] == 0:
        y = np.zeros(0)
        reduced = c.copy()
    else:
        y = _signed_multipliers(lp, duals)
        reduced = c - a.T @ y
    terms = [float(y[i] * bound) for i, (_, bound) in enumerate(lp.constraint_bounds)]
    for j, (lo, hi) in enumerate(lp.variable_bounds):
        r = float(reduced[j])
        if r > 0.0:
            if math.isfinite(lo):
                terms.append(r * lo)
            elif r > zero_tol:
                return -math.inf
        elif r < 0.0:
            if math.isfinite(hi):
                terms.append(r * hi)
            elif r < -zero_tol:
                return -math.inf
    return math.fsum(terms)


def primal_residual(lp: LinearProgram, x: np.ndarray) -> float:
    """Largest row or box violation of ``x``; rows are measured relative to ``max(1, |b|)``."""
    worst = 0.0
    if lp.num_constraints:
        activity = lp.constraint_matrix @ x
        for i, (rel, bound) in enumerate(lp.constraint_bounds):
            gap = float(activity[i] - bound)
            if rel is Relation.LE:
                violation = gap
            elif rel is Relation.GE:
                violation = -gap
            else:
                violation = abs(gap)
            worst = max(worst, violation / max(1.0, abs(bound)))
    for j, (lo, hi) in enumerate(lp.variable_bounds):
        worst = max(worst, lo - float(x[j]), float(x[j]) - hi)
    return worst


class SimplexSolver:
    """Bounded-variable primal simplex over a dense numpy tableau.

    Attributes:
        settings: Feasibility tolerance, zero-pivot threshold, optimality gap
            and pivot cap
    """

    def __init__(self, settings: SolverSettings | None = None) -> None:
        self.settings = settings or SolverSettings()
        self._pivots = 0

    def solve(self, lp: LinearProgram) -> LpSolution:
        """Solve ``lp`` to certified optimality, infeasibility or unboundedness.

        Raises:
            LpNumericalError: If the pivot cap is reached or no attempt
                produces a result that passes verification
        """
        self._pivots = 0
        if lp.num_constraints == 0:
            return self._solve_box_only(lp)

        sf = _standard_form(lp)
        best_bound = lagrangian_bound(lp, np.zeros(lp.num_constraints))
        problem = ""
        for refactor_every, pivot_share in ATTEMPTS:
            try:
                solution = self._attempt(lp, sf, refactor_every, pivot_share)
            except _UnstableBasis as e:
                problem = str(e)
            else:
                if solution.status is LpStatus.OPTIMAL:
                    best_bound = max(best_bound, solution.dual_bound)
                problem = self._check(lp, solution) or ""
                if not problem:
                    return solution
            logger.debug("Simplex attempt rejected after %d pivots: %s", self._pivots, problem)
        raise LpNumericalError(
            f"simplex result could not be certified: {problem}",
            pivots=self._pivots,
            lower_bound=best_bound,
        )

    def _check(self, lp: LinearProgram, solution: LpSolution) -> str | None:
        """Reason to reject ``solution``, or None when it verifies."""
        if solution.status is LpStatus.INFEASIBLE:
            assert solution.certificate is not None
            farkas = lagrangian_bound(lp, solution.certificate.duals, np.zeros(lp.num_variables))
            if farkas > 0.0:
                return None
            return f"infeasible verdict without a Farkas certificate ({farkas:.3e})"
        if solution.status is LpStatus.UNBOUNDED:
            boxed = all(math.isfinite(lo) and math.isfinite(hi) for lo, hi in lp.variable_bounds)
            return "unbounded verdict on a boxed program" if boxed else None

        residual = primal_residual(lp, solution.variable_values)
        if residual > self.settings.feasibility_tol:
            return f"primal residual {residual:.3e}"
        gap = solution.objective_value - solution.dual_bound
        if not gap <= self.settings.optimality_tol * max(1.0, abs(solution.objective_value)):
            return f"duality gap {gap:.3e}"
        return None

    def _attempt(
        self, lp: LinearProgram, sf: _StandardForm, refactor_every: int, pivot_share: float
    ) -> LpSolution:
        art = sf.artificial_columns
        n_cols = sf.full.shape[1]
        basis = art.copy()
        at_upper = np.zeros(n_cols, dtype=bool)
        tab = sf.full.copy()
        beta = sf.rhs.copy()

        phase1_cost = np.zeros(n_cols)
        phase1_cost[art] = 1.0
        self._iterate(sf, tab, beta, basis, at_upper, sf.upper, phase1_cost, refactor_every, pivot_share)
        tab, beta = self._refactor(sf, basis, at_upper, sf.upper)

        infeasibility = float(np.sum(beta[np.isin(basis, art)]))
        scale = max(1.0, float(np.max(np.abs(sf.rhs))))
        if infeasibility > self.settings.feasibility_tol * scale:
            logger.debug("LP infeasible: phase-1 residual %.3e after %d pivots", infeasibility, self._pivots)
            farkas = (phase1_cost[basis] @ tab[:, art]) * sf.row_factor
            return LpSolution(
                status=LpStatus.INFEASIBLE,
                objective_value=math.inf,
                variable_values=np.full(lp.num_variables, math.nan),
                certificate=LpCertificate(
                    basis=tuple(int(b) for b in basis),
                    duals=farkas,
                    reduced_costs=-(lp.constraint_matrix.T @ farkas),
                ),
                pivots=self._pivots,
                dual_bound=math.inf,
            )

        upper = sf.upper.copy()
        upper[art] = 0.0
        unbounded = self._iterate(sf, tab, beta, basis, at_upper, upper, sf.cost, refactor_every, pivot_share)
        tab, beta = self._refactor(sf, basis, at_upper, upper)

        y = np.where(at_upper, upper, 0.0)
        y[basis] = beta
        y = np.where(np.isfinite(y), y, 0.0)
        x = sf.offset + sf.mapping @ y[: sf.n_mapped]
        if unbounded:
            return LpSolution(
                status=LpStatus.UNBOUNDED,
                objective_value=-math.inf,
                variable_values=x,
                pivots=self._pivots,
            )

        lo = np.array([b[0] for b in lp.variable_bounds])
        hi = np.array([b[1] for b in lp.variable_bounds])
        x = np.clip(x, lo, hi)
        duals = (sf.cost[basis] @ tab[:, art]) * sf.row_factor
        certificate = LpCertificate(
            basis=tuple(int(b) for b in basis),
            duals=duals,
            reduced_costs=lp.objective - lp.constraint_matrix.T @ duals,
        )
        return LpSolution(
            status=LpStatus.OPTIMAL,
            objective_value=float(lp.objective @ x),
            variable_values=x,
            certificate=certificate,
            pivots=self._pivots,
            dual_bound=lagrangian_bound(lp, duals),
        )

    def _solve_box_only(self, lp: LinearProgram) -> LpSolution:
        """No rows: each variable sits at the bound its cost prefers."""
        x = np.zeros(lp.num_variables)
        for j, (lo, hi) in enumerate(lp.variable_bounds):
            c = lp.objective[j]
            target = lo if c > 0 else hi if c < 0 else (lo if math.isfinite(lo) else hi if math.isfinite(hi) else 0.0)
            if not math.isfinite(target):
                return LpSolution(LpStatus.UNBOUNDED, -math.inf, x)
            x[j] = target
        empty = np.zeros(0)
        value = float(lp.objective @ x)
        return LpSolution(
            status=LpStatus.OPTIMAL,
            objective_value=value,
            variable_values=x,
            certificate=LpCertificate(basis=(), duals=empty, reduced_costs=lp.objective.copy()),
            dual_bound=value,
        )

    def _refactor(self, sf, basis, at_upper, upper) -> tuple[np.ndarray, np.ndarray]:
        """Tableau and basic values recomputed from the original matrix.

        Raises:
            _UnstableBasis: If the basis matrix is singular or too ill-conditioned
        """
        b = sf.full[:, basis]
        condition = float(np.linalg.cond(b))
        if not condition <= MAX_CONDITION:
            raise _UnstableBasis(f"basis condition number {condition:.3e}")
        nonbasic_upper = at_upper & np.isfinite(upper)
        nonbasic_upper[basis] = False
        shifted = sf.rhs - sf.full[:, nonbasic_upper] @ upper[nonbasic_upper]
        try:
            solved = np.linalg.solve(b, np.column_stack([sf.full, shifted]))
        except np.linalg.LinAlgError as e:
            raise _UnstableBasis(f"basis factorisation failed: {e}") from e
        return solved[:, :-1], solved[:, -1]

    def _iterate(
        self, sf, tab, beta, basis, at_upper, upper, cost, refactor_every: int, pivot_share: float
    ) -> bool:
        """Pivot until optimal; returns True when the LP is unbounded.

        ``tab``, ``beta``, ``basis`` and ``at_upper`` are updated in place.
        Termination is only declared right after a refactorisation.
        """
        tol = self.settings.feasibility_tol
        ptol = self.settings.pivot_tol
        n_cols = tab.shape[1]
        since_refactor = 0

        while True:
            if self._pivots >= self.settings.max_pivots:
                raise LpNumericalError(
                    f"simplex did not terminate within {self.settings.max_pivots} pivots",
                    pivots=self._pivots,
                )
            if since_refactor >= refactor_every:
                tab[:], beta[:] = self._refactor(sf, basis, at_upper, upper)
                since_refactor = 0

            reduced = cost - cost[basis] @ tab
            nonbasic = np.ones(n_cols, dtype=bool)
            nonbasic[basis] = False
            can_rise = nonbasic & ~at_upper & (upper > 0.0) & (reduced < -tol)
            can_fall = nonbasic & at_upper & (reduced > tol)
            eligible = np.flatnonzero(can_rise | can_fall)
            if eligible.size == 0:
                if since_refactor:
                    since_refactor = refactor_every
                    continue
                return False

            j = int(eligible[0])
            sigma = 1.0 if can_rise[j] else -1.0
            col = tab[:, j].copy()
            alpha = sigma * col
            floor = max(ptol, pivot_share * float(np.max(np.abs(col))))

            ratios = np.full(alpha.shape[0], math.inf)
            basic_upper = upper[basis]
            falling = alpha > floor
            ratios[falling] = np.maximum(beta[falling], 0.0) / alpha[falling]
            rising = (alpha < -floor) & np.isfinite(basic_upper)
            ratios[rising] = np.maximum(basic_upper[rising] - beta[rising], 0.0) / -alpha[rising]

            min_ratio = float(ratios.min()) if ratios.size else math.inf
            flip_limit = float(upper[j])
            if not math.isfinite(min_ratio) and not math.isfinite(flip_limit):
                if since_refactor:
                    since_refactor = refactor_every
                    continue
                return True

            self._pivots += 1
            since_refactor += 1

            if flip_limit <= min_ratio:
                beta -= sigma * flip_limit * col
                at_upper[j] = not at_upper[j]
                continue

            ties = np.flatnonzero(ratios <= min_ratio + ptol)
            sizes = np.abs(alpha[ties])
            ties = ties[sizes >= TIE_PIVOT_SHARE * float(sizes.max())]
            r = int(ties[np.argmin(basis[ties])])
            delta = sigma * float(ratios[r])
            entering_value = (upper[j] if at_upper[j] else 0.0) + delta

            beta -= delta * col
            leaving = int(basis[r])
            at_upper[leaving] = bool(alpha[r] < 0.0) and upper[leaving] > 0.0
            beta[r] = entering_value

            pivot_row = tab[r] / tab[r, j]
            tab -= np.outer(tab[:, j], pivot_row)
            tab[r] = pivot_row
            basis[r] = j
            at_upper[j] = False


def solve_lp(lp: LinearProgram, settings: SolverSettings | None = None) -> LpSolution:
    """Solve ``lp`` with a fresh ``SimplexSolver``."""
    return SimplexSolver(settings).solve(lp)


def verify_certificate(lp: LinearProgram, solution: LpSolution) -> CertificateReport:
    """Recompute primal feasibility, dual signs and complementary slackness.

    Args:
        lp: The program that was solved
        solution: An optimal solution carrying a certificate

    Returns:
        Residuals; all are zero for an exact optimum
    """
    if solution.certificate is None:
        raise ValueError("solution carries no certificate")
    x = solution.variable_values
    duals = solution.certificate.duals
    a = lp.constraint_matrix
    details: list[str] = []

    activity = a @ x if a.shape[0] else np.zeros(0)
    dual_sign = 0.0
    slackness = 0.0
    for i, (rel, bound) in enumerate(lp.constraint_bounds):
        gap = activity[i] - bound
        if rel is Relation.LE:
            dual_sign = max(dual_sign, duals[i])
        elif rel is Relation.GE:
            dual_sign = max(dual_sign, -duals[i])
        if rel is not Relation.EQ:
            slackness = max(slackness, abs(duals[i] * gap))

    reduced = lp.objective - a.T @ duals if a.shape[0] else lp.objective.copy()
    for j, (lo, hi) in enumerate(lp.variable_bounds):
        r = reduced[j]
        if r > 0.0:
            if math.isfinite(lo):
                slackness = max(slackness, r * (x[j] - lo))
            else:
                dual_sign = max(dual_sign, r)
                details.append(f"variable {j}: positive reduced cost with no lower bound")
        elif r < 0.0:
            if math.isfinite(hi):
                slackness = max(slackness, -r * (hi - x[j]))
            else:
                dual_sign = max(dual_sign, -r)
                details.append(f"variable {j}: negative reduced cost with no upper bound")

    return CertificateReport(
        primal_infeasibility=float(max(primal_residual(lp, x), 0.0)),
        dual_sign_violation=float(dual_sign),
        complementary_slackness=float(slackness),
        objective_gap=abs(float(lp.objective @ x) - lagrangian_bound(lp, duals)),
        details=details,
    )
