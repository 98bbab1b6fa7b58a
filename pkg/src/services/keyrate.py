"""Partition-and-bound key-rate engine.

The (e1, e2) domain is shrunk by bisection, split into a grid of cells, and
every cell's LP is solved; the smallest feasible cell minimum is a certified
lower bound on the rate objective. Cells are independent, so they may be
solved in a process pool and reduced with ``min`` in any order.
"""

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from src.models.channel import IntensityStatistics
from src.models.errors import (
    ConfigError,
    DomainError,
    InconsistentStatisticsError,
    LpNumericalError,
)
from src.models.finite import ConsistencyDecision, ToleranceSet
from src.models.keyrate import (
    Cell,
    CellValue,
    EngineConfig,
    Partition,
    ProtocolVariant,
    RateResult,
    SeparateBounds,
)
from src.models.lp import LpStatus, SolverSettings
from src.services.analytic import analytic_rate
from src.services.cell_lp import (
    active_statistics,
    build_cell_lp,
    build_feasibility_lp,
    yield_index,
)
from src.services.lp_solver import SimplexSolver, lagrangian_bound
from src.services.math_kernel import binary_entropy, check_truncation_order, phi

logger = logging.getLogger(__name__)

# Cells whose minimum lies this close to the best value are refined together
REFINE_TIE_TOL = 1e-12


def xi_max(k: int, e_lo: float, e_hi: float) -> float:
    """Upper bound of ``phi((2e - 1)**k)`` over ``e in [e_lo, e_hi]``.

    Raises:
        DomainError: If the bounds are not ordered within [0, 1] or k is not 1 or 2
    """
    if k not in (1, 2):
        raise DomainError(f"xi_max is defined for k in (1, 2), got {k}")
    if not (0.0 <= e_lo <= e_hi <= 1.0):
        raise DomainError(f"invalid cell bounds [{e_lo}, {e_hi}]")
    lo, hi = 2.0 * e_lo - 1.0, 2.0 * e_hi - 1.0
    if lo <= 0.0 <= hi:
        return 1.0
    return max(phi(lo ** k), phi(hi ** k))


def _axis_edges(upper: float, count: int) -> tuple[float, ...]:
    """Uniform edges over [0, upper] with an edge pinned at 1/2 when it is interior."""
    edges = [upper * i / count for i in range(count)] + [upper]
    snapped = [0.5 if abs(e - 0.5) <= 1e-12 else e for e in edges]
    if 0.0 < 0.5 < upper and 0.5 not in snapped:
        snapped.append(0.5)
    return tuple(sorted(set(snapped)))


def _make_cell(e1: tuple[float, float], e2: tuple[float, float] | None) -> Cell:
    if e2 is None:
        return Cell(e1_lo=e1[0], e1_hi=e1[1], xi1_max=xi_max(1, *e1))
    return Cell(
        e1_lo=e1[0],
        e1_hi=e1[1],
        e2_lo=e2[0],
        e2_hi=e2[1],
        xi1_max=xi_max(1, *e1),
        xi2_max=xi_max(2, *e2),
    )


def build_partition(
    e1_up: float,
    e2_up: float | None,
    resolution: tuple[int, int],
) -> Partition:
    """Uniform grid over ``[0, e1_up] x [0, e2_up]``.

    With ``e2_up`` None only the e1 axis is split (single-photon variants).

    Raises:
        DomainError: If a bound lies outside (0, 1] or a resolution is below 1
    """
    n1, n2 = resolution
    if n1 < 1 or n2 < 1:
        raise DomainError(f"resolution must be positive, got {resolution}")
    if not (0.0 < e1_up <= 1.0):
        raise DomainError(f"e1_up must lie in (0, 1], got {e1_up}")
    if e2_up is not None and not (0.0 < e2_up <= 1.0):
        raise DomainError(f"e2_up must lie in (0, 1], got {e2_up}")

    e1_edges = _axis_edges(e1_up, n1)
    e2_edges = _axis_edges(e2_up, n2) if e2_up is not None else ()
    cells: list[Cell] = []
    for a1, b1 in zip(e1_edges, e1_edges[1:]):
        if e2_up is None:
            cells.append(_make_cell((a1, b1), None))
            continue
        for a2, b2 in zip(e2_edges, e2_edges[1:]):
            cells.append(_make_cell((a1, b1), (a2, b2)))
    return Partition(
        cells=tuple(cells),
        resolution=(n1, n2 if e2_up is not None else 1),
        domain=(e1_up, e2_up),
        e1_edges=e1_edges,
        e2_edges=e2_edges,
    )


def _split_cell(cell: Cell) -> list[Cell]:
    """Halve every dimension of a cell."""
    m1 = 0.5 * (cell.e1_lo + cell.e1_hi)
    halves1 = [(cell.e1_lo, m1), (m1, cell.e1_hi)]
    if not cell.has_e2:
        return [_make_cell(h, None) for h in halves1]
    m2 = 0.5 * (cell.e2_lo + cell.e2_hi)  # type: ignore[operator]
    halves2 = [(cell.e2_lo, m2), (m2, cell.e2_hi)]
    return [_make_cell(h1, h2) for h1 in halves1 for h2 in halves2]  # type: ignore[arg-type]


def compute_error_upper_bound(
    which: str,
    stats: Sequence[IntensityStatistics],
    tolerances: ToleranceSet,
    n: int,
    variant: ProtocolVariant = ProtocolVariant.DSCD,
    e1_up: float | None = None,
    width: float = 1e-4,
    settings: SolverSettings | None = None,
) -> float:
    """Certified upper bound on the largest feasible e1 (or e2).

    Bisects on ``t`` with the monotone test "some feasible point has
    ``e_k >= t``" and returns the upper end of the final bracket.

    Args:
        which: ``"e1"`` or ``"e2"``
        e1_up: For ``"e2"``, restricts e1 to ``[0, e1_up]``
        width: Final bracket width

    Raises:
        InconsistentStatisticsError: If the constraint system is infeasible
    """
    if which not in ("e1", "e2"):
        raise DomainError(f"which must be 'e1' or 'e2', got {which!r}")
    n = check_truncation_order(n)
    k = 1 if which == "e1" else 2
    pin = e1_up if which == "e2" else None
    solver = SimplexSolver(settings)

    def feasible(t: float) -> bool:
        lp = build_feasibility_lp(stats, tolerances, n, variant, at_least=(k, t), e1_max=pin)
        try:
            return solver.solve(lp).status is not LpStatus.INFEASIBLE
        except LpNumericalError as e:
            # Only a certified infeasible verdict may shrink the bracket.
            logger.warning("Feasibility LP at %s >= %.6f not certified: %s", which, t, e)
            return True

    if not feasible(0.0):
        raise InconsistentStatisticsError()
    if feasible(1.0):
        return 1.0
    lo, hi = 0.0, 1.0
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    logger.debug("%s upper bound %.6f after bisection", which, hi)
    return hi


def compute_yield_lower_bound(
    k: int,
    stats: Sequence[IntensityStatistics],
    tolerances: ToleranceSet,
    n: int,
    variant: ProtocolVariant = ProtocolVariant.DSCD,
    settings: SolverSettings | None = None,
) -> float:
    """Smallest ``Y_k`` compatible with the statistics.

    Raises:
        InconsistentStatisticsError: If the constraint system is infeasible
    """
    n = check_truncation_order(n)
    if not 0 <= k <= n:
        raise DomainError(f"photon number must lie in [0, {n}], got {k}")
    lp = build_feasibility_lp(stats, tolerances, n, variant)
    objective = np.zeros(lp.num_variables)
    objective[yield_index(k)] = 1.0
    lp = replace(lp, objective=objective)
    try:
        solution = SimplexSolver(settings).solve(lp)
    except LpNumericalError as e:
        logger.warning("Y%d lower bound not certified, using %s: %s", k, e.lower_bound, e)
        return max(0.0, e.lower_bound or 0.0)
    if solution.status is LpStatus.INFEASIBLE:
        raise InconsistentStatisticsError()
    return max(0.0, min(solution.objective_value, solution.dual_bound))


@dataclass(frozen=True)
class _CellTask:
    stats: tuple[IntensityStatistics, ...]
    tolerances: ToleranceSet
    n: int
    variant: ProtocolVariant
    settings: SolverSettings
    cell: Cell


def _solve_cell(task: _CellTask) -> CellValue:
    lp = build_cell_lp(task.stats, task.tolerances, task.n, task.cell, task.variant)
    try:
        solution = SimplexSolver(task.settings).solve(lp)
    except LpNumericalError as e:
        bound = e.lower_bound if e.lower_bound is not None else lagrangian_bound(lp, np.zeros(lp.num_constraints))
        logger.warning("Cell %s fell back to bound %.6g: %s", task.cell, bound, e)
        return CellValue(task.cell, bound)
    if solution.status is LpStatus.INFEASIBLE:
        return CellValue(task.cell, None)
    if solution.status is LpStatus.UNBOUNDED:
        # Boxed variables make this unreachable unless the LP is malformed.
        raise ConfigError("cell LP reported unbounded")
    # The multiplier bound never exceeds the true cell minimum.
    return CellValue(task.cell, min(solution.objective_value, solution.dual_bound))


@dataclass
class ObjectiveBound:
    """Lower bound on the rate objective plus per-cell diagnostics."""
    r_lb: float
    per_cell_values: list[CellValue] = field(default_factory=list)
    partition: Partition | None = None
    e1_up: float = 1.0
    e2_up: float | None = None


class KeyRateEngine:
    """Certified key rates for one engine configuration.

    Attributes:
        config: Truncation order, grid, refinement and solver settings
    """

    def __init__(self, config: EngineConfig | None = None) -> None:
        self.config = config or EngineConfig()

    def domain(
        self,
        stats: Sequence[IntensityStatistics],
        tolerances: ToleranceSet,
        variant: ProtocolVariant,
    ) -> tuple[float, float | None]:
        """(e1_up, e2_up) from the configuration or by bisection."""
        cfg = self.config
        if cfg.domain is not None:
            e1_up, e2_up = cfg.domain
            if variant.uses_two_photon and e2_up is None:
                raise ConfigError(f"variant '{variant.value}' needs an e2 domain bound")
            return e1_up, (e2_up if variant.uses_two_photon else None)
        e1_up = compute_error_upper_bound(
            "e1", stats, tolerances, cfg.truncation, variant,
            width=cfg.bisection_width, settings=cfg.solver,
        )
        e2_up = None
        if variant.uses_two_photon:
            e2_up = compute_error_upper_bound(
                "e2", stats, tolerances, cfg.truncation, variant,
                e1_up=e1_up, width=cfg.bisection_width, settings=cfg.solver,
            )
        logger.info("Domain shrunk to e1 <= %.4f, e2 <= %s", e1_up,
                    f"{e2_up:.4f}" if e2_up is not None else "-")
        return e1_up, e2_up

    def _evaluate(self, tasks: list[_CellTask]) -> list[CellValue]:
        if self.config.workers > 1 and len(tasks) > 1:
            chunk = max(1, len(tasks) // (4 * self.config.workers))
            with ProcessPoolExecutor(max_workers=self.config.workers) as pool:
                return list(pool.map(_solve_cell, tasks, chunksize=chunk))
        return [_solve_cell(task) for task in tasks]

    def lower_bound_objective(
        self,
        stats: Sequence[IntensityStatistics],
        tolerances: ToleranceSet,
        variant: ProtocolVariant,
    ) -> ObjectiveBound:
        """Minimum over feasible cells of the cell LP optima.

        Raises:
            InconsistentStatisticsError: If every cell is infeasible
        """
        cfg = self.config
        active_statistics(stats, variant)
        e1_up, e2_up = self.domain(stats, tolerances, variant)
        partition = build_partition(e1_up, e2_up, cfg.grid)

        frozen = tuple(stats)

        def tasks_for(cells: Sequence[Cell]) -> list[_CellTask]:
            return [
                _CellTask(frozen, tolerances, cfg.truncation, variant, cfg.solver, c)
                for c in cells
            ]

        values = self._evaluate(tasks_for(partition.cells))
        for refinement_pass in range(cfg.refinement):
            feasible = [v.value for v in values if v.value is not None]
            if not feasible:
                break
            best = min(feasible)
            targets = [v for v in values if v.value is not None and v.value <= best + REFINE_TIE_TOL]
            children = [c for v in targets for c in _split_cell(v.cell)]
            split = {id(v) for v in targets}
            kept = [v for v in values if id(v) not in split]
            # A child is a subset of its parent, so the parent's bound still holds.
            parents = [v.value for v in targets for _ in _split_cell(v.cell)]
            refined = [
                CellValue(cv.cell, None if cv.value is None else max(cv.value, parent))  # type: ignore[type-var]
                for cv, parent in zip(self._evaluate(tasks_for(children)), parents)
            ]
            values = kept + refined
            logger.info("Refinement pass %d split %d cell(s)", refinement_pass + 1, len(targets))

        feasible = [v.value for v in values if v.value is not None]
        logger.info(
            "Evaluated %d cells for %s: %d feasible, %d infeasible",
            len(values), variant.value, len(feasible), len(values) - len(feasible),
        )
        if not feasible:
            raise InconsistentStatisticsError()
        return ObjectiveBound(
            r_lb=min(feasible),
            per_cell_values=values,
            partition=partition,
            e1_up=e1_up,
            e2_up=e2_up,
        )

    def separate_bounds_objective(
        self,
        stats: Sequence[IntensityStatistics],
        tolerances: ToleranceSet,
        variant: ProtocolVariant,
    ) -> SeparateBounds:
        """Objective bound from ``Y_k^L`` and ``e_k^up`` taken one at a time.

        Each term ``Y_k mu^k/k! (1 - Phi((2e_k - 1)^k))`` grows with ``Y_k``
        and shrinks as ``e_k`` rises toward 1/2, so plugging in the separate
        bounds gives a valid but looser value than the partitioned LPs.
        """
        cfg = self.config
        active_statistics(stats, variant)
        e1_up, e2_up = self.domain(stats, tolerances, variant)
        e_upper = {1: e1_up}
        if e2_up is not None:
            e_upper[2] = e2_up
        mu = stats[0].mean_photon
        y_lower: dict[int, float] = {}
        terms = []
        for k, e_up in e_upper.items():
            y_lower[k] = compute_yield_lower_bound(
                k, stats, tolerances, cfg.truncation, variant, cfg.solver
            )
            terms.append(y_lower[k] * mu ** k / math.factorial(k) * (1.0 - xi_max(k, 0.0, e_up)))
        r_lb = math.fsum(terms)
        logger.info("Separate bounds for %s: Y=%s e=%s r_lb %.6e", variant.value, y_lower, e_upper, r_lb)
        return SeparateBounds(y_lower=y_lower, e_upper=e_upper, r_lb=r_lb)

    def assemble_rate(self, signal: IntensityStatistics, r_lb: float) -> float:
        """Half the privacy term minus the error-correction leakage."""
        leakage = signal.gain * self.config.f_ec * binary_entropy(signal.qber)
        rate = 0.5 * (math.exp(-signal.mean_photon) * r_lb - leakage)
        return max(0.0, rate) if self.config.clamp_negative else rate

    def compute_rate(
        self,
        stats: Sequence[IntensityStatistics],
        tolerances: ToleranceSet | None,
        variant: ProtocolVariant,
        coincidence: ConsistencyDecision | None = None,
    ) -> RateResult:
        """Full pipeline: domain, partition, cell LPs, rate assembly.

        Args:
            stats: Statistics with the signal intensity first
            tolerances: Per-label tolerances; None means asymptotic
            variant: Requested protocol variant
            coincidence: Outcome of coincidence monitoring; an inconsistent
                outcome drops the two-photon credit

        Raises:
            InconsistentStatisticsError: If no cell is feasible
        """
        start = time.perf_counter()
        tol = tolerances or ToleranceSet.asymptotic(s.label for s in stats)
        requested = variant
        if coincidence is not None and not coincidence.consistent and variant.uses_two_photon:
            variant = variant.single_photon_counterpart
            logger.warning(
                "Coincidence rate %.4g outside %.4g +/- %.4g; falling back from %s to %s",
                coincidence.observed_rate, coincidence.expected_rate, coincidence.half_width,
                requested.value, variant.value,
            )

        bound = self.lower_bound_objective(stats, tol, variant)
        rate = self.assemble_rate(stats[0], bound.r_lb)
        analytic = analytic_rate(stats, self.config) if len(stats) == 2 else None

        echo = self.config.echo()
        echo["tolerances"] = {k: [t.delta_q, t.delta_e] for k, t in tol.by_label.items()}
        wall_ms = (time.perf_counter() - start) * 1000.0
        logger.info("%s rate %.6e (r_lb %.6e) in %.0f ms", variant.value, rate, bound.r_lb, wall_ms)
        return RateResult(
            variant=variant,
            rate_per_pulse=rate,
            r_lb=bound.r_lb,
            analytic_rate=analytic.rate_per_pulse if analytic is not None else None,
            analytic=analytic,
            e1_up=bound.e1_up,
            e2_up=bound.e2_up,
            per_cell_values=bound.per_cell_values,
            config_echo=echo,
            requested_variant=requested,
            wall_ms=wall_ms,
        )


def lower_bound_objective(
    stats: Sequence[IntensityStatistics],
    tolerances: ToleranceSet,
    config: EngineConfig,
    variant: ProtocolVariant,
) -> ObjectiveBound:
    return KeyRateEngine(config).lower_bound_objective(stats, tolerances, variant)


def assemble_rate(signal: IntensityStatistics, r_lb: float, config: EngineConfig) -> float:
    return KeyRateEngine(config).assemble_rate(signal, r_lb)


def compute_rate(
    stats: Sequence[IntensityStatistics],
    tolerances: ToleranceSet | None,
    config: EngineConfig,
    variant: ProtocolVariant,
    coincidence: ConsistencyDecision | None = None,
) -> RateResult:
    return KeyRateEngine(config).compute_rate(stats, tolerances, variant, coincidence)
