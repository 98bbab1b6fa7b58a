"""Tests for the cell LP and feasibility LP builders.

The honest channel's own yields and errors must satisfy every row, and the
LP optimum of a cell must be a point of the original (bilinear) problem that
no random feasible point beats.
"""

import math

import numpy as np
import pytest
from scipy.optimize import linprog

from src.models.channel import ChannelParams, IntensityStatistics
from src.models.errors import ConfigError
from src.models.finite import Tolerance, ToleranceSet
from src.models.keyrate import Cell, EngineConfig, ProtocolVariant
from src.models.lp import LpStatus, Relation
from src.services.cell_lp import (
    active_statistics,
    build_cell_lp,
    build_feasibility_lp,
    error_index,
    yield_index,
)
from src.services.channel_model import error_rate_k, expected_statistics, truth_point
from src.services.finite_stats import check_abort
from src.services.keyrate import KeyRateEngine, xi_max
from src.services.lp_solver import solve_lp

HONEST = ChannelParams(eta=0.3, y0=1.7e-6, e_detector=0.033)


def _rows_hold(lp, x: np.ndarray, tol: float = 1e-9) -> bool:
    activity = lp.constraint_matrix @ x
    for value, (rel, bound) in zip(activity, lp.constraint_bounds):
        scale = max(1.0, abs(bound))
        if rel is Relation.LE and value > bound + tol * scale:
            return False
        if rel is Relation.GE and value < bound - tol * scale:
            return False
        if rel is Relation.EQ and abs(value - bound) > tol * scale:
            return False
    return all(lo - tol <= v <= hi + tol for v, (lo, hi) in zip(x, lp.variable_bounds))


def _cell_around(e1: float, e2: float, width: float = 0.02) -> Cell:
    a1, b1 = max(0.0, e1 - width), min(1.0, e1 + width)
    a2, b2 = max(0.0, e2 - width), min(1.0, e2 + width)
    return Cell(a1, b1, a2, b2, xi_max(1, a1, b1), xi_max(2, a2, b2))


class TestActiveStatistics:
    def test_single_photon_variants_use_signal_only(self):
        stats = expected_statistics(HONEST, [0.5, 0.1])
        assert active_statistics(stats, ProtocolVariant.BB84) == [stats[0]]
        assert active_statistics(stats, ProtocolVariant.CD) == [stats[0]]

    def test_decoy_variants_need_a_decoy(self):
        stats = expected_statistics(HONEST, [0.5])
        with pytest.raises(ConfigError):
            active_statistics(stats, ProtocolVariant.DECOY)


class TestTruthPoint:
    @pytest.mark.parametrize("variant", list(ProtocolVariant))
    def test_honest_point_satisfies_every_row(self, variant: ProtocolVariant):
        n = 8
        stats = expected_statistics(HONEST, [0.5, 0.1, 0.02])
        tolerances = ToleranceSet.asymptotic(s.label for s in stats)
        yields, weights = truth_point(HONEST, n)
        e1, e2 = error_rate_k(HONEST, 1), error_rate_k(HONEST, 2)
        lp = build_cell_lp(stats, tolerances, n, _cell_around(e1, e2), variant)
        assert _rows_hold(lp, np.concatenate([yields, weights]))

    @pytest.mark.parametrize("gain_sign,error_sign", [(1, 1), (1, -1), (-1, 1), (-1, -1)])
    def test_accepted_observation_keeps_honest_point_feasible(self, gain_sign: int, error_sign: int):
        n = 8
        expected = expected_statistics(HONEST, [0.5, 0.1])
        tolerances = ToleranceSet({s.label: Tolerance(2e-3, 1e-3) for s in expected})
        observed = []
        for s in expected:
            gain = s.gain + gain_sign * 0.999 * 2e-3
            fraction = s.gain * s.qber + error_sign * 0.999 * 1e-3
            observed.append(IntensityStatistics(s.label, s.mean_photon, gain, fraction / gain))
        assert check_abort(observed, expected, tolerances).accepted

        yields, weights = truth_point(HONEST, n)
        cell = _cell_around(error_rate_k(HONEST, 1), error_rate_k(HONEST, 2))
        lp = build_cell_lp(observed, tolerances, n, cell, ProtocolVariant.DSCD)
        assert _rows_hold(lp, np.concatenate([yields, weights]))

    def test_cell_minimum_below_honest_objective(self):
        n = 8
        stats = expected_statistics(HONEST, [0.5, 0.1])
        tolerances = ToleranceSet.asymptotic(s.label for s in stats)
        yields, weights = truth_point(HONEST, n)
        cell = _cell_around(error_rate_k(HONEST, 1), error_rate_k(HONEST, 2))
        lp = build_cell_lp(stats, tolerances, n, cell, ProtocolVariant.DSCD)
        sol = solve_lp(lp)
        assert sol.status is LpStatus.OPTIMAL
        at_truth = float(lp.objective @ np.concatenate([yields, weights]))
        assert sol.objective_value <= at_truth + 1e-12

    def test_background_error_is_pinned(self):
        n = 5
        stats = expected_statistics(HONEST, [0.5, 0.1])
        lp = build_cell_lp(
            stats, ToleranceSet(), n, _cell_around(0.03, 0.03), ProtocolVariant.DSCD
        )
        sol = solve_lp(lp)
        x = sol.variable_values
        assert x[error_index(n, 0)] == pytest.approx(0.5 * x[yield_index(0)], abs=1e-12)


class TestCellLpStructure:
    def test_two_photon_variant_needs_e2_bounds(self):
        stats = expected_statistics(HONEST, [0.5, 0.1])
        cell = Cell(0.0, 0.1, xi1_max=xi_max(1, 0.0, 0.1))
        with pytest.raises(ConfigError):
            build_cell_lp(stats, ToleranceSet(), 6, cell, ProtocolVariant.DSCD)

    def test_single_photon_objective_has_no_two_photon_term(self):
        n = 6
        stats = expected_statistics(HONEST, [0.5, 0.1])
        cell = Cell(0.0, 0.1, xi1_max=xi_max(1, 0.0, 0.1))
        lp = build_cell_lp(stats, ToleranceSet(), n, cell, ProtocolVariant.DECOY)
        assert lp.objective[yield_index(1)] == pytest.approx(0.5 * (1.0 - cell.xi1_max))
        assert lp.objective[yield_index(2)] == 0.0

    def test_decoy_rows_only_for_decoy_variants(self):
        n = 6
        stats = expected_statistics(HONEST, [0.5, 0.1])
        cell = _cell_around(0.03, 0.03)
        bb84 = build_cell_lp(stats, ToleranceSet(), n, cell, ProtocolVariant.CD)
        dscd = build_cell_lp(stats, ToleranceSet(), n, cell, ProtocolVariant.DSCD)
        assert dscd.num_constraints == bb84.num_constraints + 4

    def test_tolerances_widen_the_rows(self):
        n = 6
        stats = expected_statistics(HONEST, [0.5, 0.1])
        cell = _cell_around(0.03, 0.03)
        tight = build_cell_lp(stats, ToleranceSet(), n, cell, ProtocolVariant.DSCD)
        loose_tol = ToleranceSet({s.label: Tolerance(1e-3, 1e-3) for s in stats})
        loose = build_cell_lp(stats, loose_tol, n, cell, ProtocolVariant.DSCD)
        for (rel, b_tight), (_, b_loose) in zip(tight.constraint_bounds, loose.constraint_bounds):
            if rel is Relation.LE:
                assert b_loose >= b_tight
            elif rel is Relation.GE:
                assert b_loose <= b_tight


class TestBilinearEquivalence:
    """At n = 3 the LP optimum maps back to a point of the bilinear problem."""

    N = 3

    def _setup(self):
        stats = [
            IntensityStatistics("signal", 0.6, 0.2, 0.05),
            IntensityStatistics("decoy1", 0.15, 0.06, 0.06),
        ]
        tolerances = ToleranceSet({s.label: Tolerance(0.05, 0.05) for s in stats})
        cell = Cell(0.0, 0.2, 0.0, 0.3, xi_max(1, 0.0, 0.2), xi_max(2, 0.0, 0.3))
        return stats, tolerances, cell

    def _objective(self, cell: Cell, y: np.ndarray) -> float:
        mu = 0.6
        return y[1] * mu * (1 - cell.xi1_max) + y[2] * mu * mu / 2 * (1 - cell.xi2_max)

    def test_optimum_is_a_bilinear_point(self):
        stats, tolerances, cell = self._setup()
        lp = build_cell_lp(stats, tolerances, self.N, cell, ProtocolVariant.DSCD)
        sol = solve_lp(lp)
        assert sol.status is LpStatus.OPTIMAL
        x = sol.variable_values
        y, z = x[: self.N + 1], x[self.N + 1 :]
        for k, (lo, hi) in ((1, (cell.e1_lo, cell.e1_hi)), (2, (cell.e2_lo, cell.e2_hi))):
            if y[k] > 1e-9:
                assert lo - 1e-7 <= z[k] / y[k] <= hi + 1e-7
        assert sol.objective_value == pytest.approx(self._objective(cell, y), abs=1e-12)

    def test_random_bilinear_points_never_beat_optimum(self):
        stats, tolerances, cell = self._setup()
        lp = build_cell_lp(stats, tolerances, self.N, cell, ProtocolVariant.DSCD)
        best = solve_lp(lp).objective_value
        rng = np.random.default_rng(11)
        feasible = 0
        for _ in range(20000):
            y = rng.uniform(0.0, 1.0, self.N + 1) * np.array([0.2, 1.0, 1.0, 1.0])
            e = np.array(
                [
                    0.5,
                    rng.uniform(cell.e1_lo, cell.e1_hi),
                    rng.uniform(cell.e2_lo, cell.e2_hi),
                    rng.uniform(0.0, 1.0),
                ]
            )
            x = np.concatenate([y, e * y])
            if _rows_hold(lp, x, tol=0.0):
                feasible += 1
                assert float(lp.objective @ x) >= best - 1e-12
        assert feasible > 0


class TestFeasibilityLp:
    def test_honest_statistics_are_feasible(self):
        stats = expected_statistics(HONEST, [0.5, 0.1])
        lp = build_feasibility_lp(stats, ToleranceSet(), 8, ProtocolVariant.DSCD)
        assert solve_lp(lp).status is LpStatus.OPTIMAL
        assert not np.any(lp.objective)

    def test_error_floor_above_attainable_is_infeasible(self):
        stats = expected_statistics(HONEST, [0.5, 0.1])
        lp = build_feasibility_lp(stats, ToleranceSet(), 8, ProtocolVariant.DSCD, at_least=(1, 0.99))
        assert solve_lp(lp).status is LpStatus.INFEASIBLE

    def test_inconsistent_statistics_are_infeasible(self):
        stats = [
            IntensityStatistics("signal", 0.5, 0.01, 0.05),
            IntensityStatistics("decoy1", 0.1, 0.09, 0.05),
        ]
        lp = build_feasibility_lp(stats, ToleranceSet(), 8, ProtocolVariant.DECOY)
        assert solve_lp(lp).status is LpStatus.INFEASIBLE
        assert math.isinf(solve_lp(lp).objective_value)


def _highs_minimum(lp) -> float:
    a_ub, b_ub = [], []
    for row, (rel, b) in zip(lp.constraint_matrix, lp.constraint_bounds):
        sign = -1.0 if rel is Relation.GE else 1.0
        if rel is Relation.EQ:
            a_ub.extend([row, -row])
            b_ub.extend([b, -b])
        else:
            a_ub.append(sign * row)
            b_ub.append(sign * b)
    bounds = [(lo if math.isfinite(lo) else None, hi if math.isfinite(hi) else None)
              for lo, hi in lp.variable_bounds]
    result = linprog(lp.objective, A_ub=np.array(a_ub), b_ub=np.array(b_ub),
                     bounds=bounds, method="highs")
    return float(result.fun) if result.status == 0 else math.inf


class TestGridSearch:
    """Cell minima at n = 3 against a 0.01 grid over (e1, e2) with exact entropy terms."""

    N = 3
    STEP = 0.01
    POINTS = 5

    def _point_value(self, stats, e1: float, e2: float) -> float:
        point = Cell(e1, e1, e2, e2, xi_max(1, e1, e1), xi_max(2, e2, e2))
        return _highs_minimum(build_cell_lp(stats, ToleranceSet(), self.N, point, ProtocolVariant.DSCD))

    @pytest.mark.parametrize("seed", range(20))
    def test_cell_minimum_brackets_grid_minimum(self, seed: int):
        stats = expected_statistics(HONEST, [0.5, 0.1])
        rng = np.random.default_rng(seed)
        width = self.STEP * (self.POINTS - 1)
        lo1 = round(max(0.0, error_rate_k(HONEST, 1) + rng.uniform(-0.03, 0.0)), 2)
        lo2 = round(max(0.0, error_rate_k(HONEST, 2) + rng.uniform(-0.03, 0.0)), 2)
        cell = Cell(lo1, lo1 + width, lo2, lo2 + width,
                    xi_max(1, lo1, lo1 + width), xi_max(2, lo2, lo2 + width))
        sol = solve_lp(build_cell_lp(stats, ToleranceSet(), self.N, cell, ProtocolVariant.DSCD))

        e1s = [lo1 + i * self.STEP for i in range(self.POINTS)]
        e2s = [lo2 + j * self.STEP for j in range(self.POINTS)]
        grid = np.array([[self._point_value(stats, a, b) for b in e2s] for a in e1s])
        finite = np.isfinite(grid)
        if not finite.any():
            return
        assert sol.status is LpStatus.OPTIMAL
        assert np.all(sol.objective_value <= grid[finite] + 1e-9)

        mu = stats[0].mean_photon
        spread = mu * (cell.xi1_max - min(xi_max(1, a, a) for a in e1s))
        spread += mu * mu / 2.0 * (cell.xi2_max - min(xi_max(2, b, b) for b in e2s))
        steps = [
            abs(grid[i + di, j + dj] - grid[i, j]) / self.STEP
            for i in range(self.POINTS)
            for j in range(self.POINTS)
            for di, dj in ((1, 0), (0, 1))
            if i + di < self.POINTS and j + dj < self.POINTS
            and finite[i, j] and finite[i + di, j + dj]
        ]
        lipschitz = max(steps, default=0.0)
        assert grid[finite].min() - sol.objective_value <= spread + 2.0 * lipschitz * self.STEP + 1e-9

    @pytest.mark.slow
    def test_engine_bound_against_brute_force(self):
        stats = expected_statistics(HONEST, [0.5, 0.1])
        engine = KeyRateEngine(EngineConfig(truncation=self.N, grid=(4, 4), domain=(0.2, 0.3)))
        bound = engine.lower_bound_objective(stats, ToleranceSet(), ProtocolVariant.DSCD)

        e1s = np.round(np.arange(0.0, 0.2 + 1e-9, self.STEP), 2)
        e2s = np.round(np.arange(0.0, 0.3 + 1e-9, self.STEP), 2)
        grid = np.array([[self._point_value(stats, a, b) for b in e2s] for a in e1s])
        finite = np.isfinite(grid)
        assert finite.any()
        assert bound.r_lb <= grid[finite].min() + 1e-9

        best = min((v for v in bound.per_cell_values if v.value is not None), key=lambda v: v.value)
        cell = best.cell
        mu = stats[0].mean_photon

        def floor(k: int, lo: float, hi: float) -> float:
            return min(xi_max(k, lo, lo), xi_max(k, hi, hi))

        spread = mu * (cell.xi1_max - floor(1, cell.e1_lo, cell.e1_hi))
        spread += mu * mu / 2.0 * (cell.xi2_max - floor(2, cell.e2_lo, cell.e2_hi))
        steps = np.concatenate([
            np.abs(np.diff(grid, axis=0))[finite[1:] & finite[:-1]],
            np.abs(np.diff(grid, axis=1))[finite[:, 1:] & finite[:, :-1]],
        ]) / self.STEP
        lipschitz = float(steps.max(initial=0.0))
        assert grid[finite].min() - bound.r_lb <= spread + 2.0 * lipschitz * self.STEP + 1e-9
