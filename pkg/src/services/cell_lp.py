"""Builders that turn the rate problem into linear programs.

The polynomial sub-problem of one cell becomes an exact LP through the
substitution ``z_k = e_k * Y_k``: every bilinear term appears only as that
product, and each ``e_k`` is boxed, so ``a*Y_k <= z_k <= b*Y_k`` encodes
``e_k in [a, b]`` exactly. Variables are ordered ``Y_0..Y_n, z_0..z_n``.
"""

import math
from typing import Sequence

import numpy as np

from src.models.channel import IntensityStatistics
from src.models.errors import ConfigError
from src.models.finite import ToleranceSet
from src.models.keyrate import Cell, ProtocolVariant
from src.models.lp import LinearProgram, Relation
from src.services.math_kernel import check_truncation_order, theta_truncation

# Error rate of background clicks assumed by the rate problem
BACKGROUND_ERROR = 0.5


def yield_index(k: int) -> int:
    return k


def error_index(n: int, k: int) -> int:
    return n + 1 + k


def active_statistics(
    stats: Sequence[IntensityStatistics], variant: ProtocolVariant
) -> list[IntensityStatistics]:
    """Intensities whose constraints the variant uses; index 0 is the signal.

    Raises:
        ConfigError: If no statistics are given or a decoy variant has no decoy
    """
    if len(stats) == 0:
        raise ConfigError("statistics must contain at least the signal intensity")
    if variant.uses_decoys:
        if len(stats) < 2:
            raise ConfigError(f"variant '{variant.value}' needs at least one decoy intensity")
        return list(stats)
    return [stats[0]]


class _RowBuilder:
    """Accumulates sparse rows of a fixed width."""

    def __init__(self, width: int) -> None:
        self.width = width
        self.rows: list[np.ndarray] = []
        self.bounds: list[tuple[Relation, float]] = []

    def add(self, coeffs: dict[int, float], relation: Relation, bound: float) -> None:
        row = np.zeros(self.width)
        for index, value in coeffs.items():
            row[index] += value
        self.rows.append(row)
        self.bounds.append((relation, float(bound)))

    def matrix(self) -> np.ndarray:
        if not self.rows:
            return np.zeros((0, self.width))
        return np.vstack(self.rows)


def _base_rows(
    stats: Sequence[IntensityStatistics],
    tolerances: ToleranceSet,
    n: int,
    variant: ProtocolVariant,
) -> _RowBuilder:
    """Background pin, ``z_k <= Y_k`` for k >= 3 and the relaxed statistics rows."""
    rows = _RowBuilder(2 * (n + 1))
    rows.add({error_index(n, 0): 1.0, yield_index(0): -BACKGROUND_ERROR}, Relation.EQ, 0.0)
    for k in range(3, n + 1):
        rows.add({error_index(n, k): 1.0, yield_index(k): -1.0}, Relation.LE, 0.0)

    for entry in active_statistics(stats, variant):
        lam = entry.mean_photon
        tol = tolerances.get(entry.label)
        scale = math.exp(lam)
        theta = theta_truncation(lam, n)
        q_lo = max(entry.gain - tol.delta_q, 0.0)
        q_hi = entry.gain + tol.delta_q
        # delta_e widens the error fraction gain*qber, the statistic the abort rule tests
        fraction = entry.gain * entry.qber
        f_lo = max(fraction - tol.delta_e, 0.0)
        f_hi = fraction + tol.delta_e

        weights = [1.0]
        for k in range(1, n + 1):
            weights.append(weights[-1] * lam / k)
        gain_row = {yield_index(k): w for k, w in enumerate(weights)}
        error_row = {error_index(n, k): w for k, w in enumerate(weights)}

        rows.add(gain_row, Relation.GE, q_lo * scale - theta)
        rows.add(gain_row, Relation.LE, q_hi * scale)
        rows.add(error_row, Relation.GE, f_lo * scale - theta)
        rows.add(error_row, Relation.LE, f_hi * scale)
    return rows


def _box_rows(rows: _RowBuilder, n: int, k: int, lo: float, hi: float) -> None:
    """Encode ``e_k in [lo, hi]`` as ``lo*Y_k <= z_k <= hi*Y_k``."""
    if lo > 0.0:
        rows.add({error_index(n, k): 1.0, yield_index(k): -lo}, Relation.GE, 0.0)
    rows.add({error_index(n, k): 1.0, yield_index(k): -hi}, Relation.LE, 0.0)


def _program(rows: _RowBuilder, objective: np.ndarray) -> LinearProgram:
    return LinearProgram(
        objective=objective,
        constraint_matrix=rows.matrix(),
        constraint_bounds=tuple(rows.bounds),
        variable_bounds=tuple((0.0, 1.0) for _ in range(rows.width)),
    )


def build_cell_lp(
    stats: Sequence[IntensityStatistics],
    tolerances: ToleranceSet,
    n: int,
    cell: Cell,
    variant: ProtocolVariant,
) -> LinearProgram:
    """LP whose minimum is the cell's lower bound on the rate objective.

    The objective ``Y_1*mu*(1 - xi1) [+ Y_2*mu^2/2*(1 - xi2)]`` is minimised
    directly, so the optimum is already in the rate convention.

    Args:
        stats: Statistics with the signal intensity first
        tolerances: Per-label gain/QBER tolerances
        n: Truncation order
        cell: Box on (e1, e2) with its xi bounds
        variant: Protocol variant

    Raises:
        ConfigError: If a two-photon variant gets a cell without e2 bounds
    """
    n = check_truncation_order(n)
    if variant.uses_two_photon and not cell.has_e2:
        raise ConfigError(f"variant '{variant.value}' needs cells with e2 bounds")

    rows = _base_rows(stats, tolerances, n, variant)
    _box_rows(rows, n, 1, cell.e1_lo, cell.e1_hi)
    if cell.has_e2:
        _box_rows(rows, n, 2, cell.e2_lo, cell.e2_hi)  # type: ignore[arg-type]
    else:
        _box_rows(rows, n, 2, 0.0, 1.0)

    mu = stats[0].mean_photon
    objective = np.zeros(rows.width)
    objective[yield_index(1)] = mu * (1.0 - cell.xi1_max)
    if variant.uses_two_photon:
        objective[yield_index(2)] = mu * mu / 2.0 * (1.0 - (cell.xi2_max if cell.xi2_max is not None else 1.0))
    return _program(rows, objective)


def build_feasibility_lp(
    stats: Sequence[IntensityStatistics],
    tolerances: ToleranceSet,
    n: int,
    variant: ProtocolVariant,
    at_least: tuple[int, float] | None = None,
    e1_max: float | None = None,
) -> LinearProgram:
    """Constraint system of the rate problem with a zero objective.

    Args:
        at_least: ``(k, t)`` adds ``z_k >= t*Y_k``, i.e. ``e_k >= t``
        e1_max: Restricts ``e_1`` to ``[0, e1_max]``
    """
    n = check_truncation_order(n)
    rows = _base_rows(stats, tolerances, n, variant)
    _box_rows(rows, n, 1, 0.0, 1.0 if e1_max is None else e1_max)
    _box_rows(rows, n, 2, 0.0, 1.0)
    if at_least is not None:
        k, t = at_least
        rows.add({error_index(n, k): 1.0, yield_index(k): -t}, Relation.GE, 0.0)
    return _program(rows, np.zeros(rows.width))
