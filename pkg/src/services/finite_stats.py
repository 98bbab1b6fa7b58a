"""Hoeffding tolerances, the abort rule and the coincidence-rate check.

Each intensity carries two Hoeffding intervals: one on the gain and one on
the error fraction (errors over all sifted rounds). Both statistics are
averages of N i.i.d. indicators, so ``exp(-2*N*delta**2)`` bounds each tail.
"""

import logging
import math
from typing import Mapping, Sequence

from src.models.channel import IntensityStatistics
from src.models.errors import DomainError, LabelMismatchError
from src.models.finite import (
    AbortDecision,
    AbortOutcome,
    Consistency,
    ConsistencyDecision,
    SecurityParams,
    Tolerance,
    ToleranceSet,
)
from src.models.protocol import ObservedStatistics

logger = logging.getLogger(__name__)


def _tail_share(params: SecurityParams) -> float:
    budget = params.epsilon_completeness - 2.0 * params.epsilon_stat
    if budget <= 0.0:
        raise DomainError(
            f"epsilon_completeness - 2*epsilon_stat must be positive, got {budget!r}"
        )
    # Two-sided intervals on two statistics for each of K+1 intensities
    return budget / (4.0 * (params.num_decoys + 1))


def hoeffding_delta(rounds: int, params: SecurityParams) -> float:
    """Half-width giving every tail probability an equal share of the budget.

    Args:
        rounds: Number of estimation rounds N of the intensity
        params: Completeness parameters

    Raises:
        DomainError: If ``rounds < 1`` or the completeness budget is exhausted
    """
    if rounds < 1:
        raise DomainError(f"rounds must be >= 1, got {rounds}")
    share = _tail_share(params)
    return math.sqrt(-math.log(share) / (2.0 * rounds))


def completeness_bound(
    rounds: Mapping[str, int],
    tolerances: ToleranceSet,
    params: SecurityParams,
) -> float:
    """Upper bound on the honest abort probability.

    Sums the two-sided Hoeffding tails of every gain and error-fraction
    interval, plus twice the coincidence-check parameter.
    """
    tails = []
    for label, n in rounds.items():
        tol = tolerances.get(label)
        tails.append(math.exp(-2.0 * n * tol.delta_q**2))
        tails.append(math.exp(-2.0 * n * tol.delta_e**2))
    return 2.0 * math.fsum(tails) + 2.0 * params.epsilon_stat


def tolerances_for(
    stats: Sequence[IntensityStatistics], params: SecurityParams
) -> ToleranceSet:
    """Hoeffding tolerances for every intensity from its round count."""
    by_label = {}
    for entry in stats:
        if entry.rounds < 1:
            raise DomainError(f"intensity '{entry.label}' has no round count for finite tolerances")
        delta = hoeffding_delta(entry.rounds, params)
        by_label[entry.label] = Tolerance(delta_q=delta, delta_e=delta)
    return ToleranceSet(by_label)


def _error_fraction(entry: IntensityStatistics) -> float:
    return entry.gain * entry.qber


def check_abort(
    observed: ObservedStatistics | Sequence[IntensityStatistics],
    expected: Sequence[IntensityStatistics],
    tolerances: ToleranceSet,
) -> AbortDecision:
    """Accept iff every gain and error fraction lies in its closed interval.

    The error fraction is ``gain * qber``, which for simulator output equals
    the error count over all estimation rounds. The cell LP widens the same
    statistic by ``delta_e``, so an accepted run keeps the honest point feasible.

    Raises:
        LabelMismatchError: If observed and expected labels differ
    """
    observed_stats = observed.per_intensity if isinstance(observed, ObservedStatistics) else observed
    seen = {s.label: s for s in observed_stats}
    wanted = {s.label: s for s in expected}
    if set(seen) != set(wanted):
        raise LabelMismatchError(
            f"observed labels {sorted(seen)} do not match expected labels {sorted(wanted)}"
        )

    reasons = []
    for label, exp in wanted.items():
        obs = seen[label]
        tol = tolerances.get(label)
        lo, hi = exp.gain - tol.delta_q, exp.gain + tol.delta_q
        if not (lo <= obs.gain <= hi):
            reasons.append(f"gain of '{label}' {obs.gain:.6g} outside [{lo:.6g}, {hi:.6g}]")
        target = _error_fraction(exp)
        lo, hi = target - tol.delta_e, target + tol.delta_e
        value = _error_fraction(obs)
        if not (lo <= value <= hi):
            reasons.append(f"error fraction of '{label}' {value:.6g} outside [{lo:.6g}, {hi:.6g}]")

    if reasons:
        logger.info("Abort: %s", "; ".join(reasons))
        return AbortDecision(AbortOutcome.ABORT, tuple(reasons))
    return AbortDecision(AbortOutcome.ACCEPT)


def binomial_half_width(p: float, n: int, sigmas: float = 5.0) -> float:
    """``sigmas`` binomial standard errors of a rate ``p`` over ``n`` trials."""
    if not (0.0 <= p <= 1.0) or n < 1:
        raise DomainError(f"need p in [0, 1] and n >= 1, got p={p!r}, n={n}")
    return sigmas * math.sqrt(p * (1.0 - p) / n)


def check_coincidence_consistency(
    observed_rate: float, expected_rate: float, half_width: float
) -> ConsistencyDecision:
    """Consistent iff ``|observed - expected| <= half_width``."""
    for name, value in (("observed_rate", observed_rate), ("expected_rate", expected_rate)):
        if not (0.0 <= value <= 1.0):
            raise DomainError(f"{name} must lie in [0, 1], got {value!r}")
    if half_width < 0.0:
        raise DomainError(f"half_width must be >= 0, got {half_width!r}")
    outcome = (
        Consistency.CONSISTENT
        if abs(observed_rate - expected_rate) <= half_width
        else Consistency.INCONSISTENT
    )
    return ConsistencyDecision(outcome, observed_rate, expected_rate, half_width)
