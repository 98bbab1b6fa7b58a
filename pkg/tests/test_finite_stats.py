"""Tests for Hoeffding tolerances, the abort rule and the coincidence check."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from src.models.channel import ChannelParams, IntensityStatistics
from src.models.errors import ConfigError, DomainError, LabelMismatchError
from src.models.finite import AbortOutcome, SecurityParams, Tolerance, ToleranceSet
from src.services.channel_model import expected_statistics
from src.services.finite_stats import (
    binomial_half_width,
    check_abort,
    check_coincidence_consistency,
    completeness_bound,
    hoeffding_delta,
    tolerances_for,
)

HONEST = ChannelParams(eta=0.3, y0=1.7e-6, e_detector=0.033)

budgets = st.builds(
    SecurityParams,
    epsilon_completeness=st.floats(min_value=1e-12, max_value=0.5),
    epsilon_stat=st.just(0.0),
    num_decoys=st.integers(min_value=0, max_value=4),
)


def _stats(rounds: int) -> list[IntensityStatistics]:
    return [
        IntensityStatistics(s.label, s.mean_photon, s.gain, s.qber, rounds)
        for s in expected_statistics(HONEST, [0.5, 0.1])
    ]


class TestSecurityParams:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"epsilon_completeness": 0.0},
            {"epsilon_completeness": 1.0},
            {"epsilon_completeness": 0.1, "epsilon_stat": 0.05},
            {"epsilon_completeness": 0.1, "num_decoys": -1},
        ],
    )
    def test_rejects_invalid_budget(self, kwargs):
        with pytest.raises(ConfigError):
            SecurityParams(**kwargs)


class TestHoeffdingDelta:
    def test_formula(self):
        params = SecurityParams(epsilon_completeness=1e-3, epsilon_stat=1e-4, num_decoys=1)
        share = (1e-3 - 2e-4) / 8.0
        assert hoeffding_delta(10_000, params) == pytest.approx(
            math.sqrt(-math.log(share) / 20_000), rel=1e-14
        )

    def test_reference_value(self):
        params = SecurityParams(epsilon_completeness=1e-2, epsilon_stat=1e-3, num_decoys=1)
        delta = hoeffding_delta(10**6, params)
        assert delta == pytest.approx(math.sqrt(math.log(1e3) / 2e6), rel=1e-14)
        assert delta == pytest.approx(0.0018585, abs=1e-7)

    @given(params=budgets, n=st.integers(min_value=1, max_value=10**9))
    @settings(max_examples=100, deadline=None)
    def test_shrinks_with_rounds(self, params: SecurityParams, n: int):
        assert hoeffding_delta(n + 1, params) < hoeffding_delta(n, params)

    @given(params=budgets, n=st.integers(min_value=1, max_value=10**9))
    @settings(max_examples=100, deadline=None)
    def test_budget_closes_exactly(self, params: SecurityParams, n: int):
        labels = ["signal"] + [f"decoy{d}" for d in range(1, params.num_decoys + 1)]
        delta = hoeffding_delta(n, params)
        tolerances = ToleranceSet({label: Tolerance(delta, delta) for label in labels})
        bound = completeness_bound({label: n for label in labels}, tolerances, params)
        assert bound == pytest.approx(params.epsilon_completeness, rel=1e-12)

    def test_coincidence_parameter_is_charged_twice(self):
        params = SecurityParams(epsilon_completeness=0.01, epsilon_stat=0.002, num_decoys=1)
        tolerances = tolerances_for(_stats(50_000), params)
        bound = completeness_bound({"signal": 50_000, "decoy1": 50_000}, tolerances, params)
        assert bound == pytest.approx(0.01, rel=1e-12)

    def test_rejects_empty_sample(self):
        with pytest.raises(DomainError):
            hoeffding_delta(0, SecurityParams(epsilon_completeness=0.1))

    def test_tolerances_need_round_counts(self):
        with pytest.raises(DomainError):
            tolerances_for(_stats(0), SecurityParams(epsilon_completeness=0.1))


class TestCheckAbort:
    def test_expected_values_are_accepted(self):
        expected = _stats(10_000)
        tolerances = tolerances_for(expected, SecurityParams(epsilon_completeness=1e-3))
        assert check_abort(expected, expected, tolerances).accepted

    def test_interval_ends_are_inside(self):
        expected = [IntensityStatistics("signal", 0.5, 0.25, 0.5)]
        tolerances = ToleranceSet({"signal": Tolerance(0.125, 0.0625)})
        edge = [IntensityStatistics("signal", 0.5, 0.375, 0.25)]
        assert check_abort(edge, expected, tolerances).accepted

    def test_gain_outside_interval_aborts(self):
        expected = _stats(10_000)
        tolerances = ToleranceSet({s.label: Tolerance(1e-3, 1e-3) for s in expected})
        shifted = [
            IntensityStatistics(s.label, s.mean_photon, s.gain + 0.01 if s.label == "decoy1" else s.gain, s.qber)
            for s in expected
        ]
        decision = check_abort(shifted, expected, tolerances)
        assert decision.outcome is AbortOutcome.ABORT
        assert any("gain of 'decoy1'" in reason for reason in decision.reasons)

    def test_error_fraction_outside_interval_aborts(self):
        expected = [IntensityStatistics("signal", 0.5, 0.2, 0.02)]
        tolerances = ToleranceSet({"signal": Tolerance(0.01, 0.001)})
        noisy = [IntensityStatistics("signal", 0.5, 0.2, 0.04)]
        decision = check_abort(noisy, expected, tolerances)
        assert not decision.accepted
        assert decision.reasons == (
            "error fraction of 'signal' 0.008 outside [0.003, 0.005]",
        )

    def test_label_mismatch(self):
        expected = _stats(10_000)
        with pytest.raises(LabelMismatchError):
            check_abort(expected[:1], expected, ToleranceSet())

    def test_honest_abort_frequency_within_budget(self):
        rounds = 100_000
        params = SecurityParams(epsilon_completeness=0.05, num_decoys=1)
        expected = _stats(rounds)
        tolerances = tolerances_for(expected, params)
        rng = np.random.default_rng(20240501)
        aborts = 0
        trials = 1000
        for _ in range(trials):
            observed = []
            for s in expected:
                errors, correct, _ = rng.multinomial(
                    rounds, [s.gain * s.qber, s.gain * (1.0 - s.qber), 1.0 - s.gain]
                )
                detected = errors + correct
                observed.append(
                    IntensityStatistics(
                        s.label, s.mean_photon, detected / rounds, errors / detected, rounds
                    )
                )
            if not check_abort(observed, expected, tolerances).accepted:
                aborts += 1
        assert aborts / trials <= params.epsilon_completeness


class TestCoincidence:
    def test_half_width(self):
        assert binomial_half_width(0.01, 10_000) == pytest.approx(5.0 * math.sqrt(0.01 * 0.99 / 10_000))
        assert binomial_half_width(0.0, 10) == 0.0

    @pytest.mark.parametrize("p,n", [(-0.1, 10), (1.1, 10), (0.5, 0)])
    def test_half_width_rejects_invalid(self, p, n):
        with pytest.raises(DomainError):
            binomial_half_width(p, n)

    def test_threshold_is_inclusive(self):
        assert check_coincidence_consistency(0.015, 0.01, 0.005).consistent
        assert check_coincidence_consistency(0.01, 0.01, 0.0).consistent

    def test_excess_is_inconsistent(self):
        decision = check_coincidence_consistency(0.02, 0.01, 0.005)
        assert not decision.consistent
        assert decision.observed_rate == 0.02
        assert decision.half_width == 0.005

    @pytest.mark.parametrize("observed,expected,width", [(-0.1, 0.1, 0.1), (0.1, 1.5, 0.1), (0.1, 0.1, -1.0)])
    def test_rejects_invalid_input(self, observed, expected, width):
        with pytest.raises(DomainError):
            check_coincidence_consistency(observed, expected, width)
