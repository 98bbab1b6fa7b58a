"""Tests for the scalar math kernel.

Entropy, Poisson weights and the exponential-series tail are checked against
50-digit decimal evaluations.
"""

import math
from decimal import Decimal, localcontext

import pytest
from hypothesis import given, settings, strategies as st

from src.models.errors import DomainError
from src.services.math_kernel import (
    binary_entropy,
    check_truncation_order,
    phi,
    poisson_tail_order,
    poisson_weight,
    theta_truncation,
    truncated_exp_sum,
)

PRECISION = 50

unit_interval = st.floats(min_value=0.0, max_value=1.0, allow_nan=False)
mean_photon = st.floats(min_value=0.0, max_value=20.0, allow_nan=False)
photon_count = st.integers(min_value=0, max_value=60)


def _dec_binary_entropy(x: float) -> float:
    if x in (0.0, 1.0):
        return 0.0
    with localcontext() as ctx:
        ctx.prec = PRECISION
        xd = Decimal(x)
        bits = -xd * xd.ln() - (1 - xd) * (1 - xd).ln()
        return float(bits / Decimal(2).ln())


def _dec_poisson(lam: float, k: int) -> float:
    if lam == 0.0:
        return 1.0 if k == 0 else 0.0
    with localcontext() as ctx:
        ctx.prec = PRECISION
        ld = Decimal(lam)
        return float(ld**k * (-ld).exp() / math.factorial(k))


def _dec_tail(lam: float, n: int) -> float:
    with localcontext() as ctx:
        ctx.prec = PRECISION
        ld = Decimal(lam)
        return float(sum(ld**k / math.factorial(k) for k in range(n + 1, n + 120)))


class TestBinaryEntropy:
    def test_endpoints_are_exactly_zero(self):
        assert binary_entropy(0.0) == 0.0
        assert binary_entropy(1.0) == 0.0

    def test_half_is_one_bit(self):
        assert binary_entropy(0.5) == pytest.approx(1.0, abs=1e-15)

    @given(x=unit_interval)
    @settings(max_examples=200, deadline=None)
    def test_matches_high_precision(self, x: float):
        assert binary_entropy(x) == pytest.approx(_dec_binary_entropy(x), abs=1e-12)

    @given(x=unit_interval)
    @settings(max_examples=100, deadline=None)
    def test_symmetric_about_half(self, x: float):
        assert binary_entropy(x) == pytest.approx(binary_entropy(1.0 - x), abs=1e-12)

    @pytest.mark.parametrize("x", [-1e-12, 1.0 + 1e-12, -3.0, math.nan])
    def test_rejects_outside_unit_interval(self, x: float):
        with pytest.raises(DomainError):
            binary_entropy(x)


class TestPhi:
    def test_known_values(self):
        assert phi(0.0) == pytest.approx(1.0, abs=1e-15)
        assert phi(1.0) == 0.0
        assert phi(-1.0) == 0.0

    @given(x=st.floats(min_value=-1.0, max_value=1.0, allow_nan=False))
    @settings(max_examples=100, deadline=None)
    def test_even(self, x: float):
        assert phi(x) == phi(-x)

    @given(x=st.floats(min_value=-1.0, max_value=1.0, allow_nan=False))
    @settings(max_examples=100, deadline=None)
    def test_stays_in_unit_interval(self, x: float):
        assert 0.0 <= phi(x) <= 1.0

    def test_rejects_outside_range(self):
        with pytest.raises(DomainError):
            phi(1.5)


class TestPoissonWeight:
    @given(lam=mean_photon, k=photon_count)
    @settings(max_examples=300, deadline=None)
    def test_matches_high_precision(self, lam: float, k: int):
        expected = _dec_poisson(lam, k)
        got = poisson_weight(lam, k)
        assert got == pytest.approx(expected, rel=1e-10, abs=1e-300)

    @given(lam=mean_photon, n=st.integers(min_value=0, max_value=80))
    @settings(max_examples=100, deadline=None)
    def test_partial_sums_never_exceed_one(self, lam: float, n: int):
        total = math.fsum(poisson_weight(lam, k) for k in range(n + 1))
        assert total <= 1.0 + 4 * 2.0**-52

    def test_zero_mean_is_vacuum(self):
        assert poisson_weight(0.0, 0) == 1.0
        assert poisson_weight(0.0, 3) == 0.0

    @pytest.mark.parametrize("lam,k", [(-0.1, 1), (0.5, -1), (math.inf, 2), (0.5, 1.5)])
    def test_rejects_invalid_arguments(self, lam, k):
        with pytest.raises(DomainError):
            poisson_weight(lam, k)


class TestThetaTruncation:
    @given(
        lam=st.floats(min_value=0.01, max_value=5.0, allow_nan=False),
        n=st.integers(min_value=0, max_value=30),
    )
    @settings(max_examples=200, deadline=None)
    def test_matches_high_precision_tail(self, lam: float, n: int):
        assert theta_truncation(lam, n) == pytest.approx(_dec_tail(lam, n), rel=1e-9, abs=1e-300)

    @given(
        lam=st.floats(min_value=0.0, max_value=5.0, allow_nan=False),
        n=st.integers(min_value=0, max_value=30),
    )
    @settings(max_examples=100, deadline=None)
    def test_partial_sum_and_tail_make_exponential(self, lam: float, n: int):
        total = truncated_exp_sum(lam, n) + theta_truncation(lam, n)
        assert total == pytest.approx(math.exp(lam), rel=1e-12)

    @given(lam=st.floats(min_value=0.01, max_value=5.0, allow_nan=False))
    @settings(max_examples=50, deadline=None)
    def test_decreases_with_order(self, lam: float):
        tails = [theta_truncation(lam, n) for n in range(12)]
        assert all(b <= a for a, b in zip(tails, tails[1:]))

    def test_zero_mean_has_no_tail(self):
        assert theta_truncation(0.0, 4) == 0.0

    def test_rejects_negative_order(self):
        with pytest.raises(DomainError):
            theta_truncation(0.5, -1)


class TestTruncationOrder:
    def test_accepts_two_and_above(self):
        assert check_truncation_order(2) == 2
        assert check_truncation_order(10) == 10

    @pytest.mark.parametrize("n", [1, 0, -3, 2.5, True])
    def test_rejects_small_or_non_integer(self, n):
        with pytest.raises(DomainError):
            check_truncation_order(n)

    @given(lam=st.floats(min_value=0.0, max_value=10.0, allow_nan=False))
    @settings(max_examples=50, deadline=None)
    def test_tail_order_reaches_target(self, lam: float):
        n = poisson_tail_order(lam, tail=1e-12)
        tail = 1.0 - math.fsum(poisson_weight(lam, k) for k in range(n + 1))
        assert tail < 1e-11
