"""Scalar functions shared by the channel model and the key-rate engine.

All functions are pure and operate on 64-bit floats.
"""

import math
from numbers import Integral

from scipy.special import gammainc, gammaln

from src.config import config
from src.models.errors import DomainError


def check_truncation_order(n: int, minimum: int = 2) -> int:
    """Validate a photon-number truncation order.

    Args:
        n: Highest retained photon number
        minimum: Smallest admissible order

    Returns:
        ``n`` as a plain int

    Raises:
        DomainError: If ``n`` is not an integer >= ``minimum``
    """
    if isinstance(n, bool) or not isinstance(n, Integral) or n < minimum:
        raise DomainError(f"truncation order must be an integer >= {minimum}, got {n!r}")
    return int(n)


def binary_entropy(x: float) -> float:
    """Shannon binary entropy in bits, with 0*log(0) = 0.

    Raises:
        DomainError: If ``x`` lies outside [0, 1]
    """
    if not (0.0 <= x <= 1.0):
        raise DomainError(f"binary_entropy argument must lie in [0, 1], got {x!r}")
    if x == 0.0 or x == 1.0:
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


def phi(x: float) -> float:
    """Entropy of a bit with bias ``x``: binary_entropy(1/2 + x/2).

    Raises:
        DomainError: If ``x`` lies outside [-1, 1]
    """
    if not (-1.0 <= x <= 1.0):
        raise DomainError(f"phi argument must lie in [-1, 1], got {x!r}")
    # Even in x; evaluating on |x| keeps phi(x) == phi(-x) bit-for-bit.
    return binary_entropy(0.5 + 0.5 * abs(x))


def poisson_weight(lam: float, k: int) -> float:
    """Poisson probability ``lam**k * exp(-lam) / k!``.

    Orders above the configured threshold are evaluated in log space.

    Raises:
        DomainError: If ``lam`` < 0 or ``k`` is not a non-negative integer
    """
    if not (lam >= 0.0) or math.isinf(lam):
        raise DomainError(f"mean photon number must be a finite value >= 0, got {lam!r}")
    if isinstance(k, bool) or not isinstance(k, Integral) or k < 0:
        raise DomainError(f"photon count must be a non-negative integer, got {k!r}")
    if lam == 0.0:
        return 1.0 if k == 0 else 0.0
    if k <= config.log_space_threshold:
        return lam ** k * math.exp(-lam) / math.factorial(k)
    return math.exp(k * math.log(lam) - lam - float(gammaln(k + 1)))


def truncated_exp_sum(lam: float, n: int) -> float:
    """Partial exponential series ``sum_{k=0..n} lam**k / k!``."""
    if not (lam >= 0.0):
        raise DomainError(f"mean photon number must be >= 0, got {lam!r}")
    if n < 0:
        return 0.0
    term = 1.0
    terms = [term]
    for k in range(1, n + 1):
        term *= lam / k
        terms.append(term)
    return math.fsum(terms)


def theta_truncation(lam: float, n: int) -> float:
    """Tail of the exponential series beyond order ``n``.

    Computed as ``exp(lam) * P(n + 1, lam)`` with the regularised lower
    incomplete gamma function, so no cancellation occurs.

    Raises:
        DomainError: If ``lam`` < 0 or ``n`` < 0
    """
    if not (lam >= 0.0) or math.isinf(lam):
        raise DomainError(f"mean photon number must be a finite value >= 0, got {lam!r}")
    if isinstance(n, bool) or not isinstance(n, Integral) or n < 0:
        raise DomainError(f"truncation order must be a non-negative integer, got {n!r}")
    if lam == 0.0:
        return 0.0
    return math.exp(lam) * float(gammainc(n + 1, lam))


def poisson_tail_order(lam: float, tail: float | None = None, cap: int = 2000) -> int:
    """Smallest order whose Poisson tail mass beyond it is below ``tail``."""
    if not (lam >= 0.0):
        raise DomainError(f"mean photon number must be >= 0, got {lam!r}")
    target = config.poisson_tail if tail is None else tail
    n = 0
    while n < cap and float(gammainc(n + 1, lam)) >= target:
        n += 1
    return n
