"""Ideal-channel statistics for phase-randomised weak coherent pulses.

Closed-form yields, gains and error rates of an honest channel, the fibre
distance model, and helpers that turn an honest channel into the inputs of
the key-rate engine.
"""

import math
from typing import Sequence

import numpy as np

from src.models.channel import ChannelParams, IntensityStatistics, LinkModel
from src.models.errors import DomainError, UndefinedRateError
from src.models.keyrate import ProtocolVariant
from src.services.math_kernel import (
    check_truncation_order,
    phi,
    poisson_tail_order,
    poisson_weight,
)


def _check_photon_count(k: int) -> None:
    if isinstance(k, bool) or not isinstance(k, int) or k < 0:
        raise DomainError(f"photon count must be a non-negative integer, got {k!r}")


def _check_mean(mu: float) -> None:
    if not (mu >= 0.0) or math.isinf(mu):
        raise DomainError(f"mean photon number must be a finite value >= 0, got {mu!r}")


def eta_k(params: ChannelParams, k: int) -> float:
    """Probability that at least one of ``k`` photons is detected."""
    _check_photon_count(k)
    return 1.0 - (1.0 - params.eta) ** k


def yield_k(params: ChannelParams, k: int) -> float:
    """Detection probability of a ``k``-photon pulse including background."""
    ek = eta_k(params, k)
    return params.y0 + ek - params.y0 * ek


def _error_weight_k(params: ChannelParams, k: int) -> float:
    """``e_k * Y_k``, defined even where ``Y_k`` vanishes."""
    return params.e_background * params.y0 + params.e_detector * eta_k(params, k)


def error_rate_k(params: ChannelParams, k: int) -> float:
    """Error rate of ``k``-photon detections.

    Raises:
        UndefinedRateError: If the ``k``-photon yield is zero
    """
    yk = yield_k(params, k)
    if yk == 0.0:
        raise UndefinedRateError(f"yield of the {k}-photon state is zero")
    return _error_weight_k(params, k) / yk


def _terms(mu: float, n_terms: int | None) -> int:
    _check_mean(mu)
    if n_terms is None:
        return poisson_tail_order(mu)
    if n_terms < 0:
        raise DomainError(f"n_terms must be >= 0, got {n_terms}")
    return n_terms


def gain(params: ChannelParams, mu: float, n_terms: int | None = None) -> float:
    """Probability that a pulse of mean ``mu`` yields a detection.

    Args:
        params: Channel parameters
        mu: Mean photon number
        n_terms: Highest photon number summed; by default the order at which
            the Poisson tail drops below the configured tail mass

    Returns:
        The truncated series ``sum_k Y_k * P_mu(k)``
    """
    n = _terms(mu, n_terms)
    return math.fsum(yield_k(params, k) * poisson_weight(mu, k) for k in range(n + 1))


def gain_closed_form(params: ChannelParams, mu: float) -> float:
    """Untruncated gain ``Y0 + (1 - Y0)(1 - exp(-eta*mu))``."""
    _check_mean(mu)
    return params.y0 + (1.0 - params.y0) * -math.expm1(-params.eta * mu)


def qber(params: ChannelParams, mu: float, n_terms: int | None = None) -> float:
    """Error rate among detections at mean photon number ``mu``.

    Raises:
        UndefinedRateError: If the gain is zero
    """
    n = _terms(mu, n_terms)
    q = gain(params, mu, n)
    if q == 0.0:
        raise UndefinedRateError(f"gain at mean photon number {mu} is zero")
    errors = math.fsum(_error_weight_k(params, k) * poisson_weight(mu, k) for k in range(n + 1))
    return errors / q


def photon_gain(params: ChannelParams, mu: float, k: int) -> float:
    """Gain contributed by ``k``-photon pulses, ``Y_k * P_mu(k)``."""
    _check_mean(mu)
    return yield_k(params, k) * poisson_weight(mu, k)


def eta_from_distance(link: LinkModel, distance_km: float) -> float:
    """Overall transmittance after ``distance_km`` of fibre."""
    if not (distance_km >= 0.0) or math.isinf(distance_km):
        raise DomainError(f"distance must be a finite value >= 0, got {distance_km!r}")
    return link.eta_receiver * 10.0 ** (-link.alpha_db_per_km * distance_km / 10.0)


def channel_for_distance(
    link: LinkModel,
    distance_km: float,
    y0: float,
    e_detector: float,
    e_background: float = 0.5,
) -> ChannelParams:
    """Channel parameters of a fibre link at a given length."""
    return ChannelParams(
        eta=eta_from_distance(link, distance_km),
        y0=y0,
        e_detector=e_detector,
        e_background=e_background,
    )


def default_labels(count: int) -> list[str]:
    """``signal`` followed by ``decoy1``, ``decoy2``..."""
    return ["signal"] + [f"decoy{d}" for d in range(1, count)]


def expected_statistics(
    params: ChannelParams,
    intensities: Sequence[float],
    labels: Sequence[str] | None = None,
) -> list[IntensityStatistics]:
    """Asymptotic statistics of an honest run, one entry per intensity.

    Raises:
        DomainError: If ``intensities`` is empty or labels do not match
    """
    if len(intensities) == 0:
        raise DomainError("at least one intensity is required")
    names = list(labels) if labels is not None else default_labels(len(intensities))
    if len(names) != len(intensities):
        raise DomainError(f"{len(names)} labels for {len(intensities)} intensities")
    return [
        IntensityStatistics(
            label=name,
            mean_photon=float(mu),
            gain=gain(params, mu),
            qber=qber(params, mu),
            rounds=0,
        )
        for name, mu in zip(names, intensities)
    ]


def truth_point(params: ChannelParams, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Yields and error weights ``(Y_0..Y_n, e_0*Y_0..e_n*Y_n)`` of the honest channel."""
    n = check_truncation_order(n, minimum=0)
    yields = np.array([yield_k(params, k) for k in range(n + 1)])
    weights = np.array([_error_weight_k(params, k) for k in range(n + 1)])
    return yields, weights


def truth_objective(params: ChannelParams, mu: float, variant: ProtocolVariant) -> float:
    """Rate-problem objective at the honest channel's yields and errors.

    Any certified lower bound computed from this channel's statistics must not
    exceed this value.
    """
    _check_mean(mu)
    orders = (1, 2) if variant.uses_two_photon else (1,)
    total = 0.0
    for k in orders:
        yk = yield_k(params, k)
        if yk == 0.0:
            continue
        ek = error_rate_k(params, k)
        bias = min(1.0, max(-1.0, (2.0 * ek - 1.0) ** k))
        total += yk * mu ** k / math.factorial(k) * (1.0 - phi(bias))
    return total


def expected_coincidence_probability(params: ChannelParams, mu: float) -> float:
    """Probability that both receiver ports click for one pulse.

    Photons reach each port as independent Poisson streams of mean
    ``eta*mu/2``; each port also fires a dark count with probability ``y0/2``.
    """
    _check_mean(mu)
    silent = math.exp(-params.eta * mu / 2.0) * (1.0 - params.y0 / 2.0)
    return (1.0 - silent) ** 2
