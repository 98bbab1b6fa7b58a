"""Traditional one-decoy analytic bound on the decoy-state key rate."""

import logging
import math
from typing import Sequence

from src.models.channel import IntensityStatistics
from src.models.errors import DomainError
from src.models.keyrate import AnalyticResult, EngineConfig
from src.services.math_kernel import binary_entropy

logger = logging.getLogger(__name__)

BACKGROUND_ERROR = 0.5


def analytic_rate(
    stats: Sequence[IntensityStatistics],
    engine_config: EngineConfig | None = None,
) -> AnalyticResult:
    """Rate from the closed-form bounds on Y0, Y1 and e1.

    Args:
        stats: Exactly the signal followed by one decoy
        engine_config: Supplies the error-correction multiplier

    Returns:
        The rate with the intermediate bounds; ``degenerate`` is set and the
        rate is zero when the single-photon yield bound is not positive

    Raises:
        DomainError: If ``stats`` does not hold exactly two intensities
    """
    if len(stats) != 2:
        raise DomainError(f"analytic bound needs exactly one decoy, got {len(stats) - 1}")
    cfg = engine_config or EngineConfig()
    signal, decoy = stats
    mu, nu = signal.mean_photon, decoy.mean_photon

    if not (0.0 < nu < mu):
        return AnalyticResult(
            rate_per_pulse=0.0,
            y0_upper=math.nan,
            y1_lower=0.0,
            e1_upper=BACKGROUND_ERROR,
            degenerate=True,
            reason=f"decoy intensity {nu} must lie strictly between 0 and the signal {mu}",
        )

    decoy_scaled = decoy.gain * math.exp(nu)
    signal_scaled = signal.gain * math.exp(mu)
    y0_upper = decoy.qber * decoy_scaled / BACKGROUND_ERROR
    y1_lower = mu / (mu * nu - nu * nu) * (
        decoy_scaled
        - signal_scaled * nu * nu / (mu * mu)
        - y0_upper * (mu * mu - nu * nu) / (mu * mu)
    )
    if y1_lower <= 0.0:
        logger.debug("analytic bound degenerate: Y1 lower bound %.3e", y1_lower)
        return AnalyticResult(
            rate_per_pulse=0.0,
            y0_upper=y0_upper,
            y1_lower=y1_lower,
            e1_upper=BACKGROUND_ERROR,
            degenerate=True,
            reason="single-photon yield lower bound is not positive",
        )
    y1_lower = min(y1_lower, 1.0)
    e1_upper = min(max(decoy.qber * decoy_scaled / (y1_lower * nu), 0.0), BACKGROUND_ERROR)

    privacy = y1_lower * mu * math.exp(-mu) * (1.0 - binary_entropy(e1_upper))
    leakage = signal.gain * cfg.f_ec * binary_entropy(signal.qber)
    return AnalyticResult(
        rate_per_pulse=0.5 * max(0.0, privacy - leakage),
        y0_upper=y0_upper,
        y1_lower=y1_lower,
        e1_upper=e1_upper,
    )
