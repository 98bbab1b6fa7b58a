"""Channel and statistics records.

Immutable parameter records for the ideal channel, the fibre link and the
per-intensity statistics that feed the key-rate engine. Each record validates
itself on construction.
"""

import math
from dataclasses import dataclass

from src.models.errors import ConfigError


def _check_range(value: float, lo: float, hi: float, field_name: str) -> None:
    """Reject NaN and values outside [lo, hi]."""
    if not (lo <= value <= hi):
        raise ConfigError(f"{field_name} must lie in [{lo}, {hi}], got {value!r}")


@dataclass(frozen=True)
class ChannelParams:
    """Ideal-channel parameters.

    Attributes:
        eta: Overall single-photon detection efficiency
        y0: Background (dark count) yield
        e_detector: Misalignment error e_d
        e_background: Error rate of background clicks e_0
    """
    eta: float
    y0: float
    e_detector: float
    e_background: float = 0.5

    def __post_init__(self):
        _check_range(self.eta, 0.0, 1.0, "eta")
        _check_range(self.y0, 0.0, 1.0, "y0")
        _check_range(self.e_detector, 0.0, 0.5, "e_detector")
        _check_range(self.e_background, 0.0, 1.0, "e_background")


@dataclass(frozen=True)
class LinkModel:
    """Fibre link: attenuation per km and receiver-side efficiency."""
    alpha_db_per_km: float = 0.2
    eta_receiver: float = 0.3

    def __post_init__(self):
        if not (self.alpha_db_per_km >= 0.0 and math.isfinite(self.alpha_db_per_km)):
            raise ConfigError(
                f"alpha_db_per_km must be a finite value >= 0, got {self.alpha_db_per_km!r}"
            )
        _check_range(self.eta_receiver, 0.0, 1.0, "eta_receiver")


@dataclass(frozen=True)
class IntensityStatistics:
    """Observed (or expected) statistics of one intensity.

    Attributes:
        label: Intensity name, unique within a statistics set
        mean_photon: Mean photon number of the pulses
        gain: Fraction of rounds with a detection
        qber: Error rate among detected rounds
        rounds: Number of undiscarded rounds (0 means asymptotic)
    """
    label: str
    mean_photon: float
    gain: float
    qber: float
    rounds: int = 0

    def __post_init__(self):
        if not self.label:
            raise ConfigError("intensity label must not be empty")
        if not (self.mean_photon >= 0.0 and math.isfinite(self.mean_photon)):
            raise ConfigError(
                f"mean_photon must be a finite value >= 0, got {self.mean_photon!r}"
            )
        _check_range(self.gain, 0.0, 1.0, "gain")
        _check_range(self.qber, 0.0, 1.0, "qber")
        if self.rounds < 0:
            raise ConfigError(f"rounds must be >= 0, got {self.rounds}")
