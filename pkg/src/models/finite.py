"""Finite-statistics records: security parameters, tolerances and decisions."""

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

from src.models.errors import ConfigError


@dataclass(frozen=True)
class SecurityParams:
    """Completeness budget of a protocol run.

    Attributes:
        epsilon_completeness: Allowed honest abort probability
        epsilon_stat: Coincidence-check confidence parameter
        num_decoys: Number of decoy intensities K
    """
    epsilon_completeness: float
    epsilon_stat: float = 0.0
    num_decoys: int = 1

    def __post_init__(self):
        if not (0.0 < self.epsilon_completeness < 1.0):
            raise ConfigError(
                f"epsilon_completeness must lie in (0, 1), got {self.epsilon_completeness!r}"
            )
        if not (0.0 <= self.epsilon_stat < self.epsilon_completeness / 2.0):
            raise ConfigError(
                f"epsilon_stat must lie in [0, epsilon_completeness/2), got {self.epsilon_stat!r}"
            )
        if self.num_decoys < 0:
            raise ConfigError(f"num_decoys must be >= 0, got {self.num_decoys}")


@dataclass(frozen=True)
class Tolerance:
    """Half-widths admitted on one intensity's gain and error fraction ``gain*qber``."""
    delta_q: float = 0.0
    delta_e: float = 0.0

    def __post_init__(self):
        if self.delta_q < 0.0 or self.delta_e < 0.0:
            raise ConfigError(f"tolerances must be >= 0, got ({self.delta_q}, {self.delta_e})")


@dataclass(frozen=True)
class ToleranceSet:
    """Per-intensity tolerances keyed by label. Missing labels mean zero."""
    by_label: dict[str, Tolerance] = field(default_factory=dict)

    @classmethod
    def asymptotic(cls, labels: Iterable[str] = ()) -> "ToleranceSet":
        return cls({label: Tolerance() for label in labels})

    def get(self, label: str) -> Tolerance:
        return self.by_label.get(label, Tolerance())

    @property
    def is_asymptotic(self) -> bool:
        return all(t.delta_q == 0.0 and t.delta_e == 0.0 for t in self.by_label.values())

    def widened(self, factor: float) -> "ToleranceSet":
        """Every tolerance multiplied by ``factor``."""
        return ToleranceSet(
            {k: Tolerance(t.delta_q * factor, t.delta_e * factor) for k, t in self.by_label.items()}
        )


class AbortOutcome(Enum):
    ACCEPT = "accept"
    ABORT = "abort"


@dataclass(frozen=True)
class AbortDecision:
    """Result of the abort conditions; ``reasons`` names each violated interval."""
    outcome: AbortOutcome
    reasons: tuple[str, ...] = ()

    @property
    def accepted(self) -> bool:
        return self.outcome is AbortOutcome.ACCEPT


class Consistency(Enum):
    CONSISTENT = "consistent"
    INCONSISTENT = "inconsistent"


@dataclass(frozen=True)
class ConsistencyDecision:
    """Result of the coincidence-rate threshold check."""
    outcome: Consistency
    observed_rate: float
    expected_rate: float
    half_width: float

    @property
    def consistent(self) -> bool:
        return self.outcome is Consistency.CONSISTENT
