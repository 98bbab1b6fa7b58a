"""Records of the Monte Carlo protocol simulator."""

import math
from dataclasses import dataclass, field

from src.config import config
from src.models.channel import ChannelParams, IntensityStatistics
from src.models.errors import ConfigError


@dataclass(frozen=True)
class ProtocolConfig:
    """Simulation settings.

    Attributes:
        intensities: (label, mean photon number) pairs; index 0 is the signal
        decoy_probabilities: Probability of sending each intensity
        rounds: Total number of pulses
        channel: Honest channel the pulses travel through
        seed: Root seed; None draws a fresh one
        sampling_fraction: Share of sifted rounds used for estimation
        batch_size: Rounds simulated per RNG stream
        workers: Process count for batches
    """
    intensities: tuple[tuple[str, float], ...]
    decoy_probabilities: tuple[float, ...]
    rounds: int
    channel: ChannelParams
    seed: int | None = None
    sampling_fraction: float = 1.0
    batch_size: int = field(default_factory=lambda: config.sim_batch_size)
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "intensities", tuple((str(l), float(m)) for l, m in self.intensities))
        object.__setattr__(self, "decoy_probabilities", tuple(float(p) for p in self.decoy_probabilities))

        if not self.intensities:
            raise ConfigError("at least one intensity is required")
        labels = [label for label, _ in self.intensities]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"intensity labels must be unique, got {labels}")
        for label, mean in self.intensities:
            if not (mean >= 0.0 and math.isfinite(mean)):
                raise ConfigError(f"mean photon number of '{label}' must be >= 0, got {mean!r}")
        if len(self.decoy_probabilities) != len(self.intensities):
            raise ConfigError(
                f"{len(self.decoy_probabilities)} probabilities for {len(self.intensities)} intensities"
            )
        if any(p < 0.0 for p in self.decoy_probabilities):
            raise ConfigError("decoy probabilities must be non-negative")
        if abs(math.fsum(self.decoy_probabilities) - 1.0) > 1e-12:
            raise ConfigError(
                f"decoy probabilities must sum to 1, got {math.fsum(self.decoy_probabilities)!r}"
            )
        if isinstance(self.rounds, bool) or self.rounds < 1:
            raise ConfigError(f"rounds must be >= 1, got {self.rounds!r}")
        if self.seed is not None and self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")
        if not (0.0 < self.sampling_fraction <= 1.0):
            raise ConfigError(f"sampling_fraction must lie in (0, 1], got {self.sampling_fraction}")
        if self.batch_size < 1 or self.workers < 1:
            raise ConfigError("batch_size and workers must be >= 1")

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(label for label, _ in self.intensities)


@dataclass(frozen=True)
class RoundRecord:
    """One simulated round. ``None`` stands for the no-click outcome."""
    decoy_index: int
    alice_basis: int
    alice_bit: int
    bob_port0: int | None
    bob_port1: int | None
    bob_basis: int
    bob_bit: int | None

    @property
    def double_click(self) -> bool:
        return self.bob_port0 is not None and self.bob_port1 is not None

    @property
    def sifted(self) -> bool:
        return self.alice_basis == self.bob_basis


@dataclass(frozen=True)
class ObservedStatistics:
    """Aggregated output of a protocol run.

    ``per_intensity`` holds the conditional-on-detection error rate in the
    ``qber`` field; ``error_fraction_per_intensity`` holds the error count
    over all sifted rounds of that intensity.
    """
    per_intensity: tuple[IntensityStatistics, ...]
    coincidence_rate_per_intensity: dict[str, float]
    sifted_length: int
    rounds: int
    seed: int
    error_fraction_per_intensity: dict[str, float] = field(default_factory=dict)
    absent: tuple[str, ...] = ()

    def __post_init__(self):
        if self.sifted_length > self.rounds:
            raise ConfigError("sifted_length cannot exceed rounds")

    def get(self, label: str) -> IntensityStatistics:
        for stats in self.per_intensity:
            if stats.label == label:
                return stats
        raise KeyError(label)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(s.label for s in self.per_intensity)


@dataclass(frozen=True)
class ExpectedObservation:
    """Exact expectations of the simulator's estimators for an honest run."""
    per_intensity: tuple[IntensityStatistics, ...]
    coincidence_rate_per_intensity: dict[str, float]
    error_fraction_per_intensity: dict[str, float]
    sifted_probability_per_intensity: dict[str, float]

    def get(self, label: str) -> IntensityStatistics:
        for stats in self.per_intensity:
            if stats.label == label:
                return stats
        raise KeyError(label)
