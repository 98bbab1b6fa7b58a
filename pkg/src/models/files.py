"""Pydantic models for the JSON/YAML documents read and written by the CLI."""

from typing import Any, Literal

from pydantic import BaseModel, Field, field_validator, model_validator

from src.config import STATS_SCHEMA_VERSION, config


class IntensityEntry(BaseModel):
    """One intensity of a statistics file."""
    label: str = Field(min_length=1)
    mean_photon: float = Field(ge=0)
    gain: float = Field(ge=0, le=1)
    qber: float = Field(ge=0, le=1)
    rounds: int = Field(default=0, ge=0)
    role: Literal["signal", "decoy"] | None = None


class SecurityEntry(BaseModel):
    """Finite-statistics parameters; absent means asymptotic mode."""
    epsilon_completeness: float = Field(gt=0, lt=1)
    epsilon_stat: float = Field(default=0.0, ge=0)

    @model_validator(mode="after")
    def check_budget(self) -> "SecurityEntry":
        if self.epsilon_completeness - 2 * self.epsilon_stat <= 0:
            raise ValueError("epsilon_completeness - 2*epsilon_stat must be positive")
        return self


class CoincidenceEntry(BaseModel):
    """Coincidence monitoring outcome."""
    observed_rate: float = Field(ge=0, le=1)
    expected_rate: float = Field(ge=0, le=1)
    half_width: float = Field(ge=0)


class StatsFile(BaseModel):
    """Statistics document consumed by ``compute`` and written by ``simulate``."""
    schema_version: Literal[1] = STATS_SCHEMA_VERSION
    intensities: list[IntensityEntry] = Field(min_length=1)
    security: SecurityEntry | None = None
    coincidences: CoincidenceEntry | None = None
    metadata: dict[str, Any] | None = None

    @model_validator(mode="after")
    def check_labels(self) -> "StatsFile":
        labels = [entry.label for entry in self.intensities]
        if len(set(labels)) != len(labels):
            raise ValueError(f"intensity labels must be unique, got {labels}")
        signals = [entry.label for entry in self.intensities if entry.role == "signal"]
        if len(signals) > 1:
            raise ValueError(f"at most one intensity may have role 'signal', got {signals}")
        return self


class ChannelEntry(BaseModel):
    """Ideal-channel parameters."""
    eta: float = Field(ge=0, le=1)
    y0: float = Field(default_factory=lambda: config.y0, ge=0, le=1)
    e_detector: float = Field(default_factory=lambda: config.e_detector, ge=0, le=0.5)
    e_background: float = Field(default_factory=lambda: config.e_background, ge=0, le=1)


class LinkEntry(BaseModel):
    """Fibre link plus the detector-side channel parameters."""
    alpha_db_per_km: float = Field(default_factory=lambda: config.alpha_db_per_km, ge=0)
    eta_receiver: float = Field(default_factory=lambda: config.eta_receiver, ge=0, le=1)
    y0: float = Field(default_factory=lambda: config.y0, ge=0, le=1)
    e_detector: float = Field(default_factory=lambda: config.e_detector, ge=0, le=0.5)
    e_background: float = Field(default_factory=lambda: config.e_background, ge=0, le=1)


class EngineEntry(BaseModel):
    """Engine overrides inside a sweep spec."""
    truncation: int | None = Field(default=None, ge=2)
    grid: str | None = None
    f_ec: float | None = Field(default=None, ge=1)
    refine: int | None = Field(default=None, ge=0)

    @field_validator("grid")
    @classmethod
    def check_grid(cls, value: str | None) -> str | None:
        if value is None:
            return value
        parts = value.lower().split("x")
        if len(parts) != 2 or not all(p.isdigit() and int(p) >= 1 for p in parts):
            raise ValueError(f"grid must look like N1xN2, got '{value}'")
        return value


Variant = Literal["bb84", "cd", "decoy", "dscd"]


class SweepSpec(BaseModel):
    """Sweep over the signal mean photon number or the fibre distance."""
    axis: Literal["mu", "distance"]
    range: tuple[float, float, float]
    signal_mu: float | None = Field(default=None, gt=0)
    decoys: list[float] = Field(default_factory=lambda: [0.1])
    channel: ChannelEntry | None = None
    link: LinkEntry | None = None
    distance_km: float = Field(default=0.0, ge=0)
    # None means the default pair; an empty list runs nothing
    variants: list[Variant] | None = None
    engine: EngineEntry | None = None
    include_analytic: bool = False
    include_separate: bool = False

    @model_validator(mode="after")
    def check_axis(self) -> "SweepSpec":
        start, stop, step = self.range
        if not step > 0:
            raise ValueError(f"range step must be positive, got {step}")
        if not start < stop:
            raise ValueError(f"range start must be below stop, got {start} >= {stop}")
        if start < 0:
            raise ValueError(f"range start must be non-negative, got {start}")
        if any(d < 0 for d in self.decoys):
            raise ValueError("decoy intensities must be non-negative")
        if self.axis == "distance":
            if self.signal_mu is None:
                raise ValueError("distance sweeps need signal_mu")
            if self.channel is not None:
                raise ValueError("distance sweeps take a link, not a fixed channel")
        if self.channel is not None and self.link is not None:
            raise ValueError("give either channel or link, not both")
        return self


class ProtocolIntensity(BaseModel):
    label: str = Field(min_length=1)
    mean_photon: float = Field(ge=0)


class ProtocolConfigFile(BaseModel):
    """Simulator configuration document."""
    intensities: list[ProtocolIntensity] = Field(min_length=1)
    decoy_probabilities: list[float]
    rounds: int
    channel: ChannelEntry
    seed: int | None = Field(default=None, ge=0)
    sampling_fraction: float = Field(default=1.0, gt=0, le=1)
    security: SecurityEntry | None = None
