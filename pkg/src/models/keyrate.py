"""Key-rate engine records: protocol variants, partitions and results."""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any

from src.config import config
from src.models.errors import ConfigError, DomainError
from src.models.lp import SolverSettings


class ProtocolVariant(Enum):
    """Protocols the engine can bound.

    bb84 and cd constrain with the signal intensity only; decoy and dscd use
    every intensity. cd and dscd add the two-photon term to the objective.
    """
    BB84 = "bb84"
    CD = "cd"
    DECOY = "decoy"
    DSCD = "dscd"

    @property
    def uses_decoys(self) -> bool:
        return self in (ProtocolVariant.DECOY, ProtocolVariant.DSCD)

    @property
    def uses_two_photon(self) -> bool:
        return self in (ProtocolVariant.CD, ProtocolVariant.DSCD)

    @property
    def single_photon_counterpart(self) -> "ProtocolVariant":
        """Variant used when coincidence monitoring rejects two-photon credit."""
        return ProtocolVariant.DECOY if self.uses_decoys else ProtocolVariant.BB84

    @classmethod
    def parse(cls, value: "str | ProtocolVariant") -> "ProtocolVariant":
        if isinstance(value, ProtocolVariant):
            return value
        try:
            return cls(value.lower())
        except ValueError:
            choices = ", ".join(v.value for v in cls)
            raise ConfigError(f"unknown variant '{value}', expected one of: {choices}") from None


@dataclass(frozen=True)
class Cell:
    """One rectangle of the (e1, e2) domain with its entropy-term bounds.

    Single-photon variants partition e1 only; their cells carry no e2 bounds.
    """
    e1_lo: float
    e1_hi: float
    e2_lo: float | None = None
    e2_hi: float | None = None
    xi1_max: float = 1.0
    xi2_max: float | None = None

    def __post_init__(self):
        if not (0.0 <= self.e1_lo <= self.e1_hi <= 1.0):
            raise DomainError(f"invalid e1 bounds [{self.e1_lo}, {self.e1_hi}]")
        if (self.e2_lo is None) != (self.e2_hi is None):
            raise DomainError("e2 bounds must be given together")
        if self.e2_lo is not None and not (0.0 <= self.e2_lo <= self.e2_hi <= 1.0):  # type: ignore[operator]
            raise DomainError(f"invalid e2 bounds [{self.e2_lo}, {self.e2_hi}]")
        if not (0.0 <= self.xi1_max <= 1.0):
            raise DomainError(f"xi1_max must lie in [0, 1], got {self.xi1_max}")
        if self.xi2_max is not None and not (0.0 <= self.xi2_max <= 1.0):
            raise DomainError(f"xi2_max must lie in [0, 1], got {self.xi2_max}")

    @property
    def has_e2(self) -> bool:
        return self.e2_lo is not None


@dataclass(frozen=True)
class Partition:
    """A grid of cells covering ``[0, e1_up] x [0, e2_up]``."""
    cells: tuple[Cell, ...]
    resolution: tuple[int, int]
    domain: tuple[float, float | None]
    e1_edges: tuple[float, ...] = ()
    e2_edges: tuple[float, ...] = ()


@dataclass(frozen=True)
class EngineConfig:
    """Knobs of the partition-and-bound engine.

    Attributes:
        truncation: Photon-number truncation order n (>= 2)
        grid: Cells per axis (N1, N2); N2 is ignored by single-photon variants
        f_ec: Error-correction inefficiency multiplier (>= 1)
        clamp_negative: Clamp the final rate at zero
        refinement: Adaptive refinement passes over the minimising cells
        workers: Process count for cell evaluation
        domain: Fixed (e1_up, e2_up) that replaces the bisection
        bisection_width: Target bracket width of the domain bisection
        solver: Simplex tolerances and pivot cap
    """
    truncation: int = field(default_factory=lambda: config.truncation)
    grid: tuple[int, int] = field(default_factory=lambda: config.grid)
    f_ec: float = field(default_factory=lambda: config.f_ec)
    clamp_negative: bool = True
    refinement: int = 0
    workers: int = 1
    domain: tuple[float, float | None] | None = None
    bisection_width: float = field(default_factory=lambda: config.bisection_width)
    solver: SolverSettings = field(
        default_factory=lambda: SolverSettings(
            feasibility_tol=config.feasibility_tol,
            pivot_tol=config.pivot_tol,
            max_pivots=config.max_pivots,
        )
    )

    def __post_init__(self):
        if isinstance(self.truncation, bool) or not isinstance(self.truncation, int) or self.truncation < 2:
            raise ConfigError(f"truncation must be an integer >= 2, got {self.truncation!r}")
        if len(self.grid) != 2 or min(self.grid) < 1:
            raise ConfigError(f"grid must be two positive integers, got {self.grid!r}")
        if not self.f_ec >= 1.0:
            raise ConfigError(f"f_ec must be >= 1, got {self.f_ec!r}")
        if self.refinement < 0:
            raise ConfigError(f"refinement must be >= 0, got {self.refinement}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if not (0.0 < self.bisection_width < 1.0):
            raise ConfigError(f"bisection_width must lie in (0, 1), got {self.bisection_width}")
        if self.domain is not None:
            e1_up, e2_up = self.domain
            if not (0.0 < e1_up <= 1.0) or (e2_up is not None and not (0.0 < e2_up <= 1.0)):
                raise ConfigError(f"domain bounds must lie in (0, 1], got {self.domain!r}")

    def echo(self) -> dict[str, Any]:
        """Settings worth reproducing a run from."""
        return {
            "truncation": self.truncation,
            "grid": f"{self.grid[0]}x{self.grid[1]}",
            "f_ec": self.f_ec,
            "clamp_negative": self.clamp_negative,
            "refinement": self.refinement,
            "bisection_width": self.bisection_width,
            "feasibility_tol": self.solver.feasibility_tol,
            "pivot_tol": self.solver.pivot_tol,
            "max_pivots": self.solver.max_pivots,
            "domain": list(self.domain) if self.domain is not None else None,
        }


@dataclass(frozen=True)
class CellValue:
    """Cell LP outcome; ``value`` is None for infeasible cells."""
    cell: Cell
    value: float | None


@dataclass(frozen=True)
class AnalyticResult:
    """Traditional one-decoy bound and its intermediate quantities."""
    rate_per_pulse: float
    y0_upper: float
    y1_lower: float
    e1_upper: float
    degenerate: bool = False
    reason: str | None = None


@dataclass(frozen=True)
class SeparateBounds:
    """Objective bound from separate bounds on each yield and error rate.

    Every term uses ``Y_k >= y_lower[k]`` and ``e_k <= e_upper[k]`` on its
    own, which is never tighter than the partitioned bound.
    """
    y_lower: dict[int, float]
    e_upper: dict[int, float]
    r_lb: float


@dataclass
class RateResult:
    """Certified key rate and everything needed to reproduce it.

    Attributes:
        variant: Variant actually evaluated
        rate_per_pulse: Final rate, clamped at zero unless disabled
        r_lb: Certified lower bound on the objective of the rate problem
        analytic_rate: One-decoy analytic rate when exactly one decoy exists
        e1_up: Domain bound on e1
        e2_up: Domain bound on e2 (two-photon variants only)
        per_cell_values: Per-cell LP minima
        config_echo: Engine settings and tolerances used
        requested_variant: Variant asked for by the caller
        wall_ms: Wall time of the computation
    """
    variant: ProtocolVariant
    rate_per_pulse: float
    r_lb: float
    analytic_rate: float | None = None
    analytic: AnalyticResult | None = None
    e1_up: float = 1.0
    e2_up: float | None = None
    per_cell_values: list[CellValue] = field(default_factory=list)
    config_echo: dict[str, Any] = field(default_factory=dict)
    requested_variant: ProtocolVariant | None = None
    wall_ms: float = 0.0

    @property
    def fallback_variant(self) -> ProtocolVariant | None:
        """Variant substituted after a failed coincidence check, if any."""
        if self.requested_variant is not None and self.requested_variant is not self.variant:
            return self.variant
        return None

    @property
    def feasible_cells(self) -> int:
        return sum(1 for cv in self.per_cell_values if cv.value is not None)

    @property
    def infeasible_cells(self) -> int:
        return sum(1 for cv in self.per_cell_values if cv.value is None)

    @property
    def improvement_over_analytic(self) -> float | None:
        """Relative gain of the certified rate over the analytic one."""
        if self.analytic_rate is None or self.analytic_rate <= 0.0:
            return None
        return self.rate_per_pulse / self.analytic_rate - 1.0
