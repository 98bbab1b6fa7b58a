"""Configuration and constants for the qkd-rate key-rate calculator."""

import os
from pathlib import Path
from dataclasses import dataclass, field


# Version tag written into every stats file
STATS_SCHEMA_VERSION = 1

# CSV columns emitted by compute and sweep, in order
CSV_COLUMNS = (
    "axis_value",
    "variant",
    "rate_per_pulse",
    "r_lb",
    "analytic_rate",
    "e1_up",
    "e2_up",
    "n",
    "grid",
    "f_ec",
    "status",
    "wall_ms",
)


def _env_threads() -> int:
    """Read QKDRATE_THREADS, falling back to a single worker on bad input."""
    raw = os.environ.get("QKDRATE_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


@dataclass
class Config:
    """Application configuration settings."""

    # Worker cap for cell LPs, simulator batches and sweep points
    threads: int = field(default_factory=_env_threads)

    log_level: str = field(
        default_factory=lambda: os.environ.get("LOG_LEVEL", "INFO").upper()
    )

    # Default output directory for sweeps
    output_dir: Path = field(
        default_factory=lambda: Path(os.environ.get("QKDRATE_OUTPUT_DIR", "out"))
    )

    # Honest-channel defaults
    eta_receiver: float = 0.3
    y0: float = 1.7e-6
    e_detector: float = 0.033
    e_background: float = 0.5
    alpha_db_per_km: float = 0.2

    # Engine defaults
    truncation: int = 10
    grid: tuple[int, int] = (40, 40)
    f_ec: float = 1.16
    bisection_width: float = 1e-4

    # LP solver
    feasibility_tol: float = 1e-9
    pivot_tol: float = 1e-11
    max_pivots: int = 100_000

    # Series evaluation
    poisson_tail: float = 1e-12
    log_space_threshold: int = 20

    # Simulator
    sim_batch_size: int = 250_000

    # Output formatting
    csv_digits: int = 12


# Global config instance
config = Config()
