"""SweepService: key rates over the signal intensity or the fibre distance.

Each (point, variant) pair is an independent job. Jobs run in a process pool
capped by ``QKDRATE_THREADS`` and come back in submission order, so the CSV
is identical whatever the worker count.
"""

import csv
import io
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from src.config import CSV_COLUMNS, config
from src.models.channel import ChannelParams, IntensityStatistics, LinkModel
from src.models.errors import InconsistentStatisticsError, QkdRateError
from src.models.files import SweepSpec
from src.models.finite import ToleranceSet
from src.models.keyrate import EngineConfig, ProtocolVariant, RateResult
from src.services.analytic import analytic_rate
from src.services.channel_model import channel_for_distance, expected_statistics
from src.services.keyrate import KeyRateEngine
from src.services.plotting import plot_sweep
from src.services.stats_file import StatsFileService

logger = logging.getLogger(__name__)

DEFAULT_VARIANTS = ("decoy", "dscd")
ANALYTIC = "analytic"
# DSCD rate from separate Y_k and e_k bounds, for comparison with the partition
SEPARATE = "separate"


@dataclass
class RateRow:
    """One CSV row of ``compute`` or ``sweep``."""
    axis_value: float | None
    variant: str
    rate_per_pulse: float | None
    r_lb: float | None
    analytic_rate: float | None
    e1_up: float | None
    e2_up: float | None
    n: int
    grid: str
    f_ec: float
    status: str
    wall_ms: float

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @classmethod
    def from_result(
        cls, result: RateResult, engine_config: EngineConfig, axis_value: float | None = None
    ) -> "RateRow":
        status = "ok"
        if result.fallback_variant is not None:
            status = f"fallback:{result.requested_variant.value}"  # type: ignore[union-attr]
        return cls(
            axis_value=axis_value,
            variant=result.variant.value,
            rate_per_pulse=result.rate_per_pulse,
            r_lb=result.r_lb,
            analytic_rate=result.analytic_rate,
            e1_up=result.e1_up,
            e2_up=result.e2_up,
            n=engine_config.truncation,
            grid=f"{engine_config.grid[0]}x{engine_config.grid[1]}",
            f_ec=engine_config.f_ec,
            status=status,
            wall_ms=result.wall_ms,
        )

    @classmethod
    def failed(
        cls,
        variant: str,
        engine_config: EngineConfig,
        status: str,
        axis_value: float | None = None,
        wall_ms: float = 0.0,
    ) -> "RateRow":
        return cls(
            axis_value=axis_value,
            variant=variant,
            rate_per_pulse=None,
            r_lb=None,
            analytic_rate=None,
            e1_up=None,
            e2_up=None,
            n=engine_config.truncation,
            grid=f"{engine_config.grid[0]}x{engine_config.grid[1]}",
            f_ec=engine_config.f_ec,
            status=status,
            wall_ms=wall_ms,
        )


def format_number(value: float | int | None, digits: int | None = None) -> str:
    """CSV cell text: empty for missing values, else ``digits`` significant digits."""
    if value is None:
        return ""
    if isinstance(value, int):
        return str(value)
    return f"{value:.{digits or config.csv_digits}g}"


def format_rows(rows: Iterable[RateRow]) -> str:
    """CSV text with the header row first."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow(
            [
                format_number(row.axis_value),
                row.variant,
                format_number(row.rate_per_pulse),
                format_number(row.r_lb),
                format_number(row.analytic_rate),
                format_number(row.e1_up),
                format_number(row.e2_up),
                str(row.n),
                row.grid,
                format_number(row.f_ec),
                row.status,
                f"{row.wall_ms:.1f}",
            ]
        )
    return buffer.getvalue()


def sweep_points(spec: SweepSpec) -> list[float]:
    """Axis values from ``start`` to ``stop`` inclusive, rounded to 12 digits."""
    start, stop, step = spec.range
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + i * step, 12) for i in range(count)]


def _link(spec: SweepSpec) -> tuple[LinkModel, float, float, float]:
    entry = spec.link
    if entry is None:
        return LinkModel(config.alpha_db_per_km, config.eta_receiver), config.y0, config.e_detector, config.e_background
    return (
        LinkModel(entry.alpha_db_per_km, entry.eta_receiver),
        entry.y0,
        entry.e_detector,
        entry.e_background,
    )


def channel_at(spec: SweepSpec, value: float) -> ChannelParams:
    """Honest channel of one sweep point."""
    if spec.axis == "mu" and spec.channel is not None:
        c = spec.channel
        return ChannelParams(eta=c.eta, y0=c.y0, e_detector=c.e_detector, e_background=c.e_background)
    link, y0, e_detector, e_background = _link(spec)
    distance = value if spec.axis == "distance" else spec.distance_km
    return channel_for_distance(link, distance, y0, e_detector, e_background)


def statistics_at(spec: SweepSpec, value: float) -> list[IntensityStatistics]:
    """Expected statistics of the signal and the decoys at one sweep point."""
    mu = value if spec.axis == "mu" else spec.signal_mu
    return expected_statistics(channel_at(spec, value), [mu] + list(spec.decoys))  # type: ignore[list-item]


def _status_for(exc: Exception) -> str:
    if isinstance(exc, InconsistentStatisticsError):
        return "inconsistent"
    return f"error:{type(exc).__name__}"


def _run_point(task: tuple[SweepSpec, EngineConfig, float, str]) -> RateRow:
    spec, engine_config, value, variant = task
    start = time.perf_counter()
    try:
        stats = statistics_at(spec, value)
        if variant == ANALYTIC:
            result = analytic_rate(stats[:2], engine_config)
            return RateRow(
                axis_value=value,
                variant=ANALYTIC,
                rate_per_pulse=result.rate_per_pulse,
                r_lb=None,
                analytic_rate=result.rate_per_pulse,
                e1_up=result.e1_upper,
                e2_up=None,
                n=engine_config.truncation,
                grid=f"{engine_config.grid[0]}x{engine_config.grid[1]}",
                f_ec=engine_config.f_ec,
                status="degenerate" if result.degenerate else "ok",
                wall_ms=(time.perf_counter() - start) * 1000.0,
            )
        if variant == SEPARATE:
            engine = KeyRateEngine(engine_config)
            tolerances = ToleranceSet.asymptotic(s.label for s in stats)
            bounds = engine.separate_bounds_objective(stats, tolerances, ProtocolVariant.DSCD)
            return RateRow(
                axis_value=value,
                variant=SEPARATE,
                rate_per_pulse=engine.assemble_rate(stats[0], bounds.r_lb),
                r_lb=bounds.r_lb,
                analytic_rate=None,
                e1_up=bounds.e_upper[1],
                e2_up=bounds.e_upper.get(2),
                n=engine_config.truncation,
                grid=f"{engine_config.grid[0]}x{engine_config.grid[1]}",
                f_ec=engine_config.f_ec,
                status="ok",
                wall_ms=(time.perf_counter() - start) * 1000.0,
            )
        rate = KeyRateEngine(engine_config).compute_rate(stats, None, ProtocolVariant.parse(variant))
        return RateRow.from_result(rate, engine_config, axis_value=value)
    except QkdRateError as e:
        logger.warning("Sweep point %s=%g (%s) failed: %s", spec.axis, value, variant, e)
        return RateRow.failed(
            variant, engine_config, _status_for(e), value, (time.perf_counter() - start) * 1000.0
        )


def _run_file(task: tuple[Path, EngineConfig, str, bool]) -> RateRow:
    path, engine_config, variant, asymptotic = task
    start = time.perf_counter()
    mu: float | None = None
    try:
        service = StatsFileService()
        document = service.load(path)
        stats = service.to_statistics(document)
        mu = stats[0].mean_photon
        result = KeyRateEngine(engine_config).compute_rate(
            stats,
            service.tolerances(document, asymptotic=asymptotic),
            ProtocolVariant.parse(variant),
            service.coincidence(document),
        )
        return RateRow.from_result(result, engine_config, axis_value=mu)
    except QkdRateError as e:
        logger.warning("Statistics file %s (%s) failed: %s", path, variant, e)
        return RateRow.failed(
            variant, engine_config, _status_for(e), mu, (time.perf_counter() - start) * 1000.0
        )


class SweepService:
    """Runs sweep specs and writes their CSV and plot.

    Attributes:
        engine_config: Engine settings shared by every point
        threads: Process cap for the point pool
    """

    def __init__(self, engine_config: EngineConfig, threads: int | None = None) -> None:
        self.engine_config = engine_config
        self.threads = threads if threads is not None else config.threads

    def variants(self, spec: SweepSpec) -> list[str]:
        requested = DEFAULT_VARIANTS if spec.variants is None else spec.variants
        names = [ProtocolVariant.parse(v).value for v in requested]
        if spec.include_analytic:
            if len(spec.decoys) == 1:
                names.append(ANALYTIC)
            else:
                logger.warning("Analytic curve needs exactly one decoy, got %d; skipped", len(spec.decoys))
        if spec.include_separate:
            names.append(SEPARATE)
        return names

    def run(self, spec: SweepSpec) -> list[RateRow]:
        """Rows in axis order, variants in the order the sweep file lists them."""
        points = sweep_points(spec)
        tasks = [
            (spec, self.engine_config, value, variant)
            for value in points
            for variant in self.variants(spec)
        ]
        logger.info("Sweeping %s over %d point(s), %d job(s)", spec.axis, len(points), len(tasks))
        if self.threads > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=self.threads) as pool:
                rows = list(pool.map(_run_point, tasks))
        else:
            rows = [_run_point(task) for task in tasks]
        for row in rows:
            logger.info("%s=%g %s rate=%s [%s]", spec.axis, row.axis_value, row.variant,
                        format_number(row.rate_per_pulse, 6), row.status)
        return rows

    def run_files(
        self, paths: Sequence[Path], variants: Sequence[str] | None = None, asymptotic: bool = False
    ) -> list[RateRow]:
        """Rates of measured statistics files, ordered by signal mean photon number.

        Each file is one point of a ``mu`` curve; rows of files that could
        not be read keep an empty axis value and sort last.
        """
        names = [ProtocolVariant.parse(v).value for v in (DEFAULT_VARIANTS if variants is None else variants)]
        tasks = [(Path(p), self.engine_config, v, asymptotic) for p in paths for v in names]
        logger.info("Computing %d statistics file(s), %d job(s)", len(paths), len(tasks))
        if self.threads > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=self.threads) as pool:
                rows = list(pool.map(_run_file, tasks))
        else:
            rows = [_run_file(task) for task in tasks]
        order = {name: i for i, name in enumerate(names)}
        rows.sort(key=lambda r: (r.axis_value is None, r.axis_value or 0.0, order.get(r.variant, len(order))))
        return rows

    def write(self, spec: SweepSpec, rows: Sequence[RateRow], output_dir: Path) -> tuple[Path, Path]:
        """Write ``sweep.csv`` and ``sweep.svg`` into ``output_dir``."""
        return self.write_rows(rows, spec.axis, output_dir, "sweep")

    def write_rows(
        self, rows: Sequence[RateRow], axis: str, output_dir: Path, stem: str
    ) -> tuple[Path, Path]:
        """Write ``<stem>.csv`` and ``<stem>.svg`` into ``output_dir``."""
        output_dir.mkdir(parents=True, exist_ok=True)
        csv_path = output_dir / f"{stem}.csv"
        svg_path = output_dir / f"{stem}.svg"
        csv_path.write_text(format_rows(rows), encoding="utf-8")
        plot_sweep(rows, axis, svg_path)
        logger.info("Wrote %s and %s", csv_path, svg_path)
        return csv_path, svg_path
