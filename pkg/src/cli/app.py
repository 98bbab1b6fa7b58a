"""Command-line interface for qkd-rate.

Subcommands:
    compute   Certified key rate of one statistics file (CSV row on stdout)
    sweep     Rates over the signal intensity or the fibre distance
    batch     Rates of several measured statistics files, as a curve over mu
    simulate  Monte Carlo run of the protocol, written as a statistics file

Exit codes: 0 success, 1 I/O, schema or configuration problem, 2 statistics
inconsistent with any yield/error assignment.
"""

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from src.config import config
from src.models.channel import ChannelParams
from src.models.errors import InconsistentStatisticsError, QkdRateError
from src.models.files import EngineEntry, ProtocolConfigFile, StatsFile, SweepSpec
from src.models.keyrate import EngineConfig, ProtocolVariant
from src.services.channel_model import truth_objective
from src.services.keyrate import KeyRateEngine
from src.services.protocol_sim import run_protocol
from src.services.stats_file import StatsFileService, observed_to_stats, protocol_config
from src.services.sweep import RateRow, SweepService, format_rows

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_INCONSISTENT = 2

# Global service instance
stats_file_service = StatsFileService()


def configure_logging(level: str | None = None) -> None:
    """Root logger on stderr; stdout is reserved for CSV and documents."""
    name = (level or os.getenv("LOG_LEVEL", config.log_level)).upper()
    logging.basicConfig(
        level=getattr(logging, name, logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        stream=sys.stderr,
        force=True,
    )


def parse_grid(value: str) -> tuple[int, int]:
    """``N1xN2`` to a pair of positive integers."""
    parts = value.lower().split("x")
    if len(parts) != 2 or not all(p.isdigit() and int(p) >= 1 for p in parts):
        raise argparse.ArgumentTypeError(f"grid must look like N1xN2, got '{value}'")
    return int(parts[0]), int(parts[1])


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with the configuration code instead of 2."""

    def error(self, message: str):  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _add_engine_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--truncation", type=int, metavar="N", help="photon-number truncation order")
    parser.add_argument("--grid", type=parse_grid, metavar="N1xN2", help="cells per error axis")
    parser.add_argument("--f-ec", type=float, metavar="X", dest="f_ec", help="error-correction inefficiency")
    parser.add_argument("--refine", type=int, metavar="PASSES", help="adaptive refinement passes")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qkdrate", description="Certified lower bounds on QKD key rates")
    parser.add_argument("--log-level", help="overrides LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    compute = sub.add_parser("compute", help="key rate of one statistics file")
    compute.add_argument("stats", type=Path, help="statistics file (JSON or YAML)")
    compute.add_argument(
        "--variant", default=ProtocolVariant.DSCD.value, choices=[v.value for v in ProtocolVariant]
    )
    compute.add_argument("--asymptotic", action="store_true", help="ignore the security block")
    compute.add_argument(
        "--check-truth",
        action="store_true",
        help="compare r_lb with the honest objective of the channel in the file metadata",
    )
    _add_engine_flags(compute)

    sweep = sub.add_parser("sweep", help="rates over a range of intensities or distances")
    sweep.add_argument("spec", type=Path, help="sweep spec (JSON or YAML)")
    sweep.add_argument("--out", type=Path, default=None, metavar="DIR", help="output directory")
    _add_engine_flags(sweep)

    batch = sub.add_parser("batch", help="rates of several measured statistics files across mu")
    batch.add_argument("stats", type=Path, nargs="+", help="statistics files (JSON or YAML)")
    batch.add_argument(
        "--variant",
        action="append",
        dest="variants",
        choices=[v.value for v in ProtocolVariant],
        help="repeat for several variants (default: decoy and dscd)",
    )
    batch.add_argument("--asymptotic", action="store_true", help="ignore the security blocks")
    batch.add_argument("--out", type=Path, default=None, metavar="DIR", help="output directory")
    _add_engine_flags(batch)

    simulate = sub.add_parser("simulate", help="Monte Carlo run written as a statistics file")
    simulate.add_argument("config", type=Path, help="protocol config (JSON or YAML)")
    simulate.add_argument("--out", type=Path, default=None, metavar="PATH", help="output file; stdout if absent")
    simulate.add_argument("--seed", type=int, metavar="S", help="overrides the seed in the config")
    return parser


def engine_config_from(
    args: argparse.Namespace, overrides: EngineEntry | None = None, workers: int = 1
) -> EngineConfig:
    """Defaults, then sweep-file overrides, then command-line flags."""
    cfg = EngineConfig(workers=workers)
    if overrides is not None:
        if overrides.truncation is not None:
            cfg = replace(cfg, truncation=overrides.truncation)
        if overrides.grid is not None:
            cfg = replace(cfg, grid=parse_grid(overrides.grid))
        if overrides.f_ec is not None:
            cfg = replace(cfg, f_ec=overrides.f_ec)
        if overrides.refine is not None:
            cfg = replace(cfg, refinement=overrides.refine)
    if args.truncation is not None:
        cfg = replace(cfg, truncation=args.truncation)
    if args.grid is not None:
        cfg = replace(cfg, grid=args.grid)
    if args.f_ec is not None:
        cfg = replace(cfg, f_ec=args.f_ec)
    if args.refine is not None:
        cfg = replace(cfg, refinement=args.refine)
    return cfg


def _check_truth(document: StatsFile, variant: ProtocolVariant, mu: float, r_lb: float) -> None:
    channel = (document.metadata or {}).get("channel")
    if not isinstance(channel, dict):
        logger.warning("--check-truth needs a 'channel' block in the file metadata")
        return
    try:
        params = ChannelParams(**channel)
    except (TypeError, QkdRateError) as e:
        logger.warning("cannot read the channel in the file metadata: %s", e)
        return
    truth = truth_objective(params, mu, variant)
    if r_lb > truth + config.feasibility_tol:
        logger.warning("r_lb %.9e exceeds the honest objective %.9e", r_lb, truth)
    else:
        logger.info("r_lb %.9e <= honest objective %.9e", r_lb, truth)


def cmd_compute(stats_path: Path, variant: str, args: argparse.Namespace) -> int:
    """Print the header and one CSV row for a statistics file."""
    document = stats_file_service.load(stats_path)
    stats = stats_file_service.to_statistics(document)
    tolerances = stats_file_service.tolerances(document, asymptotic=args.asymptotic)
    coincidence = stats_file_service.coincidence(document)
    engine_config = engine_config_from(args, workers=config.threads)
    result = KeyRateEngine(engine_config).compute_rate(
        stats, tolerances, ProtocolVariant.parse(variant), coincidence
    )
    if getattr(args, "check_truth", False):
        _check_truth(document, result.variant, stats[0].mean_photon, result.r_lb)
    sys.stdout.write(format_rows([RateRow.from_result(result, engine_config)]))
    return EXIT_OK


def cmd_sweep(spec_path: Path, output_dir: Path | None, args: argparse.Namespace) -> int:
    """Write ``sweep.csv`` and ``sweep.svg`` for a sweep spec."""
    spec = stats_file_service.load(spec_path, SweepSpec)
    engine_config = engine_config_from(args, spec.engine)
    service = SweepService(engine_config)
    rows = service.run(spec)
    service.write(spec, rows, output_dir or config.output_dir)
    failed = [r for r in rows if r.status not in ("ok", "degenerate") and not r.status.startswith("fallback")]
    if failed:
        logger.warning("%d of %d sweep job(s) failed", len(failed), len(rows))
    return EXIT_OK


def cmd_batch(
    stats_paths: Sequence[Path], variants: Sequence[str] | None, output_dir: Path | None, args: argparse.Namespace
) -> int:
    """Write ``batch.csv`` and ``batch.svg`` for a set of measured statistics files."""
    engine_config = engine_config_from(args)
    service = SweepService(engine_config)
    rows = service.run_files(stats_paths, variants, asymptotic=args.asymptotic)
    service.write_rows(rows, "mu", output_dir or config.output_dir, "batch")
    failed = [r for r in rows if r.status != "ok" and not r.status.startswith("fallback")]
    if failed:
        logger.warning("%d of %d batch job(s) failed", len(failed), len(rows))
    return EXIT_OK


def cmd_simulate(config_path: Path, output_path: Path | None, seed: int | None = None) -> int:
    """Simulate a protocol run and write its statistics file."""
    document = stats_file_service.load(config_path, ProtocolConfigFile)
    sim_config = protocol_config(document, seed=seed, workers=config.threads)
    observed = run_protocol(sim_config, require=[sim_config.labels[0]])
    stats = observed_to_stats(observed, sim_config, document)
    if output_path is None:
        sys.stdout.write(stats_file_service.dumps(stats))
    else:
        stats_file_service.save(stats, output_path)
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)
    try:
        if args.command == "compute":
            return cmd_compute(args.stats, args.variant, args)
        if args.command == "sweep":
            return cmd_sweep(args.spec, args.out, args)
        if args.command == "batch":
            return cmd_batch(args.stats, args.variants, args.out, args)
        return cmd_simulate(args.config, args.out, args.seed)
    except InconsistentStatisticsError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INCONSISTENT
    except (QkdRateError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
