"""StatsFileService for loading and saving the CLI's JSON/YAML documents.

Converts between the pydantic file schemas and the domain records the
engine and the simulator work with.
"""

import json
import logging
from pathlib import Path
from typing import Any, TypeVar

import yaml
from pydantic import BaseModel, ValidationError

from src.models.channel import ChannelParams, IntensityStatistics
from src.models.errors import ConfigError, StatsFileParseError
from src.models.files import (
    ChannelEntry,
    CoincidenceEntry,
    IntensityEntry,
    ProtocolConfigFile,
    StatsFile,
)
from src.models.finite import ConsistencyDecision, SecurityParams, ToleranceSet
from src.models.protocol import ObservedStatistics, ProtocolConfig
from src.services.finite_stats import (
    binomial_half_width,
    check_coincidence_consistency,
    tolerances_for,
)
from src.services.protocol_sim import expected_observed_statistics

logger = logging.getLogger(__name__)

ModelT = TypeVar("ModelT", bound=BaseModel)

YAML_SUFFIXES = (".yaml", ".yml")

# Half-width of the coincidence check written by ``simulate``, in standard errors
COINCIDENCE_SIGMAS = 5.0


def _format_validation(exc: ValidationError) -> str:
    problems = []
    for err in exc.errors():
        where = ".".join(str(p) for p in err["loc"]) or "<root>"
        problems.append(f"{where}: {err['msg']}")
    return "; ".join(problems)


class StatsFileService:
    """Reads and writes statistics files, sweep specs and protocol configs."""

    def parse(self, text: str, model: type[ModelT], path: str | None = None, yaml_syntax: bool = False) -> ModelT:
        """Validate a document against ``model``.

        Raises:
            StatsFileParseError: With the path and, for YAML, the line number
        """
        try:
            if yaml_syntax:
                try:
                    data = yaml.safe_load(text)
                except yaml.YAMLError as e:
                    line = None
                    if getattr(e, "problem_mark", None) is not None:
                        line = e.problem_mark.line + 1  # type: ignore[attr-defined]
                    where = f"line {line}: " if line is not None else ""
                    raise StatsFileParseError(f"{where}invalid YAML syntax: {e}", path=path)
                if data is None:
                    raise StatsFileParseError("empty document", path=path)
                return model.model_validate(data)
            return model.model_validate_json(text)
        except ValidationError as e:
            raise StatsFileParseError(_format_validation(e), path=path) from e

    def load(self, path: str | Path, model: type[ModelT] = StatsFile) -> ModelT:  # type: ignore[assignment]
        """Read and validate a JSON (or, by suffix, YAML) document."""
        p = Path(path)
        try:
            text = p.read_text(encoding="utf-8")
        except OSError as e:
            raise StatsFileParseError(f"cannot read file: {e.strerror or e}", path=str(p)) from e
        logger.debug("Loading %s from %s", model.__name__, p)
        return self.parse(text, model, path=str(p), yaml_syntax=p.suffix.lower() in YAML_SUFFIXES)

    def dumps(self, document: BaseModel) -> str:
        """Canonical JSON: fixed key order, two-space indent, trailing newline."""
        data = document.model_dump(mode="json", exclude_none=True)
        return json.dumps(data, indent=2) + "\n"

    def save(self, document: BaseModel, path: str | Path) -> None:
        p = Path(path)
        try:
            if p.parent != Path(""):
                p.parent.mkdir(parents=True, exist_ok=True)
            p.write_text(self.dumps(document), encoding="utf-8")
        except OSError as e:
            raise StatsFileParseError(f"cannot write file: {e.strerror or e}", path=str(p)) from e
        logger.info("Wrote %s", p)

    def to_statistics(self, document: StatsFile) -> list[IntensityStatistics]:
        """Domain statistics with the signal first.

        The signal is the entry with role ``signal``, else the one with the
        largest mean photon number; the rest keep their file order.
        """
        entries = list(document.intensities)
        signal = next((e for e in entries if e.role == "signal"), None)
        if signal is None:
            signal = max(entries, key=lambda e: e.mean_photon)
        ordered = [signal] + [e for e in entries if e is not signal]
        try:
            return [
                IntensityStatistics(
                    label=e.label,
                    mean_photon=e.mean_photon,
                    gain=e.gain,
                    qber=e.qber,
                    rounds=e.rounds,
                )
                for e in ordered
            ]
        except ConfigError as e:
            raise StatsFileParseError(str(e)) from e

    def security_params(self, document: StatsFile) -> SecurityParams | None:
        if document.security is None:
            return None
        return SecurityParams(
            epsilon_completeness=document.security.epsilon_completeness,
            epsilon_stat=document.security.epsilon_stat,
            num_decoys=len(document.intensities) - 1,
        )

    def tolerances(self, document: StatsFile, asymptotic: bool = False) -> ToleranceSet:
        """Hoeffding tolerances when a security block exists, else all zero."""
        stats = self.to_statistics(document)
        params = None if asymptotic else self.security_params(document)
        if params is None:
            return ToleranceSet.asymptotic(s.label for s in stats)
        return tolerances_for(stats, params)

    def coincidence(self, document: StatsFile) -> ConsistencyDecision | None:
        if document.coincidences is None:
            return None
        c = document.coincidences
        return check_coincidence_consistency(c.observed_rate, c.expected_rate, c.half_width)


def channel_params(entry: ChannelEntry) -> ChannelParams:
    return ChannelParams(
        eta=entry.eta, y0=entry.y0, e_detector=entry.e_detector, e_background=entry.e_background
    )


def protocol_config(
    document: ProtocolConfigFile, seed: int | None = None, workers: int = 1
) -> ProtocolConfig:
    """Simulator settings from a protocol document; ``seed`` overrides the file."""
    return ProtocolConfig(
        intensities=tuple((i.label, i.mean_photon) for i in document.intensities),
        decoy_probabilities=tuple(document.decoy_probabilities),
        rounds=document.rounds,
        channel=channel_params(document.channel),
        seed=seed if seed is not None else document.seed,
        sampling_fraction=document.sampling_fraction,
        workers=workers,
    )


def observed_to_stats(
    observed: ObservedStatistics,
    config: ProtocolConfig,
    document: ProtocolConfigFile | None = None,
) -> StatsFile:
    """Statistics document for a simulator run.

    The first configured intensity is the signal. The coincidence block
    compares the signal's double-click rate with its honest expectation.
    """
    signal_label = config.labels[0]
    intensities = [
        IntensityEntry(
            label=s.label,
            mean_photon=s.mean_photon,
            gain=s.gain,
            qber=s.qber,
            rounds=s.rounds,
            role="signal" if s.label == signal_label else "decoy",
        )
        for s in observed.per_intensity
    ]

    coincidences = None
    if signal_label in observed.coincidence_rate_per_intensity:
        expected = expected_observed_statistics(config).coincidence_rate_per_intensity[signal_label]
        n = observed.get(signal_label).rounds
        coincidences = CoincidenceEntry(
            observed_rate=observed.coincidence_rate_per_intensity[signal_label],
            expected_rate=expected,
            half_width=binomial_half_width(expected, n, COINCIDENCE_SIGMAS),
        )

    ch = config.channel
    metadata: dict[str, Any] = {
        "seed": observed.seed,
        "rounds": observed.rounds,
        "sifted_length": observed.sifted_length,
        "sampling_fraction": config.sampling_fraction,
        "decoy_probabilities": list(config.decoy_probabilities),
        "channel": {
            "eta": ch.eta,
            "y0": ch.y0,
            "e_detector": ch.e_detector,
            "e_background": ch.e_background,
        },
        "error_fraction": dict(observed.error_fraction_per_intensity),
    }
    if observed.absent:
        metadata["absent"] = list(observed.absent)

    return StatsFile(
        intensities=intensities,
        security=document.security if document is not None else None,
        coincidences=coincidences,
        metadata=metadata,
    )
