"""Monte Carlo simulator of the decoy-state coincidence-detection protocol.

Rounds are drawn in vectorised numpy batches. Each batch owns an RNG stream
spawned from the root ``SeedSequence``, and per-batch counts are integers
summed at the end, so results do not depend on batch scheduling.

Round model: Alice picks an intensity, a basis and a bit; the photon number
is Poisson, each photon survives the channel with probability eta and lands
on receiver port 0 or 1 with probability 1/2. Port j measures in basis j and
fires a dark count with probability y0/2. A compatible port reports Alice's
bit flipped with probability e_d; an incompatible port (or a dark-only
click) reports a uniform bit. A single click fixes Bob's basis to that port,
a double click sets it to Alice's basis, no click leaves a random basis and
no bit.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from src.models.channel import IntensityStatistics
from src.models.errors import DegenerateStatisticsError
from src.models.protocol import (
    ExpectedObservation,
    ObservedStatistics,
    ProtocolConfig,
    RoundRecord,
)

logger = logging.getLogger(__name__)

# Marker for the no-click outcome inside the integer arrays
NO_CLICK = -1


@dataclass
class _Rounds:
    """Per-round arrays of one batch."""
    decoy: np.ndarray
    alice_basis: np.ndarray
    alice_bit: np.ndarray
    port0: np.ndarray
    port1: np.ndarray
    bob_basis: np.ndarray
    bob_bit: np.ndarray
    sample: np.ndarray


def _draw_rounds(config: ProtocolConfig, rng: np.random.Generator, size: int) -> _Rounds:
    """Simulate ``size`` rounds with the resolution rules applied."""
    ch = config.channel
    means = np.array([mean for _, mean in config.intensities])
    probs = np.array(config.decoy_probabilities)

    decoy = rng.choice(len(means), size=size, p=probs)
    basis = rng.integers(0, 2, size=size)
    bit = rng.integers(0, 2, size=size)
    photons = rng.poisson(means[decoy])
    survivors = rng.binomial(photons, ch.eta)
    on_port0 = rng.binomial(survivors, 0.5)
    on_port = (on_port0, survivors - on_port0)
    dark = rng.random((2, size)) < ch.y0 / 2.0
    flips = (rng.random((2, size)) < ch.e_detector).astype(np.int64)
    noise_bits = rng.integers(0, 2, size=(2, size))
    random_basis = rng.integers(0, 2, size=size)
    sample = rng.random(size)

    clicks = []
    ports = []
    for j in (0, 1):
        click = (on_port[j] > 0) | dark[j]
        signal = (basis == j) & (on_port[j] > 0)
        measured = np.where(signal, bit ^ flips[j], noise_bits[j])
        clicks.append(click)
        ports.append(np.where(click, measured, NO_CLICK))

    single0 = clicks[0] & ~clicks[1]
    single1 = clicks[1] & ~clicks[0]
    double = clicks[0] & clicks[1]
    bob_basis = np.where(single0, 0, np.where(single1, 1, np.where(double, basis, random_basis)))
    alice_port = np.where(basis == 0, ports[0], ports[1])
    bob_bit = np.where(
        single0, ports[0], np.where(single1, ports[1], np.where(double, alice_port, NO_CLICK))
    )
    return _Rounds(decoy, basis, bit, ports[0], ports[1], bob_basis, bob_bit, sample)


def simulate_round(config: ProtocolConfig, rng: np.random.Generator) -> RoundRecord:
    """Simulate a single round; shares the batch kernel with ``run_protocol``."""
    r = _draw_rounds(config, rng, 1)

    def outcome(value: int) -> int | None:
        return None if value == NO_CLICK else int(value)

    return RoundRecord(
        decoy_index=int(r.decoy[0]),
        alice_basis=int(r.alice_basis[0]),
        alice_bit=int(r.alice_bit[0]),
        bob_port0=outcome(r.port0[0]),
        bob_port1=outcome(r.port1[0]),
        bob_basis=int(r.bob_basis[0]),
        bob_bit=outcome(r.bob_bit[0]),
    )


@dataclass
class _Counts:
    """Integer tallies per intensity."""
    sifted: int
    estimated: np.ndarray
    detected: np.ndarray
    errors: np.ndarray
    doubles: np.ndarray

    def __add__(self, other: "_Counts") -> "_Counts":
        return _Counts(
            self.sifted + other.sifted,
            self.estimated + other.estimated,
            self.detected + other.detected,
            self.errors + other.errors,
            self.doubles + other.doubles,
        )


def _count_batch(task: tuple[ProtocolConfig, np.random.SeedSequence, int]) -> _Counts:
    config, seed_seq, size = task
    r = _draw_rounds(config, np.random.default_rng(seed_seq), size)
    k = len(config.intensities)
    sifted = r.alice_basis == r.bob_basis
    estimated = sifted & (r.sample < config.sampling_fraction)
    detected = estimated & (r.bob_bit != NO_CLICK)
    errors = detected & (r.bob_bit != r.alice_bit)
    doubles = estimated & (r.port0 != NO_CLICK) & (r.port1 != NO_CLICK)
    return _Counts(
        sifted=int(sifted.sum()),
        estimated=np.bincount(r.decoy[estimated], minlength=k),
        detected=np.bincount(r.decoy[detected], minlength=k),
        errors=np.bincount(r.decoy[errors], minlength=k),
        doubles=np.bincount(r.decoy[doubles], minlength=k),
    )


class ProtocolSimulator:
    """Runs a configured number of rounds and aggregates the statistics.

    Attributes:
        config: Intensities, channel, round count and seed
        seed: Root seed actually used (drawn when the config has none)
    """

    def __init__(self, config: ProtocolConfig) -> None:
        self.config = config
        if config.seed is None:
            self.seed = int(np.random.SeedSequence().entropy)
            logger.info("No seed given, generated seed %d", self.seed)
        else:
            self.seed = config.seed

    def _tasks(self) -> list[tuple[ProtocolConfig, np.random.SeedSequence, int]]:
        size = self.config.batch_size
        n_batches = math.ceil(self.config.rounds / size)
        children = np.random.SeedSequence(self.seed).spawn(n_batches)
        sizes = [size] * (n_batches - 1) + [self.config.rounds - size * (n_batches - 1)]
        return [(self.config, child, s) for child, s in zip(children, sizes)]

    def run(self, require: Iterable[str] = ()) -> ObservedStatistics:
        """Simulate every round and estimate per-intensity statistics.

        Args:
            require: Labels that must receive at least one sifted round

        Raises:
            DegenerateStatisticsError: If a required label has no sifted rounds
        """
        tasks = self._tasks()
        logger.info(
            "Simulating %d rounds in %d batch(es), seed %d", self.config.rounds, len(tasks), self.seed
        )
        if self.config.workers > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=self.config.workers) as pool:
                parts = list(pool.map(_count_batch, tasks))
        else:
            parts = [_count_batch(task) for task in tasks]
        total = parts[0]
        for part in parts[1:]:
            total = total + part

        required = set(require)
        per_intensity: list[IntensityStatistics] = []
        coincidences: dict[str, float] = {}
        error_fractions: dict[str, float] = {}
        absent: list[str] = []
        for i, (label, mean) in enumerate(self.config.intensities):
            n_est = int(total.estimated[i])
            if n_est == 0:
                if label in required:
                    raise DegenerateStatisticsError(
                        f"intensity '{label}' received no sifted rounds", label=label
                    )
                absent.append(label)
                continue
            n_det = int(total.detected[i])
            n_err = int(total.errors[i])
            per_intensity.append(
                IntensityStatistics(
                    label=label,
                    mean_photon=mean,
                    gain=n_det / n_est,
                    qber=n_err / n_det if n_det else 0.0,
                    rounds=n_est,
                )
            )
            coincidences[label] = int(total.doubles[i]) / n_est
            error_fractions[label] = n_err / n_est

        return ObservedStatistics(
            per_intensity=tuple(per_intensity),
            coincidence_rate_per_intensity=coincidences,
            sifted_length=total.sifted,
            rounds=self.config.rounds,
            seed=self.seed,
            error_fraction_per_intensity=error_fractions,
            absent=tuple(absent),
        )


def run_protocol(config: ProtocolConfig, require: Iterable[str] = ()) -> ObservedStatistics:
    return ProtocolSimulator(config).run(require)


def expected_observed_statistics(config: ProtocolConfig) -> ExpectedObservation:
    """Exact expectations of the estimators ``run_protocol`` reports.

    Sifted detections are exactly the rounds where the port matching Alice's
    basis clicks; a no-click round survives sifting with probability 1/2.
    """
    ch = config.channel
    stats: list[IntensityStatistics] = []
    coincidences: dict[str, float] = {}
    error_fractions: dict[str, float] = {}
    sifted_probs: dict[str, float] = {}
    for (label, mean), prob in zip(config.intensities, config.decoy_probabilities):
        no_photon = math.exp(-ch.eta * mean / 2.0)
        silent = no_photon * (1.0 - ch.y0 / 2.0)
        fires = 1.0 - silent
        sifted = fires + silent * silent / 2.0
        errors = (1.0 - no_photon) * ch.e_detector + no_photon * ch.y0 / 2.0 * 0.5
        stats.append(
            IntensityStatistics(
                label=label,
                mean_photon=mean,
                gain=fires / sifted,
                qber=errors / fires if fires > 0.0 else 0.0,
                rounds=int(round(config.rounds * prob * sifted * config.sampling_fraction)),
            )
        )
        coincidences[label] = fires * fires / sifted
        error_fractions[label] = errors / sifted
        sifted_probs[label] = sifted
    return ExpectedObservation(
        per_intensity=tuple(stats),
        coincidence_rate_per_intensity=coincidences,
        error_fraction_per_intensity=error_fractions,
        sifted_probability_per_intensity=sifted_probs,
    )
