"""Tests for the qkdrate command-line interface."""

import argparse
import csv
import io
import json
from pathlib import Path

import pytest
import yaml

from src.cli.app import EXIT_INCONSISTENT, EXIT_INPUT, EXIT_OK, main, parse_grid
from src.config import CSV_COLUMNS
from src.models.channel import ChannelParams
from src.models.keyrate import EngineConfig, ProtocolVariant
from src.models.protocol import ProtocolConfig
from src.services.channel_model import expected_statistics
from src.services.keyrate import KeyRateEngine
from src.services.protocol_sim import expected_observed_statistics

SAMPLES = Path(__file__).resolve().parent.parent / "samples"
FAST = ["--truncation", "6", "--grid", "4x4"]

PROTOCOL = {
    "intensities": [
        {"label": "signal", "mean_photon": 0.5},
        {"label": "decoy1", "mean_photon": 0.1},
    ],
    "decoy_probabilities": [0.7, 0.3],
    "rounds": 20_000,
    "channel": {"eta": 0.3},
    "seed": 1,
}


def _rows(text: str) -> list[dict[str, str]]:
    return list(csv.DictReader(io.StringIO(text)))


class TestParseGrid:
    def test_valid(self):
        assert parse_grid("40x20") == (40, 20)
        assert parse_grid("3X3") == (3, 3)

    @pytest.mark.parametrize("value", ["40", "0x4", "ax4", "4x4x4", "-1x2"])
    def test_invalid(self, value: str):
        with pytest.raises(argparse.ArgumentTypeError):
            parse_grid(value)


class TestCompute:
    def test_sample_file(self, capsys):
        code = main(["compute", str(SAMPLES / "stats_dscd.json"), *FAST])
        out = capsys.readouterr().out
        assert code == EXIT_OK
        assert out.splitlines()[0] == ",".join(CSV_COLUMNS)
        row = _rows(out)[0]
        assert row["variant"] == "dscd"
        assert row["axis_value"] == ""
        assert row["status"] == "ok"
        assert float(row["rate_per_pulse"]) > 0.0
        assert row["grid"] == "4x4"

    def test_variant_flag(self, capsys):
        code = main(["compute", str(SAMPLES / "stats_dscd.json"), "--variant", "bb84", *FAST])
        assert code == EXIT_OK
        assert _rows(capsys.readouterr().out)[0]["variant"] == "bb84"

    def test_missing_file(self, tmp_path: Path, capsys):
        code = main(["compute", str(tmp_path / "nope.json")])
        assert code == EXIT_INPUT
        assert "nope.json" in capsys.readouterr().err

    def test_inconsistent_statistics(self, tmp_path: Path, capsys):
        path = tmp_path / "bad.json"
        path.write_text(
            json.dumps(
                {
                    "intensities": [
                        {"label": "signal", "mean_photon": 0.5, "gain": 0.01, "qber": 0.03},
                        {"label": "decoy1", "mean_photon": 0.1, "gain": 0.09, "qber": 0.03},
                    ]
                }
            ),
            encoding="utf-8",
        )
        code = main(["compute", str(path), "--variant", "decoy", *FAST])
        captured = capsys.readouterr()
        assert code == EXIT_INCONSISTENT
        assert "inconsistent" in captured.err
        assert captured.out == ""

    def test_bad_grid_flag(self, capsys):
        with pytest.raises(SystemExit) as excinfo:
            main(["compute", str(SAMPLES / "stats_dscd.json"), "--grid", "4by4"])
        assert excinfo.value.code == EXIT_INPUT

    def test_unknown_variant(self):
        with pytest.raises(SystemExit) as excinfo:
            main(["compute", str(SAMPLES / "stats_dscd.json"), "--variant", "bbm92"])
        assert excinfo.value.code == EXIT_INPUT

    def test_coincidence_fallback_is_reported(self, tmp_path: Path, capsys):
        document = json.loads((SAMPLES / "stats_dscd.json").read_text(encoding="utf-8"))
        document["coincidences"] = {"observed_rate": 0.2, "expected_rate": 0.01, "half_width": 0.001}
        path = tmp_path / "fallback.json"
        path.write_text(json.dumps(document), encoding="utf-8")
        assert main(["compute", str(path), *FAST]) == EXIT_OK
        row = _rows(capsys.readouterr().out)[0]
        assert row["variant"] == "decoy"
        assert row["status"] == "fallback:dscd"


class TestSimulate:
    def _config(self, tmp_path: Path) -> Path:
        path = tmp_path / "protocol.yaml"
        path.write_text(yaml.safe_dump(PROTOCOL), encoding="utf-8")
        return path

    def test_same_seed_same_bytes(self, tmp_path: Path):
        config = self._config(tmp_path)
        first, second = tmp_path / "a.json", tmp_path / "b.json"
        assert main(["simulate", str(config), "--out", str(first), "--seed", "3"]) == EXIT_OK
        assert main(["simulate", str(config), "--out", str(second), "--seed", "3"]) == EXIT_OK
        assert first.read_bytes() == second.read_bytes()
        assert json.loads(first.read_text(encoding="utf-8"))["metadata"]["seed"] == 3

    def test_stdout_when_no_output_path(self, tmp_path: Path, capsys):
        assert main(["simulate", str(self._config(tmp_path))]) == EXIT_OK
        document = json.loads(capsys.readouterr().out)
        assert [e["label"] for e in document["intensities"]] == ["signal", "decoy1"]

    def test_output_feeds_compute(self, tmp_path: Path, capsys):
        out = tmp_path / "stats.json"
        assert main(["simulate", str(self._config(tmp_path)), "--out", str(out)]) == EXIT_OK
        capsys.readouterr()
        code = main(["compute", str(out), "--asymptotic", "--variant", "decoy", *FAST])
        assert code in (EXIT_OK, EXIT_INCONSISTENT)

    def test_invalid_config(self, tmp_path: Path, capsys):
        path = tmp_path / "protocol.json"
        path.write_text(json.dumps(dict(PROTOCOL, decoy_probabilities=[0.5, 0.2])), encoding="utf-8")
        assert main(["simulate", str(path)]) == EXIT_INPUT
        assert "error:" in capsys.readouterr().err


class TestSweep:
    def test_writes_csv_and_plot(self, tmp_path: Path):
        spec = tmp_path / "sweep.yaml"
        spec.write_text(
            yaml.safe_dump(
                {
                    "axis": "mu",
                    "range": [0.3, 0.5, 0.1],
                    "decoys": [0.1],
                    "channel": {"eta": 0.3},
                    "variants": ["decoy"],
                    "engine": {"truncation": 6, "grid": "8x8"},
                }
            ),
            encoding="utf-8",
        )
        out = tmp_path / "out"
        assert main(["sweep", str(spec), "--out", str(out), "--grid", "4x4"]) == EXIT_OK
        rows = _rows((out / "sweep.csv").read_text(encoding="utf-8"))
        assert [r["axis_value"] for r in rows] == ["0.3", "0.4", "0.5"]
        assert all(r["grid"] == "4x4" and r["n"] == "6" for r in rows)
        assert (out / "sweep.svg").exists()

    def test_invalid_spec(self, tmp_path: Path):
        spec = tmp_path / "sweep.json"
        spec.write_text(json.dumps({"axis": "time", "range": [0, 1, 1]}), encoding="utf-8")
        assert main(["sweep", str(spec), "--out", str(tmp_path)]) == EXIT_INPUT


class TestBatch:
    def _stats_file(self, path: Path, mu: float) -> Path:
        stats = expected_statistics(ChannelParams(eta=0.3, y0=1.7e-6, e_detector=0.033), [mu, 0.1])
        document = {
            "schema_version": 1,
            "intensities": [
                {"label": s.label, "mean_photon": s.mean_photon, "gain": s.gain, "qber": s.qber}
                for s in stats
            ],
        }
        path.write_text(json.dumps(document), encoding="utf-8")
        return path

    def test_files_become_a_curve_over_mu(self, tmp_path: Path):
        high = self._stats_file(tmp_path / "high.json", 0.6)
        low = self._stats_file(tmp_path / "low.json", 0.4)
        missing = tmp_path / "missing.json"
        out = tmp_path / "out"
        args = ["batch", str(high), str(missing), str(low), "--variant", "decoy", "--variant", "dscd"]
        assert main([*args, "--out", str(out), *FAST]) == EXIT_OK
        rows = _rows((out / "batch.csv").read_text(encoding="utf-8"))
        assert [(r["axis_value"], r["variant"]) for r in rows] == [
            ("0.4", "decoy"), ("0.4", "dscd"), ("0.6", "decoy"), ("0.6", "dscd"), ("", "decoy"), ("", "dscd"),
        ]
        assert [r["status"] for r in rows[:4]] == ["ok"] * 4
        assert rows[4]["status"] == "error:StatsFileParseError"
        assert (out / "batch.svg").exists()

    def test_default_variants(self, tmp_path: Path):
        path = self._stats_file(tmp_path / "one.json", 0.5)
        assert main(["batch", str(path), "--out", str(tmp_path), *FAST]) == EXIT_OK
        rows = _rows((tmp_path / "batch.csv").read_text(encoding="utf-8"))
        assert [r["variant"] for r in rows] == ["decoy", "dscd"]


@pytest.mark.slow
class TestEndToEnd:
    def test_simulated_run_certifies_a_positive_rate(self, tmp_path: Path, capsys):
        out = tmp_path / "stats.json"
        assert main(["simulate", str(SAMPLES / "protocol.yaml"), "--out", str(out)]) == EXIT_OK
        capsys.readouterr()
        args = ["--asymptotic", "--variant", "decoy", "--truncation", "8", "--grid", "40x1"]
        assert main(["compute", str(out), *args]) == EXIT_OK
        simulated = float(_rows(capsys.readouterr().out)[0]["rate_per_pulse"])

        config = ProtocolConfig(
            intensities=(("signal", 0.5), ("decoy1", 0.1)),
            decoy_probabilities=(0.7, 0.3),
            rounds=2_000_000,
            channel=ChannelParams(eta=0.3, y0=1.7e-6, e_detector=0.033),
        )
        expected = list(expected_observed_statistics(config).per_intensity)
        engine = KeyRateEngine(EngineConfig(truncation=8, grid=(40, 1)))
        reference = engine.compute_rate(expected, None, ProtocolVariant.DECOY).rate_per_pulse

        assert simulated > 0.0
        assert abs(simulated - reference) / reference < 0.5
