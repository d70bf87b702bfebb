import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest

from rramsec import cli, config, trng
from rramsec.cli import EXIT_INVALID, EXIT_OK, EXIT_RUNTIME, SWEEP_HEADER, main


def write_config(path, **sections):
    cfg = config.ExperimentConfig()
    for name, values in sections.items():
        section = getattr(cfg, name)
        for key, value in values.items():
            setattr(section, key, value)
    config.dump(cfg, path)
    return str(path)


def digests(directory):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(directory.iterdir())}


@pytest.fixture
def quick_config(tmp_path):
    # a fixed half-pulse duration skips the search; small sweeps and CRP counts keep runs short
    return write_config(
        tmp_path / "quick.json",
        pulses={"half_duration": 3.16e-6},
        sweep={"durations": [1e-8, 3e-6, 1e-2], "n_seeds": 5},
        puf={"n_cal": 500, "reliability_repeats": 200},
    )


# -- calibrate -------------------------------------------------------------------------


def test_calibrate_writes_constants_and_is_idempotent(tmp_path, capsys):
    out = tmp_path / "cal"
    assert main(["calibrate", "--out", str(out)]) == EXIT_OK
    printed = capsys.readouterr().out.splitlines()
    assert len(printed) == 7 and all("residual" in line for line in printed)
    report = json.loads((out / "calibration.json").read_text())
    assert max(abs(r["residual"]) for r in report["residuals"]) <= 0.05
    fitted = config.load(out / "config.json")
    again = tmp_path / "again"
    assert main(["calibrate", "--config", str(out / "config.json"), "--out", str(again)]) == EXIT_OK
    refit = config.load(again / "config.json")
    assert refit.device.tau50_set == pytest.approx(fitted.device.tau50_set, rel=1e-9)
    assert refit.device.sigma_tau == pytest.approx(fitted.device.sigma_tau, rel=1e-9)
    assert refit.device.k_hrs == pytest.approx(fitted.device.k_hrs, rel=1e-12)


def test_calibrate_write_back_updates_config_file(tmp_path):
    path = write_config(tmp_path / "c.json", device={"tau50_set": 5e-6})
    assert main(["calibrate", "--config", path, "--write-back", "--out", str(tmp_path / "o")]) == EXIT_OK
    assert config.load(path).device.tau50_set == pytest.approx(3.164142771446469e-06, rel=1e-6)
    assert main(["calibrate", "--write-back", "--out", str(tmp_path / "o")]) == EXIT_INVALID


def test_inconsistent_targets_exit_two(tmp_path, capsys):
    table = [[1e-8, 0.0], [1e-7, 0.9], [1e-6, 0.1], [1e-5, 0.9], [1e-4, 0.1], [1e-2, 1.0]]
    path = write_config(tmp_path / "bad.json", calibration={"switching_table": table})
    assert main(["calibrate", "--config", path, "--out", str(tmp_path / "o")]) == EXIT_RUNTIME
    assert "residuals" in capsys.readouterr().err
    path = write_config(tmp_path / "bad2.json", calibration={"hrs_target": 1e3, "lrs_target": 2e3})
    assert main(["calibrate", "--config", path, "--out", str(tmp_path / "o")]) == EXIT_RUNTIME


# -- trng and nist -----------------------------------------------------------------------


def test_trng_writeback_single_harvest(tmp_path, quick_config):
    out = tmp_path / "wb"
    args = ["trng", "--config", quick_config, "--method", "writeback", "--bits", "256", "--out", str(out)]
    assert main(args) == EXIT_OK
    stream = trng.load_stream(out / "bits.txt")
    assert len(stream) == 256 and stream.provenance["harvests"] == "1"
    assert np.all(trng.stream_to_matrix(stream, (16, 16)).sum(axis=1) == 8)
    report = json.loads((out / "nist.json").read_text())
    statuses = {r["name"]: r["status"] for r in report["results"]}
    assert statuses["binary_matrix_rank"] == "NA"
    assert (out / "nist.txt").read_text().splitlines()[-1].startswith("passed ")


def test_trng_halfpulse_hundred_thousand_bits(tmp_path, quick_config):
    out = tmp_path / "hp"
    assert main(["trng", "--config", quick_config, "--bits", "100000", "--seed", "3", "--out", str(out)]) == EXIT_OK
    stream = trng.load_stream(out / "bits.txt")
    assert len(stream) == 100_000 and stream.provenance["harvests"] == "391"
    report = json.loads((out / "nist.json").read_text())
    assert report["applicable"] == 10 and report["provenance"]["n_bits"] == 100_000
    assert report["passed"] >= 9

    again = tmp_path / "nist"
    assert main(["nist", str(out / "bits.txt"), "--out", str(again)]) == EXIT_OK
    assert json.loads((again / "nist.json").read_text())["results"] == report["results"]


def test_trng_search_when_duration_unset(tmp_path):
    path = write_config(tmp_path / "c.json", pulses={"half_search_tol": 0.03})
    out = tmp_path / "o"
    assert main(["trng", "--config", path, "--bits", "512", "--out", str(out)]) == EXIT_OK
    assert len(trng.load_stream(out / "bits.txt")) == 512


# -- puf -------------------------------------------------------------------------------


def test_puf_single_device_marks_pairwise_metrics_na(tmp_path, quick_config, capsys):
    out = tmp_path / "p1"
    assert main(["puf", "--config", quick_config, "--devices", "1", "--crps", "1000", "--out", str(out)]) == EXIT_OK
    report = json.loads((out / "metrics.json").read_text())
    assert report["uniqueness"]["applicable"] is False and report["uniqueness"]["value"] is None
    assert report["bit_aliasing"]["applicable"] is False
    assert report["reliability"]["value"] == 100.0
    assert "uniqueness: NA" in capsys.readouterr().out
    assert not (out / "hist_uniqueness.csv").exists()
    crps = (out / "crps_d00.csv").read_text().splitlines()
    assert "challenge_hex,response_hex" in crps and len(crps) == 1000 + crps.index("challenge_hex,response_hex") + 1


def test_puf_two_devices_reports_bit_aliasing(tmp_path, quick_config):
    out = tmp_path / "p2"
    assert main(["puf", "--config", quick_config, "--devices", "2", "--crps", "2000", "--out", str(out)]) == EXIT_OK
    report = json.loads((out / "metrics.json").read_text())
    assert len(report["bit_aliasing"]["per_bit"]) == 16
    assert 40 <= report["bit_aliasing"]["value"] <= 60
    assert report["uniqueness"]["samples"] == {"k": 2, "n": 2000, "m": 16}
    for name in ("intra_hd", "uniqueness", "reliability"):
        assert (out / f"hist_{name}.csv").read_text().startswith("bin_left,bin_right,count\n")


def test_puf_rejects_bad_counts(tmp_path, quick_config):
    assert main(["puf", "--config", quick_config, "--devices", "0", "--out", str(tmp_path)]) == EXIT_INVALID
    assert main(["puf", "--config", quick_config, "--crps", "1", "--out", str(tmp_path)]) == EXIT_INVALID


# -- sweep -------------------------------------------------------------------------------


def test_sweep_is_monotone_and_saturates(tmp_path, quick_config):
    out = tmp_path / "s"
    assert main(["sweep", "--config", quick_config, "--out", str(out)]) == EXIT_OK
    lines = (out / "sweep.csv").read_text().splitlines()
    assert lines[0] == SWEEP_HEADER
    fractions = [float(line.split(",")[1]) for line in lines[1:]]
    assert fractions[0] == 0.0 and fractions[-1] == 1.0
    assert fractions == sorted(fractions)
    # no cell stays in HRS after 10 ms, so that range is blank
    assert lines[-1].endswith(",,")


def test_sweep_with_no_durations_writes_header_only(tmp_path):
    path = write_config(tmp_path / "c.json", sweep={"durations": []})
    assert main(["sweep", "--config", path, "--out", str(tmp_path / "o")]) == EXIT_OK
    assert (tmp_path / "o" / "sweep.csv").read_text() == SWEEP_HEADER + "\n"


def test_single_long_duration_switches_everything(tmp_path):
    cfg = config.ExperimentConfig()
    cfg.sweep.durations = [10e-3]
    cfg.sweep.n_seeds = 10
    ((duration, fraction, *_),) = cli.sweep_rows(cfg)
    assert duration == 10e-3 and fraction == 1.0


# -- exit codes and determinism -------------------------------------------------------------


def test_usage_and_input_errors_exit_one(tmp_path, capsys):
    assert main([]) == EXIT_INVALID
    assert main(["trng", "--method", "dice"]) == EXIT_INVALID
    assert main(["trng", "--seed", "-4"]) == EXIT_INVALID
    assert main(["trng", "--bits", "0", "--out", str(tmp_path)]) == EXIT_INVALID
    bad = tmp_path / "bad.json"
    bad.write_text('{"crossbar": {"rows": 3}}')
    assert main(["sweep", "--config", str(bad), "--out", str(tmp_path)]) == EXIT_INVALID
    (tmp_path / "bits.txt").write_text("01x1\n")
    assert main(["nist", str(tmp_path / "bits.txt"), "--out", str(tmp_path)]) == EXIT_INVALID
    assert "error" in capsys.readouterr().err


def test_missing_input_file_exits_two(tmp_path):
    assert main(["nist", str(tmp_path / "absent.txt"), "--out", str(tmp_path)]) == EXIT_RUNTIME


@pytest.mark.parametrize(
    "argv",
    [
        ["calibrate"],
        ["trng", "--bits", "3000"],
        ["trng", "--method", "writeback", "--bits", "512"],
        ["puf", "--devices", "2", "--crps", "300"],
        ["sweep"],
    ],
)
def test_reruns_are_byte_identical(tmp_path, quick_config, argv):
    runs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert main(argv + ["--config", quick_config, "--seed", "11", "--out", str(out)]) == EXIT_OK
        runs.append(digests(out))
    assert runs[0] == runs[1] and runs[0]


def test_seed_changes_outputs(tmp_path, quick_config):
    for seed in ("1", "2"):
        assert main(["trng", "--config", quick_config, "--bits", "256", "--seed", seed, "--out", str(tmp_path / seed)]) == 0
    assert (tmp_path / "1" / "bits.txt").read_bytes() != (tmp_path / "2" / "bits.txt").read_bytes()


def test_module_entry_point(tmp_path):
    done = subprocess.run(
        [sys.executable, "-m", "rramsec", "sweep", "--out", str(tmp_path), "--config", "/nonexistent.json"],
        capture_output=True,
        text=True,
    )
    assert done.returncode == EXIT_RUNTIME
    done = subprocess.run([sys.executable, "-m", "rramsec", "--help"], capture_output=True, text=True)
    assert done.returncode == 0 and "calibrate" in done.stdout
