import csv
import json
import math
import os
import shutil
import subprocess
import sys

import numpy as np
import pytest
import yaml

from fastslow.cli import build_parser, main
from fastslow.errors import ConfigError
from fastslow.inputs import load_network, parse_initial, validate_config
from fastslow.output import fmt
from helpers import data_path


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def run_cli(args, capsys):
    code = main(args)
    out, err = capsys.readouterr()
    return code, out, err


def error_record(err):
    lines = [ln for ln in err.splitlines() if ln.startswith("{")]
    assert len(lines) == 1
    return json.loads(lines[0])


@pytest.fixture
def c0_file(tmp_path):
    p = tmp_path / "c0.txt"
    p.write_text("0.1 0.6 0.2 0.1\n")
    return str(p)


class TestSubcommands:
    def test_stationary_two_state(self, tmp_path, capsys):
        code, _, _ = run_cli(["stationary", "--network", data_path("two_state.yaml"),
                              "--out", str(tmp_path)], capsys)
        assert code == 0
        rows = read_csv(tmp_path / "stationary.csv")
        assert rows[0] == ["quantity", "c_1", "c_2"]
        assert rows[1] == ["w", "0.75", "0.25"]

    def test_coarse_grain_example(self, tmp_path, capsys):
        code, _, _ = run_cli(["coarse-grain", "--network", data_path("four_state.yaml"),
                              "--out", str(tmp_path)], capsys)
        assert code == 0
        doc = yaml.safe_load((tmp_path / "coarse.yaml").read_text())
        assert doc["M"] == ["1 0 0 0", "0 1 1 0", "0 0 0 1"]
        assert doc["classes"] == [["1"], ["2", "3"], ["4"]]
        A_hat = np.array([[float(x) for x in r.split()] for r in doc["A_hat"]])
        assert np.allclose(A_hat @ np.array([float(x) for x in doc["w_hat"]]), 0.0, atol=1e-12)
        assert all(float(v) <= 1e-10 for v in doc["residuals"].values())

    def test_converge(self, tmp_path, capsys, c0_file):
        code, _, _ = run_cli(["converge", "--network", data_path("four_state.yaml"),
                              "--out", str(tmp_path), "--initial", c0_file,
                              "--eps-list", "1e-1,1e-2,1e-3"], capsys)
        assert code == 0
        rows = read_csv(tmp_path / "converge.csv")
        assert rows[0] == ["eps", "sup_Mc_err", "l2_err", "fast_integral", "rate_ratio"]
        assert len(rows) == 4
        l2 = [float(r[2]) for r in rows[1:]]
        assert l2[0] > l2[1] > l2[2]

    def test_simulate(self, tmp_path, capsys):
        code, _, _ = run_cli(["simulate", "--network", data_path("two_state.yaml"),
                              "--out", str(tmp_path), "--eps", "1", "--t-final", "2",
                              "--steps", "21", "--initial", "vertex:2"], capsys)
        assert code == 0
        rows = read_csv(tmp_path / "simulate.csv")
        assert rows[0] == ["t", "c_1", "c_2"]
        t = np.array([float(r[0]) for r in rows[1:]])
        c1 = np.array([float(r[1]) for r in rows[1:]])
        assert np.allclose(c1, 0.75 - 0.75 * np.exp(-4 * t), atol=1e-14)

    def test_simulate_limit(self, tmp_path, capsys):
        code, _, _ = run_cli(["simulate", "--network", data_path("four_state.yaml"),
                              "--out", str(tmp_path), "--eps", "0", "--steps", "5",
                              "--initial", "vertex:2"], capsys)
        assert code == 0
        rows = read_csv(tmp_path / "simulate.csv")
        first = [float(x) for x in rows[1][1:]]
        assert first == pytest.approx([0.0, 0.5, 0.5, 0.0], abs=1e-15)
        manifest = yaml.safe_load((tmp_path / "manifest.yaml").read_text())
        assert manifest["warnings"]

    def test_edb(self, tmp_path, capsys):
        init = tmp_path / "c0.txt"
        init.write_text("0.7 0.1 0.1 0.1")
        code, _, _ = run_cli(["edb", "--network", data_path("four_state.yaml"), "--out", str(tmp_path),
                              "--eps", "1", "--gs", "quad", "--steps", "101", "--refine", "1",
                              "--initial", str(init)], capsys)
        assert code == 0
        doc = yaml.safe_load((tmp_path / "edb_report.yaml").read_text())
        assert doc["gs"] == "quad" and len(doc["levels"]) == 2
        assert doc["residual_reduction"][0] >= 3.0
        rows = read_csv(tmp_path / "edb_integrand.csv")
        assert rows[0] == ["t", "velocity", "slope_slow", "slope_fast"] and len(rows) == 102

    def test_recovery(self, tmp_path, capsys):
        code, _, _ = run_cli(["recovery", "--network", data_path("mixed_chain.yaml"), "--out", str(tmp_path),
                              "--initial", "vertex:1", "--t-final", "2", "--steps", "41"], capsys)
        assert code == 0
        rows = read_csv(tmp_path / "recovery.csv")
        assert rows[0] == ["eps", "D_eps", "D_0", "rel_gap"]
        gaps = [float(r[3]) for r in rows[1:]]
        assert gaps[0] > gaps[1] > gaps[2] and gaps[2] <= 1e-2

    def test_gs_check(self, tmp_path, capsys):
        code, _, _ = run_cli(["gs-check", "--network", data_path("four_state_rates.yaml"),
                              "--out", str(tmp_path)], capsys)
        assert code == 0
        rows = read_csv(tmp_path / "gs_check.csv")
        assert rows[0][:4] == ["check", "value", "threshold", "passed"]
        assert all(r[3] == "true" for r in rows[1:])

    def test_tilt(self, tmp_path, capsys):
        code, _, _ = run_cli(["tilt", "--network", data_path("two_state.yaml"), "--out", str(tmp_path),
                              "--tilt", f"0,{math.log(3.0)!r}"], capsys)
        assert code == 0
        rows = read_csv(tmp_path / "tilt.csv")
        assert [float(x) for x in rows[2][1:]] == pytest.approx([0.9, 0.1], abs=1e-15)
        res = {r[0]: float(r[1]) for r in read_csv(tmp_path / "tilt_residuals.csv")[1:]}
        assert res["cosh"] <= 1e-9

    def test_tilt_requires_vector(self, tmp_path, capsys):
        code, _, err = run_cli(["tilt", "--network", data_path("two_state.yaml"),
                                "--out", str(tmp_path)], capsys)
        assert code == 2 and error_record(err)["exit_code"] == 2


class TestExitCodes:
    def test_strict_degenerate(self, tmp_path, capsys):
        code, _, err = run_cli(["stationary", "--network", data_path("degenerate_limit.yaml"),
                                "--out", str(tmp_path), "--strict"], capsys)
        assert code == 3
        rec = error_record(err)
        assert rec["exit_code"] == 3 and rec["error"] == "AssumptionFailure"

    def test_degenerate_warns_without_strict(self, tmp_path, capsys):
        code, _, err = run_cli(["coarse-grain", "--network", data_path("degenerate_limit.yaml"),
                                "--out", str(tmp_path)], capsys)
        assert "warning" in err
        assert code == 4  # the limit measure is not strictly positive

    def test_config_errors(self, tmp_path, capsys):
        code, _, err = run_cli(["converge", "--config", data_path("config_bad_order.yaml")], capsys)
        assert code == 2 and "decreasing" in error_record(err)["message"]
        code, _, err = run_cli(["converge", "--network", str(tmp_path / "missing.yaml")], capsys)
        assert code == 2
        code, _, err = run_cli(["converge"], capsys)
        assert code == 2

    def test_usage_error(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["converge", "--bogus"])
        assert exc.value.code == 2
        assert error_record(capsys.readouterr().err)["error"] == "UsageError"

    def test_numerical_failure(self, tmp_path, capsys):
        net = tmp_path / "cycle.yaml"
        net.write_text(yaml.safe_dump({"states": ["a", "b", "c"], "edges": [
            {"from": "a", "to": "b", "rate": 1, "speed": "slow"},
            {"from": "b", "to": "c", "rate": 1, "speed": "slow"},
            {"from": "c", "to": "a", "rate": 1, "speed": "slow"},
            {"from": "b", "to": "a", "rate": 2, "speed": "slow"},
            {"from": "c", "to": "b", "rate": 2, "speed": "slow"},
            {"from": "a", "to": "c", "rate": 2, "speed": "slow"}]}))
        code, _, err = run_cli(["simulate", "--network", str(net), "--out", str(tmp_path / "o"),
                                "--eps", "1", "--t-final", "1"], capsys)
        assert code == 4
        assert error_record(err)["error"] == "RequiresDetailedBalanceError"

    def test_help_documents_exit_codes(self):
        assert "exit codes" in build_parser().format_help()


class TestOutputs:
    def test_manifest_files_exist(self, tmp_path, capsys):
        run_cli(["coarse-grain", "--network", data_path("four_state.yaml"), "--out", str(tmp_path)], capsys)
        manifest = yaml.safe_load((tmp_path / "manifest.yaml").read_text())
        assert manifest["subcommand"] == "coarse-grain"
        assert "coarse-grain" in manifest["timings"]
        for name in manifest["outputs"]:
            assert (tmp_path / name).exists()

    def test_deterministic(self, tmp_path, capsys, c0_file):
        for d in ("a", "b"):
            run_cli(["converge", "--network", data_path("four_state.yaml"), "--out", str(tmp_path / d),
                     "--initial", c0_file], capsys)
        assert (tmp_path / "a" / "converge.csv").read_bytes() == (tmp_path / "b" / "converge.csv").read_bytes()

    def test_figures_flag(self, tmp_path, capsys):
        run_cli(["simulate", "--network", data_path("two_state.yaml"), "--out", str(tmp_path / "p"),
                 "--figures", "--t-final", "1"], capsys)
        run_cli(["simulate", "--network", data_path("two_state.yaml"), "--out", str(tmp_path / "q"),
                 "--t-final", "1"], capsys)
        assert (tmp_path / "p" / "simulate.png").exists()
        assert not list((tmp_path / "q").glob("*.png"))

    def test_config_file_run(self, tmp_path, capsys):
        for name in ("config_four_state.yaml", "four_state.yaml"):
            shutil.copy(data_path(name), tmp_path / name)
        code, _, _ = run_cli(["stationary", "--config", str(tmp_path / "config_four_state.yaml")], capsys)
        assert code == 0
        assert (tmp_path / "out" / "stationary.csv").exists()

    def test_console_entry(self, tmp_path):
        res = subprocess.run([sys.executable, "-m", "fastslow.cli", "stationary", "--network",
                              data_path("two_state.yaml"), "--out", str(tmp_path)],
                             capture_output=True, text=True)
        assert res.returncode == 0


class TestConfig:
    def test_missing_edges(self):
        with pytest.raises(ConfigError) as exc:
            validate_config(data_path("config_missing_edges.yaml"))
        diags = exc.value.diagnostics
        assert len(diags) == 1 and diags[0].field == "edges" and diags[0].line == 1

    def test_eps_order(self):
        with pytest.raises(ConfigError) as exc:
            validate_config(data_path("config_bad_order.yaml"))
        (d,) = exc.value.diagnostics
        assert d.field == "eps_list" and "decreasing" in d.message and d.line == 2

    def test_valid_example(self):
        cfg = validate_config(data_path("config_four_state.yaml"))
        assert cfg.network.num_states == 4
        assert cfg.eps_list == (0.1, 0.01, 0.001)
        net = load_network(data_path("four_state.yaml"))
        assert np.array_equal(cfg.network.slow, net.slow)
        assert net.fast[2, 1] == 1.0 and net.fast[1, 2] == 1.0

    def test_unknown_keys_and_bad_edges(self, tmp_path):
        p = tmp_path / "bad.yaml"
        p.write_text("states: [a, b]\nedges:\n  - {from: a, to: b, rate: -1, speed: slow}\n"
                     "  - {from: a, to: z, rate: 1, speed: medium}\ncolour: red\n")
        with pytest.raises(ConfigError) as exc:
            validate_config(str(p))
        fields = {d.field for d in exc.value.diagnostics}
        assert {"colour", "edges[0].rate", "edges[1].to", "edges[1].speed"} <= fields
        assert {d.line for d in exc.value.diagnostics if d.field == "colour"} == {5}

    def test_duplicate_edge(self, tmp_path):
        p = tmp_path / "dup.yaml"
        p.write_text("states: [a, b]\nedges:\n  - {from: a, to: b, rate: 1, speed: slow}\n"
                     "  - {from: a, to: b, rate: 2, speed: slow}\n")
        with pytest.raises(ConfigError):
            load_network(str(p))

    def test_initial_specs(self, tmp_path):
        assert parse_initial("uniform", 4).tolist() == [0.25] * 4
        assert parse_initial("vertex:3", 4).tolist() == [0, 0, 1, 0]
        (tmp_path / "c.txt").write_text("1, 1, 2")
        assert parse_initial("c.txt", 3, str(tmp_path)).tolist() == [0.25, 0.25, 0.5]
        for bad in ("vertex:9", "vertex:x", "nope.txt"):
            with pytest.raises(ConfigError):
                parse_initial(bad, 4, str(tmp_path))


class TestFormat:
    def test_tokens(self):
        assert fmt(float("inf")) == "INF" and fmt(float("-inf")) == "-INF"
        assert fmt(0.0) == "0" and fmt(True) == "true" and fmt(3) == "3"

    def test_round_trip(self, rng):
        for x in rng.normal(size=100) * 10.0 ** rng.integers(-20, 20, 100):
            s = fmt(x)
            assert float(s) == x
            digits = s.lstrip("-").split("e")[0].replace(".", "").lstrip("0")
            assert len(digits) <= 17
