import json

import pytest

from cmmkit.cli import build_parser, main


def run(argv):
    return main(argv)


class TestParsing:
    def test_help_lists_units(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["simulate", "--help"])
        assert exc.value.code == 0
        text = capsys.readouterr().out
        assert "meters" in text
        assert "--seed" in text
        assert "--workers" in text

    def test_usage_error_exit_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["simulate", "--case", "nonsense", "--n", "8", "--out", "/tmp/x"])
        assert exc.value.code == 2

    def test_missing_subcommand_exit_2(self):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2

    def test_every_subcommand_has_help(self):
        parser = build_parser()
        assert parser.format_help()


class TestSimulate:
    def test_run_and_rerun_identical(self, tmp_path):
        args = [
            "simulate", "--case", "orthogonal", "--n", "8,12",
            "--sigma", "0.3", "--samples", "40", "--seed", "7",
        ]
        assert run(args + ["--out", str(tmp_path / "a")]) == 0
        assert run(args + ["--out", str(tmp_path / "b")]) == 0
        a = (tmp_path / "a" / "results.csv").read_bytes()
        b = (tmp_path / "b" / "results.csv").read_bytes()
        assert a == b
        manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
        assert manifest["seed"] == 7
        assert "results.csv" in manifest["outputs"]

    def test_workers_do_not_change_output(self, tmp_path):
        base = [
            "simulate", "--case", "uniform", "--n", "10",
            "--samples", "30", "--seed", "3",
        ]
        assert run(base + ["--out", str(tmp_path / "w1"), "--workers", "1"]) == 0
        assert run(base + ["--out", str(tmp_path / "w2"), "--workers", "2"]) == 0
        assert (tmp_path / "w1" / "results.csv").read_bytes() == (
            tmp_path / "w2" / "results.csv"
        ).read_bytes()

    def test_config_file_defaults_and_flag_precedence(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("samples = 25\nsigma = 0.5\n")
        out = tmp_path / "out"
        assert run([
            "simulate", "--case", "uniform", "--n", "12", "--seed", "5",
            "--sigma", "0.1",  # flag beats config
            "--config", str(cfg), "--out", str(out),
        ]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["parameters"]["samples"] == 25
        assert manifest["parameters"]["sigma"] == 0.1


class TestAsymptoticsCommand:
    def test_csv_and_json_agree(self, tmp_path):
        out = tmp_path / "o"
        assert run(["asymptotics", "--n", "20,40", "--out", str(out)]) == 0
        rows = json.loads((out / "asymptotics.json").read_text())
        lines = (out / "asymptotics.csv").read_text().strip().splitlines()
        header = lines[0].split(",")
        for row, line in zip(rows, lines[1:]):
            cells = line.split(",")
            for key, cell in zip(header, cells):
                assert float(cell) == pytest.approx(row[key], nan_ok=True)

    def test_plug_in_value(self, tmp_path):
        out = tmp_path / "o"
        assert run([
            "asymptotics", "--n", "30", "--w", "2", "--sigma", "0.3", "--out", str(out)
        ]) == 0
        rows = json.loads((out / "asymptotics.json").read_text())
        assert rows[0]["uniform_total"] == pytest.approx(0.034130, abs=5e-7)


class TestReplay:
    def test_replay_reproduces_digests(self, tmp_path):
        first = tmp_path / "first"
        assert run([
            "simulate", "--case", "uniform", "--n", "10", "--samples", "25",
            "--seed", "11", "--out", str(first),
        ]) == 0
        replayed = tmp_path / "second"
        assert run([
            "replay", "--manifest", str(first / "manifest.json"),
            "--out", str(replayed), "--verify-against", str(first),
        ]) == 0


class TestFleetPipeline:
    def test_full_pipeline(self, tmp_path):
        synth = tmp_path / "synth"
        assert run([
            "fleet", "synth", "--city-nx", "4", "--city-ny", "4",
            "--spacing", "300", "--intensity", "6", "--hours", "4",
            "--seed", "21", "--out", str(synth),
        ]) == 0
        trips = synth / "trips.csv"
        assert trips.exists()

        dens = tmp_path / "dens"
        assert run([
            "fleet", "density", "--input", str(trips), "--cell", "300",
            "--scale-factor", "1.0", "--out", str(dens),
        ]) == 0
        assert (dens / "density.npz").exists()
        manifest = json.loads((dens / "manifest.json").read_text())
        assert str(trips) in manifest["input_digests"]

        ev = tmp_path / "ev"
        assert run([
            "fleet", "evaluate", "--density", str(dens / "density.npz"),
            "--comm-radius", "800", "--noise-var", "0.5",
            "--realizations", "12", "--seed", "22", "--out", str(ev),
        ]) == 0
        for name in ("accuracy.csv", "accuracy.svg", "summary.json"):
            assert (ev / name).exists()
        summary = json.loads((ev / "summary.json").read_text())
        assert summary["total_cells"] > 0

        ex = tmp_path / "ex"
        assert run([
            "fleet", "export", "--accuracy", str(ev / "accuracy.csv"),
            "--format", "json-summary", "--cell", "300", "--out", str(ex),
        ]) == 0
        assert (ex / "accuracy_export.json").exists()

    def test_ingest_missing_file_runtime_error(self, tmp_path):
        code = run([
            "fleet", "ingest", "--input", str(tmp_path / "nope.csv"),
            "--out", str(tmp_path / "o"),
        ])
        assert code == 1

    def test_ingest_writes_stats(self, tmp_path):
        trips = tmp_path / "trips.csv"
        trips.write_text(
            "device_id,timestamp_utc,x_m,y_m,heading_rad\n"
            "a,0,1.0,2.0,0.5\n"
        )
        out = tmp_path / "o"
        assert run(["fleet", "ingest", "--input", str(trips), "--out", str(out)]) == 0
        stats = json.loads((out / "ingest_stats.json").read_text())
        assert stats["rows_valid"] == 1


class TestDistributionCommand:
    def test_outputs(self, tmp_path):
        out = tmp_path / "o"
        assert run([
            "distribution", "--n", "10,12", "--samples", "50",
            "--seed", "9", "--out", str(out),
        ]) == 0
        assert (out / "distribution_N10.csv").exists()
        assert (out / "distribution_N12.csv").exists()
        summary = (out / "distribution_summary.csv").read_text().splitlines()
        assert summary[0] == "N,median,p90,rejection_rate"
        assert len(summary) == 3


class TestOptimalityCommand:
    def test_outputs(self, tmp_path):
        out = tmp_path / "o"
        assert run([
            "optimality", "--eps-list", "0,0.04", "--n-vehicles", "40",
            "--samples", "60", "--seed", "13", "--out", str(out),
        ]) == 0
        lines = (out / "optimality.csv").read_text().splitlines()
        assert lines[0] == "epsilon,mc_mean,mc_stderr,predictor,rejection_rate"
        assert len(lines) == 3


class TestCalibrateCommand:
    def test_outputs(self, tmp_path):
        out = tmp_path / "o"
        assert run([
            "calibrate", "--n", "50,100", "--samples", "40",
            "--seed", "17", "--out", str(out),
        ]) == 0
        lines = (out / "calibration.csv").read_text().splitlines()
        assert len(lines) == 5  # header + 2 N x 2 modes
        assert "candidate_directed" in lines[0]
