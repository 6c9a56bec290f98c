import json

import pytest

from grwsim.cli import main

CAT_CFG = """\
# two-branch superposition watched through the matter density
kind = cat
c1_sq = 0.7
ontology = grwm
history = fresh_preparation
lambda_eff = 1.0
sigma = 1.0
total_time = 20.0
box_lower = -10
box_upper = 10
"""


@pytest.fixture
def cat_cfg(tmp_path):
    path = tmp_path / "cat.cfg"
    path.write_text(CAT_CFG)
    return path


class TestRunCommand:
    def test_run_writes_expected_files(self, cat_cfg, tmp_path):
        out = tmp_path / "results"
        code = main(
            ["run", "--config", str(cat_cfg), "--seed", "42",
             "--trajectories", "80", "--out", str(out), "--log-trajectories", "2"]
        )
        assert code == 0
        names = {p.name for p in out.iterdir()}
        assert {"summary.csv", "summary.json", "events-00000.jsonl",
                "flashes-00000.csv", "events-00001.jsonl", "flashes-00001.csv"} <= names
        header = (out / "summary.csv").read_text().splitlines()[0]
        assert header == "statistic,estimate,se,target,z,pass"
        first_flash_header = (out / "flashes-00000.csv").read_text().splitlines()[0]
        assert first_flash_header == "time,position,particle"

    def test_no_temp_files_left_behind(self, cat_cfg, tmp_path):
        out = tmp_path / "results"
        main(["run", "--config", str(cat_cfg), "--trajectories", "40", "--out", str(out)])
        assert not [p for p in out.iterdir() if p.name.endswith(".tmp~")]

    def test_event_log_schema(self, cat_cfg, tmp_path):
        out = tmp_path / "results"
        main(["run", "--config", str(cat_cfg), "--seed", "1",
              "--trajectories", "40", "--out", str(out), "--log-trajectories", "1"])
        lines = (out / "events-00000.jsonl").read_text().splitlines()
        assert lines
        record = json.loads(lines[0])
        assert set(record) == {"t", "particle", "center", "pre_weights", "post_weights"}

    def test_byte_identical_across_threads(self, cat_cfg, tmp_path):
        outputs = []
        for threads in ("1", "4"):
            out = tmp_path / f"r{threads}"
            code = main(
                ["run", "--config", str(cat_cfg), "--seed", "9", "--trajectories", "60",
                 "--threads", threads, "--out", str(out), "--log-trajectories", "2"]
            )
            assert code == 0
            outputs.append({p.name: p.read_bytes() for p in out.iterdir()})
        assert outputs[0] == outputs[1]

    def test_ontology_override(self, cat_cfg, tmp_path):
        out = tmp_path / "results"
        main(["run", "--config", str(cat_cfg), "--trajectories", "40",
              "--out", str(out), "--ontology", "grw0"])
        summary = json.loads((out / "summary.json").read_text())
        assert summary["config"]["ontology"] == "grw0"

    def test_density_snapshots(self, tmp_path):
        cfg = tmp_path / "density.cfg"
        cfg.write_text(CAT_CFG + "density_times = 0.0, 20.0\n")
        out = tmp_path / "results"
        code = main(["run", "--config", str(cfg), "--trajectories", "40", "--out", str(out)])
        assert code == 0
        density = (out / "density-t20.csv").read_text().splitlines()
        assert density[0] == "x,m"
        assert len(density) > 100

    def test_env_threads_fallback(self, cat_cfg, tmp_path, monkeypatch):
        monkeypatch.setenv("GRWSIM_THREADS", "2")
        out = tmp_path / "results"
        assert main(["run", "--config", str(cat_cfg), "--trajectories", "40",
                     "--out", str(out)]) == 0

    def test_grid_backend_run(self, tmp_path):
        cfg = tmp_path / "grid.cfg"
        cfg.write_text(
            "kind = cat\nc1_sq = 0.7\nontology = grwm\nbackend = grid\n"
            "grid_points = 512\ntotal_time = 5.0\ndensity_times = 5.0\n"
        )
        out = tmp_path / "results"
        assert main(["run", "--config", str(cfg), "--trajectories", "50",
                     "--out", str(out)]) == 0
        assert (out / "density-t5.csv").exists()


class TestConfigErrors:
    def test_unknown_key_line_numbered(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("kind = cat\nbogus = 1\n")
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
        err = capsys.readouterr().err
        assert "bad.cfg:2" in err and "bogus" in err

    def test_bad_value_line_numbered(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("kind = cat\n\nc1_sq = lots\n")
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
        assert "bad.cfg:3" in capsys.readouterr().err

    def test_duplicate_key_rejected(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("kind = cat\nkind = tail\n")
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
        assert "duplicate" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert main(["run", "--config", str(tmp_path / "nope.cfg"),
                     "--out", str(tmp_path / "o")]) == 2

    def test_numerical_failure_exit_code(self, cat_cfg, tmp_path, monkeypatch):
        import grwsim.cli as cli
        from grwsim.errors import NumericsError

        def explode(*args, **kwargs):
            raise NumericsError("synthetic")

        monkeypatch.setattr(cli, "run_ensemble", explode)
        assert main(["run", "--config", str(cat_cfg), "--out", str(tmp_path / "o")]) == 3

    def test_statistical_failure_exit_code(self, cat_cfg, tmp_path, monkeypatch):
        import grwsim.cli as cli
        from grwsim.ensemble import run_ensemble as real_run

        def tampered(*args, **kwargs):
            summary = real_run(*args, **kwargs)
            bad = summary.records[0].__class__(
                name="synthetic", estimate=1.0, se=0.1, target=0.0, z=10.0,
                passed=False, provenance="synthetic",
            )
            summary.records.append(bad)
            return summary

        monkeypatch.setattr(cli, "run_ensemble", tampered)
        assert main(["run", "--config", str(cat_cfg), "--trajectories", "40",
                     "--out", str(tmp_path / "o")]) == 1


class TestOtherCommands:
    def test_oracle_writes_reference(self, tmp_path):
        out = tmp_path / "ref.json"
        assert main(["oracle", "--out", str(out), "--seed", "5", "--sequences", "4000"]) == 0
        data = json.loads(out.read_text())
        assert data["format"] == 1 and data["seed"] == 5

    def test_check_fast_criteria(self, capsys):
        assert main(["check", "--criteria", "1,9"]) == 0
        out = capsys.readouterr().out
        assert "criterion  1 [PASS]" in out
        assert "criterion  9 [PASS]" in out

    def test_report_summarizes_run(self, cat_cfg, tmp_path, capsys):
        out = tmp_path / "results"
        main(["run", "--config", str(cat_cfg), "--trajectories", "40", "--out", str(out)])
        capsys.readouterr()
        assert main(["report", str(out)]) == 0
        text = capsys.readouterr().out
        assert "martingale_w1_final" in text
        assert "scenario: cat" in text

    def test_report_missing_dir(self, tmp_path):
        assert main(["report", str(tmp_path / "nothing")]) == 2
