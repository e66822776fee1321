"""Command-line interface: subcommands, formats, and exit codes."""

import json

import pytest

from otfswin.cli import main

CE_CONFIG = (
    "M = 16\nN = 16\npaths = 2\nk_max = 2\nl_max = 2\nk_hat = 1\n"
    "snr_db = 30\ntrials = 25\nseed = 5\n"
)


@pytest.fixture
def ce_config(tmp_path):
    path = tmp_path / "ce.cfg"
    path.write_text(CE_CONFIG, encoding="utf-8")
    return str(path)


class TestFloor:
    def test_rectangular_floor_row(self, capsys):
        rc = main(["floor", "--N", "20", "--kmax", "3", "--lmax", "4",
                   "--khat", "1", "--sl-db", "-26.0205999133"])
        assert rc == 0
        out = capsys.readouterr().out.splitlines()
        assert out[0].startswith("N,k_max,l_max,k_hat")
        assert float(out[1].split(",")[5]) == pytest.approx(0.3375, rel=1e-6)

    def test_json_format(self, capsys):
        rc = main(["floor", "--N", "20", "--kmax", "3", "--lmax", "4",
                   "--khat", "1", "--sl-db", "-40", "--format", "json"])
        assert rc == 0
        data = json.loads(capsys.readouterr().out)
        assert data["mse_floor"] == pytest.approx(0.0135, rel=1e-9)


class TestDesignWindow:
    def test_writes_csv_and_json_sidecar(self, tmp_path):
        out = tmp_path / "win.csv"
        rc = main(["design-window", "--N", "20", "--sl-db", "-40", "--out", str(out)])
        assert rc == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "index,value"
        assert len(lines) == 21
        values = [float(line.split(",")[1]) for line in lines[1:]]
        assert sum(v * v for v in values) == pytest.approx(20.0, rel=1e-9)
        sidecar = json.loads((tmp_path / "win.json").read_text())
        assert sidecar["SL_db_target"] == -40.0
        assert sidecar["SL_db_measured"] <= -39.5
        assert 2.5 <= sidecar["k_main_measured"] <= 4.0
        assert sidecar["eta"] is None

    def test_infeasible_design_exits_2(self, capsys):
        rc = main(["design-window", "--N", "3", "--sl-db", "-100"])
        assert rc == 2
        assert "error" in capsys.readouterr().err


class TestExperiments:
    def test_ce_mse_writes_rows_metadata_and_summary(self, tmp_path, ce_config):
        out = tmp_path / "rows.csv"
        summary = tmp_path / "ce.csv"
        rc = main(["ce-mse", "--config", ce_config, "--out", str(out),
                   "--ce-rows", str(summary)])
        assert rc == 0
        assert out.read_text().startswith("experiment,config_hash")
        meta = json.loads((out.parent / "rows.csv.meta.json").read_text())
        assert meta["trials"] == 25
        assert summary.read_text().startswith("snr_db,pilot_dbw")

    def test_repeat_runs_are_byte_identical(self, tmp_path, ce_config):
        out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main(["ce-mse", "--config", ce_config, "--out", str(out1)]) == 0
        assert main(["ce-mse", "--config", ce_config, "--out", str(out2)]) == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_seed_flag_overrides_config(self, tmp_path, ce_config):
        out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
        main(["ce-mse", "--config", ce_config, "--out", str(out1)])
        main(["ce-mse", "--config", ce_config, "--out", str(out2), "--seed", "99"])
        assert out1.read_bytes() != out2.read_bytes()

    def test_fer_json_output(self, tmp_path):
        cfg = tmp_path / "fer.cfg"
        cfg.write_text(
            "M = 8\nN = 8\npaths = 2\nk_max = 2\nl_max = 2\n"
            "csi = perfect-csir\nsnr_db = 10\ntrials = 20\nseed = 2\n",
            encoding="utf-8",
        )
        out = tmp_path / "fer.json"
        rc = main(["fer", "--config", str(cfg), "--out", str(out), "--format", "json"])
        assert rc == 0
        rows = json.loads(out.read_text())
        assert {r["metric"] for r in rows} == {"fer", "ber"}

    def test_missing_config_exits_2(self, capsys, tmp_path):
        rc = main(["ce-mse", "--config", str(tmp_path / "nope.cfg")])
        assert rc == 2

    def test_unknown_config_key_exits_2(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("bogus = 1\n", encoding="utf-8")
        rc = main(["ce-mse", "--config", str(cfg)])
        assert rc == 2
        assert "unknown config keys" in capsys.readouterr().err


class TestParser:
    def test_unknown_flag_rejected_with_usage(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["floor", "--no-such-flag", "1"])
        assert exc.value.code == 2
        assert "usage" in capsys.readouterr().err

    def test_missing_subcommand_rejected(self):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2


class TestSelfcheckCommand:
    def test_exit_zero_and_one_line_per_check(self, capsys):
        rc = main(["selfcheck"])
        assert rc == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) >= 6
        assert all(line.startswith("ok") for line in lines)

    def test_violation_exits_3(self, capsys, monkeypatch):
        from otfswin.harness import CheckResult

        monkeypatch.setattr(
            "otfswin.cli.run_selfcheck",
            lambda seed=0: [CheckResult("forced", False, "err=1.0e+00 tol=1.0e-09")],
        )
        rc = main(["selfcheck"])
        assert rc == 3
        captured = capsys.readouterr()
        assert "FAIL forced" in captured.out
        assert "numerical failure" in captured.err
