import csv
import io
import json
import math
import shutil
import subprocess
import sys

import pytest

from lgboed.cli import (
    EXIT_CONFIG,
    EXIT_CONVERGENCE,
    EXIT_OK,
    EXIT_UNSTABLE,
    format_number,
    main,
    render,
    split_overrides,
)
from lgboed.config import load_raw


def _pair_config(**changes):
    data = load_raw("defaults")
    data["sim"] = {"seed": 0, "n_samples": 200, "horizon": 300, "burn_in": 50}
    for dotted, value in changes.items():
        node = data
        *head, last = dotted.split(".")
        for key in head:
            node = node[key]
        node[last] = value
    return data


def _write(tmp_path, data, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestFormatting:
    def test_seventeen_digits_round_trip(self):
        for v in (math.pi, 1 / 3, 1e-300, -2.5e17, 0.1 + 0.2):
            assert float(format_number(v)) == v

    def test_csv_round_trip(self):
        rows = [{"a": math.pi, "b": 1 / 7}, {"a": math.e, "b": math.nan}]
        parsed = list(csv.DictReader(io.StringIO(render(rows, ["a", "b"], "csv"))))
        assert float(parsed[0]["a"]) == math.pi and float(parsed[0]["b"]) == 1 / 7
        assert float(parsed[1]["a"]) == math.e and math.isnan(float(parsed[1]["b"]))

    def test_json_nan_is_null(self):
        out = json.loads(render([{"a": math.nan, "b": 1.0}], ["a", "b"], "json"))
        assert out == [{"a": None, "b": 1.0}]


class TestOverrides:
    def test_forms(self):
        got = split_overrides(["--sim.seed", "7", "--smd.points=12", "regime=single-step"])
        assert got == [("sim.seed", 7), ("smd.points", 12), ("regime", "single-step")]

    def test_missing_value(self):
        with pytest.raises(ValueError):
            split_overrides(["--sim.seed"])

    def test_unknown_flag(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["eig", "--bogus", "1"])
        assert info.value.code == 2


class TestStudies:
    def test_smd_default_contract(self, tmp_path):
        out = tmp_path / "smd.csv"
        assert main(["smd-study", "--config", "defaults", "--output", str(out)]) == EXIT_OK
        rows = _read_csv(out)
        assert len(rows) == 50
        assert list(rows[0]) == ["d", "eig", "delta_edi_mean"]
        sidecar = json.loads((tmp_path / "smd.csv.config.json").read_text())
        assert sidecar["study"] == "smd-study"

    def test_uninformative_sensor_gives_zero_eig(self, tmp_path, capsys):
        data = _pair_config(**{"models.inference.H": [[0.0, 0.0]], "models.truth.H": [[0.0, 0.0]]})
        out = tmp_path / "eig.csv"
        assert main(["eig", "--config", _write(tmp_path, data), "--output", str(out)]) == EXIT_OK
        rows = _read_csv(out)
        assert len(rows) == 1 and float(rows[0]["eig"]) == 0.0

    def test_table_to_stdout(self, capsys):
        assert main(["egig", "--config", "defaults", "--format", "json"]) == EXIT_OK
        captured = capsys.readouterr()
        (row,) = json.loads(captured.out)
        assert row["regime"] == "infinite-horizon" and row["egig"] > 0
        assert "egig =" in captured.err

    def test_summary_line(self, tmp_path, capsys):
        out = tmp_path / "d.csv"
        main(["delta-edi", "--config", "defaults", "--output", str(out)])
        line = capsys.readouterr().out.strip()
        assert line.startswith("delta-edi: delta_edi = ") and line.endswith(f"wrote 1 rows to {out}")

    def test_single_step_regime_override(self, tmp_path):
        out = tmp_path / "edi.csv"
        assert main(["edi", "--config", "defaults", "--regime", "single-step", "--output", str(out)]) == EXIT_OK
        assert _read_csv(out)[0]["regime"] == "single-step"

    def test_oracle_deterministic(self, tmp_path):
        cfg = _write(tmp_path, _pair_config())
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main(["oracle", "--config", cfg, "--sim.seed", "7", "--output", str(a)]) == EXIT_OK
        assert main(["oracle", "--config", cfg, "--sim.seed", "7", "--output", str(b)]) == EXIT_OK
        assert a.read_bytes() == b.read_bytes()
        rows = _read_csv(a)
        assert {r["criterion"] for r in rows} == {"eig", "egig", "edi", "delta_edi"}
        assert json.loads((tmp_path / "a.csv.config.json").read_text())["sim"]["seed"] == 7

    def test_oracle_worker_count_irrelevant(self, tmp_path):
        cfg = _write(tmp_path, _pair_config())
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        main(["oracle", "--config", cfg, "--output", str(a)])
        main(["oracle", "--config", cfg, "--workers", "2", "--output", str(b)])
        assert a.read_bytes() == b.read_bytes()


class TestValidate:
    def test_defaults_clean(self, capsys):
        assert main(["validate", "defaults"]) == EXIT_OK
        assert capsys.readouterr().out.strip() == "0 issues"

    def test_zero_eigenvalue_R(self, tmp_path, capsys):
        cfg = _write(tmp_path, _pair_config(**{"models.truth.R": [[0.0]]}))
        assert main(["validate", cfg]) == EXIT_CONFIG
        out = capsys.readouterr().out
        assert "models.truth.R" in out and "positive definite" in out

    def test_unstable_A_reports_radius(self, tmp_path, capsys):
        cfg = _write(tmp_path, _pair_config(**{"models.inference.A": [[1.2, 0.0], [0.0, 0.5]]}))
        assert main(["validate", cfg]) == EXIT_CONFIG
        out = capsys.readouterr().out
        assert "models.inference.A" in out and "spectral radius 1.2" in out

    def test_reports_every_issue(self, tmp_path, capsys):
        data = _pair_config(**{"models.truth.R": [[0.0]], "models.inference.A": [[1.2, 0.0], [0.0, 0.5]]})
        data["sim"]["burn_in"] = 1000
        assert main(["validate", _write(tmp_path, data)]) == EXIT_CONFIG
        assert capsys.readouterr().out.strip().endswith("3 issues")


class TestExitCodes:
    def test_missing_file(self, tmp_path, capsys):
        assert main(["eig", "--config", str(tmp_path / "nope.json")]) == EXIT_CONFIG
        assert "nope.json" in capsys.readouterr().err

    def test_schema_violation_names_path_and_field(self, tmp_path, capsys):
        cfg = _write(tmp_path, _pair_config(**{"models.truth.R": [[-1.0]]}))
        assert main(["egig", "--config", cfg]) == EXIT_CONFIG
        err = capsys.readouterr().err
        assert cfg in err and "models.truth.R" in err

    def test_unstable_model(self, tmp_path, capsys):
        cfg = _write(tmp_path, _pair_config(**{"models.truth.A": [[1.1, 0.0], [0.0, 0.5]]}))
        assert main(["delta-edi", "--config", cfg]) == EXIT_UNSTABLE
        assert "spectral radius 1.1" in capsys.readouterr().err

    def test_non_convergence(self, tmp_path, monkeypatch, capsys):
        import lgboed.stationary as stationary

        monkeypatch.setattr(stationary, "DARE_MAX_ITER", 1)
        assert main(["eig", "--config", "defaults"]) == EXIT_CONVERGENCE

    def test_help_documents_exit_codes(self, capsys):
        with pytest.raises(SystemExit):
            main(["--help"])
        out = capsys.readouterr().out
        for code in range(6):
            assert f"{code} " in out


@pytest.mark.skipif(shutil.which("boed") is None, reason="console script not installed")
def test_console_script(tmp_path):
    proc = subprocess.run(["boed", "validate", "defaults"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.strip() == "0 issues"


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "lgboed.cli", "validate", "defaults"], capture_output=True, text=True)
    assert proc.returncode == 0
