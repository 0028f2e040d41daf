import csv
import json

import pytest

from tibbm import cli, gibbs, io


def run(argv, tmp_path):
    return cli.main(list(argv) + ["--out", str(tmp_path)])


def test_precedence_cli_over_file_over_default(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[predict]\nT = 500\nK = 2.5\n")
    rc = cli.parse_config(["predict", "--config", str(ini), "--K", "3"])
    assert rc.options["T"] == 500.0
    assert rc.options["K"] == 3.0
    assert rc.options["samples"] == 101


def test_unknown_key_and_section_rejected(tmp_path):
    ini = tmp_path / "bad.ini"
    ini.write_text("[predict]\nT = 500\nhorizon = 3\n")
    with pytest.raises(cli.UsageError, match="unknown key"):
        cli.parse_config(["predict", "--config", str(ini)])
    ini.write_text("[nonsense]\nT = 1\n")
    with pytest.raises(cli.UsageError, match="unknown config section"):
        cli.parse_config(["predict", "--config", str(ini)])


def test_usage_errors_exit_2(tmp_path, capsys):
    assert run(["predict"], tmp_path) == 2
    assert "--T" in capsys.readouterr().err
    assert run(["gibbs", "--x", "1"], tmp_path) == 2
    assert run(["gibbs", "--killed"], tmp_path) == 2
    assert run(["predict", "--T", "1"], tmp_path) == 2
    assert run(["simulate-bbm", "--T", "80"], tmp_path) == 2
    assert cli.main(["no-such-command"]) == 2


def test_io_error_exit_3(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert cli.main(["predict", "--T", "100", "--out", str(blocker / "sub")]) == 3


def test_guard_exit_4(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise gibbs.PopulationCapError("population cap exceeded: reduce t or raise floor")
    monkeypatch.setattr(gibbs, "gibbs_report", boom)
    assert run(["gibbs", "--t", "5"], tmp_path) == 4


def test_env_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv(io.ENV_OUTPUT, str(tmp_path / "env"))
    assert cli.main(["predict", "--T", "100"]) == 0
    assert (tmp_path / "env" / "predict_summary.json").exists()


def test_json_schema_and_header(tmp_path):
    assert run(["predict", "--T", "5"], tmp_path) == 0
    doc = json.loads((tmp_path / "predict_summary.json").read_text())
    assert list(doc)[:3] == ["#", "schema_version", "config"]
    assert doc["schema_version"] == io.SCHEMA_VERSION
    assert doc["zeta_samples"] is None and "zeta_note" in doc
    assert doc["v1"] == pytest.approx(1.5)


def test_csv_columns(tmp_path):
    assert run(["validate-airy", "--N", "3"], tmp_path) == 0
    lines = (tmp_path / "validate_airy_table.csv").read_text().splitlines()
    assert lines[0].startswith("# tibbm schema=")
    rows = list(csv.reader(l for l in lines if not l.startswith("#")))
    assert rows[0] == ["n", "alpha_n", "abs_ai_prime", "ortho_error", "eigen_residual"]
    assert len(rows) == 4


def test_replay_from_persisted_config(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["gibbs", "--t", "3", "--replicas", "10", "--seed", "4", "--out", str(a)]) == 0
    assert cli.main(["gibbs", "--config", str(a / "gibbs.ini"), "--out", str(b)]) == 0
    for name in ("gibbs_summary.json", "gibbs_replicas.csv", "gibbs_histogram.dat"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_workers_do_not_change_outputs(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    args = ["simulate-bbm", "--T", "8", "--replicas", "24", "--seed", "3"]
    assert cli.main(args + ["--workers", "1", "--out", str(a)]) == 0
    assert cli.main(args + ["--workers", "2", "--out", str(b)]) == 0
    for name in ("simulate_bbm_summary.json", "simulate_bbm_samples.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_report_renders_png(tmp_path):
    assert run(["predict", "--T", "200", "--report"], tmp_path) == 0
    assert (tmp_path / "predict_barrier.png").read_bytes()[:4] == b"\x89PNG"
