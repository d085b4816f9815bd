import json
import os

import pytest

from fluctlab import cli


def run_cli(argv):
    return cli.main(argv)


def write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh)
    return str(path)


def read(path):
    with open(path, "rb") as fh:
        return fh.read()


def test_missing_field_named(tmp_path, capsys):
    cfg = write_json(tmp_path / "c.json", {"M": 8, "replicas": 10})
    rc = run_cli(["simulate", "--config", cfg, "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "'eps'" in capsys.readouterr().err


def test_rate_range_rejected(tmp_path, capsys):
    cfg = write_json(tmp_path / "c.json", {"eps": 1.0, "gamma_tilde": 2.0, "M": 8,
                                           "replicas": 10, "times": [0.1], "sites": [0]})
    rc = run_cli(["simulate", "--config", cfg, "--out", str(tmp_path / "o")])
    assert rc == 2
    err = capsys.readouterr().err
    assert "exceeds 1" in err


def test_bad_json_diagnostic(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text('{"eps": 0.5,\n  "M": }')
    rc = run_cli(["simulate", "--config", str(p), "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "line 2" in capsys.readouterr().err


def test_unknown_suite_lists_names(tmp_path, capsys):
    cfg = write_json(tmp_path / "c.json", {})
    rc = run_cli(["verify", "--suite", "bogus", "--config", cfg, "--out", str(tmp_path / "o")])
    assert rc == 2
    err = capsys.readouterr().err
    for name in cli.SUITES:
        assert name in err


def test_missing_replicas_named(tmp_path, capsys):
    cfg = write_json(tmp_path / "c.json", {"eps": 0.5, "M": 8})
    rc = run_cli(["simulate", "--config", cfg, "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "'replicas'" in capsys.readouterr().err


def test_simulate_outputs_and_determinism(tmp_path, capsys):
    cfg = write_json(tmp_path / "c.json", {
        "eps": 0.5, "gamma_tilde": 1.0, "M": 8, "replicas": 500, "seed": 4,
        "times": [0.25], "sites": [0, 1],
    })
    rc = run_cli(["simulate", "--config", cfg, "--out", str(tmp_path / "o1")])
    assert rc == 0
    rc = run_cli(["simulate", "--config", cfg, "--out", str(tmp_path / "o2")])
    assert rc == 0
    assert read(tmp_path / "o1" / "two_point.csv") == read(tmp_path / "o2" / "two_point.csv")
    assert read(tmp_path / "o1" / "stationarity.csv") == read(tmp_path / "o2" / "stationarity.csv")
    header = read(tmp_path / "o1" / "two_point.csv").decode().splitlines()[0]
    assert header == "t,x,estimate,se,replicas"


def test_resolvent_suite_and_rerun_from_manifest(tmp_path):
    cfg = write_json(tmp_path / "c.json", {"observable": "v_sharp", "Ms": [32, 64]})
    assert run_cli(["resolvent", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    manifest = json.loads(read(tmp_path / "a" / "manifest.json"))
    assert manifest["fluctlab_version"]
    # rerun straight from the manifest file
    assert run_cli(["resolvent", "--config", str(tmp_path / "a" / "manifest.json"),
                    "--out", str(tmp_path / "b")]) == 0
    assert read(tmp_path / "a" / "resolvent.csv") == read(tmp_path / "b" / "resolvent.csv")
    # digests in the manifest match the emitted bytes
    import hashlib

    for name, digest in manifest["outputs"].items():
        assert hashlib.sha256(read(tmp_path / "a" / name)).hexdigest() == digest


def test_resolvent_csv_float_format(tmp_path):
    cfg = write_json(tmp_path / "c.json", {"observable": "v_sharp", "Ms": [32]})
    run_cli(["resolvent", "--config", cfg, "--out", str(tmp_path / "o")])
    line = read(tmp_path / "o" / "resolvent.csv").decode().splitlines()[1]
    value = line.split(",")[2]
    # 17 significant digits: parsing back reproduces the double exactly
    assert f"{float(value):.17g}" == value


def test_verify_corollary24_summary(tmp_path):
    cfg = write_json(tmp_path / "c.json", {"M": 4, "vectors": 10, "seed": 2})
    rc = run_cli(["verify", "--suite", "corollary24", "--config", cfg,
                  "--out", str(tmp_path / "o")])
    assert rc == 0
    summary = json.loads(read(tmp_path / "o" / "summary.json"))
    assert summary["suite"] == "corollary24" and summary["pass"] is True


def test_verify_exit_code_on_failure(tmp_path, monkeypatch):
    def fake(cfg):
        return [{"M": 4}], ["M"], False

    monkeypatch.setattr(cli, "_suite_corollary24", fake)
    cfg = write_json(tmp_path / "c.json", {})
    rc = run_cli(["verify", "--suite", "corollary24", "--config", cfg,
                  "--out", str(tmp_path / "o")])
    assert rc == 1
    summary = json.loads(read(tmp_path / "o" / "summary.json"))
    assert summary["pass"] is False


def test_workers_env_fallback(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("FLUCTLAB_WORKERS", "not-an-int")
    cfg = write_json(tmp_path / "c.json", {"observable": "v_sharp", "Ms": [32]})
    rc = run_cli(["resolvent", "--config", cfg, "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "FLUCTLAB_WORKERS" in capsys.readouterr().err
    monkeypatch.setenv("FLUCTLAB_WORKERS", "1")
    assert run_cli(["resolvent", "--config", cfg, "--out", str(tmp_path / "o")]) == 0


def test_seed_override_changes_outputs(tmp_path):
    cfg = write_json(tmp_path / "c.json", {
        "eps": 0.5, "M": 8, "replicas": 500, "seed": 4, "times": [0.25], "sites": [0],
    })
    run_cli(["simulate", "--config", cfg, "--out", str(tmp_path / "a"), "--seed", "4"])
    run_cli(["simulate", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "5"])
    assert read(tmp_path / "a" / "two_point.csv") != read(tmp_path / "b" / "two_point.csv")
    manifest = json.loads(read(tmp_path / "b" / "manifest.json"))
    assert manifest["seed"] == 5


def test_observable_from_config_custom_pairs(tmp_path):
    cfg = write_json(tmp_path / "c.json", {
        "observable": {"c0": 0.0, "pairs": [[0, 2, 1.0], [0, 1, -1.0]]},
        "Ms": [32, 64],
    })
    assert run_cli(["resolvent", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    lines = read(tmp_path / "o" / "resolvent.csv").decode().splitlines()
    vals = [float(l.split(",")[2]) for l in lines[1:]]
    assert max(vals) / min(vals) < 1.2      # gradient-type stays bounded
