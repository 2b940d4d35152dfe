import hashlib
import json

import pytest

from halfwave import inhomogeneity as inh
from halfwave import io
from halfwave.acceptance import determinism_config
from halfwave.cli import EXIT_FAIL, EXIT_INFRA, EXIT_OK, build_parser, main


@pytest.fixture(scope="module")
def cache(tmp_path_factory, gs, coeffs):
    d = tmp_path_factory.mktemp("cache")
    tag = hashlib.sha1(json.dumps(inh.default().describe(), sort_keys=True).encode()).hexdigest()[:12]
    io.save_ground_state(gs, d / "ground_state")
    io.save_coefficients(coeffs, d / f"coefficients_{tag}")
    return d


def test_parser_knows_every_subcommand():
    p = build_parser()
    for cmd in ("ground-state", "profile", "simulate", "modulate", "virial-check", "experiment", "suite"):
        args = p.parse_args([cmd, "--snapshots", "x"] if cmd == "modulate" else [cmd])
        assert args.command == cmd and args.k == "default" and args.seed == 0
    args = p.parse_args(["simulate", "--grid", "16,256", "--e0", "2", "--t1", "-0.01", "--seed", "4"])
    assert (args.grid.L, args.grid.N, args.e0, args.t1, args.seed) == (16.0, 256, 2.0, -0.01, 4)


def test_bad_grid_is_a_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--grid", "16"])
    assert exc.value.code == EXIT_INFRA


def test_infrastructure_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"nope": 1}))
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path)]) == EXIT_INFRA
    assert main(["simulate", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == EXIT_INFRA
    assert main(["modulate", "--snapshots", str(tmp_path / "none"), "--out", str(tmp_path)]) == EXIT_INFRA
    assert main(["profile", "--out", str(tmp_path)]) == EXIT_INFRA
    assert main(["simulate", "--k", "custom:bogus=1", "--out", str(tmp_path)]) == EXIT_INFRA
    assert "error:" in capsys.readouterr().err


def test_ground_state_on_a_small_torus_fails_certification(tmp_path):
    assert main(["ground-state", "--grid", "256,8192", "--out", str(tmp_path)]) == EXIT_FAIL
    report = io.read_json(tmp_path / "ground_state" / "ground_state_report.json")
    assert report["checks"]["residual_sup"] and not report["passed"]
    for name in ("Q.json", "ground_state.json", "Q.csv", "ground_state.png"):
        assert (tmp_path / "ground_state" / name).exists()


def test_simulate_then_modulate(tmp_path, cache):
    cfg = determinism_config()
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg.to_dict()))
    common = ["--config", str(path), "--out", str(tmp_path), "--cache", str(cache)]
    assert main(["simulate", *common]) == EXIT_OK
    d = tmp_path / "simulate"
    assert (d / "timeseries.csv").exists() and (d / "timeseries.png").exists()
    snaps, man = io.load_snapshots(d / "snapshots")
    assert len(snaps) >= 3 and man["k"] == "default"
    assert main(["modulate", "--snapshots", str(d / "snapshots"), *common]) == EXIT_OK
    rows = io.read_rows(tmp_path / "modulate" / "modtrack.csv")
    assert len(rows) == len(snaps) and all(r["status"] == "ok" for r in rows)


def test_profile_bundle(tmp_path, cache):
    assert main(["profile", "--coefficients", "--out", str(tmp_path), "--cache", str(cache)]) == EXIT_OK
    man = io.read_json(tmp_path / "profile" / "coefficients" / "manifest.json")
    assert man["format"] == "profile-coefficients"
