import json
import os
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from pfsi.cli import main
from pfsi.config import SCENARIOS, RunConfig, parse_config
from pfsi.errors import CorruptSnapshot, ParseError, ValidationError, VersionMismatch
from pfsi.snapshot import FieldSnapshot, decode_snapshot, encode_snapshot, read_snapshot, write_snapshot


# -- configuration -------------------------------------------------------------
def test_minimal_config_uses_documented_defaults():
    cfg = parse_config("scenario = rest\n")
    assert cfg.scenario == "rest"
    assert cfg.grid == RunConfig().grid
    assert cfg.lps.r == 4.0 and cfg.lps.s == 6.0
    assert cfg.time.horizon == 0.1  # rest preset


def test_sections_comments_and_overrides():
    text = "# run\nscenario = coupled-small-data\n[time]\ndt = 0.005   # smaller\n[grid]\nnx = 32\n"
    cfg = parse_config(text, ["grid.nz=8", "grid.structure_points=32"])
    assert cfg.time.dt == 0.005
    assert (cfg.grid.nx, cfg.grid.nz, cfg.grid.structure_points) == (32, 8, 32)
    assert cfg.physics.fluid_forcing == 0.01  # preset survives


def test_negative_dt_is_a_validation_error():
    with pytest.raises(ValidationError) as info:
        parse_config("scenario = rest\ntime.dt = -0.1\n")
    assert info.value.field == "time.dt"


def test_unknown_key_reports_location():
    with pytest.raises(ParseError) as info:
        parse_config("scenario = rest\n[physics]\n  viscocity = 2\n")
    err = info.value
    assert "viscocity" in str(err)
    assert (err.line, err.column) == (3, 3)


@pytest.mark.parametrize("text", ["scenario = rest\nscenario = rest\n", "[nosuch]\n", "just words\n",
                                  "[grid\n"])
def test_malformed_configs(text):
    with pytest.raises(ParseError):
        parse_config(text)


@pytest.mark.parametrize("override,field", [("grid.nx=12", "grid.nx"), ("lps.r=1", "lps.r"),
                                            ("physics.eta0_amplitude=0.39", "physics.eta0_amplitude"),
                                            ("geometry.tube_halfwidth=0.7", "geometry.tube_halfwidth"),
                                            ("grid.structure_points=8", "grid.structure_points"),
                                            ("time.dt=abc", "time.dt")])
def test_validation_names_the_field(override, field):
    with pytest.raises(ValidationError) as info:
        parse_config("scenario = rest\n", [override])
    assert info.value.field == field


# -- snapshots ---------------------------------------------------------------------
@settings(max_examples=40, deadline=None)
@given(data=arrays(np.float64, st.tuples(st.integers(1, 3), st.integers(1, 6), st.integers(1, 6))),
       time=st.floats(allow_nan=False), name=st.text(min_size=1, max_size=12))
def test_snapshot_round_trip_is_bit_exact(data, time, name):
    snap = FieldSnapshot(name, data, time, 2)
    back = decode_snapshot(encode_snapshot(snap))
    assert back.name == name and back.dims == 2
    assert back.data.tobytes() == np.ascontiguousarray(data).tobytes()
    assert struct.pack("<d", back.time) == struct.pack("<d", time)


def test_snapshot_file_round_trip(tmp_path):
    snap = FieldSnapshot.scalar("rho", np.arange(12.0).reshape(3, 4), 0.25)
    path = write_snapshot(snap, tmp_path / "rho.pfsi")
    back = read_snapshot(path)
    np.testing.assert_array_equal(back.data, snap.data)
    assert back.grid_shape == (3, 4) and back.components == 1


def test_truncated_snapshot_is_corrupt():
    blob = encode_snapshot(FieldSnapshot.scalar("u", np.ones((4, 4))))
    for cut in (3, 20, len(blob) - 1):
        with pytest.raises(CorruptSnapshot):
            decode_snapshot(blob[:cut])
    with pytest.raises(CorruptSnapshot):
        decode_snapshot(b"XXXX" + blob[4:])


def test_newer_version_is_rejected():
    blob = encode_snapshot(FieldSnapshot.scalar("u", np.ones(3)), version=2)
    with pytest.raises(VersionMismatch):
        decode_snapshot(blob)


# -- command line ----------------------------------------------------------------
def _cfg(tmp_path, text):
    path = tmp_path / "run.cfg"
    path.write_text(text)
    return str(path)


def _summary(outdir):
    with open(os.path.join(outdir, "summary.json")) as fh:
        return json.load(fh)


def test_list_scenarios(capsys):
    assert main(["--list-scenarios"]) == 0
    out = capsys.readouterr().out
    assert all(name in out for name in SCENARIOS)


def test_usage_errors_exit_one():
    with pytest.raises(SystemExit) as info:
        main([])
    assert info.value.code == 1
    with pytest.raises(SystemExit) as info:
        main(["--bogus"])
    assert info.value.code == 1


def test_config_errors_exit_one(tmp_path, monkeypatch):
    assert main(["--config", str(tmp_path / "missing.cfg")]) == 1
    assert main(["--config", _cfg(tmp_path, "scenario = rest\nviscocity = 1\n")]) == 1
    cfg = _cfg(tmp_path, "scenario = rest\n")
    assert main(["--config", cfg, "--override", "time.dt=-1"]) == 1
    monkeypatch.setenv("PFSI_THREADS", "many")
    assert main(["--config", cfg]) == 1


def test_rest_run_writes_zero_ledgers(tmp_path, monkeypatch):
    monkeypatch.setenv("PFSI_THREADS", "1")
    out = str(tmp_path / "out")
    assert main(["--config", _cfg(tmp_path, "scenario = rest\n"), "--output", out, "--quiet"]) == 0
    energy = np.loadtxt(os.path.join(out, "energy.csv"), delimiter=",", comments="#", skiprows=1)
    assert np.all(energy[:, 1:] == 0)
    with open(os.path.join(out, "energy.csv")) as fh:
        assert fh.readline().startswith("#")
    s = _summary(out)
    assert s["status"] == "completed" and s["final_time"] == pytest.approx(0.1)
    assert os.path.exists(os.path.join(out, "config.json"))
    assert os.path.exists(os.path.join(out, "windows.jsonl"))


def test_tube_breach_exit_code_and_final_snapshot(tmp_path):
    out = str(tmp_path / "out")
    assert main(["--config", _cfg(tmp_path, "scenario = tube-breach\n"), "--output", out, "--quiet"]) == 2
    s = _summary(out)
    assert s["status"] == "tube_breach"
    assert s["breach"]["max_displacement"] >= s["breach"]["limit"]
    snap = read_snapshot(os.path.join(out, "snapshots", "eta_final.pfsi"))
    assert np.max(np.abs(snap.data)) < s["breach"]["limit"]


def test_closure_scenario_writes_residual_json(tmp_path):
    out = str(tmp_path / "out")
    cfg = _cfg(tmp_path, "scenario = closure-verify\n[kinetic]\nq_resolution = 32\n[time]\nhorizon = 0.2\ndt = 0.005\n")
    assert main(["--config", cfg, "--output", out, "--quiet"]) == 0
    with open(os.path.join(out, "closure.json")) as fh:
        payload = json.load(fh)
    assert payload["passed"] and payload["max_relative_error"] <= payload["threshold"]


def test_same_seed_gives_identical_ledgers(tmp_path):
    text = ("scenario = coupled-small-data\nseed = 7\ntime.horizon = 0.1\n"
            "physics.density_profile = random\n")
    outs = []
    for k in range(2):
        out = str(tmp_path / f"out{k}")
        assert main(["--config", _cfg(tmp_path, text), "--output", out, "--quiet"]) == 0
        outs.append(out)
    for name in ("energy.csv", "mass.csv", "trace.csv", "lps.csv"):
        with open(os.path.join(outs[0], name), "rb") as a, open(os.path.join(outs[1], name), "rb") as b:
            assert a.read() == b.read()


def test_unwritable_output_reports_path(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code = main(["--config", _cfg(tmp_path, "scenario = rest\n"), "--output", str(blocker / "sub"), "--quiet"])
    assert code == 1
    assert str(blocker) in capsys.readouterr().err
