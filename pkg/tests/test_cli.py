import json

import numpy as np
import pytest

from structadapt import cli
from structadapt.model import IndexVector, ObservationField, TargetFunction, function_library, simulate

SMALL = """\
# tiny run
target = cusp
target_params = 0.5, 1.0
index_deg = 30          # degrees
epsilon = 0.0625, 0.04, 0.03125, 0.02
n = 64
n_theta = 16
grid_floor_cells = 4
n_reps = 12
calibration_reps = 32
threshold_const = 1.25
x = 0.0, 0.0; 0.1, -0.2
trace_limit = 8
"""


@pytest.fixture
def conf(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text(SMALL)
    return p


def _run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_parse_and_render_round_trip():
    cfg = cli.parse_config(SMALL)
    assert cfg["epsilon"] == (0.0625, 0.04, 0.03125, 0.02)
    assert cfg["x"] == ((0.0, 0.0), (0.1, -0.2))
    assert cfg["n_reps"] == 12 and cfg["normalize"] is True
    again = cli.parse_config(cli.render_config(cfg))
    assert again == cfg and cli.digest(again) == cli.digest(cfg)
    assert cli.digest(cli.parse_config(SMALL + "batch = 13\n")) != cli.digest(cfg)
    assert cli.digest(cli.parse_config(SMALL + "out_dir = elsewhere\nworkers = 3\n")) == cli.digest(cfg)


@pytest.mark.parametrize("text,needle", [
    ("bogus = 1", "unknown config keys"),
    ("n = 64\nn = 128", "duplicate"),
    ("epsilon = 1.5", "outside"),
    ("target = sawtooth", "unknown link"),
    ("n_theta = 15", "even"),
    ("x = 0.9, 0.0", "outside"),
    ("just words", "key = value"),
    ("normalize = maybe", "boolean"),
])
def test_invalid_config_exits_2_with_json_record(tmp_path, capsys, text, needle):
    p = tmp_path / "bad.cfg"
    p.write_text(text)
    code, out, err = _run(capsys, "estimate", p)
    assert code == 2
    rec = json.loads(err.strip().splitlines()[-1])
    assert rec["status"] == "error" and rec["exit_code"] == 2
    assert needle in rec["message"]


def test_missing_config_file(tmp_path, capsys):
    code, _, err = _run(capsys, "oracle", "--config", tmp_path / "nope.cfg")
    assert code == 2 and json.loads(err.strip().splitlines()[-1])["kind"] == "FileNotFoundError"


def test_simulate_writes_readable_fields(conf, tmp_path, capsys):
    out = tmp_path / "sim"
    code, _, _ = _run(capsys, "simulate", conf, "--out", out, "--seed", 5)
    assert code == 0
    f = ObservationField.read_binary(out / "field_eps0.0625_seed5.bin")
    tg = TargetFunction(function_library("cusp", (0.5, 1.0)), IndexVector.from_degrees(30))
    assert np.array_equal(f.increments, simulate(tg, 0.0625, 64, 5).increments)
    man = json.loads((out / "simulate.json").read_text())
    assert man["seed"] == 5 and len(man["config_digest"]) == 64 and man["tool_version"]
    assert not list(out.glob(".*tmp"))


def test_estimate_trace_replays(conf, tmp_path, capsys):
    out = tmp_path / "est"
    code, stdout, _ = _run(capsys, "estimate", conf, "--out", out, "--dump-trace", out / "trace.json")
    assert code == 0
    printed = json.loads(stdout)
    assert len(printed["results"]) == 8
    assert all(r["trace"]["r_values"].startswith("elided") for r in printed["results"])
    full = json.loads((out / "trace.json").read_text())
    assert isinstance(full["results"][0]["trace"]["r_values"], list)
    recorded, recomputed = cli.replay_trace(out / "trace.json")
    assert recorded == recomputed
    assert recorded == [r["trace"]["estimate"] for r in printed["results"]]


def test_estimate_on_field_file(conf, tmp_path, capsys):
    _run(capsys, "simulate", conf, "--out", tmp_path / "s")
    code, stdout, _ = _run(capsys, "estimate", conf, "--out", tmp_path / "e",
                           "--set", f"field_file={tmp_path / 's' / 'field_eps0.04_seed0.bin'}")
    assert code == 0
    res = json.loads(stdout)["results"]
    assert len(res) == 2 and res[0]["epsilon"] == 0.04


def test_oracle_constant_target_gives_full_bandwidth(conf, tmp_path, capsys):
    code, stdout, _ = _run(capsys, "oracle", conf, "--out", tmp_path / "o", "--set", "target=constant",
                           "--set", "target_params=0.3", "--set", "epsilon=0.05")
    assert code == 0
    res = json.loads(stdout)["results"]
    assert [r["h_star"] for r in res] == [1.0, 1.0]
    rows = cli.read_csv(tmp_path / "o" / "oracle.csv")
    assert float(rows[0]["h_star"]) == 1.0
    prof = cli.read_csv(tmp_path / "o" / "oracle_profile.csv")
    assert set(prof[0]) == {"epsilon", "y", "h", "delta_star"}


def test_risk_sweep_is_bit_reproducible_and_schedule_free(conf, tmp_path, capsys):
    for tag, workers in (("a", 1), ("b", 1), ("c", 2)):
        assert _run(capsys, "risk-sweep", conf, "--out", tmp_path / tag, "--workers", workers,
                    "--set", "oracle_ratio=false")[0] == 0
    a = (tmp_path / "a" / "risk_sweep.csv").read_bytes()
    assert a == (tmp_path / "b" / "risk_sweep.csv").read_bytes()
    assert a == (tmp_path / "c" / "risk_sweep.csv").read_bytes()
    rows_a = cli.read_csv(tmp_path / "a" / "risk_sweep.csv")
    assert list(rows_a[0]) == ["epsilon", "beta", "L", "risk", "half_width", "rate_formula_value", "ratio",
                               "slope_regression", "threshold_const"]
    assert len({r["slope_regression"] for r in rows_a}) == 1


def test_calibrate_writes_curve(conf, tmp_path, capsys):
    code, stdout, _ = _run(capsys, "calibrate", conf, "--out", tmp_path / "c", "--set", "epsilon=0.05",
                           "--set", "c_grid=0.5, 1, 2, 4")
    assert code == 0
    rows = cli.read_csv(tmp_path / "c" / "calibration.csv")
    assert [float(r["C"]) for r in rows] == [0.5, 1.0, 2.0, 4.0]
    rates = [float(r["acceptance_rate"]) for r in rows]
    assert rates == sorted(rates)
    chosen = json.loads(stdout)["chosen"][0]["threshold_const"]
    assert chosen in (0.5, 1.0, 2.0, 4.0)


def test_atomic_write_replaces_whole_file(tmp_path):
    p = tmp_path / "a" / "f.txt"
    cli.atomic_write(p, "one")
    cli.atomic_write(p, b"two")
    assert p.read_text() == "two"
    assert [q.name for q in p.parent.iterdir()] == ["f.txt"]
