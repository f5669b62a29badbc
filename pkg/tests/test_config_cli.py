import csv
import json
import os

import pytest

from lattice_entire.cli import main
from lattice_entire.config import ExperimentConfig
from lattice_entire.errors import ConfigError


def write_config(path, **sections):
    path.write_text(json.dumps(sections))
    return str(path)


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr().out
    return code, out


# -- config parsing ----------------------------------------------------------

def test_defaults_round_trip():
    cfg = ExperimentConfig()
    back = ExperimentConfig.from_json(cfg.to_json())
    assert back == cfg and back.digest() == cfg.digest()


@pytest.mark.parametrize("data", [
    {"colour": 1},
    {"shift": {"lambda": 1.0}},
    {"nonlinearity": {"a": 1.5}},
    {"nonlinearity": {"mu": [[1.0, -2.0]]}},
    {"run": {"dt": 0.0}},
    {"scenario": "theorem14"},
    {"direction": [0, 0]},
    {"seed": -1},
    {"kernel": {"type": "table"}},
])
def test_invalid_configs(data):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(data)


def test_bad_json_text():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json("{not json")


def test_overrides_check_keys():
    cfg = ExperimentConfig().with_overrides(shift={"L": 0.0})
    assert cfg.shift.L == 0.0
    with pytest.raises(ConfigError):
        ExperimentConfig().with_overrides(shift={"LL": 0.0})


# -- exit codes --------------------------------------------------------------

def test_out_of_range_a_exits_2(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", nonlinearity={"a": 1.5})
    code, out = run(capsys, "fronts", "--config", cfg, "--out", tmp_path)
    assert code == 2
    body = json.loads(out)["error"]
    assert body["schema_version"] == "1.0" and "nonlinearity.a" in body["message"]


def test_zero_samples_exit_2(tmp_path, capsys):
    code, out = run(capsys, "verify-q", "--samples", 0, "--out", tmp_path)
    assert code == 2 and "error" in json.loads(out)


def test_unknown_flag_exit_2(tmp_path, capsys):
    code, _ = run(capsys, "verify-q", "--bogus", "--out", tmp_path)
    assert code == 2


def test_missing_cache_exit_2(tmp_path, capsys):
    code, out = run(capsys, "supersub", "--out", tmp_path / "empty")
    assert code == 2
    assert "fronts" in json.loads(out)["error"]["message"]


def test_degenerate_run_exit_2(tmp_path, capsys):
    code, _ = run(capsys, "entire", "--T-start", 0, "--T-end", 0, "--out", tmp_path / "nothing")
    assert code == 2


# -- commands ----------------------------------------------------------------

def test_verify_q_small_run(tmp_path, capsys):
    args = ("verify-q", "--a-values", 0.3, 0.7, "--samples", 2000, "--grad-samples", 200)
    code, _ = run(capsys, *args, "--out", tmp_path / "a")
    assert code == 0
    rep = json.loads((tmp_path / "a" / "verify_q.json").read_text())
    assert rep["schema_version"] == "1.0" and rep["passed"]
    code, out = run(capsys, *args, "--inject", "qw_sign", "--out", tmp_path / "b")
    assert code == 1 and json.loads(out)["worst"]["gradients"] is not None


def test_verify_q_deterministic(tmp_path, capsys):
    args = ("verify-q", "--a-values", 0.5, "--samples", 500, "--grad-samples", 50, "--seed", 7)
    run(capsys, *args, "--out", tmp_path / "x")
    run(capsys, *args, "--out", tmp_path / "y")
    a, b = (json.loads((tmp_path / d / "verify_q.json").read_text()) for d in "xy")
    for rep in (a, b):
        del rep["config"], rep["config_digest"]  # these differ only by output directory
    assert a == b


def test_verify_shifts(tmp_path, capsys):
    code, _ = run(capsys, "verify-shifts", "--out", tmp_path)
    assert code == 0
    rep = json.loads((tmp_path / "verify_shifts.json").read_text())
    assert [s["scenario"] for s in rep["suites"]] == ["theorem12", "theorem13"]


def test_fronts_warm_cache_is_a_no_op(tmp_path, capsys, fronts12, config12):
    cfg = write_config(tmp_path / "c.json", output={"dir": str(tmp_path / "o"),
                                                    "cache_dir": config12.output.cache_dir})
    before = {p: os.stat(p).st_mtime_ns for p in fronts12.paths}
    code, _ = run(capsys, "fronts", "--config", cfg)
    assert code == 0
    assert {p: os.stat(p).st_mtime_ns for p in fronts12.paths} == before
    rep = json.loads((tmp_path / "o" / "fronts.json").read_text())
    assert rep["cache_hits"] == [True, True, True]
    assert rep["front_hashes"] == fronts12.hashes
    with open(tmp_path / "o" / "fronts_summary.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 3
    assert list(rows[0]) == list(fronts12.summary_rows()[0])
