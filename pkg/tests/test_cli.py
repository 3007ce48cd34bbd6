import csv
import json
import subprocess
import sys
from dataclasses import replace

import pytest

from reactsettle import cli
from reactsettle.config import load_bundled, scenario_to_dict


def _write(tmp_path, sc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(scenario_to_dict(sc)))
    return p


@pytest.fixture
def small_cfg(tmp_path):
    sc = load_bundled("desk_sbr.json").time_compressed(10).with_cells(10)
    return _write(tmp_path, sc)


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_run_writes_outputs(tmp_path, small_cfg):
    out = tmp_path / "out"
    assert cli.main(["run", "--config", str(small_cfg), "--out", str(out)]) == 0
    prof = _rows(out / "profiles.csv")
    series = _rows(out / "boundary_series.csv")
    audit = json.loads((out / "audit.json").read_text())
    assert prof[0] == cli.PROFILE_HEADER
    assert series[0] == cli.SERIES_HEADER
    assert len(cli.PROFILE_HEADER) == 16 and len(cli.SERIES_HEADER) == 25
    times = sorted({r[0] for r in prof[1:]})
    assert len(prof) - 1 == len(times) * 10
    assert audit["cells"] == 10
    assert audit["cfl"]["dominant_term"] == "reaction_S"
    assert set(audit["case_counts"]) == set("abcde")
    # full double precision
    assert "e" in prof[1][2] and len(prof[1][2].split("e")[0]) == 19


def test_scheme_identity_at_zero_reactions(tmp_path, small_cfg):
    a, b = tmp_path / "a", tmp_path / "b"
    base = ["run", "--config", str(small_cfg), "--reactions", "zero"]
    assert cli.main(base + ["--out", str(a), "--scheme", "split"]) == 0
    assert cli.main(base + ["--out", str(b), "--scheme", "unsplit"]) == 0
    assert (a / "profiles.csv").read_bytes() == (b / "profiles.csv").read_bytes()
    assert (a / "boundary_series.csv").read_bytes() == (b / "boundary_series.csv").read_bytes()


def test_overrides(tmp_path, small_cfg):
    out = tmp_path / "o"
    assert cli.main(["run", "--config", str(small_cfg), "--out", str(out), "--cells", "12",
                     "--snapshot-every", "5"]) == 0
    prof = _rows(out / "profiles.csv")
    assert (len(prof) - 1) % 12 == 0


def test_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"schema_version": 1}')
    assert cli.main(["run", "--config", str(bad), "--out", str(tmp_path / "x")]) == 2
    assert "config error" in capsys.readouterr().err


def test_runtime_error_exit_code(tmp_path, capsys):
    sc = load_bundled("desk_sbr.json").time_compressed(10).with_cells(10)
    stages = tuple(replace(s, Q_e_m3h=s.Q_e_m3h * 5) if s.kind == "draw" else s for s in sc.stages)
    cfg = _write(tmp_path, replace(sc, stages=stages))
    assert cli.main(["run", "--config", str(cfg), "--out", str(tmp_path / "x")]) == 3
    assert "stage=draw" in capsys.readouterr().err


def test_convergence_zero_reactions(tmp_path, small_cfg, monkeypatch):
    monkeypatch.setenv("RS_THREADS", "1")
    out = tmp_path / "conv.csv"
    end = load_bundled("desk_sbr.json").time_compressed(10).stages[-1].t_end
    assert cli.main(["convergence", "--config", str(small_cfg), "--cells", "8,16", "--at", str(end),
                     "--reactions", "zero", "--out", str(out)]) == 0
    rows = _rows(out)
    assert rows[0] == ["N", "value", "ratio_to_previous"]
    assert [float(r[1]) for r in rows[1:]] == [0.0, 0.0]


def test_convergence_self_mode(tmp_path, small_cfg, monkeypatch):
    monkeypatch.setenv("RS_THREADS", "2")
    out = tmp_path / "self.csv"
    assert cli.main(["convergence", "--config", str(small_cfg), "--cells", "8,16,32", "--at", "30s",
                     "--mode", "self", "--out", str(out)]) == 0
    rows = _rows(out)
    assert len(rows) == 3
    assert float(rows[1][1]) > 0


def test_convergence_bad_arguments(tmp_path, small_cfg):
    args = ["convergence", "--config", str(small_cfg), "--out", str(tmp_path / "c.csv")]
    assert cli.main(args + ["--cells", "8", "--at", "1h"]) == 2          # beyond the schedule
    assert cli.main(args + ["--cells", "8", "--at", "soon"]) == 2
    assert cli.main(args + ["--cells", "8", "--at", "10", "--mode", "self"]) == 2


def test_parse_time():
    assert cli.parse_time("6h") == 21600.0
    assert cli.parse_time("90s") == 90.0
    assert cli.parse_time("12.5") == 12.5


def test_worker_count(monkeypatch):
    monkeypatch.setenv("RS_THREADS", "3")
    assert cli.worker_count() == 3
    monkeypatch.setenv("RS_THREADS", "many")
    with pytest.raises(cli.ConfigError):
        cli.worker_count()


def test_console_entry_point(tmp_path, small_cfg):
    res = subprocess.run([sys.executable, "-m", "reactsettle.cli", "run", "--config", str(small_cfg),
                          "--out", str(tmp_path / "m")], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
