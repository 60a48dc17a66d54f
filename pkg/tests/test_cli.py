import csv
import json
import subprocess
import sys

import pytest

from sl2walk import cli
from sl2walk.config import DEFAULTS, make_config
from sl2walk.errors import ConfigError

SMALL_CLT = {"clt.n": 200, "clt.trials": 3000, "clt.gamma": 0.1, "report.figures": False}


def _write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def test_unknown_key_rejected():
    with pytest.raises(ConfigError):
        make_config({"clt.trails": 10})
    with pytest.raises(ConfigError):
        make_config({"clt.n": "many"})


def test_config_error_exit_code(tmp_path, capsys):
    assert cli.main(["gap", "--config", _write(tmp_path, {"fixture": "nope"}), "--out", str(tmp_path)]) == 2
    assert cli.main(["gap", "--config", _write(tmp_path, {"bogus": 1}), "--out", str(tmp_path)]) == 2


def test_experiment_error_exit_code(tmp_path, capsys):
    cfg = _write(tmp_path, {"fixture": "elementary_rot", "iterate.n_max": 3, "report.figures": False})
    assert cli.main(["iterate", "--config", cfg, "--out", str(tmp_path / "o")]) == 3
    assert "ElementaryMeasure" in capsys.readouterr().err


def test_summary_echoes_every_default(tmp_path):
    cfg = make_config({"report.figures": False})
    status, summary = cli.run("classify", cfg, tmp_path)
    assert status == 0
    doc = json.loads((tmp_path / "summary.json").read_text())
    assert set(DEFAULTS) <= set(doc["config"])
    assert doc["subcommand"] == "classify" and "streams" in doc and doc["wall_time_s"] >= 0


def test_clt_bytes_identical_across_runs_and_threads(tmp_path):
    cfg = make_config({**SMALL_CLT, "seed": 42})
    outs = []
    for i, threads in enumerate((1, 1, 4)):
        d = tmp_path / f"r{i}"
        cli.run("clt", cfg, d, threads)
        outs.append(b"".join((d / f).read_bytes() for f in ("clt_sample.csv", "clt_sigma2.csv")))
    assert outs[0] == outs[1] == outs[2]
    other = tmp_path / "seed43"
    cli.run("clt", make_config({**SMALL_CLT, "seed": 43}), other, 1)
    assert (other / "clt_sample.csv").read_bytes() != outs[0]


def test_csv_format(tmp_path):
    cli.run("clt", make_config(SMALL_CLT), tmp_path, 2)
    raw = (tmp_path / "clt_sample.csv").read_bytes()
    assert b"\r\n" not in raw and raw.endswith(b"\n")
    rows = list(csv.reader(raw.decode().splitlines()))
    assert all(len(r) == len(rows[0]) for r in rows)
    float(rows[1][0])


def test_gap_on_rot(tmp_path):
    cfg = make_config({"fixture": "elementary_rot", "gap.N": [4], "report.figures": False})
    status, summary = cli.run("gap", cfg, tmp_path)
    assert status == 0
    assert summary["outputs"]["norm_estimate"] >= 0.999


def test_checks_exit_zero(tmp_path):
    cfg = make_config({"report.figures": False})
    status, summary = cli.run("checks", cfg, tmp_path)
    assert status == 0, summary["outputs"]["failed"]


def test_figures_written(tmp_path):
    cli.run("iterate", make_config({"iterate.n_max": 10}), tmp_path)
    assert list(tmp_path.glob("*.png"))


def test_module_entry_point(tmp_path):
    cfg = _write(tmp_path, {"report.figures": False})
    res = subprocess.run([sys.executable, "-m", "sl2walk", "classify", "--config", cfg,
                          "--out", str(tmp_path / "o"), "--threads", "1"], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert (tmp_path / "o" / "summary.json").exists()
