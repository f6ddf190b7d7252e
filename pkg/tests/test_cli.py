import csv
import dataclasses
import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from liesys import cli, models
from liesys.errors import ConfigError


def write_config(tmp_path, name="config.json", **cfg):
    cfg.setdefault("output_dir", str(tmp_path / "out"))
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr().out
    return code, (json.loads(out) if out else None)


def checks_by_name(report):
    return {c["name"]: c for c in report["checks"]}


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


# ---- verify


def test_verify_trailer0(tmp_path, capsys):
    code, rep = run(capsys, "verify", "--config", write_config(tmp_path, model="trailer0"))
    assert code == 0 and rep["passed"]
    c = checks_by_name(rep)
    assert c["closure"]["dimension"] == 3
    assert c["flag"]["profile"] == [2, 3]
    assert c["contact:alpha2"]["passed"] and c["contact:alpha3"]["passed"]
    assert c["table:vg"]["residual"] <= 1e-9
    assert (tmp_path / "out" / "verify.json").read_text() == cli._dumps(rep)


def test_verify_trailer1(tmp_path, capsys):
    code, rep = run(capsys, "verify", "--config", write_config(tmp_path, model="trailer1"))
    assert code == 0
    c = checks_by_name(rep)
    assert c["closure"]["dimension"] == 6
    assert c["flag"]["profile"] == [2, 3, 4]
    assert c["invariance:alpha2"]["passed"] and c["invariance:alpha3"]["passed"]
    assert c["table:subalgebra"]["passed"] and c["table:sl2"]["passed"]


@pytest.mark.parametrize("model", ["gambier(1)", "hopf"])
def test_verify_reduced_models(tmp_path, capsys, model):
    code, rep = run(capsys, "verify", "--config", write_config(tmp_path, model=model))
    c = checks_by_name(rep)
    assert code == 0
    assert c["connection"]["passed"] and c["reduced_closure"]["passed"]


def test_verify_names_the_corrupted_bracket(tmp_path, capsys, monkeypatch):
    good = models._trailer0

    def flipped():
        b = good()
        names, table = b.tables["vg"]
        table = dict(table, **{})
        table[("X1", "X2")] = {"X3": -1.0}
        return dataclasses.replace(b, tables={**b.tables, "vg": (names, table)})

    monkeypatch.setattr(models, "_trailer0", flipped)
    code, rep = run(capsys, "verify", "--config", write_config(tmp_path, model="trailer0"))
    assert code == 2 and not rep["passed"]
    assert checks_by_name(rep)["table:vg"]["failures"] == ["[X1,X2]"]


# ---- reconstruct


def test_reconstruct_trailer0_outputs(tmp_path, capsys):
    code, rep = run(capsys, "reconstruct", "--config", write_config(tmp_path, model="trailer0"))
    assert code == 0 and rep["passed"]
    c = checks_by_name(rep)
    assert c["reference_deviation"]["residual"] <= 1e-6
    assert c["ode_residual"]["residual"] <= 1e-5
    out = tmp_path / "out"
    assert sorted(p.name for p in out.iterdir()) == sorted(rep["files"] + ["report.json"])
    header, data = read_csv(out / "reconstructed.csv")
    assert header == ["t", "xi1", "xi2", "theta0", "theta0_wrapped"]
    assert data.shape == (5001, 5) and rep["nodes"] == 5001
    assert np.all((data[:, 4] >= 0) & (data[:, 4] < 2 * math.pi))
    raw = (out / "reconstructed.csv").read_bytes()
    assert b"\r" not in raw and raw.endswith(b"\n")
    row = raw.split(b"\n")[1].decode().split(",")
    assert row[1] == "%.17g" % 0.5
    assert read_csv(out / "gamma.csv")[0] == ["t", "xi1", "theta0", "theta0_wrapped"]
    assert read_csv(out / "group.csv")[0] == ["t", "g"]


def test_reconstruct_without_wrapped_columns(tmp_path, capsys):
    cfg = write_config(tmp_path, model="trailer0", wrapped_columns=False, t1=1.0)
    assert run(capsys, "reconstruct", "--config", cfg)[0] == 0
    assert read_csv(tmp_path / "out" / "lift.csv")[0] == ["t", "xi1", "xi2", "theta0"]


def test_reconstruct_riccati_in_natural_coordinates(tmp_path, capsys):
    cfg = write_config(
        tmp_path,
        model="gambier(1)",
        controls={"a1": {"kind": "constant", "value": 0.0}, "a2": {"kind": "constant", "value": -1.0}},
        x0=[1.5, 0.2],
        t1=1.0,
    )
    code, rep = run(capsys, "reconstruct", "--config", cfg)
    assert code == 0
    header, data = read_csv(tmp_path / "out" / "reconstructed.csv")
    assert header == ["t", "x", "y"]
    t, c = data[:, 0], math.atan(0.2)
    assert np.max(np.abs(data[:, 2] - np.tan(c - t))) <= 1e-7
    assert np.max(np.abs(data[:, 1] - 1.5 * np.cos(c - t) / math.cos(c))) <= 1e-7
    assert rep["config"]["g0"] == 1.0


def test_reconstruct_hopf_decoupled_angle(tmp_path, capsys):
    cfg = write_config(tmp_path, model="hopf", controls={"delta": {"kind": "constant", "value": 0.0}}, x0=[0.5, 0.3])
    assert run(capsys, "reconstruct", "--config", cfg)[0] == 0
    _, data = read_csv(tmp_path / "out" / "reconstructed.csv")
    assert np.max(np.abs(data[:, 2] - (0.3 + data[:, 0]))) <= 1e-12


def test_reconstruct_adaptive_grid(tmp_path, capsys):
    cfg = write_config(tmp_path, model="trailer1", method={"kind": "adaptive", "grid": 2500})
    code, rep = run(capsys, "reconstruct", "--config", cfg)
    assert code == 0 and rep["nodes"] == 2501
    assert read_csv(tmp_path / "out" / "reference.csv")[1].shape[0] == 2501


def test_coarse_adaptive_grid_breaches_the_residual_budget(tmp_path, capsys):
    # central differences on h = 0.0125 carry an O(h^2) defect near 1e-4
    cfg = write_config(tmp_path, model="trailer1", method={"kind": "adaptive", "grid": 400})
    code, rep = run(capsys, "reconstruct", "--config", cfg)
    assert code == 2 and rep["nodes"] == 401
    assert checks_by_name(rep)["reference_deviation"]["passed"]


def test_tolerance_breach_is_exit_2(tmp_path, capsys):
    cfg = write_config(tmp_path, model="trailer0", tolerances={"ode_residual": 1e-12})
    code, rep = run(capsys, "reconstruct", "--config", cfg)
    assert code == 2 and not checks_by_name(rep)["ode_residual"]["passed"]


def test_blow_up_is_exit_3(tmp_path, capsys):
    # r' = r + r^3 from r = 0.5 escapes near t = log(5)/2
    cfg = write_config(tmp_path, model="hopf", controls={"a": {"kind": "constant", "value": 1.0}})
    code = cli.main(["reconstruct", "--config", str(cfg)])
    assert code == 3
    assert "solver error" in capsys.readouterr().err


@pytest.mark.parametrize(
    "cfg",
    [
        {"model": "trailer0", "colour": "red"},
        {"model": "unicycle"},
        {"model": "gambier(0)"},
        {"model": "trailer0", "x0": [1, 2]},
        {"model": "gambier(1)", "x0": [-1.0, 0.0]},
        {"model": "trailer0", "t0": 2, "t1": 1},
        {"model": "trailer0", "controls": {"b3": {"kind": "constant", "value": 1}}},
        {"model": "trailer0", "method": {"kind": "euler"}},
    ],
)
def test_bad_configs_are_exit_1(tmp_path, capsys, cfg):
    assert run(capsys, "verify", "--config", write_config(tmp_path, **cfg))[0] == 1


def test_missing_and_malformed_config(tmp_path, capsys):
    assert run(capsys, "verify", "--config", tmp_path / "nope.json")[0] == 1
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert run(capsys, "verify", "--config", p)[0] == 1
    assert run(capsys, "frobnicate")[0] == 1


def test_config_echo_is_fully_resolved():
    cfg = cli.RunConfig.from_mapping({"model": "gambier"}, env={})
    d = cfg.to_dict()
    assert d["model"] == "gambier(1)"
    assert d["x0"] == [1.0, 0.2]
    assert d["method"] == {"kind": "rk4", "h": 1e-3}
    assert d["output_dir"] == cli.DEFAULT_OUTPUT
    assert set(d["controls"]) == {"a1", "a2"}
    assert cli.RunConfig.from_mapping(d, env={}) == cfg
    with pytest.raises(ConfigError):
        cli.RunConfig.from_mapping([1, 2])


def test_output_dir_from_environment(tmp_path, capsys, monkeypatch):
    target = tmp_path / "from-env"
    monkeypatch.setenv(cli.OUTPUT_ENV, str(target))
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"model": "trailer0"}))
    assert run(capsys, "verify", "--config", p)[0] == 0
    assert (target / "verify.json").exists()
    override = tmp_path / "flag-dir"
    assert run(capsys, "verify", "--config", p, "--output-dir", override)[0] == 0
    assert (override / "verify.json").exists()


@pytest.mark.parametrize("command", ["verify", "reconstruct"])
def test_runs_are_byte_identical(tmp_path, capsys, command):
    blobs = []
    for k in range(2):
        cfg = write_config(tmp_path, f"c{k}.json", model="trailer1", seed=7, output_dir="OUT")
        cwd = tmp_path / f"run{k}"
        cwd.mkdir()
        os.chdir(cwd)
        try:
            assert run(capsys, command, "--config", cfg)[0] == 0
        finally:
            os.chdir(tmp_path)
        blobs.append({p.name: p.read_bytes() for p in sorted((cwd / "OUT").iterdir())})
    assert blobs[0] == blobs[1]


# ---- flag and models


@pytest.mark.parametrize("n", [0, 3, 4])
def test_flag(tmp_path, capsys, n):
    code, rep = run(capsys, "flag", "--config", write_config(tmp_path, trailers=n, points=4))
    assert code == 0
    assert rep["expected"] == list(range(2, n + 4))
    assert rep["profile"] == rep["expected"]
    assert len(rep["per_point"]) == 4


def test_flag_defaults_from_model_id(tmp_path, capsys):
    code, rep = run(capsys, "flag", "--config", write_config(tmp_path, model="trailer1"))
    assert code == 0 and rep["profile"] == [2, 3, 4]


def test_flag_needs_a_trailer_count(tmp_path, capsys):
    assert run(capsys, "flag", "--config", write_config(tmp_path, model="hopf"))[0] == 1


def test_models_command(capsys):
    code, rows = run(capsys, "models")
    assert code == 0
    assert [r["id"] for r in rows] == list(models.MODEL_IDS)


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "liesys", "models"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)[0]["id"] == "trailer0"
