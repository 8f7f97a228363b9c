import csv
import json

import numpy as np
import pytest

from chiral_transport import cli

FAST = {"integrator": {"dt": 0.01, "t_max": 10.0}}


def write_config(tmp_path, doc, name="c.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def read_csv(path):
    text = path.read_bytes()
    assert b"\r" not in text
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def test_simulate_outputs(tmp_path):
    out = tmp_path / "out"
    rc = cli.main(["simulate", "--config", write_config(tmp_path, FAST), "--out", str(out),
                   "--seed", "4"])
    assert rc == 0
    header, rows = read_csv(out / "simulate.csv")
    assert header == ["t", "C_node1", "C_node2", "F_node2"]
    assert len(rows) == 101
    # full double precision
    assert any(len(v.replace("-", "").replace(".", "").lstrip("0").split("e")[0]) >= 15
               for v in rows[50])
    result = json.loads((out / "simulate.json").read_text())
    assert {"C_max", "F_max", "t_star", "F_at_C_peak", "diagnostics", "provenance"} <= set(result)
    prov = result["provenance"]
    assert prov["seed"] == 4 and prov["integrator"]["dt"] == 0.01
    assert {"config_hash", "version", "config"} <= set(prov)
    assert 0.9 < result["C_max"] < 0.92


def test_outputs_are_byte_identical(tmp_path):
    cfg = write_config(tmp_path, FAST)
    for d in ("a", "b"):
        assert cli.main(["simulate", "--config", cfg, "--out", str(tmp_path / d)]) == 0
    for name in ("simulate.csv", "simulate.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_sweep_optimize_robustness_loss_scan(tmp_path):
    doc = dict(FAST, sweep={"axes": [{"name": "g", "values": [0.2, 0.3]},
                                     {"name": "kD", "values": [0.0, 3.0]}]})
    assert cli.main(["sweep", "--config", write_config(tmp_path, doc),
                     "--out", str(tmp_path)]) == 0
    header, rows = read_csv(tmp_path / "sweep.csv")
    assert header == ["g", "kD", "C_max", "t_star_C_max"] and len(rows) == 4
    assert json.loads((tmp_path / "sweep.json").read_text())["argmax"]["g"] == 0.3

    doc = dict(FAST, optimize={"bracket": [0.1, 0.6], "coarse_points": 5, "tol": 0.02})
    assert cli.main(["optimize", "--config", write_config(tmp_path, doc),
                     "--out", str(tmp_path)]) == 0
    assert 0.27 < json.loads((tmp_path / "optimize.json").read_text())["g_opt"] < 0.33

    doc = dict(FAST, robustness={"delta": 0.1, "samples": 2})
    assert cli.main(["robustness", "--config", write_config(tmp_path, doc),
                     "--out", str(tmp_path), "--threads", "2"]) == 0
    header, rows = read_csv(tmp_path / "robustness.csv")
    assert header == ["sample", "F_max"] and len(rows) == 2

    doc = dict(FAST, loss_scan={"gammas": [0.0, 0.05], "optimize_g": False})
    assert cli.main(["loss-scan", "--config", write_config(tmp_path, doc),
                     "--out", str(tmp_path)]) == 0
    header, rows = read_csv(tmp_path / "loss_scan.csv")
    assert header[:5] == ["Gamma", "F_max_chiral", "g_opt_chiral", "F_max_nonchiral",
                          "g_opt_nonchiral"]


def test_seed_changes_robustness_draws(tmp_path):
    doc = dict(FAST, robustness={"delta": 0.2, "samples": 1})
    cfg = write_config(tmp_path, doc)
    values = []
    for seed in ("1", "2"):
        cli.main(["robustness", "--config", cfg, "--out", str(tmp_path / seed), "--seed", seed])
        values.append(read_csv(tmp_path / seed / "robustness.csv")[1][0][1])
    assert values[0] != values[1]


def test_exit_codes(tmp_path, capsys):
    bad_syntax = tmp_path / "bad.json"
    bad_syntax.write_text('{"network": ')
    assert cli.main(["simulate", "--config", str(bad_syntax)]) == cli.EXIT_CONFIG
    assert "line 1" in capsys.readouterr().err
    assert cli.main(["simulate", "--config",
                     write_config(tmp_path, {"network": {"kD": 7}})]) == cli.EXIT_CONFIG
    assert cli.main(["simulate", "--config", write_config(
        tmp_path, {"network": {"gamma_R": 0.0}})]) == cli.EXIT_PHYSICS
    assert cli.main(["simulate", "--config", str(tmp_path / "missing.json")]) == cli.EXIT_IO
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert cli.main(["simulate", "--config", write_config(tmp_path, FAST),
                     "--out", str(blocker / "sub")]) == cli.EXIT_IO
    assert cli.main(["reproduce"]) == cli.EXIT_CONFIG
    with pytest.raises(SystemExit):
        cli.main(["reproduce", "fig9z"])


def test_reproduce_fig2b_one_csv_per_chi(tmp_path):
    assert cli.main(["reproduce", "fig2b", "--grid", "5", "--out", str(tmp_path)]) == 0
    files = sorted(p.name for p in tmp_path.glob("fig2b_chi_*.csv"))
    assert files == ["fig2b_chi_0.5.csv", "fig2b_chi_0.9.csv", "fig2b_chi_0.csv",
                     "fig2b_chi_1.csv"]
    header, rows = read_csv(tmp_path / "fig2b_chi_1.csv")
    assert header == ["kD", "D_over_lambda", "C_max", "t_star"]
    kds = [float(r[0]) for r in rows]
    np.testing.assert_allclose(kds, np.arange(4) * np.pi / 2)


def test_reproduce_via_config_section(tmp_path):
    cfg = write_config(tmp_path, {"reproduce": {"figure": "fig1c"}})
    assert cli.main(["reproduce", "--config", cfg, "--out", str(tmp_path)]) == 0
    result = json.loads((tmp_path / "fig1c.json").read_text())
    assert result["C_max"] == pytest.approx(0.585, abs=0.01)
