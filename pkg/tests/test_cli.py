import csv
import json
import math
import os

import pytest

from sl2lab import cli

from cli_cases import BASE, MEASURE, identical_trees, planted_curve_csv, run_all, write_config


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_every_command_succeeds_and_is_deterministic(tmp_path):
    a, b, c = (tmp_path / x for x in "abc")
    for d in (a, b, c):
        d.mkdir()
    assert set(run_all(str(a), 1).values()) == {0}
    assert set(run_all(str(b), 1).values()) == {0}
    assert set(run_all(str(c), 2).values()) == {0}
    ok, msg = identical_trees(a / "out", b / "out")
    assert ok, msg
    ok, msg = identical_trees(a / "out", c / "out")
    assert ok, msg
    outs = os.listdir(a / "out")
    for command in cli.COMMANDS:
        assert f"provenance_{command}.json" in outs


def test_single_atom_lyapunov(tmp_path):
    cfg = {"seed": 0, "measure": {"atoms": [[[2.0, 0.0], [0.0, 0.5]]], "probs": [1.0]},
           "lyapunov": {"energies": [0.0], "n": 50, "samples": 4}}
    assert cli.run("lyapunov", write_config(tmp_path, cfg)) == 0
    rows = read_csv(tmp_path / "out" / "lyapunov_n50_samples4_seed0.csv")
    assert len(rows) == 1
    assert float(rows[0]["value"]) == pytest.approx(math.log(2), abs=1e-9)


def test_malformed_probs_exit_two(tmp_path, capsys):
    cfg = {"seed": 0, "measure": {"atoms": [[[1.0, 0.0], [0.0, 1.0]]] * 2, "probs": [0.5, 0.6]},
           "lyapunov": {"n": 10, "samples": 4}}
    assert cli.run("lyapunov", write_config(tmp_path, cfg)) == 2
    assert "measure.probs" in capsys.readouterr().err


@pytest.mark.parametrize("cfg, field", [
    ({"halperin": {"a": 0, "b": 1}, "lyapunov": {"n": 10, "samples": 4}}, "seed"),
    ({"seed": -1, "halperin": {"a": 0, "b": 1}}, "seed"),
    ({"seed": 1.5, "halperin": {"a": 0, "b": 1}}, "seed"),
    ({"seed": 0, "lyapunov": {"n": 10, "samples": 4}}, "measure"),
    ({"seed": 0, "halperin": {"a": 0, "b": 1}}, "lyapunov"),
    ({"seed": 0, "halperin": {"a": 0, "b": 1}, "lyapunov": {"samples": 4}}, "lyapunov.n"),
])
def test_config_errors_exit_two(tmp_path, capsys, cfg, field):
    assert cli.run("lyapunov", write_config(tmp_path, cfg)) == 2
    assert field in capsys.readouterr().err


def test_unparseable_config(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("seed: [1, 2\n")
    assert cli.run("ids", str(path)) == 2
    assert cli.run("ids", str(tmp_path / "missing.yaml")) == 2


def test_embed_identity_measure(tmp_path):
    cfg = {"seed": 0, "measure": {"atoms": [[[1.0, 0.0], [0.0, 1.0]]], "probs": [1.0]}}
    assert cli.run("embed", write_config(tmp_path, cfg)) == 0
    rows = read_csv(tmp_path / "out" / "decomposition.csv")
    assert list(rows[0]) == ["atom_index", "t0", "t1", "t2", "t3", "residual"]
    assert all(float(r["residual"]) < 1e-12 for r in rows)
    system = json.load(open(tmp_path / "out" / "markov_system.json"))
    assert system["kappa"] == 1 and system["nu"] == [0.25] * 4


def test_embed_needs_a_measure(tmp_path):
    cfg = {"seed": 0, "halperin": {"a": 0, "b": 1}}
    assert cli.run("embed", write_config(tmp_path, cfg)) == 2


def test_thouless_zero_potential(tmp_path):
    cfg = {"seed": 0, "potentials": {"values": [0.0]},
           "thouless": {"energies": [3.0], "n": 2000, "samples": 2}}
    assert cli.run("thouless", write_config(tmp_path, cfg)) == 0
    row, = read_csv(tmp_path / "out" / "thouless_n2000_samples2_seed0.csv")
    exact = math.log((3 + math.sqrt(5)) / 2)
    assert float(row["L_transfer"]) == pytest.approx(exact, abs=1e-3)
    assert float(row["L_thouless"]) == pytest.approx(exact, abs=1e-3)
    assert float(row["gap"]) < 1e-3


def test_holder_planted_curve(tmp_path):
    planted_curve_csv(tmp_path / "curve.csv", 0.1, 0.5)
    cfg = {"seed": 5, "holder": {"E0": 0.1, "curve": "curve.csv"}}
    assert cli.run("holder", write_config(tmp_path, cfg)) == 0
    est = json.load(open(tmp_path / "out" / "holder_curve_seed5.json"))
    assert est["alpha_hat"] == pytest.approx(0.5, abs=0.02)


def test_holder_flat_curve_is_numeric_failure(tmp_path):
    (tmp_path / "flat.csv").write_text(
        "energy,value\n" + "".join(f"{x / 100},1.0\n" for x in range(-50, 51)))
    cfg = {"seed": 5, "holder": {"E0": 0.0, "curve": "flat.csv",
                                 "scales": [0.4, 0.2, 0.1, 0.05]}}
    assert cli.run("holder", write_config(tmp_path, cfg)) == 3


def test_holder_bound_report(tmp_path):
    cfg = {"seed": 2, "halperin": {"a": 0, "b": 8},
           "holder": {"E0": -0.2462, "n": 400, "samples": 40, "report": True,
                      "lyapunov_n": 300, "scales": [0.1, 0.05, 0.025, 0.0125]}}
    assert cli.run("holder", write_config(tmp_path, cfg)) == 0
    rep = json.load(open(tmp_path / "out" / "bound_report_n400_samples40_seed2.json"))
    assert rep["H"] == pytest.approx(math.log(2))
    assert rep["verdict"].startswith("consistent") or rep["verdict"] == "inconsistent"


def test_cap_exceeded_exit_four(tmp_path):
    cfg = {"seed": 0, "potentials": {"values": list(range(10))},
           "tangency": {"E0": 0.0, "max_len": 7, "E_radius": 0.1, "min_lambda": 2.0}}
    assert cli.run("tangency", write_config(tmp_path, cfg)) == 4


def test_no_tangency_exit_three(tmp_path):
    cfg = {"seed": 0, "halperin": {"a": 0, "b": 4},
           "tangency": {"E0": 0.0, "max_len": 1, "E_radius": 0.01, "min_lambda": 1e6,
                        "powers": []}}
    assert cli.run("tangency", write_config(tmp_path, cfg)) == 3


def test_provenance_records_resolved_config(tmp_path):
    cfg = dict(BASE)
    path = write_config(tmp_path, cfg)
    assert cli.run("ids", path) == 0
    prov = json.load(open(tmp_path / "out" / "provenance_ids.json"))
    assert prov["seed"] == 11 and prov["command"] == "ids"
    assert prov["ids"]["n"] == 64
    assert prov["outputs"] == ["ids_n64_samples10_seed11.csv"]


def test_main_entry_point(tmp_path):
    path = write_config(tmp_path, MEASURE)
    assert cli.main(["embed", path, "--output", str(tmp_path / "o")]) == 0
    with pytest.raises(SystemExit):
        cli.main(["embed", path, "--workers", "0"])
    with pytest.raises(SystemExit):
        cli.main(["bogus", path])
