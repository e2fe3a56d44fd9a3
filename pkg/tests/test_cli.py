import csv
import json

import pytest

from prizeloop import algorithms as alg
from prizeloop import cli
from prizeloop.instance import generate_graph_instance, generate_instance, load_instance, save_instance
from prizeloop.oracle import pctsp_value
from prizeloop.rational import to_q


@pytest.fixture
def inst_path(tmp_path):
    p = tmp_path / "inst.json"
    save_instance(generate_instance(9, "euclidean", 1, seed=9), p)
    return p


def test_solve_sweep(inst_path, tmp_path, capsys):
    out = tmp_path / "res.json"
    code = cli.main(["solve", "--algorithm", "alg1", "--mode", "deterministic", "--gamma-strategy", "sweep-yv", str(inst_path), "-o", str(out)])
    assert code == 0
    line = capsys.readouterr().out.strip().splitlines()[-1]
    assert line.startswith("alg1-sweep ")
    ratio = float(line.rsplit("ratio", 1)[1])
    assert ratio <= 1.774
    data = json.loads(out.read_text())
    inst = load_instance(inst_path)
    assert pctsp_value(inst, data["tour"]) == to_q(data["tour_cost"]) + to_q(data["penalty_cost"])


def test_solve_is_byte_identical(inst_path, tmp_path):
    outs = []
    for k in range(2):
        p = tmp_path / f"r{k}.json"
        assert cli.main(["solve", "--mode", "randomized", "--gamma-strategy", "fixed:0.8", "--seed", "3", str(inst_path), "-o", str(p)]) == 0
        outs.append(p.read_bytes())
    assert outs[0] == outs[1]


def test_solve_exact_too_large(tmp_path, capsys):
    p = tmp_path / "big.json"
    save_instance(generate_instance(20, "euclidean", 1, seed=0), p)
    assert cli.main(["solve", "--algorithm", "exact", str(p)]) == 2
    assert "instance too large for oracle" in capsys.readouterr().err


def test_solve_tree2_zero_penalties(tmp_path, capsys):
    p = tmp_path / "zero.json"
    save_instance(generate_instance(7, "random-metric", 0, seed=1), p)
    out = tmp_path / "r.json"
    assert cli.main(["solve", "--algorithm", "tree2", str(p), "-o", str(out)]) == 0
    data = json.loads(out.read_text())
    assert to_q(data["tour_cost"]) + to_q(data["penalty_cost"]) == 0
    assert data["tour"] == [0]


@pytest.mark.parametrize("algorithm", ["threshold-classic", "exact"])
def test_solve_other_algorithms(inst_path, tmp_path, algorithm):
    out = tmp_path / "r.json"
    assert cli.main(["solve", "--algorithm", algorithm, str(inst_path), "-o", str(out)]) == 0
    assert json.loads(out.read_text())["algorithm"] == algorithm


def test_solve_pcst_graph(tmp_path):
    p = tmp_path / "g.json"
    save_instance(generate_graph_instance(8, penalty_scale=20, seed=13), p)
    out = tmp_path / "r.json"
    assert cli.main(["solve", "--algorithm", "pcst2", str(p), "-o", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["tour"] is None and data["tree"]


def test_solve_sampled_threshold(inst_path, tmp_path):
    out = tmp_path / "r.json"
    code = cli.main(["solve", "--mode", "randomized", "--gamma-strategy", "sample-b:0.6945", "--repeats", "3", str(inst_path), "-o", str(out)])
    assert code == 0
    assert 0.6945 - 1e-6 <= json.loads(out.read_text())["gamma"] <= 1


@pytest.mark.parametrize(
    "argv",
    [
        ["solve", "--gamma-strategy", "fixed:1.5"],
        ["solve", "--gamma-strategy", "sample-b:0.5"],
        ["solve", "--gamma-strategy", "nonsense"],
        ["solve", "--algorithm", "magic"],
        ["solve", "--repeats", "0"],
    ],
)
def test_solve_bad_config(inst_path, argv, capsys):
    assert cli.main(argv + [str(inst_path)]) == 2


def test_solve_missing_file(tmp_path):
    assert cli.main(["solve", str(tmp_path / "none.json")]) == 2


def test_internal_breach_exit_code(inst_path, monkeypatch, capsys):
    def broken(*a, **k):
        raise alg.InvariantBreach("synthetic")

    monkeypatch.setattr(alg, "select_threshold_deterministic", broken)
    assert cli.main(["solve", str(inst_path)]) == 3
    dump = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert dump["error"] == "InvariantBreach" and dump["detail"] == "synthetic"


def test_env_precedence(inst_path, tmp_path, monkeypatch):
    monkeypatch.setenv("PRIZELOOP_ALGORITHM", "tree2")
    out = tmp_path / "r.json"
    assert cli.main(["solve", str(inst_path), "-o", str(out)]) == 0
    assert json.loads(out.read_text())["algorithm"] == "tree2"
    assert cli.main(["solve", "--algorithm", "threshold-classic", str(inst_path), "-o", str(out)]) == 0
    assert json.loads(out.read_text())["algorithm"] == "threshold-classic"


# bench


def _bench(tmp_path, name, *extra):
    p = tmp_path / name
    argv = ["bench", "--count", "6", "--n-min", "6", "--n-max", "8", "--seed", "4", "--csv", str(p), *extra]
    assert cli.main(argv) == 0
    return p


def test_bench_deterministic_csv(tmp_path):
    a = _bench(tmp_path, "a.csv")
    b = _bench(tmp_path, "b.csv", "--workers", "3")
    assert a.read_bytes() == b.read_bytes()
    rows = list(csv.DictReader(a.open()))
    assert tuple(rows[0]) == cli.CSV_COLUMNS and len(rows) == 6
    assert all(float(r["alg1_ratio"]) <= 1.774 for r in rows)
    assert all(r["exact_ratio"] == "" for r in rows)


def test_bench_with_exact(tmp_path):
    js = tmp_path / "b.json"
    p = _bench(tmp_path, "e.csv", "--with-exact", "--json", str(js))
    for r in csv.DictReader(p.open()):
        ex = float(r["exact_ratio"])
        assert 1 - 1e-12 <= ex <= min(float(r[c]) for c in ("alg1_ratio", "classic_ratio", "tree2_ratio")) + 1e-12
    summary = json.loads(js.read_text())["summary"]
    assert set(summary) == {"alg1_ratio", "classic_ratio", "tree2_ratio", "exact_ratio"}


@pytest.mark.parametrize(
    "argv",
    [
        ["bench", "--n-min", "8", "--n-max", "6"],
        ["bench", "--count", "0"],
        ["bench", "--with-exact", "--n-max", "20"],
        ["bench", "--family", "planar"],
    ],
)
def test_bench_invalid_range(argv):
    assert cli.main(argv) == 2


# constants and the small commands


def test_constants_default(capsys):
    assert cli.main(["constants"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[-1] == "alpha < 1.774: holds"
    alpha = float(next(l for l in lines if l.startswith("alpha ")).split()[-1])
    assert 1.7 < alpha < 1.774


def test_constants_boundary_and_guard(capsys):
    assert cli.main(["constants", "--b", repr(alg.B_MIN)]) == 0
    assert cli.main(["constants", "--b", "0.5"]) == 2


def test_lp_decompose_oracle_gen(tmp_path, inst_path):
    lp = tmp_path / "lp.json"
    assert cli.main(["lp", str(inst_path), "-o", str(lp)]) == 0
    sol = json.loads(lp.read_text())
    assert sol["certified_optimal"] and sol["relaxation"] == "pctsp"
    dec = tmp_path / "dec.json"
    assert cli.main(["decompose", str(inst_path), "--trace", "-o", str(dec)]) == 0
    data = json.loads(dec.read_text())
    assert {"decomposition", "walks", "H"} <= set(data)
    orc = tmp_path / "orc.json"
    assert cli.main(["oracle", str(inst_path), "-o", str(orc)]) == 0
    assert to_q(json.loads(orc.read_text())["value"]) > 0
    gen = tmp_path / "gen.json"
    assert cli.main(["gen", "--family", "graph", "--n", "6", "--seed", "2", "-o", str(gen)]) == 0
    assert load_instance(gen) == generate_graph_instance(6, 0.25, 1.0, 2)
