import itertools
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from builders import uniform_metric
from prizeloop.instance import (
    GRAPH,
    METRIC,
    Instance,
    InstanceError,
    dumps_instance,
    find_triangle_violation,
    from_coordinates,
    generate_instance,
    instance_from_dict,
    instance_to_dict,
    load_instance,
    metric_closure,
    parse_tsplib_pc,
    root_split_transform,
    save_instance,
    unsplit_cycle,
)
from prizeloop.lp import LpInfeasibleError, LpSolution, lp_objective, random_tour_mixture, tour_mixture_point
from prizeloop.oracle import pctsp_value
from prizeloop.rational import Q, edge

TSPLIB_EUC = """NAME: tiny
TYPE: PCTSP
DIMENSION: 3
EDGE_WEIGHT_TYPE: EUC_2D
NODE_COORD_SECTION
1 0 0
2 3 0
3 3 4
PENALTY_SECTION
2 7
3 1/2
EOF
"""

TSPLIB_EXPLICIT = """NAME: ex
DIMENSION: 3
EDGE_WEIGHT_TYPE: EXPLICIT
EDGE_WEIGHT_FORMAT: LOWER_DIAG_ROW
EDGE_WEIGHT_SECTION
0
2 0
3 1 0
"""


def _triangles_ok(inst):
    for u, v, w in itertools.permutations(inst.vertices, 3):
        if inst.d(u, w) > inst.d(u, v) + inst.d(v, w):
            return False
    return True


# loading


def test_collinear_points_from_json(tmp_path):
    data = {
        "name": "line",
        "root": 1,
        "vertices": [
            {"id": 1, "penalty": "0", "x": "0", "y": "0"},
            {"id": 2, "penalty": "1", "x": "1", "y": "0"},
            {"id": 3, "penalty": "1", "x": "2", "y": "0"},
        ],
    }
    p = tmp_path / "line.json"
    p.write_text(json.dumps(data))
    inst = load_instance(p)
    assert inst.d(1, 3) == 2
    assert inst.d(1, 2) == 1
    assert inst.kind == METRIC


def test_root_penalty_rejected():
    inst = uniform_metric(3)
    bad = Instance("x", inst.vertices, 0, inst.dist, {0: Q(5), 1: Q(1), 2: Q(1)})
    with pytest.raises(InstanceError, match="root penalty must be 0"):
        bad.validate()


def test_triangle_violation_names_the_triple(tmp_path):
    inst = uniform_metric(7, {v: 1 for v in range(1, 7)})
    dist = dict(inst.dist)
    dist[(2, 5)] = Q(3)
    broken = Instance("tri", inst.vertices, 0, dist, inst.penalty)
    p = tmp_path / "tri.json"
    p.write_text(json.dumps(instance_to_dict(broken)))
    with pytest.raises(InstanceError, match=r"triangle inequality violated on triple \(2, \d, 5\)"):
        load_instance(p)
    # brute force: every violated triple has the tampered pair as its long side
    violated = {
        (u, v, w)
        for u, v, w in itertools.permutations(broken.vertices, 3)
        if broken.d(u, w) > broken.d(u, v) + broken.d(v, w)
    }
    assert violated and all({u, w} == {2, 5} for u, v, w in violated)
    assert find_triangle_violation(broken) in violated


@pytest.mark.parametrize(
    "mutate, message",
    [
        (lambda d: d.pop("root"), "missing root"),
        (lambda d: d["vertices"][1].update(penalty="-1"), "negative penalty"),
        (lambda d: d["vertices"][1].update(penalty="abc"), "cannot parse"),
    ],
)
def test_load_errors(tmp_path, mutate, message):
    data = instance_to_dict(uniform_metric(3, {1: 1, 2: 1}))
    mutate(data)
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(data))
    with pytest.raises(InstanceError, match=message):
        load_instance(p)


def test_asymmetric_full_matrix(tmp_path):
    data = {
        "name": "asym",
        "root": 0,
        "vertices": [{"id": i, "penalty": "0"} for i in range(3)],
        "dist": [["0", "1", "2"], ["1", "0", "1"], ["1", "1", "0"]],
    }
    p = tmp_path / "a.json"
    p.write_text(json.dumps(data))
    with pytest.raises(InstanceError, match="asymmetric"):
        load_instance(p)


def test_unparseable_json(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text("{not json")
    with pytest.raises(InstanceError, match="cannot parse JSON"):
        load_instance(p)


def test_missing_file(tmp_path):
    with pytest.raises(InstanceError, match="no such file"):
        load_instance(tmp_path / "nope.json")


def test_json_round_trip_is_bit_exact(tmp_path):
    inst = generate_instance(7, "euclidean", Q(3, 2), seed=4)
    p = tmp_path / "i.json"
    save_instance(inst, p)
    back = load_instance(p)
    assert back == inst
    assert dumps_instance(back) == p.read_text()
    g = generate_instance(6, "random-metric", 1, seed=2)
    assert instance_from_dict(json.loads(dumps_instance(g))) == g


def test_tsplib_coordinates_and_explicit():
    inst = parse_tsplib_pc(TSPLIB_EUC)
    assert inst.name == "tiny"
    assert inst.d(0, 2) == 5
    assert inst.penalty[1] == 7 and inst.penalty[2] == Q(1, 2)
    inst2 = parse_tsplib_pc(TSPLIB_EXPLICIT)
    assert inst2.d(0, 1) == 2 and inst2.d(0, 2) == 3 and inst2.d(1, 2) == 1


def test_tsplib_bad_dimension():
    with pytest.raises(InstanceError, match="DIMENSION"):
        parse_tsplib_pc("NAME: x\n")


# metric closure


def test_closure_path_graph():
    g = Instance("p", (0, 1, 2), 0, {(0, 1): Q(1), (1, 2): Q(1)}, {v: Q(0) for v in range(3)}, GRAPH)
    m = metric_closure(g)
    assert m.d(0, 2) == 2
    assert m.paths[(0, 2)] == (0, 1, 2)


def test_closure_shortens_long_edge():
    g = Instance("t", (0, 1, 2), 0, {(0, 1): Q(1), (1, 2): Q(1), (0, 2): Q(5)}, {v: Q(0) for v in range(3)}, GRAPH)
    assert metric_closure(g).d(0, 2) == 2


def test_closure_fixed_point_on_metric():
    inst = generate_instance(6, "euclidean", 1, seed=1)
    assert metric_closure(inst).dist == inst.dist


def test_closure_disconnected():
    g = Instance("d", (0, 1, 2), 0, {(0, 1): Q(1)}, {v: Q(0) for v in range(3)}, GRAPH)
    with pytest.raises(InstanceError, match="disconnected"):
        metric_closure(g)


# generation


def test_generate_single_vertex():
    inst = generate_instance(1, "euclidean", 1, seed=0)
    assert inst.vertices == (0,) and inst.dist == {}


def test_generate_deterministic():
    for fam in ("euclidean", "random-metric"):
        assert generate_instance(9, fam, 2, seed=17) == generate_instance(9, fam, 2, seed=17)


def test_generate_n8_seed42_triangles():
    inst = generate_instance(8, "euclidean", 1, seed=42)
    assert len(list(itertools.combinations(inst.vertices, 3))) == 56
    assert _triangles_ok(inst)


def test_generate_rejects_zero():
    with pytest.raises(InstanceError):
        generate_instance(0, "euclidean", 1, seed=0)


def test_snapped_coordinates():
    inst = from_coordinates([(0, 0), (0.1234567, 0.3)], [0, 1])
    assert inst.d(0, 1).denominator <= 10**6


@given(st.integers(2, 9), st.sampled_from(["euclidean", "random-metric"]), st.integers(0, 10**6))
def test_generated_instances_are_metric(n, family, seed):
    inst = generate_instance(n, family, 1, seed)
    assert _triangles_ok(inst)
    assert all(inst.penalty[v] >= 0 for v in inst.vertices) and inst.penalty[inst.root] == 0


# root split


def _hamiltonian(inst):
    return [inst.root] + inst.non_root() + [inst.root]


def test_root_split_full_degree():
    inst = generate_instance(5, "euclidean", 1, seed=0)
    sol = tour_mixture_point(inst, [_hamiltonian(inst)], [1])
    aux, asol, back = root_split_transform(inst, sol)
    assert asol.x[edge(back.root, back.copy)] == 1
    assert aux.d(back.root, back.copy) == 0 and aux.penalty[back.copy] == 0
    assert asol.y[back.copy] == 1


def test_root_split_half_degree():
    inst = generate_instance(5, "euclidean", 1, seed=0)
    sol = tour_mixture_point(inst, [_hamiltonian(inst), [inst.root]], [Q(1, 2), Q(1, 2)])
    assert sum(w for e, w in sol.x.items() if inst.root in e) == 1
    _, asol, back = root_split_transform(inst, sol)
    assert asol.x[edge(back.root, back.copy)] == Q(3, 2)


def test_root_split_objective_preserved():
    inst = generate_instance(5, "random-metric", 2, seed=3)
    sol = random_tour_mixture(inst, 3, np.random.default_rng(5))
    assert any(0 < y < 1 for y in sol.y.values())
    aux, asol, _ = root_split_transform(inst, sol)
    assert lp_objective(aux, asol.x, asol.y) == lp_objective(inst, sol.x, sol.y)


def test_root_split_rejects_infeasible():
    inst = uniform_metric(3, {1: 1, 2: 1})
    bad = LpSolution({}, {0: Q(1), 1: Q(1), 2: Q(0)}, Q(0))
    with pytest.raises(LpInfeasibleError):
        root_split_transform(inst, bad)


@given(st.integers(3, 7), st.integers(1, 4), st.integers(0, 10**6))
def test_root_split_properties(n, k, seed):
    inst = generate_instance(n, "euclidean", 1, seed)
    rng = np.random.default_rng(seed)
    sol = random_tour_mixture(inst, k, rng)
    aux, asol, back = root_split_transform(inst, sol)
    assert lp_objective(aux, asol.x, asol.y) == lp_objective(inst, sol.x, sol.y)
    assert asol.x[edge(back.root, back.copy)] >= 1
    # any aux cycle maps back to a cycle of no greater objective
    order = [int(v) for v in rng.permutation(aux.non_root())]
    cyc = [aux.root] + order + [aux.root]
    assert pctsp_value(inst, unsplit_cycle(cyc, back)) <= pctsp_value(aux, cyc)
