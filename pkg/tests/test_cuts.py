import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from prizeloop.cuts import CapacityGraph, CutError, directed_max_flow, held_karp_violation, min_cut
from prizeloop.oracle import held_karp_member_bruteforce, min_cut_bruteforce
from prizeloop.rational import Q


def random_capacities(n, rng, density=0.6, top=6):
    caps = {}
    for a, b in itertools.combinations(range(n), 2):
        if rng.random() < density:
            caps[(a, b)] = Q(int(rng.integers(1, top + 1)), int(rng.integers(1, 4)))
    return caps


def two_factor_mixture(n, rng, k):
    """Weighted multigraph listing of k random 2-factors (unions of cycles)."""
    out = []
    for _ in range(k):
        perm = [int(v) for v in rng.permutation(n)]
        # split into one or two cycles of length >= 3
        cut = int(rng.integers(3, n - 2)) if n >= 6 and rng.random() < 0.4 else n
        for block in (perm[:cut], perm[cut:]):
            if len(block) < 3:
                continue
            for a, b in zip(block, block[1:] + block[:1]):
                out.append((a, b, Q(1, k)))
    return out


def test_single_edge():
    g = CapacityGraph([0, 1], {(0, 1): Q(3)})
    assert min_cut(g, 0, 1) == (3, frozenset({0}))


def test_triangle():
    g = CapacityGraph([0, 1, 2], {(0, 1): Q(1), (1, 2): Q(1), (0, 2): Q(1)})
    value, side = min_cut(g, 0, 2)
    assert value == 2 and 0 in side and 2 not in side


def test_random_8_vertex_seed_7_matches_enumeration():
    rng = np.random.default_rng(7)
    caps = random_capacities(8, rng)
    g = CapacityGraph(range(8), caps)
    for s, t in itertools.combinations(range(8), 2):
        value, side = min_cut(g, s, t)
        assert value == min_cut_bruteforce(caps, range(8), s, t)
        assert g.cut_value(side) == value


def test_same_terminal_rejected():
    g = CapacityGraph([0, 1], {(0, 1): Q(1)})
    with pytest.raises(CutError):
        min_cut(g, 0, 0)


def test_negative_capacity_rejected():
    with pytest.raises(CutError):
        CapacityGraph([0, 1], {(0, 1): Q(-1)})


def test_directed_flow_side():
    arcs = {("s", "a"): Q(2), ("a", "t"): Q(1), ("s", "t"): Q(1)}
    value, side = directed_max_flow(arcs, "s", "t")
    assert value == 2 and side == frozenset({"s", "a"})


@given(st.integers(2, 7), st.integers(0, 10**6))
def test_flow_equals_cut(n, seed):
    rng = np.random.default_rng(seed)
    caps = random_capacities(n, rng)
    g = CapacityGraph(range(n), caps)
    value, side = min_cut(g, 0, n - 1)
    assert g.cut_value(side) == value
    assert value == min_cut_bruteforce(caps, range(n), 0, n - 1)


# Held-Karp membership


def test_unit_triangle_in_polytope():
    z = {(0, 1): Q(1), (1, 2): Q(1), (0, 2): Q(1)}
    assert held_karp_violation(z, [0, 1, 2], 0) is None


def test_four_cycle_with_light_edge():
    z = {(0, 1): Q(1), (1, 2): Q(1), (2, 3): Q(1), (0, 3): Q(1, 2)}
    viol = held_karp_violation(z, range(4), 0)
    assert viol.kind == "degree"
    assert viol.vertices <= {0, 3} and viol.value == Q(3, 2)


def test_two_triangles_cut_violation():
    z = [(0, 1, Q(1)), (1, 2, Q(1)), (0, 2, Q(1)), (3, 4, Q(1)), (4, 5, Q(1)), (3, 5, Q(1))]
    viol = held_karp_violation(z, range(6), 0)
    assert viol.kind == "cut" and viol.vertices == frozenset({3, 4, 5}) and viol.value == 0


def test_weighted_6_vertex_seed_11_matches_enumeration():
    rng = np.random.default_rng(11)
    for _ in range(40):
        z = two_factor_mixture(6, rng, int(rng.integers(1, 4)))
        if rng.random() < 0.3:
            a, b = (int(v) for v in rng.choice(6, 2, replace=False))
            z.append((a, b, Q(1, 2)))
        assert (held_karp_violation(z, range(6), 0) is None) == held_karp_member_bruteforce(z, range(6), 0)


def test_empty_vertex_set():
    with pytest.raises(CutError):
        held_karp_violation({}, [], 0)


@given(st.integers(4, 9), st.integers(1, 3), st.integers(0, 10**6))
def test_held_karp_agrees_with_enumeration(n, k, seed):
    rng = np.random.default_rng(seed)
    z = two_factor_mixture(n, rng, k)
    root = int(rng.integers(n))
    assert (held_karp_violation(z, range(n), root) is None) == held_karp_member_bruteforce(z, range(n), root)
