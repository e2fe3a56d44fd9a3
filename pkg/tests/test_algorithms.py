import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from builders import covering_mixture, uniform_metric
from prizeloop.algorithms import (
    B_MIN,
    BEST_FIXED_GAMMA,
    CLASSIC_GAMMA,
    DEFAULT_B,
    alg1_bound,
    classic_bound,
    classic_factor,
    fixed_threshold_factor,
    rationalize_gamma,
    run_alg1,
    run_alg1_sampled,
    run_threshold_classic,
    run_tree2_pcst,
    run_tree2_pctsp,
    sample_threshold,
    select_threshold_deterministic,
    theta,
    threshold_candidates,
    threshold_cdf,
    tree_bound,
    tree_objective,
    verify_constants,
)
from prizeloop.instance import GRAPH, Instance, generate_graph_instance, generate_instance
from prizeloop.lp import PCST, solve_relaxation
from prizeloop.oracle import exact_pcst, exact_pctsp, pctsp_value
from prizeloop.rational import Q
from prizeloop.rounding import RANDOMIZED


def big_penalty(inst):
    big = len(inst.vertices) * max(inst.dist.values()) + 1
    pen = {v: (Q(0) if v == inst.root else big) for v in inst.vertices}
    return Instance(inst.name, inst.vertices, inst.root, inst.dist, pen).validate()


# walk-based threshold rounding


def test_forced_tour_within_three_halves_of_lp():
    inst = big_penalty(generate_instance(8, "euclidean", 1, seed=4))
    sol = solve_relaxation(inst)
    assert all(sol.y[v] == 1 for v in inst.vertices)
    res = run_alg1(inst, sol, 1)
    assert sorted(res.cycle[:-1]) == list(inst.vertices)
    assert res.value <= Q(3, 2) * sol.objective


def test_zero_penalties_give_root_only():
    inst = generate_instance(6, "euclidean", 0, seed=2)
    sol = solve_relaxation(inst)
    res = select_threshold_deterministic(inst, sol)
    assert res.cycle == [0] and res.value == 0
    assert threshold_candidates(sol) == [1]


def test_nine_vertex_sweep():
    inst = generate_instance(9, "euclidean", 1, seed=9)
    sol = solve_relaxation(inst)
    res = select_threshold_deterministic(inst, sol)
    # frozen from the exact LP and the exact tour objective
    assert res.value == Q(3074203, 1000000)
    assert res.ratio <= 1.774
    assert sol.objective <= exact_pctsp(inst).value <= res.value
    assert res.algorithm == "alg1-sweep" and len(res.trials) == len(threshold_candidates(sol))


def test_sweep_refuses_uncertified_solution():
    inst = generate_instance(6, "euclidean", 1, seed=1)
    sol = covering_mixture(inst, np.random.default_rng(1))
    with pytest.raises(ValueError, match="certified"):
        select_threshold_deterministic(inst, sol)


@pytest.mark.parametrize("seed", [1, 5, 12])
def test_fractional_point_at_each_threshold(seed):
    inst = generate_instance(8, "euclidean", 1, seed=seed)
    sol = covering_mixture(inst, np.random.default_rng(seed), k=4)
    assert any(0 < y < 1 for y in sol.y.values())
    for g in threshold_candidates(sol):
        trace = []
        res = run_alg1(inst, sol, g, trace=trace)
        assert res.value == pctsp_value(inst, res.cycle)
        assert float(res.value) <= alg1_bound(inst, sol, g) * (1 + 1e-12)
        for v in inst.vertices:
            if sol.y[v] >= g:
                assert v in res.cycle
        (t,) = trace
        assert set(t.H.odd_vertices()) <= t.decomposition.U
        assert not t.H.union(t.J).odd_vertices()
        anchor_cost = sum(t.aux.d(a, b) * w for a, b, w in t.decomposition.anchor_point())
        assert 2 * t.J.cost(t.aux) <= anchor_cost


def test_randomized_run_is_seeded():
    inst = generate_instance(7, "random-metric", 1, seed=3)
    sol = covering_mixture(inst, np.random.default_rng(3))
    g = min(threshold_candidates(sol))
    a = run_alg1(inst, sol, g, RANDOMIZED, seed=11, repeats=4)
    b = run_alg1(inst, sol, g, RANDOMIZED, seed=11, repeats=4)
    assert a.cycle == b.cycle and a.value == b.value


def test_sampled_thresholds_lie_in_range():
    inst = generate_instance(7, "euclidean", 1, seed=6)
    sol = covering_mixture(inst, np.random.default_rng(6))
    res = run_alg1_sampled(inst, sol, seed=5, repeats=6)
    assert len(res.trials) == 6
    assert all(DEFAULT_B - 1e-6 <= g <= 1 for g, _ in res.trials)
    assert res.value == min(v for _, v in res.trials)


def test_gamma_outside_range():
    inst = generate_instance(5, "euclidean", 1, seed=0)
    sol = solve_relaxation(inst)
    with pytest.raises(ValueError):
        run_alg1(inst, sol, 0)
    with pytest.raises(ValueError):
        run_alg1(inst, sol, Q(3, 2))


def test_gamma_rationalization():
    assert rationalize_gamma(Q(2, 3)) == Q(2, 3)
    g = rationalize_gamma(BEST_FIXED_GAMMA)
    assert g <= BEST_FIXED_GAMMA < g + Q(1, 10**6)
    assert g.denominator <= 10**6


def test_batch_of_ten_vertex_instances():
    for seed in range(50):
        inst = generate_instance(10, ("euclidean", "random-metric")[seed % 2], (Q(3, 10), 1, 3)[seed % 3], seed)
        sol = solve_relaxation(inst)
        res = select_threshold_deterministic(inst, sol)
        assert sol.objective <= res.value
        assert res.ratio <= 1.774


@settings(max_examples=15)
@given(st.integers(3, 8), st.integers(1, 4), st.integers(0, 10**6))
def test_alg1_within_its_bound(n, k, seed):
    inst = generate_instance(n, "euclidean", 1, seed)
    sol = covering_mixture(inst, np.random.default_rng(seed), k)
    for g in threshold_candidates(sol):
        res = run_alg1(inst, sol, g)
        assert float(res.value) <= alg1_bound(inst, sol, g) * (1 + 1e-12)


# classical baseline


@pytest.mark.parametrize("seed", [0, 3, 7])
def test_classic_threshold(seed):
    inst = generate_instance(9, "euclidean", 1, seed=seed)
    sol = covering_mixture(inst, np.random.default_rng(seed), k=4)
    res = run_threshold_classic(inst, sol)
    assert res.gamma_used == 0.6
    for v in inst.vertices:
        if sol.y[v] >= CLASSIC_GAMMA:
            assert v in res.cycle
    assert res.value <= classic_bound(inst, sol, CLASSIC_GAMMA)
    assert res.value == pctsp_value(inst, res.cycle)


# threshold distribution and constants


def test_threshold_cdf_endpoints():
    assert threshold_cdf(DEFAULT_B) == 0.0
    assert threshold_cdf(1.0) == 1.0
    ts = np.linspace(DEFAULT_B, 1, 50)
    vals = [threshold_cdf(float(t)) for t in ts]
    assert all(a <= b for a, b in zip(vals, vals[1:]))


def test_threshold_cdf_against_mpmath():
    b = DEFAULT_B
    z = mpmath.quad(lambda g: mpmath.exp(-b / g), [b, 1])
    for t in (0.75, 0.85, 0.95):
        want = mpmath.quad(lambda g: mpmath.exp(-b / g), [b, t]) / z
        assert threshold_cdf(t) == pytest.approx(float(want), abs=1e-12)


def test_threshold_samples(rng):
    b = DEFAULT_B
    samples = np.array([sample_threshold(b, rng) for _ in range(20_000)])
    assert samples.min() >= b and samples.max() <= 1
    z = mpmath.quad(lambda g: mpmath.exp(-b / g), [b, 1])
    mean = float(mpmath.quad(lambda g: g * mpmath.exp(-b / g), [b, 1]) / z)
    se = samples.std(ddof=1) / math.sqrt(len(samples))
    assert abs(samples.mean() - mean) <= 3 * se
    for t in (0.75, 0.85, 0.95):
        assert abs((samples <= t).mean() - threshold_cdf(t)) <= 0.01


def test_threshold_needs_rng_and_valid_b():
    with pytest.raises(ValueError):
        sample_threshold(DEFAULT_B)
    with pytest.raises(ValueError):
        threshold_cdf(0.8, 0.5)
    assert threshold_cdf(0.9, B_MIN) > 0


def test_constants_default():
    c = verify_constants()
    # the stated guarantee, and the remark that this analysis cannot go below 1.773
    assert 1.773 < c.alpha <= c.alpha_upper < 1.774
    assert c.quad_error <= 1e-9
    assert 1.774 - c.alpha_upper >= 1e-6
    z = mpmath.quad(lambda g: mpmath.exp(-c.b / g), [c.b, 1])
    tour = mpmath.quad(lambda g: mpmath.exp(-c.b / g) / g, [c.b, 1])
    assert c.normaliser == pytest.approx(float(z), abs=1e-12)
    assert c.tour_integral == pytest.approx(float(tour), abs=1e-12)
    # a finer independent scan never beats the certified upper value
    ys = np.linspace(c.b, 1, 20_001)
    assert theta(ys, c.b).max() <= c.theta_upper


def test_constants_boundary_b():
    c = verify_constants(B_MIN, grid=10**5)
    assert c.alpha > 0 and c.quad_error <= 1e-9
    with pytest.raises(ValueError):
        verify_constants(0.5)


def test_fixed_threshold_factors():
    assert BEST_FIXED_GAMMA == pytest.approx(0.761, abs=5e-4)
    f = fixed_threshold_factor(BEST_FIXED_GAMMA)
    assert f == pytest.approx(1.5 + math.exp(-0.75), abs=1e-12)
    assert f < 1.973
    assert classic_factor(0.6) == pytest.approx(2.5, abs=1e-12)
    assert fixed_threshold_factor(1.0) == math.inf


# tree-partition 2-approximations


def test_tree2_zero_penalties():
    inst = generate_instance(6, "euclidean", 0, seed=3)
    res = run_tree2_pctsp(inst)
    assert res.cycle == [0] and res.value == 0


def test_tree2_unit_triangle():
    inst = uniform_metric(3, {1: 100, 2: 100})
    res = run_tree2_pctsp(inst)
    assert res.value == 3


def test_tree2_eight_vertices():
    inst = generate_instance(8, "euclidean", 1, seed=8)
    res = run_tree2_pctsp(inst)
    # frozen: exact objective, 2cx + pi(1-y) from the exact LP, and the oracle
    assert res.value == Q(121231, 50000)
    assert res.bound == Q(121231, 25000)
    assert exact_pctsp(inst).value == Q(121231, 50000)


@settings(max_examples=15)
@given(st.integers(2, 9), st.sampled_from([Q(3, 10), Q(1), Q(3)]), st.integers(0, 10**5))
def test_tree2_within_bound(n, scale, seed):
    inst = generate_instance(n, "random-metric", scale, seed)
    sol = solve_relaxation(inst)
    res = run_tree2_pctsp(inst, sol)
    assert res.value <= tree_bound(inst, sol)
    assert res.value == pctsp_value(inst, res.cycle)


def test_pcst2_zero_penalties():
    inst = generate_graph_instance(6, penalty_scale=0, seed=1)
    res = run_tree2_pcst(inst)
    assert res.value == 0 and res.tree == [] and res.cycle is None


def test_pcst2_star_with_heavy_penalties():
    n = 5
    dist = {(0, v): Q(v) for v in range(1, n)}
    inst = Instance("star", tuple(range(n)), 0, dist, {v: Q(0) if v == 0 else Q(100) for v in range(n)}, GRAPH).validate()
    res = run_tree2_pcst(inst)
    assert sorted(res.tree) == sorted(dist)
    assert res.value == 1 + 2 + 3 + 4


def test_pcst2_eight_vertices_seed_13():
    inst = generate_graph_instance(8, penalty_scale=20, seed=13)
    sol = solve_relaxation(inst, PCST)
    res = run_tree2_pcst(inst, sol)
    # frozen from the exact LP, the exact tree objective and the subset oracle
    assert sol.objective == Q(39, 2)
    assert res.value == 29 and res.bound == 39
    assert res.value == tree_objective(inst, res.tree)
    assert exact_pcst(inst).value == Q(25479237, 1000000)


def test_pcst2_rejects_pctsp_solution():
    inst = generate_graph_instance(5, penalty_scale=5, seed=2)
    from prizeloop.instance import metric_closure

    sol = solve_relaxation(metric_closure(inst))
    with pytest.raises(ValueError):
        run_tree2_pcst(inst, sol)


@settings(max_examples=15)
@given(st.integers(2, 10), st.integers(0, 10**5))
def test_pcst2_within_bound(n, seed):
    inst = generate_graph_instance(n, 0.3, 20, seed)
    sol = solve_relaxation(inst, PCST)
    res = run_tree2_pcst(inst, sol)
    assert res.value <= tree_bound(inst, sol)
    assert res.value == tree_objective(inst, res.tree)
