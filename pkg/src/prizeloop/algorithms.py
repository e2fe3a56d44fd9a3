"""Top-level drivers: walk-based threshold rounding, the classical threshold
baseline, the two tree-partition 2-approximations, threshold sampling and the
analysis constants."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import integrate, optimize, special

from prizeloop.cuts import CapacityGraph
from prizeloop.decomposition import decompose, fractional_tree_partition
from prizeloop.instance import GRAPH, Instance, InstanceError, metric_closure, root_split_transform, unsplit_cycle
from prizeloop.lp import PCST, PCTSP, LpSolution, check_feasible, lp_objective, solve_relaxation
from prizeloop.rational import ONE, TWO, ZERO, Q, edge, q_str, to_q
from prizeloop.rounding import DETERMINISTIC, RANDOMIZED, build_walk_family, select_walks, walk_bound, within_bound
from prizeloop.splitting import boost_solution, reduce_degrees
from prizeloop.tour import Multigraph, eulerian_shortcut, min_perfect_matching, minimum_odd_join, objective, validate_cycle

log = logging.getLogger(__name__)

DEFAULT_B = 0.6945
B_MIN = 1 - math.exp(-0.75)
GAMMA_DENOMINATOR = 10**6
DEFAULT_REPEATS = 32
CLASSIC_GAMMA = Q(3, 5)
BEST_FIXED_GAMMA = 1 / (1 + (2 / 3) * math.exp(-0.75))


class InvariantBreach(RuntimeError):
    """An internal guarantee failed; indicates a bug, not bad input."""


@dataclass
class TourResult:
    algorithm: str
    instance: str
    cycle: list[int] | None
    tour_cost: Q
    penalty_cost: Q
    lp_value: Q
    mode: str = DETERMINISTIC
    gamma_used: float | None = None
    seed: int | None = None
    tree: list[tuple[int, int]] | None = None
    bound: Q | float | None = None
    trials: list = field(default_factory=list)

    @property
    def value(self) -> Q:
        return self.tour_cost + self.penalty_cost

    @property
    def ratio(self) -> float:
        if self.lp_value > 0:
            return float(self.value / self.lp_value)
        return 1.0 if self.value == 0 else math.inf

    def to_dict(self) -> dict:
        out = {
            "instance": self.instance,
            "algorithm": self.algorithm,
            "mode": self.mode,
            "gamma": self.gamma_used,
            "seed": self.seed,
            "tour": self.cycle,
            "tour_cost": q_str(self.tour_cost),
            "penalty_cost": q_str(self.penalty_cost),
            "lp_value": q_str(self.lp_value),
            "ratio": self.ratio,
        }
        if self.tree is not None:
            out["tree"] = [list(e) for e in self.tree]
        return out


def _cycle_result(algorithm, inst, cycle, lp_value, **kw) -> TourResult:
    validate_cycle(inst, cycle)
    total = objective(inst, cycle)
    pen = sum((p for v, p in inst.penalty.items() if v not in set(cycle) and v != inst.root), ZERO)
    return TourResult(algorithm, inst.name, cycle, total - pen, pen, lp_value, **kw)


def rationalize_gamma(gamma) -> Q:
    """Exact rationals with denominator at most 10**6 are kept; anything else
    is rounded down to that grid, so no vertex with y >= gamma drops out."""
    if isinstance(gamma, (int, Fraction)) or isinstance(gamma, type(ZERO)):
        g = to_q(gamma)
        if g.denominator <= GAMMA_DENOMINATOR:
            return g
        gamma = float(g)
    g = Q(math.floor(float(gamma) * GAMMA_DENOMINATOR), GAMMA_DENOMINATOR)
    if g <= 0:
        raise ValueError("gamma must be positive")
    return g


def _check_gamma(gamma: Q) -> None:
    if not 0 < gamma <= 1:
        raise ValueError(f"gamma {gamma} outside (0, 1]")


def alg1_bound(inst: Instance, sol: LpSolution, gamma) -> float:
    """3/(2 gamma) c.x + sum over y_v < gamma of pi_v exp(-3 y_v / (4 gamma))."""
    g = float(gamma)
    total = 1.5 / g * float(sol.edge_cost(inst))
    for v in inst.non_root():
        y = sol.y.get(v, ZERO)
        if y < gamma:
            total += float(inst.penalty[v]) * math.exp(-0.75 * float(y) / g)
    return total


# ---------------------------------------------------------------------------
# walk-based threshold rounding


@dataclass
class Alg1Trace:
    boosted: LpSolution
    aux: Instance
    decomposition: object
    family: object
    H: Multigraph
    J: Multigraph
    aux_cycle: list[int]


def _alg1_once(inst, sol, gamma: Q, mode, rng, trace_out=None) -> list[int]:
    boosted = boost_solution(inst, sol, 1 / gamma)
    aux, asol, back = root_split_transform(inst, boosted)
    U = frozenset(v for v in aux.vertices if asol.y.get(v, ZERO) == 1)
    dec = decompose(aux, asol, U, (back.root, back.copy))
    fam = build_walk_family(dec)
    sel = select_walks(fam, aux, mode, rng)
    H = sel.H
    if mode == DETERMINISTIC:
        bound = walk_bound(fam, aux, dec)
        if not within_bound(sel.cost_plus_penalty(aux), bound):
            raise InvariantBreach("deterministic walk selection exceeds the walk bound")
    odd = set(H.odd_vertices())
    if not odd <= U:
        raise InvariantBreach(f"H has odd vertices outside the anchor set: {sorted(odd - U)}")
    J = minimum_odd_join(H, aux)
    anchor_cost = sum((aux.d(a, b) * w for a, b, w in dec.anchor_point()), ZERO)
    if 2 * J.cost(aux) > anchor_cost:
        raise InvariantBreach("odd join costs more than half the anchor point")
    HJ = H.union(J)
    if HJ.odd_vertices():
        raise InvariantBreach("H plus J is not Eulerian")
    aux_cycle = eulerian_shortcut(HJ, aux.root)
    cycle = unsplit_cycle(aux_cycle, back)
    validate_cycle(inst, cycle)
    missing = [v for v in inst.vertices if sol.y.get(v, ZERO) >= gamma and v not in cycle]
    if missing:
        raise InvariantBreach(f"tour misses vertices {missing} above the threshold")
    if trace_out is not None:
        trace_out.append(Alg1Trace(boosted, aux, dec, fam, H, J, aux_cycle))
    return cycle


def run_alg1(
    inst: Instance,
    sol: LpSolution,
    gamma,
    mode: str = DETERMINISTIC,
    seed: int | None = None,
    repeats: int = DEFAULT_REPEATS,
    trace: list | None = None,
) -> TourResult:
    """Boost by 1/gamma, decompose into anchored trees, select walks, fix
    parity with a matching and shortcut. Randomized mode keeps the best of
    ``repeats`` samples."""
    check_feasible(inst, sol)
    g = rationalize_gamma(gamma)
    _check_gamma(g)
    if mode == DETERMINISTIC:
        cycle = _alg1_once(inst, sol, g, mode, None, trace)
        res = _cycle_result("alg1", inst, cycle, sol.objective, mode=mode, gamma_used=float(g), seed=seed)
        res.bound = alg1_bound(inst, sol, g)
        if float(res.value) > res.bound * (1 + 1e-9):
            raise InvariantBreach(f"alg1 value {float(res.value)} exceeds its bound {res.bound}")
        return res
    if mode != RANDOMIZED:
        raise ValueError(f"unknown mode {mode!r}")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(1, repeats)):
        cycle = _alg1_once(inst, sol, g, mode, rng, trace)
        val = objective(inst, cycle)
        if best is None or val < best[0]:
            best = (val, cycle)
    res = _cycle_result("alg1", inst, best[1], sol.objective, mode=mode, gamma_used=float(g), seed=seed)
    res.bound = alg1_bound(inst, sol, g)
    return res


def threshold_candidates(sol: LpSolution) -> list[Q]:
    return sorted({v for v in sol.y.values() if v > 0}, reverse=True)


def select_threshold_deterministic(
    inst: Instance,
    sol: LpSolution,
    mode: str = DETERMINISTIC,
    seed: int | None = None,
    repeats: int = DEFAULT_REPEATS,
) -> TourResult:
    """Run the walk algorithm at every distinct positive y value; keep the best."""
    if not sol.certified_optimal:
        raise ValueError("the threshold sweep needs a certified optimal LP solution")
    best = None
    trials = []
    for g in threshold_candidates(sol):
        res = run_alg1(inst, sol, g, mode, seed, repeats)
        trials.append((float(g), res.value))
        if best is None or res.value < best.value:
            best = res
    best.trials = trials
    best.algorithm = "alg1-sweep"
    return best


def run_alg1_sampled(
    inst: Instance,
    sol: LpSolution,
    b: float = DEFAULT_B,
    mode: str = RANDOMIZED,
    seed: int | None = None,
    repeats: int = DEFAULT_REPEATS,
) -> TourResult:
    """Draw gamma from the density proportional to exp(-b/gamma) on [b, 1]
    for each repeat and keep the best tour."""
    rng = np.random.default_rng(seed)
    best = None
    trials = []
    for _ in range(max(1, repeats)):
        g = sample_threshold(b, rng)
        sub_seed = int(rng.integers(2**31))
        res = run_alg1(inst, sol, g, mode, sub_seed, 1)
        trials.append((res.gamma_used, res.value))
        if best is None or res.value < best.value:
            best = res
    best.trials = trials
    best.seed = seed
    best.algorithm = "alg1-sampled"
    return best


# ---------------------------------------------------------------------------
# classical threshold rounding


def minimum_spanning_tree(inst: Instance, vertices) -> list[tuple[int, int]]:
    """Prim on the complete (or given) graph over ``vertices``, exact costs."""
    vs = sorted(set(vertices))
    if len(vs) <= 1:
        return []
    inside = {vs[0]}
    best: dict[int, tuple[Q, int]] = {}
    for v in vs[1:]:
        if inst.has_edge(vs[0], v):
            best[v] = (inst.d(vs[0], v), vs[0])
    out = []
    while len(inside) < len(vs):
        if not best:
            raise InstanceError("vertex set does not induce a connected graph")
        v = min(best, key=lambda u: (best[u][0], u))
        _, p = best.pop(v)
        inside.add(v)
        out.append(edge(p, v))
        for u in vs:
            if u in inside or not inst.has_edge(v, u):
                continue
            c = inst.d(v, u)
            if u not in best or c < best[u][0]:
                best[u] = (c, v)
    return sorted(out)


def christofides(inst: Instance, vertices) -> list[int]:
    vs = sorted(set(vertices) | {inst.root})
    T = Multigraph(vs, minimum_spanning_tree(inst, vs))
    M = Multigraph(T.odd_vertices(), min_perfect_matching(inst, T.odd_vertices()))
    return eulerian_shortcut(T.union(M), inst.root)


def run_threshold_classic(inst: Instance, sol: LpSolution, gamma=CLASSIC_GAMMA) -> TourResult:
    """Christofides on {v : y_v >= gamma}."""
    g = rationalize_gamma(gamma)
    _check_gamma(g)
    keep = [v for v in inst.vertices if sol.y.get(v, ZERO) >= g]
    cycle = christofides(inst, keep)
    res = _cycle_result("threshold-classic", inst, cycle, sol.objective, gamma_used=float(g))
    res.bound = classic_bound(inst, sol, g)
    return res


def classic_bound(inst: Instance, sol: LpSolution, gamma: Q) -> Q:
    """3/(2 gamma) c.x + pi of everything below the threshold."""
    pen = sum((inst.penalty[v] for v in inst.non_root() if sol.y.get(v, ZERO) < gamma), ZERO)
    return Q(3, 2) / gamma * sol.edge_cost(inst) + pen


# ---------------------------------------------------------------------------
# tree-partition 2-approximations


def tree_bound(inst: Instance, sol: LpSolution) -> Q:
    return 2 * sol.edge_cost(inst) + sol.penalty_part(inst)


def run_tree2_pctsp(inst: Instance, sol: LpSolution | None = None) -> TourResult:
    """Double and shortcut every tree of a fractional root-tree partition of
    the LP optimum; return the cheapest cycle."""
    if sol is None:
        sol = solve_relaxation(inst, PCTSP)
    trees = fractional_tree_partition(inst, sol)
    best = None
    for t in trees:
        M = Multigraph({inst.root})
        for a, b in t.edges:
            M.add(a, b, 2)
        cycle = eulerian_shortcut(M, inst.root)
        val = objective(inst, cycle)
        if best is None or val < best[0]:
            best = (val, cycle)
    res = _cycle_result("tree2", inst, best[1], sol.objective)
    res.bound = tree_bound(inst, sol)
    if res.value > res.bound:
        raise InvariantBreach(f"tree2 value {res.value} exceeds 2cx + pi(1-y) = {res.bound}")
    return res


def pcst_to_pctsp_point(closure: Instance, sol: LpSolution) -> LpSolution:
    """Double a PCST point and split off down to degree 2y on the metric
    closure, giving a PCTSP point of edge cost at most twice the original."""
    r = closure.root
    g = CapacityGraph(closure.vertices, {e: 2 * w for e, w in sol.x.items() if w})
    y = {v: sol.y.get(v, ZERO) for v in closure.vertices}
    y[r] = ONE
    targets = {v: 2 * y[v] for v in closure.vertices}
    targets[r] = min(TWO, g.degree(r))
    cover = {v: 2 * y[v] for v in closure.vertices if v != r}
    g, _ = reduce_degrees(g, r, targets, cover, allow_degenerate=True)
    x = g.weights()
    return LpSolution(x, y, lp_objective(closure, x, y), PCTSP, False)


def run_tree2_pcst(inst: Instance, sol: LpSolution | None = None) -> TourResult:
    """PCST via tree partition on the metric closure, mapped back through
    shortest paths; the result is an MST on the best tree's vertex set."""
    if sol is None:
        sol = solve_relaxation(inst, PCST)
    if sol.relaxation != PCST:
        raise ValueError("run_tree2_pcst needs a PCST LP solution")
    closure = metric_closure(inst)
    point = pcst_to_pctsp_point(closure, sol)
    check_feasible(closure, point)
    trees = fractional_tree_partition(closure, point)
    best = None
    for t in trees:
        vs = {inst.root}
        for a, b in t.edges:
            vs.update(closure.paths[edge(a, b)])
        tedges = minimum_spanning_tree(inst, vs)
        cost = sum((inst.d(a, b) for a, b in tedges), ZERO)
        pen = sum((p for v, p in inst.penalty.items() if v not in vs), ZERO)
        if best is None or cost + pen < best[0] + best[1]:
            best = (cost, pen, tedges, vs)
    cost, pen, tedges, vs = best
    res = TourResult("pcst2", inst.name, None, cost, pen, sol.objective, tree=tedges)
    res.bound = tree_bound(inst, sol)
    if res.value > res.bound:
        raise InvariantBreach(f"pcst2 value {res.value} exceeds 2cx + pi(1-y) = {res.bound}")
    return res


def tree_objective(inst: Instance, tree_edges) -> Q:
    vs = {inst.root}
    cost = ZERO
    for a, b in tree_edges:
        vs.update((a, b))
        cost += inst.d(a, b)
    return cost + sum((p for v, p in inst.penalty.items() if v not in vs), ZERO)


# ---------------------------------------------------------------------------
# threshold distribution and constants


def _check_b(b: float) -> None:
    if not (B_MIN - 1e-15 <= b < 1):
        raise ValueError(f"b = {b} outside [1 - exp(-3/4), 1)")


def _antiderivative(t: float, b: float) -> float:
    """Primitive of exp(-b/t): t exp(-b/t) - b E1(b/t)."""
    return t * math.exp(-b / t) - b * float(special.exp1(b / t))


def threshold_cdf(t: float, b: float = DEFAULT_B) -> float:
    """CDF of the density proportional to exp(-b/gamma) on [b, 1]."""
    _check_b(b)
    if t <= b:
        return 0.0
    if t >= 1:
        return 1.0
    lo = _antiderivative(b, b)
    return (_antiderivative(t, b) - lo) / (_antiderivative(1.0, b) - lo)


def sample_threshold(b: float = DEFAULT_B, rng: np.random.Generator | None = None) -> float:
    """Inverse-CDF sample of gamma in [b, 1]."""
    _check_b(b)
    if rng is None:
        raise ValueError("sample_threshold needs an explicit rng")
    u = float(rng.random())
    if u <= 0.0:
        return b
    return optimize.brentq(lambda t: threshold_cdf(t, b) - u, b, 1.0, xtol=1e-12, rtol=1e-12)


def theta(y, b: float):
    return np.exp(-(3 * y + 4 * b) / (3 * y + 1)) + np.exp(-(3 * y + 4 * b) / (y + 3))


def theta_lipschitz(b: float) -> float:
    """Bound on |theta'| over [b, 1]."""
    return 3 * abs(1 - 4 * b) / (3 * b + 1) ** 2 + (9 - 4 * b) / (b + 3) ** 2


@dataclass
class Constants:
    b: float
    normaliser: float  # integral of exp(-b/g) over [b, 1]
    tour_integral: float  # integral of exp(-b/g)/g over [b, 1]
    theta_max: float
    theta_argmax: float
    theta_upper: float  # grid max plus the Lipschitz slack
    alpha: float
    alpha_upper: float
    quad_error: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def verify_constants(b: float = DEFAULT_B, grid: int = 10**6) -> Constants:
    """alpha = max(3 * tour_integral, max theta) / (2 * normaliser)."""
    _check_b(b)
    I, e1 = integrate.quad(lambda g: math.exp(-b / g), b, 1.0, epsabs=1e-12, epsrel=1e-12)
    T, e2 = integrate.quad(lambda g: math.exp(-b / g) / g, b, 1.0, epsabs=1e-12, epsrel=1e-12)
    err = max(e1, e2)
    if err > 1e-9:
        raise RuntimeError(f"quadrature error {err} above 1e-9")
    ys = np.linspace(b, 1.0, grid)
    th = theta(ys, b)
    k = int(np.argmax(th))
    step = (1.0 - b) / (grid - 1)
    upper = float(th[k]) + theta_lipschitz(b) * step / 2
    alpha = max(3 * T, float(th[k])) / (2 * I)
    alpha_upper = max(3 * T, upper) / (2 * I)
    return Constants(b, I, T, float(th[k]), float(ys[k]), upper, alpha, alpha_upper, err)


def fixed_threshold_factor(gamma: float) -> float:
    """max(3/(2 gamma), 1, exp(-3/4)/(1-gamma)) for a fixed threshold."""
    if gamma >= 1:
        return math.inf
    return max(1.5 / gamma, 1.0, math.exp(-0.75) / (1 - gamma))


def classic_factor(gamma: float) -> float:
    """max(3/(2 gamma), 1/(1-gamma)) for Christofides on a fixed threshold."""
    if gamma >= 1:
        return math.inf
    return max(1.5 / gamma, 1 / (1 - gamma))
