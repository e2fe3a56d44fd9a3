"""Row-generation solver for the PCTSP and PCST relaxations.

The restricted master LP is solved exactly by ``prizeloop.simplex``. A
floating-point HiGHS solve (through scipy) is used only to propose a starting
basis; the exact simplex then verifies it and pivots to optimality if needed,
so every returned solution is an exact rational basic optimum.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import csr_matrix

from prizeloop import simplex
from prizeloop.cuts import CapacityGraph, min_cut
from prizeloop.instance import METRIC, Instance, InstanceError
from prizeloop.rational import ONE, TWO, ZERO, Q, edge, q_str, to_q

log = logging.getLogger(__name__)

PCTSP = "pctsp"
PCST = "pcst"
RELAXATIONS = (PCTSP, PCST)


class LpInfeasibleError(ValueError):
    """A point violates the relaxation it claims to satisfy."""


@dataclass
class LpSolution:
    x: dict[tuple[int, int], Q]
    y: dict[int, Q]
    objective: Q
    relaxation: str = PCTSP
    certified_optimal: bool = False
    # restricted-master optimum after each row-generation round
    history: list[Q] = field(default_factory=list, repr=False, compare=False)

    def support(self) -> dict[tuple[int, int], Q]:
        return {e: w for e, w in self.x.items() if w != 0}

    def edge_cost(self, inst: Instance) -> Q:
        return sum((inst.d(*e) * w for e, w in self.x.items()), ZERO)

    def penalty_part(self, inst: Instance) -> Q:
        return sum((inst.penalty[v] * (ONE - self.y[v]) for v in inst.vertices), ZERO)

    def to_dict(self) -> dict:
        return {
            "relaxation": self.relaxation,
            "objective": q_str(self.objective),
            "certified_optimal": self.certified_optimal,
            "x": [[u, v, q_str(w)] for (u, v), w in sorted(self.x.items()) if w != 0],
            "y": {str(v): q_str(w) for v, w in sorted(self.y.items())},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LpSolution":
        x = {}
        for u, v, w in data["x"]:
            x[edge(int(u), int(v))] = to_q(w)
        y = {int(k): to_q(w) for k, w in data["y"].items()}
        return cls(
            x=x,
            y=y,
            objective=to_q(data["objective"]),
            relaxation=data.get("relaxation", PCTSP),
            certified_optimal=bool(data.get("certified_optimal", False)),
        )


def lp_objective(inst: Instance, x, y) -> Q:
    total = ZERO
    for e, w in x.items():
        if w:
            total += inst.d(*e) * w
    for v in inst.vertices:
        total += inst.penalty[v] * (ONE - y.get(v, ZERO))
    return total


# ---------------------------------------------------------------------------
# separation


@dataclass(frozen=True)
class CutRow:
    """A violated constraint: ``kind`` is cut, degree, root-degree or bound.

    For cuts, ``side`` is S (root outside) and ``vertex`` the v in S whose
    requirement is violated; ``value`` is the left-hand side, ``rhs`` the
    required amount.
    """

    kind: str
    side: frozenset
    vertex: int
    value: Q
    rhs: Q


def _point(candidate):
    if isinstance(candidate, LpSolution):
        return candidate.x, candidate.y
    x, y = candidate
    return x, y


def separate(inst: Instance, candidate, relaxation: str | None = None) -> list[CutRow]:
    """All violated rows of the candidate point, at most one cut per vertex.

    Cut rows are most violated for their vertex: the minimal min-cut side
    separating v from the root.
    """
    x, y = _point(candidate)
    if relaxation is None:
        relaxation = candidate.relaxation if isinstance(candidate, LpSolution) else PCTSP
    if relaxation not in RELAXATIONS:
        raise ValueError(f"unknown relaxation {relaxation!r}")
    r = inst.root
    out: list[CutRow] = []
    if y.get(r, ZERO) != ONE:
        out.append(CutRow("bound", frozenset((r,)), r, y.get(r, ZERO), ONE))
    for v in inst.vertices:
        yv = y.get(v, ZERO)
        if yv < 0:
            out.append(CutRow("bound", frozenset((v,)), v, yv, ZERO))
        elif yv > 1:
            out.append(CutRow("bound", frozenset((v,)), v, yv, ONE))
    for e, w in x.items():
        if w < 0:
            out.append(CutRow("bound", frozenset(e), e[0], w, ZERO))
        elif w and (e not in inst.dist):
            out.append(CutRow("bound", frozenset(e), e[0], w, ZERO))
    if out:
        return out
    g = CapacityGraph(inst.vertices, {e: w for e, w in x.items() if w})
    if relaxation == PCTSP:
        for v in inst.vertices:
            d = g.degree(v)
            if v == r:
                if d > TWO:
                    out.append(CutRow("root-degree", frozenset((v,)), v, d, TWO))
            elif d != 2 * y.get(v, ZERO):
                out.append(CutRow("degree", frozenset((v,)), v, d, 2 * y.get(v, ZERO)))
    factor = TWO if relaxation == PCTSP else ONE
    for v in inst.vertices:
        if v == r:
            continue
        need = factor * y.get(v, ZERO)
        if need <= 0:
            continue
        val, side = min_cut(g, v, r, limit=need)
        if val < need:
            out.append(CutRow("cut", side, v, val, need))
    return out


def check_feasible(inst: Instance, sol) -> None:
    """Raise ``LpInfeasibleError`` unless the point satisfies its relaxation."""
    rows = separate(inst, sol)
    if rows:
        row = rows[0]
        raise LpInfeasibleError(
            f"infeasible {getattr(sol, 'relaxation', PCTSP)} point: {row.kind} row at "
            f"{sorted(row.side)} has lhs {row.value} < required {row.rhs}"
            if row.kind == "cut"
            else f"infeasible point: {row.kind} row at {sorted(row.side)} "
            f"(value {row.value}, bound {row.rhs})"
        )


# ---------------------------------------------------------------------------
# restricted master


class _Master:
    """Column layout: edge variables, then y for every non-root vertex."""

    def __init__(self, inst: Instance, relaxation: str):
        self.inst = inst
        self.relaxation = relaxation
        self.edges = inst.edges()
        self.eidx = {e: i for i, e in enumerate(self.edges)}
        self.ys = inst.non_root()
        self.yidx = {v: len(self.edges) + i for i, v in enumerate(self.ys)}
        self.ncols = len(self.edges) + len(self.ys)
        self.cost = [inst.dist[e] for e in self.edges] + [-inst.penalty[v] for v in self.ys]
        self.const = sum((inst.penalty[v] for v in self.ys), ZERO)
        self.incident: dict[int, list[int]] = {v: [] for v in inst.vertices}
        for i, (a, b) in enumerate(self.edges):
            self.incident[a].append(i)
            self.incident[b].append(i)
        self.rows: list[simplex.Row] = []
        self.cut_keys: set = set()
        r = inst.root
        if relaxation == PCTSP:
            for v in self.ys:
                coefs = {i: ONE for i in self.incident[v]}
                coefs[self.yidx[v]] = -TWO
                self.rows.append(simplex.Row(coefs, "=", ZERO, ("degree", v)))
            self.rows.append(
                simplex.Row({i: ONE for i in self.incident[r]}, "<=", TWO, ("root-degree", r))
            )
        for v in self.ys:
            self.rows.append(simplex.Row({self.yidx[v]: ONE}, "<=", ONE, ("ub", v)))
        if relaxation == PCST:
            for v in self.ys:
                self.add_cut(frozenset((v,)), v)

    def add_cut(self, side: frozenset, v: int) -> bool:
        key = (side, v)
        if key in self.cut_keys:
            return False
        self.cut_keys.add(key)
        coefs = {}
        for i, (a, b) in enumerate(self.edges):
            if (a in side) != (b in side):
                coefs[i] = ONE
        coefs[self.yidx[v]] = -(TWO if self.relaxation == PCTSP else ONE)
        self.rows.append(simplex.Row(coefs, ">=", ZERO, ("cut", side, v)))
        return True

    def float_hint(self) -> list[int] | None:
        """Column priorities from a HiGHS vertex solution (None if it fails)."""
        m = len(self.rows)
        ub_rows, eq_rows = [], []
        b_ub, b_eq = [], []
        for row in self.rows:
            sign = -1.0 if row.sense == ">=" else 1.0
            target = eq_rows if row.sense == "=" else ub_rows
            (b_eq if row.sense == "=" else b_ub).append(sign * float(row.rhs))
            target.append({j: sign * float(a) for j, a in row.coefs.items()})

        def mat(rows):
            if not rows:
                return None
            d, r_, c_ = [], [], []
            for k, coefs in enumerate(rows):
                for j, a in coefs.items():
                    d.append(a)
                    r_.append(k)
                    c_.append(j)
            return csr_matrix((d, (r_, c_)), shape=(len(rows), self.ncols))

        c = np.array([float(v) for v in self.cost])
        try:
            res = linprog(
                c,
                A_ub=mat(ub_rows),
                b_ub=np.array(b_ub) if b_ub else None,
                A_eq=mat(eq_rows),
                b_eq=np.array(b_eq) if b_eq else None,
                bounds=(0, None),
                method="highs-ds",
            )
        except (ValueError, RuntimeError):  # pragma: no cover - solver hiccup
            return None
        if res.status != 0:
            return None
        xs = res.x
        tol = 1e-9
        basic = [j for j in range(self.ncols) if xs[j] > tol]
        slack_basic = []
        tight = []
        for i, row in enumerate(self.rows):
            if row.sense == "=":
                continue
            lhs = sum(float(a) * xs[j] for j, a in row.coefs.items())
            slack = float(row.rhs) - lhs if row.sense == "<=" else lhs - float(row.rhs)
            (slack_basic if slack > tol else tight).append(self.ncols + i)
        if len(basic) + len(slack_basic) > m:
            return None
        rest = tight + [j for j in range(self.ncols) if xs[j] <= tol]
        return basic + slack_basic + rest

    def solve_exact(self, use_hint: bool = True) -> simplex.LpResult:
        order = self.float_hint() if use_hint else None
        if order is not None:
            res = _solve_from_order(self.ncols, self.rows, self.cost, order)
            if res is not None:
                return res
        return simplex.solve(self.ncols, self.rows, self.cost)

    def unpack(self, xs: list[Q]) -> tuple[dict, dict]:
        x = {e: xs[i] for i, e in enumerate(self.edges) if xs[i] != 0}
        y = {self.inst.root: ONE}
        for v in self.ys:
            y[v] = xs[self.yidx[v]]
        return x, y


def _solve_from_order(ncols, rows, cost, order) -> simplex.LpResult | None:
    """Greedily build a basis from the column order, then finish exactly."""
    eq_rows, rhs, ntot = simplex.standard_form(ncols, rows)
    tab = simplex.Tableau(eq_rows, rhs, ntot)
    m = tab.m
    used = [False] * m
    count = 0
    for j in order:
        if count == m:
            break
        r = None
        for k in range(m):
            if not used[k] and tab.T[k][j] != 0:
                r = k
                break
        if r is None:
            continue
        tab.pivot(r, j)
        used[r] = True
        count += 1
    if count < m or any(tab.T[k][ntot] < 0 for k in range(m)):
        return None
    costs = list(cost) + [ZERO] * (ntot - ncols)
    status = tab.run(costs)
    return simplex._finish(tab, status, costs, ntot, ncols, rows)


def solve_relaxation(
    inst: Instance, relaxation: str = PCTSP, *, use_float_hint: bool = True, max_rounds: int = 500
) -> LpSolution:
    """Exact optimal basic solution of the chosen relaxation by row generation."""
    if relaxation not in RELAXATIONS:
        raise ValueError(f"unknown relaxation {relaxation!r}")
    inst.validate()
    if relaxation == PCTSP and inst.kind != METRIC:
        raise InstanceError("the PCTSP relaxation needs a metric-complete instance")
    r = inst.root
    if inst.n == 1:
        return LpSolution({}, {r: ONE}, ZERO, relaxation, True, [ZERO])
    master = _Master(inst, relaxation)
    history: list[Q] = []
    for rnd in range(max_rounds):
        res = master.solve_exact(use_float_hint)
        if res.status != "optimal":  # pragma: no cover - the relaxation is always feasible and bounded
            raise RuntimeError(f"restricted master LP returned {res.status}")
        x, y = master.unpack(res.x)
        value = res.objective + master.const
        history.append(value)
        rows = separate(inst, (x, y), relaxation)
        added = 0
        for row in rows:
            if row.kind != "cut":  # pragma: no cover - the master contains these rows
                raise RuntimeError(f"master solution violates a {row.kind} row")
            added += master.add_cut(row.side, row.vertex)
        log.debug("lp round %d value %s rows %d added %d", rnd, value, len(master.rows), added)
        if not rows:
            return LpSolution(x, y, value, relaxation, True, history)
        if not added:  # pragma: no cover
            raise RuntimeError("separation returned only known rows")
    raise RuntimeError("row generation did not converge")  # pragma: no cover


def tour_mixture_point(inst: Instance, cycles: list[list[int]], weights: list) -> LpSolution:
    """Convex combination of root cycles as a (generally non-optimal) PCTSP point.

    Each cycle is a vertex list starting and ending at the root; ``[root]``
    is the empty tour and ``[root, a, root]`` uses the edge twice.
    """
    weights = [to_q(w) for w in weights]
    if len(weights) != len(cycles) or sum(weights, ZERO) != 1 or any(w < 0 for w in weights):
        raise ValueError("weights must be a probability vector matching the cycles")
    x: dict[tuple[int, int], Q] = {}
    y = {v: ZERO for v in inst.vertices}
    for cyc, mu in zip(cycles, weights):
        if cyc[0] != inst.root or cyc[-1] != inst.root:
            raise ValueError("cycles must start and end at the root")
        for v in set(cyc):
            y[v] += mu
        for a, b in zip(cyc, cyc[1:]):
            if a != b:
                k = edge(a, b)
                x[k] = x.get(k, ZERO) + mu
    y[inst.root] = ONE
    return LpSolution(x, y, lp_objective(inst, x, y), PCTSP, False)


def random_tour_mixture(inst: Instance, k: int, rng) -> LpSolution:
    """Mixture of ``k`` random root cycles with random rational weights."""
    r = inst.root
    others = inst.non_root()
    cycles = []
    for _ in range(k):
        size = int(rng.integers(0, len(others) + 1))
        chosen = [int(v) for v in rng.permutation(others)[:size]]
        cycles.append([r] + chosen + [r])
    raw = [int(rng.integers(1, 9)) for _ in range(k)]
    total = sum(raw)
    return tour_mixture_point(inst, cycles, [Q(w, total) for w in raw])
