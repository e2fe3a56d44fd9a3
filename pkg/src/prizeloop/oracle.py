"""Exact solvers and brute-force verifiers.

Everything here is deliberately written without the implementation modules'
machinery (no row generation, no flows, no matching code from ``tour``) so it
can serve as an independent check on them.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.optimize import linprog

from prizeloop.instance import GRAPH, Instance
from prizeloop.rational import ZERO, Q, edge

PCTSP_LIMIT = 16
PCST_LIMIT = 18
MATCHING_LIMIT = 20


class OracleError(ValueError):
    pass


@dataclass
class ExactResult:
    value: Q
    witness: list  # closed cycle for PCTSP, edge list for PCST
    visited: frozenset

    def to_dict(self) -> dict:
        from prizeloop.rational import q_str

        return {
            "value": q_str(self.value),
            "witness": [list(w) if isinstance(w, tuple) else w for w in self.witness],
            "visited": sorted(self.visited),
        }


def _too_large(n: int, limit: int) -> None:
    if n > limit:
        raise OracleError(f"instance too large for oracle ({n} > {limit} vertices)")


def _scaled(inst: Instance) -> tuple[dict, dict, int]:
    """Distances and penalties as integers over one common denominator."""
    den = 1
    for q in list(inst.dist.values()) + list(inst.penalty.values()):
        d = int(q.denominator)
        den = den * d // np.gcd(den, d)
    dist = {k: int(q * den) for k, q in inst.dist.items()}
    pen = {v: int(q * den) for v, q in inst.penalty.items()}
    return dist, pen, int(den)


def exact_pctsp(inst: Instance, limit: int = PCTSP_LIMIT) -> ExactResult:
    """Held-Karp DP over subsets of non-root vertices, plus penalties of the rest."""
    _too_large(inst.n, limit)
    if inst.kind == GRAPH:
        raise OracleError("PCTSP oracle needs a metric-complete instance")
    dist, pen, den = _scaled(inst)
    r = inst.root
    others = [v for v in inst.vertices if v != r]
    k = len(others)

    def d(a, b):
        return 0 if a == b else dist[edge(a, b)]

    full_pen = sum(pen.get(v, 0) for v in others)
    best_val = full_pen
    best = ([r], 0)
    # dp[mask][j]: shortest root path visiting mask, ending at others[j]
    dp = [dict() for _ in range(1 << k)]
    parent = [dict() for _ in range(1 << k)]
    for j in range(k):
        dp[1 << j][j] = d(r, others[j])
    for mask in range(1, 1 << k):
        row = dp[mask]
        for j, cost in row.items():
            for t in range(k):
                if mask >> t & 1:
                    continue
                nm = mask | 1 << t
                c = cost + d(others[j], others[t])
                if t not in dp[nm] or c < dp[nm][t]:
                    dp[nm][t] = c
                    parent[nm][t] = j
        tour = None
        end = None
        for j, cost in row.items():
            c = cost + d(others[j], r)
            if tour is None or c < tour:
                tour, end = c, j
        miss = sum(pen.get(others[t], 0) for t in range(k) if not mask >> t & 1)
        if tour + miss < best_val:
            best_val = tour + miss
            best = (mask, end)
    if best[0] == [r]:
        cycle = [r]
    else:
        mask, j = best
        seq = []
        while j is not None:
            seq.append(others[j])
            pj = parent[mask].get(j)
            mask ^= 1 << j
            j = pj
        cycle = [r] + seq[::-1] + [r]
    value = Q(best_val, den)
    return ExactResult(value, cycle, frozenset(cycle))


def pctsp_value(inst: Instance, cycle: list[int]) -> Q:
    """Objective recomputed from scratch (independent of ``tour.objective``)."""
    total = ZERO
    for a, b in zip(cycle, cycle[1:]):
        if a != b:
            total += inst.dist[edge(a, b)]
    seen = set(cycle)
    for v in inst.vertices:
        if v not in seen:
            total += inst.penalty.get(v, ZERO)
    return total


def _mst_int(vs: list[int], dist: dict) -> tuple[int, list] | None:
    """Kruskal on the induced subgraph; None if it is disconnected."""
    parent = {v: v for v in vs}

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    inside = set(vs)
    cand = sorted((w, k) for k, w in dist.items() if k[0] in inside and k[1] in inside)
    total = 0
    chosen = []
    for w, (a, b) in cand:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
            total += w
            chosen.append((a, b))
    if len(chosen) != len(vs) - 1:
        return None
    return total, chosen


def exact_pcst(inst: Instance, limit: int = PCST_LIMIT, reverse: bool = False) -> ExactResult:
    """Min over connected vertex sets S containing the root of MST(G[S]) + pi(V - S)."""
    _too_large(inst.n, limit)
    dist, pen, den = _scaled(inst)
    r = inst.root
    others = [v for v in inst.vertices if v != r]
    k = len(others)
    best_val = None
    best = None
    masks = range((1 << k) - 1, -1, -1) if reverse else range(1 << k)
    for mask in masks:
        vs = [r] + [others[t] for t in range(k) if mask >> t & 1]
        res = _mst_int(vs, dist)
        if res is None:
            continue
        tcost, tedges = res
        miss = sum(pen.get(others[t], 0) for t in range(k) if not mask >> t & 1)
        val = tcost + miss
        if best_val is None or val < best_val:
            best_val = val
            best = (vs, tedges)
    vs, tedges = best
    return ExactResult(Q(best_val, den), sorted(tedges), frozenset(vs))


def exact_matching(points, inst: Instance) -> Q:
    """Minimum perfect matching cost by memoised recursion over frozensets."""
    pts = tuple(sorted(set(points)))
    if len(pts) % 2:
        raise OracleError("matching needs an even number of points")
    _too_large(len(pts), MATCHING_LIMIT)

    @lru_cache(maxsize=None)
    def solve(rest: frozenset) -> Fraction:
        if not rest:
            return Fraction(0)
        first = min(rest)
        out = None
        for other in rest:
            if other == first:
                continue
            q = inst.d(first, other)
            c = Fraction(int(q.numerator), int(q.denominator)) + solve(rest - {first, other})
            if out is None or c < out:
                out = c
        return out

    v = solve(frozenset(pts))
    return Q(v.numerator, v.denominator)


# ---------------------------------------------------------------------------
# brute-force polytope checks


def _as_fraction_weights(z) -> dict[tuple[int, int], Fraction]:
    out: dict[tuple[int, int], Fraction] = {}
    items = z.items() if isinstance(z, dict) else z
    for item in items:
        if len(item) == 2:
            (u, v), w = item
        else:
            u, v, w = item
        if u == v:
            continue
        w = Fraction(str(w))
        key = (min(u, v), max(u, v))
        out[key] = out.get(key, Fraction(0)) + w
    return out


def held_karp_member_bruteforce(z, vertices, root) -> bool:
    """Degree 2 everywhere and every set avoiding the root has cut at least 2."""
    vs = sorted(set(vertices))
    w = _as_fraction_weights(z)
    for val in w.values():
        if val < 0:
            return False
    for v in vs:
        if sum(x for k, x in w.items() if v in k) != 2:
            return False
    others = [v for v in vs if v != root]
    for size in range(1, len(others) + 1):
        for S in itertools.combinations(others, size):
            s = set(S)
            cut = sum(x for (a, b), x in w.items() if (a in s) != (b in s))
            if cut < 2:
                return False
    return True


def min_cut_bruteforce(z, vertices, a, b) -> Q:
    vs = sorted(set(vertices))
    w = _as_fraction_weights(z)
    rest = [v for v in vs if v not in (a, b)]
    best = None
    for size in range(len(rest) + 1):
        for S in itertools.combinations(rest, size):
            s = set(S) | {a}
            cut = sum(x for (u, v), x in w.items() if (u in s) != (v in s))
            if best is None or cut < best:
                best = cut
    return Q(best.numerator, best.denominator)


def spanning_tree_member_bruteforce(z, ends, vertices) -> bool:
    vs = sorted(set(vertices))
    zs = [Fraction(str(x)) for x in z]
    if any(x < 0 or x > 1 for x in zs):
        return False
    if sum(zs) != len(vs) - 1:
        return False
    for size in range(2, len(vs) + 1):
        for S in itertools.combinations(vs, size):
            s = set(S)
            inner = sum(x for (a, b), x in zip(ends, zs) if a in s and b in s)
            if inner > size - 1:
                return False
    return True


def tight_sets_bruteforce(z, ends, vertices, need) -> list[frozenset]:
    """All sets S containing ``need`` with z(E[S]) = |S| - 1."""
    vs = sorted(set(vertices))
    zs = [Fraction(str(x)) for x in z]
    need = set(need)
    rest = [v for v in vs if v not in need]
    out = []
    for size in range(len(rest) + 1):
        for S in itertools.combinations(rest, size):
            s = need | set(S)
            inner = sum(x for (a, b), x in zip(ends, zs) if a in s and b in s)
            if inner == len(s) - 1:
                out.append(frozenset(s))
    return out


def minimal_tight_set_bruteforce(z, ends, vertices, need) -> frozenset:
    sets = tight_sets_bruteforce(z, ends, vertices, need)
    if not sets:
        raise OracleError("no tight set")
    smallest = min(sets, key=len)
    for s in sets:
        if not smallest <= s:
            raise OracleError("tight sets have no unique minimum")
    return smallest


# ---------------------------------------------------------------------------
# LP with every subtour row written out


def lp_value_enumerated(inst: Instance, relaxation: str = "pctsp", limit: int = 9) -> float:
    """Optimal LP value with all cut rows listed explicitly (floating point)."""
    _too_large(inst.n, limit)
    r = inst.root
    es = sorted(inst.dist)
    others = [v for v in inst.vertices if v != r]
    m = len(es)
    col_y = {v: m + i for i, v in enumerate(others)}
    ncol = m + len(others)
    c = np.zeros(ncol)
    for k, e in enumerate(es):
        c[k] = float(inst.dist[e])
    const = 0.0
    for v in others:
        p = float(inst.penalty.get(v, ZERO))
        c[col_y[v]] = -p
        const += p
    A_ub, b_ub, A_eq, b_eq = [], [], [], []
    factor = 2.0 if relaxation == "pctsp" else 1.0
    for size in range(1, len(others) + 1):
        for S in itertools.combinations(others, size):
            s = set(S)
            row = np.zeros(ncol)
            for k, (a, b) in enumerate(es):
                if (a in s) != (b in s):
                    row[k] = -1.0
            for v in S:
                rr = row.copy()
                rr[col_y[v]] = factor
                A_ub.append(rr)
                b_ub.append(0.0)
    if relaxation == "pctsp":
        for v in others:
            row = np.zeros(ncol)
            for k, e in enumerate(es):
                if v in e:
                    row[k] = 1.0
            row[col_y[v]] = -2.0
            A_eq.append(row)
            b_eq.append(0.0)
        row = np.zeros(ncol)
        for k, e in enumerate(es):
            if r in e:
                row[k] = 1.0
        A_ub.append(row)
        b_ub.append(2.0)
    bounds = [(0, None)] * m + [(0, 1)] * len(others)
    res = linprog(
        c,
        A_ub=np.array(A_ub) if A_ub else None,
        b_ub=np.array(b_ub) if b_ub else None,
        A_eq=np.array(A_eq) if A_eq else None,
        b_eq=np.array(b_eq) if b_eq else None,
        bounds=bounds,
        method="highs",
    )
    if res.status != 0:
        raise OracleError(f"enumerated LP failed: {res.message}")
    return float(res.fun + const)
