"""Parity correction, Eulerian traversal and shortcutting.

Cycles are closed vertex lists ``[root, v1, ..., vk, root]``; the root-only
cycle is ``[root]``.
"""

from __future__ import annotations

from collections import Counter, defaultdict

import networkx as nx

from prizeloop.instance import Instance
from prizeloop.rational import ZERO, Q, edge

MATCHING_DP_LIMIT = 20


class TourError(ValueError):
    pass


class Multigraph:
    """Vertex set plus a multiset of undirected edges."""

    def __init__(self, vertices=(), edges=()):
        self.vertices: set[int] = set(vertices)
        self.edges: Counter = Counter()
        for e in edges:
            self.add(*e)

    def add(self, u: int, v: int, k: int = 1) -> None:
        if k < 1:
            raise TourError("multiplicity must be positive")
        self.edges[edge(u, v)] += k
        self.vertices.add(u)
        self.vertices.add(v)

    def union(self, other: "Multigraph") -> "Multigraph":
        out = Multigraph(self.vertices | other.vertices)
        out.edges = self.edges + other.edges
        return out

    def degree(self, v: int) -> int:
        return sum(k for e, k in self.edges.items() if v in e)

    def degrees(self) -> dict[int, int]:
        deg = {v: 0 for v in self.vertices}
        for (a, b), k in self.edges.items():
            deg[a] += k
            deg[b] += k
        return deg

    def odd_vertices(self) -> list[int]:
        return sorted(v for v, d in self.degrees().items() if d % 2)

    def is_connected(self) -> bool:
        if not self.vertices:
            return True
        adj = defaultdict(set)
        for a, b in self.edges:
            adj[a].add(b)
            adj[b].add(a)
        start = min(self.vertices)
        seen = {start}
        stack = [start]
        while stack:
            u = stack.pop()
            for w in adj[u]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return seen == self.vertices

    def cost(self, inst: Instance) -> Q:
        return sum((inst.d(a, b) * k for (a, b), k in self.edges.items()), ZERO)

    def num_edges(self) -> int:
        return sum(self.edges.values())

    def to_dict(self) -> dict:
        return {
            "vertices": sorted(self.vertices),
            "edges": [[a, b, k] for (a, b), k in sorted(self.edges.items())],
        }

    def __eq__(self, other):
        if not isinstance(other, Multigraph):
            return NotImplemented
        return self.vertices == other.vertices and self.edges == other.edges


# ---------------------------------------------------------------------------
# matching


def _integer_weights(inst: Instance, pts: list[int]) -> tuple[dict, int]:
    """Distances among pts scaled to integers by a common denominator."""
    den = 1
    for i, a in enumerate(pts):
        for b in pts[i + 1:]:
            d = inst.d(a, b).denominator
            den = den * d // _gcd(den, d)
    w = {}
    for i, a in enumerate(pts):
        for b in pts[i + 1:]:
            q = inst.d(a, b)
            w[(a, b)] = int(q.numerator) * (den // int(q.denominator))
    return w, den


def _gcd(a: int, b: int) -> int:
    while b:
        a, b = b, a % b
    return a


def _matching_dp(pts: list[int], w: dict) -> list[tuple[int, int]]:
    k = len(pts)
    full = (1 << k) - 1
    best = [None] * (1 << k)
    choice = [None] * (1 << k)
    best[0] = 0
    # masks are processed in increasing order; the lowest unmatched point is
    # paired with some other unmatched point
    for mask in range(1, full + 1):
        if bin(mask).count("1") % 2:
            continue
        i = (mask & -mask).bit_length() - 1
        rest = mask & ~(1 << i)
        b = None
        c = None
        j_bits = rest
        while j_bits:
            low = j_bits & -j_bits
            j = low.bit_length() - 1
            j_bits ^= low
            sub = best[rest & ~low]
            val = sub + w[(pts[i], pts[j])]
            if b is None or val < b:
                b = val
                c = j
        best[mask] = b
        choice[mask] = c
    out = []
    mask = full
    while mask:
        i = (mask & -mask).bit_length() - 1
        j = choice[mask]
        out.append(edge(pts[i], pts[j]))
        mask &= ~((1 << i) | (1 << j))
    return sorted(out)


def _matching_blossom(pts: list[int], w: dict) -> list[tuple[int, int]]:
    g = nx.Graph()
    top = max(w.values(), default=0) + 1
    for (a, b), c in w.items():
        # integer weights keep networkx on its exact integer code path
        g.add_edge(a, b, weight=top - c)
    m = nx.max_weight_matching(g, maxcardinality=True)
    out = sorted(edge(a, b) for a, b in m)
    if 2 * len(out) != len(pts):
        raise TourError("no perfect matching found")
    return out


def min_perfect_matching(inst: Instance, points) -> list[tuple[int, int]]:
    """Minimum-cost perfect matching on ``points`` under the metric."""
    pts = sorted(set(points))
    if len(pts) % 2:
        raise TourError("perfect matching needs an even number of points")
    if not pts:
        return []
    w, _ = _integer_weights(inst, pts)
    if len(pts) <= MATCHING_DP_LIMIT:
        return _matching_dp(pts, w)
    return _matching_blossom(pts, w)


def minimum_odd_join(h: Multigraph, inst: Instance) -> Multigraph:
    """Cheapest edge multiset whose odd-degree vertices are exactly odd(h)."""
    odd = h.odd_vertices()
    return Multigraph(odd, min_perfect_matching(inst, odd))


# ---------------------------------------------------------------------------
# Euler tour and shortcut


def eulerian_circuit(g: Multigraph, start: int) -> list[int]:
    """Hierholzer's algorithm; neighbours are taken in increasing id order."""
    if start not in g.vertices:
        raise TourError(f"start vertex {start} not in graph")
    odd = g.odd_vertices()
    if odd:
        raise TourError(f"odd-degree vertices {odd}")
    if not g.is_connected():
        raise TourError("graph is disconnected")
    remaining = Counter(g.edges)
    adj = defaultdict(list)
    for a, b in sorted(g.edges):
        adj[a].append(b)
        adj[b].append(a)
    for v in adj:
        adj[v].sort()
    ptr = defaultdict(int)
    stack = [start]
    circuit = []
    while stack:
        u = stack[-1]
        nbrs = adj[u]
        while ptr[u] < len(nbrs) and remaining[edge(u, nbrs[ptr[u]])] == 0:
            ptr[u] += 1
        if ptr[u] == len(nbrs):
            circuit.append(stack.pop())
            continue
        w = nbrs[ptr[u]]
        remaining[edge(u, w)] -= 1
        stack.append(w)
    circuit.reverse()
    return circuit


def shortcut(walk: list[int]) -> list[int]:
    """Keep first occurrences and close the cycle at the start vertex."""
    seen = set()
    out = []
    for v in walk:
        if v not in seen:
            seen.add(v)
            out.append(v)
    if len(out) > 1:
        out.append(out[0])
    return out


def eulerian_shortcut(g: Multigraph, root: int) -> list[int]:
    if not g.edges:
        if g.vertices - {root}:
            raise TourError("graph is disconnected")
        return [root]
    return shortcut(eulerian_circuit(g, root))


def validate_cycle(inst: Instance, cycle: list[int]) -> None:
    if not cycle or cycle[0] != inst.root:
        raise TourError("cycle must start at the root")
    if len(cycle) == 1:
        return
    if cycle[-1] != inst.root:
        raise TourError("cycle must return to the root")
    body = cycle[:-1]
    if len(set(body)) != len(body):
        raise TourError("cycle repeats a vertex")
    bad = set(body) - set(inst.vertices)
    if bad:
        raise TourError(f"unknown vertices {sorted(bad)}")


def cycle_cost(inst: Instance, cycle: list[int]) -> Q:
    return sum((inst.d(a, b) for a, b in zip(cycle, cycle[1:])), ZERO)


def penalty_cost(inst: Instance, visited) -> Q:
    visited = set(visited)
    return sum((p for v, p in inst.penalty.items() if v not in visited and v != inst.root), ZERO)


def objective(inst: Instance, cycle: list[int]) -> Q:
    """Tour length plus penalties of the vertices the cycle misses."""
    if inst.root not in cycle:
        raise TourError("cycle does not contain the root")
    validate_cycle(inst, cycle)
    return cycle_cost(inst, cycle) + penalty_cost(inst, cycle)
