"""Exact max-flow / min-cut on small undirected capacity graphs, and
Held-Karp membership checking built on it."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable

from prizeloop.rational import TWO, ZERO, Q, edge


class CutError(ValueError):
    pass


class CapacityGraph:
    """Undirected graph with non-negative rational capacities.

    Stored as a symmetric adjacency dict; zero-capacity entries are dropped.
    """

    __slots__ = ("vertices", "adj")

    def __init__(self, vertices: Iterable[int], weights=None):
        self.vertices: list[int] = sorted(set(vertices))
        self.adj: dict[int, dict[int, Q]] = {v: {} for v in self.vertices}
        if weights:
            items = weights.items() if isinstance(weights, dict) else weights
            for key, w in items:
                u, v = key
                self.add(u, v, w)

    def copy(self) -> "CapacityGraph":
        g = CapacityGraph.__new__(CapacityGraph)
        g.vertices = list(self.vertices)
        g.adj = {v: dict(nb) for v, nb in self.adj.items()}
        return g

    def weight(self, u: int, v: int) -> Q:
        return self.adj[u].get(v, ZERO)

    def add(self, u: int, v: int, delta) -> None:
        if u == v:
            raise CutError(f"self-loop at {u}")
        if delta == 0:
            return
        new = self.adj[u].get(v, ZERO) + delta
        if new < 0:
            raise CutError(f"negative capacity on {edge(u, v)}")
        if new == 0:
            self.adj[u].pop(v, None)
            self.adj[v].pop(u, None)
        else:
            self.adj[u][v] = new
            self.adj[v][u] = new

    def remove_vertex(self, v: int) -> None:
        for u in list(self.adj[v]):
            self.adj[u].pop(v, None)
        del self.adj[v]
        self.vertices.remove(v)

    def degree(self, v: int) -> Q:
        return sum(self.adj[v].values(), ZERO)

    def neighbors(self, v: int) -> list[int]:
        return sorted(self.adj[v])

    def weights(self) -> dict[tuple[int, int], Q]:
        out = {}
        for u, nb in self.adj.items():
            for v, w in nb.items():
                if u < v:
                    out[(u, v)] = w
        return out

    def cut_value(self, side) -> Q:
        side = set(side)
        total = ZERO
        for u in side:
            for v, w in self.adj[u].items():
                if v not in side:
                    total += w
        return total

    def total(self) -> Q:
        return sum(self.weights().values(), ZERO)


def _as_set(x) -> frozenset:
    if isinstance(x, (set, frozenset, list, tuple)):
        return frozenset(x)
    return frozenset((x,))


def max_flow(g: CapacityGraph, sources, sinks, limit=None) -> tuple[Q, frozenset]:
    """Edmonds-Karp between vertex sets; returns (value, minimal source side).

    With ``limit`` the augmentation stops once the flow reaches it, and the
    returned value is ``min(maxflow, limit)`` (the side is then meaningless).
    """
    src = _as_set(sources)
    snk = _as_set(sinks)
    if not src or not snk:
        raise CutError("empty terminal set")
    if src & snk:
        raise CutError("source and sink sets overlap")
    res = {u: dict(nb) for u, nb in g.adj.items()}
    return _augment(res, src, snk, limit)


def directed_max_flow(arcs: dict, s, t, limit=None) -> tuple[Q, frozenset]:
    """Max flow on directed arcs ``{(u, v): cap}``; returns (value, minimal s-side)."""
    res: dict = {}
    for (u, v), c in arcs.items():
        if c < 0:
            raise CutError(f"negative capacity on arc {(u, v)}")
        res.setdefault(u, {})
        res.setdefault(v, {})
        res[u][v] = res[u].get(v, ZERO) + c
        res[v].setdefault(u, ZERO)
    res.setdefault(s, {})
    res.setdefault(t, {})
    if s == t:
        raise CutError("s and t must differ")
    return _augment(res, frozenset((s,)), frozenset((t,)), limit)


def _augment(res, src: frozenset, snk: frozenset, limit) -> tuple[Q, frozenset]:
    flow = ZERO
    while True:
        if limit is not None and flow >= limit:
            return limit, frozenset()
        parent: dict[int, int | None] = {s: None for s in src}
        queue = deque(src)
        hit = None
        while queue and hit is None:
            u = queue.popleft()
            for v, c in res[u].items():
                if c > 0 and v not in parent:
                    parent[v] = u
                    if v in snk:
                        hit = v
                        break
                    queue.append(v)
        if hit is None:
            return flow, frozenset(parent)
        b = None
        v = hit
        while parent[v] is not None:
            u = parent[v]
            c = res[u][v]
            if b is None or c < b:
                b = c
            v = u
        if limit is not None and flow + b > limit:
            b = limit - flow
        v = hit
        while parent[v] is not None:
            u = parent[v]
            res[u][v] -= b
            res[v][u] = res[v].get(u, ZERO) + b
            v = u
        flow += b


def min_cut(g: CapacityGraph, s, t, limit=None) -> tuple[Q, frozenset]:
    """Exact minimum s-t cut; ``s`` and ``t`` may be vertices or vertex sets.

    Returns the cut value and the (inclusion-minimal) side containing ``s``.
    """
    if _as_set(s) & _as_set(t):
        raise CutError("s and t must differ")
    value, side = max_flow(g, s, t, limit)
    return value, side


# ---------------------------------------------------------------------------
# Held-Karp membership


@dataclass(frozen=True)
class Violation:
    kind: str  # "degree" or "cut" or "negative"
    vertices: frozenset
    value: Q
    rhs: Q


def _aggregate(z) -> dict[tuple[int, int], Q]:
    """Sum a multigraph weight listing into simple-edge capacities."""
    out: dict[tuple[int, int], Q] = {}
    items = z.items() if isinstance(z, dict) else z
    for item in items:
        if len(item) == 2:
            (u, v), w = item
        else:
            u, v, w = item
        if w < 0:
            raise CutError(f"negative weight on {(u, v)}")
        if u == v:
            continue
        k = edge(u, v)
        out[k] = out.get(k, ZERO) + w
    return out


def held_karp_violation(z, vertices, root: int) -> Violation | None:
    """None iff ``z`` lies in the Held-Karp polytope of the multigraph on ``vertices``.

    Degree equalities are checked directly, subtour cuts with one min-cut per
    non-root vertex.
    """
    vs = sorted(set(vertices))
    if not vs:
        raise CutError("empty vertex set")
    g = CapacityGraph(vs, _aggregate(z))
    for v in vs:
        d = g.degree(v)
        if d != TWO:
            return Violation("degree", frozenset((v,)), d, TWO)
    for v in vs:
        if v == root:
            continue
        val, side = min_cut(g, v, root)
        if val < TWO:
            return Violation("cut", side, val, TWO)
    return None
