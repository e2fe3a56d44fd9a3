"""Anchored-tree decomposition of a PCTSP LP point.

Vertices outside the anchor set U are split off completely, one at a time in
order of increasing y; the surviving edges become single-edge trees, and the
logged splits are then undone in reverse while the trees are rewired so that
they cover each restored vertex with total weight exactly its y value.
"""

from __future__ import annotations

from collections import defaultdict, deque
from dataclasses import dataclass, field

from prizeloop.cuts import CapacityGraph, held_karp_violation
from prizeloop.instance import Instance, RootSplit, root_split_transform
from prizeloop.lp import LpSolution, check_feasible
from prizeloop.rational import ONE, ZERO, Q, edge, q_str
from prizeloop.splitting import SplitLog, complete_split, rooted_requirements


class DecompositionError(RuntimeError):
    pass


def tree_vertices(edges) -> set[int]:
    out = set()
    for a, b in edges:
        out.add(a)
        out.add(b)
    return out


def is_tree(edges, extra_vertices=()) -> bool:
    vs = tree_vertices(edges) | set(extra_vertices)
    if not vs:
        return True
    if len(edges) != len(vs) - 1:
        return False
    adj = defaultdict(list)
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    start = next(iter(vs))
    seen = {start}
    stack = [start]
    while stack:
        a = stack.pop()
        for b in adj[a]:
            if b not in seen:
                seen.add(b)
                stack.append(b)
    return seen == vs


def tree_path(edges, a: int, b: int) -> list[tuple[int, int]]:
    """Edges of the unique a-b path in a tree, in order from a."""
    adj = defaultdict(list)
    for x, y in edges:
        adj[x].append(y)
        adj[y].append(x)
    parent = {a: None}
    queue = deque([a])
    while queue:
        x = queue.popleft()
        if x == b:
            break
        for y in sorted(adj[x]):
            if y not in parent:
                parent[y] = x
                queue.append(y)
    if b not in parent:
        raise DecompositionError(f"{a} and {b} are not connected in the tree")
    path = []
    x = b
    while parent[x] is not None:
        path.append(edge(parent[x], x))
        x = parent[x]
    path.reverse()
    return path


@dataclass(frozen=True)
class AnchoredTree:
    edges: frozenset
    anchors: tuple[int, int]
    weight: Q

    @property
    def vertices(self) -> set[int]:
        return tree_vertices(self.edges)

    def to_dict(self) -> dict:
        return {
            "edges": [list(e) for e in sorted(self.edges)],
            "anchors": list(self.anchors),
            "weight": q_str(self.weight),
        }


@dataclass
class AnchoredTreeDecomposition:
    trees: list[AnchoredTree]
    e0: tuple[int, int]
    U: frozenset
    origin: LpSolution
    logs: list[SplitLog] = field(default_factory=list, repr=False)

    def anchor_point(self) -> list[tuple[int, int, Q]]:
        """The Held-Karp point on the anchor multigraph: one parallel edge per
        tree plus e0 with weight 1."""
        z = [(t.anchors[0], t.anchors[1], t.weight) for t in self.trees]
        z.append((self.e0[0], self.e0[1], ONE))
        return z

    def num_ops(self) -> int:
        return sum(len(log) for log in self.logs)

    def to_dict(self, trace: bool = False) -> dict:
        out = {
            "U": sorted(self.U),
            "e0": list(self.e0),
            "trees": [t.to_dict() for t in self.trees],
        }
        if trace:
            out["split_logs"] = [log.to_dict() for log in self.logs]
        return out


def backbone_limbs(tree: AnchoredTree) -> tuple[list[tuple[int, int]], set[tuple[int, int]]]:
    """Backbone (ordered anchor-to-anchor path) and limbs (everything else)."""
    a, b = tree.anchors
    vs = tree.vertices
    if a not in vs or b not in vs:
        raise DecompositionError(f"anchors {tree.anchors} not in tree")
    bb = tree_path(tree.edges, a, b)
    return bb, set(tree.edges) - set(bb)


# ---------------------------------------------------------------------------
# construction


class _Tree:
    __slots__ = ("edges", "mu")

    def __init__(self, edges: set, mu: Q):
        self.edges = edges
        self.mu = mu

    def vertices(self) -> set[int]:
        return tree_vertices(self.edges)


def _component(edges, start: int) -> set[int]:
    adj = defaultdict(list)
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    seen = {start}
    stack = [start]
    while stack:
        a = stack.pop()
        for b in adj[a]:
            if b not in seen:
                seen.add(b)
                stack.append(b)
    return seen


def _take(trees: list[_Tree], pred, amount: Q) -> list[_Tree]:
    """Greedy minimal prefix of matching trees with total weight ``amount``;
    the last one is split so the total is exact."""
    chosen = []
    total = ZERO
    for t in trees:
        if total >= amount:
            break
        if pred(t):
            chosen.append(t)
            total += t.mu
    if total < amount:
        raise DecompositionError(f"not enough tree weight: need {amount}, found {total}")
    excess = total - amount
    if excess > 0:
        last = chosen[-1]
        trees.append(_Tree(set(last.edges), excess))
        last.mu -= excess
    return chosen


def _pick_e0(sol: LpSolution, U) -> tuple[int, int]:
    for e in sorted(sol.x):
        if e[0] in U and e[1] in U and sol.x[e] >= 1:
            return e
    raise DecompositionError("no edge with weight at least 1 between anchor vertices")


def decompose(
    inst: Instance, sol: LpSolution, U, e0: tuple[int, int] | None = None, *, check: bool = True
) -> AnchoredTreeDecomposition:
    """Decompose a feasible PCTSP point into trees anchored twice in U."""
    U = frozenset(U)
    if check:
        check_feasible(inst, sol)
    if not U <= set(inst.vertices):
        raise DecompositionError("U must be a subset of the vertices")
    for u in U:
        if sol.y.get(u, ZERO) != 1:
            raise DecompositionError(f"anchor {u} has y = {sol.y.get(u, ZERO)}, expected 1")
    if e0 is None:
        e0 = _pick_e0(sol, U)
    e0 = edge(*e0)
    if e0[0] not in U or e0[1] not in U or sol.x.get(e0, ZERO) < 1:
        raise DecompositionError(f"e0 = {e0} must join two anchors and carry weight >= 1")
    ref = inst.root if inst.root in U else min(U)
    g = CapacityGraph(inst.vertices, {e: w for e, w in sol.x.items() if w})
    order = sorted((v for v in inst.vertices if v not in U), key=lambda v: (sol.y[v], v))
    alive = set(inst.vertices)
    logs: list[SplitLog] = []
    for s in order:
        alive.discard(s)
        need = {t: 2 * sol.y[t] for t in alive if t != ref}
        if g.degree(s) == 0:
            logs.append(SplitLog(s))
            continue
        reqs = rooted_requirements(s, ref, need)
        g, log = complete_split(g, s, ZERO, reqs, allow_degenerate=False)
        logs.append(log)
    trees: list[_Tree] = []
    for e, w in sorted(g.weights().items()):
        if e[0] not in U or e[1] not in U:  # pragma: no cover - all outside vertices are isolated
            raise DecompositionError(f"edge {e} survived elimination")
        if e == e0:
            w = w - 1
        if w > 0:
            trees.append(_Tree({e}, w))
    for s, log in zip(reversed(order), reversed(logs)):
        _restore_vertex(trees, s, log)
    merged: dict[frozenset, Q] = {}
    for t in trees:
        if t.mu > 0:
            key = frozenset(t.edges)
            merged[key] = merged.get(key, ZERO) + t.mu
    out = []
    for edges, mu in merged.items():
        anchors = sorted(tree_vertices(edges) & U)
        if len(anchors) != 2:  # pragma: no cover - guarded by the invariant checks
            raise DecompositionError(f"tree with anchors {anchors}")
        out.append(AnchoredTree(edges, (anchors[0], anchors[1]), mu))
    out.sort(key=lambda t: (sorted(t.edges), t.weight))
    return AnchoredTreeDecomposition(out, e0, U, sol, logs)


def _restore_vertex(trees: list[_Tree], s: int, log: SplitLog) -> None:
    spare: dict[int, Q] = defaultdict(lambda: ZERO)
    for op in reversed(log.ops):
        if op.degenerate:  # pragma: no cover - excluded when splitting
            raise DecompositionError("degenerate split cannot be reverted")
        u, w = op.others()
        uw = edge(u, w)
        chosen = _take(trees, lambda t: uw in t.edges, op.delta)
        for t in chosen:
            t.edges.discard(uw)
            if s not in t.vertices():
                t.edges.add(edge(s, u))
                t.edges.add(edge(s, w))
            else:
                side = _component(t.edges, u)
                if s in side:
                    t.edges.add(edge(s, w))
                    spare[u] += t.mu
                else:
                    t.edges.add(edge(s, u))
                    spare[w] += t.mu
    for w in sorted(spare):
        amount = spare[w]
        if amount <= 0:
            continue
        chosen = _take(
            trees, lambda t: w in t.vertices() and s not in t.vertices(), amount
        )
        for t in chosen:
            t.edges.add(edge(s, w))


# ---------------------------------------------------------------------------
# invariants


def decomposition_violations(dec: AnchoredTreeDecomposition, inst: Instance | None = None) -> list[str]:
    """Names of violated decomposition properties (empty when all hold)."""
    bad = []
    sol = dec.origin
    acc: dict[tuple[int, int], Q] = defaultdict(lambda: ZERO)
    for t in dec.trees:
        if not (0 < t.weight <= 1):
            bad.append(f"weight {t.weight} outside (0, 1]")
        if not is_tree(t.edges):
            bad.append(f"not a tree: {sorted(t.edges)}")
        anchors = sorted(t.vertices & dec.U)
        if len(anchors) != 2 or tuple(anchors) != t.anchors:
            bad.append(f"anchors {anchors} of tree {sorted(t.edges)}")
        for e in t.edges:
            acc[e] += t.weight
    acc[dec.e0] += ONE
    keys = set(acc) | {e for e, w in sol.x.items() if w}
    for e in keys:
        if acc.get(e, ZERO) != sol.x.get(e, ZERO):
            bad.append(f"conic identity fails on {e}: {acc.get(e, ZERO)} != {sol.x.get(e, ZERO)}")
    vertices = inst.vertices if inst is not None else sorted(sol.y)
    for v in vertices:
        if v in dec.U:
            continue
        cover = sum((t.weight for t in dec.trees if v in t.vertices), ZERO)
        if cover != sol.y.get(v, ZERO):
            bad.append(f"coverage of {v}: {cover} != {sol.y.get(v, ZERO)}")
    root = inst.root if inst is not None and inst.root in dec.U else min(dec.U)
    viol = held_karp_violation(dec.anchor_point(), dec.U, root)
    if viol is not None:
        bad.append(f"anchor point outside Held-Karp polytope: {viol.kind} at {sorted(viol.vertices)}")
    return bad


# ---------------------------------------------------------------------------
# trees through the root


@dataclass(frozen=True)
class RootTree:
    edges: frozenset
    weight: Q
    root: int

    @property
    def vertices(self) -> set[int]:
        return tree_vertices(self.edges) | {self.root}

    def to_dict(self) -> dict:
        return {"edges": [list(e) for e in sorted(self.edges)], "weight": q_str(self.weight)}


def _contract_tree(edges, back: RootSplit) -> frozenset:
    r, c = back.root, back.copy
    path = tree_path(edges, r, c)
    drop = path[-1]  # the edge entering the copy; it closes the cycle
    out = set()
    for a, b in edges:
        if (a, b) == drop:
            continue
        a, b = back.contract(a), back.contract(b)
        if a != b:
            out.add(edge(a, b))
    return frozenset(out)


def fractional_tree_partition(inst: Instance, sol: LpSolution) -> list[RootTree]:
    """Trees through the root, weights summing to 1, covering each vertex v
    with total weight y_v and using at most x on every edge."""
    aux, aux_sol, back = root_split_transform(inst, sol)
    dec = decompose(aux, aux_sol, {back.root, back.copy}, (back.root, back.copy), check=False)
    merged: dict[frozenset, Q] = {}
    for t in dec.trees:
        key = _contract_tree(t.edges, back)
        merged[key] = merged.get(key, ZERO) + t.weight
    out = [RootTree(k, w, inst.root) for k, w in merged.items()]
    out.sort(key=lambda t: (sorted(t.edges), t.weight))
    return out


def partition_violations(inst: Instance, sol: LpSolution, trees: list[RootTree]) -> list[str]:
    bad = []
    if sum((t.weight for t in trees), ZERO) != 1:
        bad.append("weights do not sum to 1")
    acc: dict[tuple[int, int], Q] = defaultdict(lambda: ZERO)
    for t in trees:
        if not is_tree(t.edges, (t.root,)):
            bad.append(f"not a tree: {sorted(t.edges)}")
        for e in t.edges:
            acc[e] += t.weight
    for e, w in acc.items():
        if w > sol.x.get(e, ZERO):
            bad.append(f"edge {e} used {w} > {sol.x.get(e, ZERO)}")
    for v in inst.vertices:
        cover = sum((t.weight for t in trees if v in t.vertices), ZERO)
        if cover != sol.y.get(v, ZERO):
            bad.append(f"coverage of {v}: {cover} != {sol.y.get(v, ZERO)}")
    return bad
