"""Instances: representation, validation, metric closure, generation, I/O and
the root-split transform that guarantees a unit edge between two core vertices."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from prizeloop.rational import ONE, TWO, ZERO, Q, edge, q_str, snap, to_q

METRIC = "metric-complete"
GRAPH = "general-graph"
KINDS = (METRIC, GRAPH)


class InstanceError(ValueError):
    """Raised for malformed or contract-violating instances."""


@dataclass(frozen=True, eq=False)
class Instance:
    name: str
    vertices: tuple[int, ...]
    root: int
    dist: dict[tuple[int, int], Q]
    penalty: dict[int, Q]
    kind: str = METRIC
    coords: dict[int, tuple[Q, Q]] | None = None
    # closure edge -> one shortest path in the original graph (vertex list)
    paths: dict[tuple[int, int], tuple[int, ...]] | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return len(self.vertices)

    def d(self, u: int, v: int) -> Q:
        if u == v:
            return ZERO
        return self.dist[edge(u, v)]

    def has_edge(self, u: int, v: int) -> bool:
        return u != v and edge(u, v) in self.dist

    def edges(self) -> list[tuple[int, int]]:
        return sorted(self.dist)

    def non_root(self) -> list[int]:
        return [v for v in self.vertices if v != self.root]

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented
        return (
            self.name == other.name
            and self.vertices == other.vertices
            and self.root == other.root
            and self.kind == other.kind
            and self.dist == other.dist
            and self.penalty == other.penalty
            and self.coords == other.coords
        )

    __hash__ = None  # type: ignore[assignment]

    def validate(self) -> "Instance":
        validate_instance(self)
        return self


def validate_instance(inst: Instance) -> None:
    vs = set(inst.vertices)
    if len(vs) != len(inst.vertices):
        raise InstanceError("duplicate vertex ids")
    if not inst.vertices:
        raise InstanceError("instance has no vertices")
    if inst.root not in vs:
        raise InstanceError(f"root {inst.root} is not a vertex")
    if inst.kind not in KINDS:
        raise InstanceError(f"unknown kind {inst.kind!r}")
    for v in inst.vertices:
        if v not in inst.penalty:
            raise InstanceError(f"missing penalty for vertex {v}")
    for v, p in inst.penalty.items():
        if v not in vs:
            raise InstanceError(f"penalty given for unknown vertex {v}")
        if p < 0:
            raise InstanceError(f"negative penalty at vertex {v}")
    if inst.penalty[inst.root] != 0:
        raise InstanceError("root penalty must be 0")
    for (u, v), c in inst.dist.items():
        if u >= v or u not in vs or v not in vs:
            raise InstanceError(f"bad edge key {(u, v)}")
        if c < 0:
            raise InstanceError(f"negative length on edge {(u, v)}")
    if inst.kind == METRIC:
        n = inst.n
        if len(inst.dist) != n * (n - 1) // 2:
            raise InstanceError("metric-complete instance must list every pair")
        bad = find_triangle_violation(inst)
        if bad is not None:
            u, v, w = bad
            raise InstanceError(
                f"triangle inequality violated on triple ({u}, {v}, {w}): "
                f"d({u},{w}) > d({u},{v}) + d({v},{w})"
            )


def find_triangle_violation(inst: Instance) -> tuple[int, int, int] | None:
    """First triple (u, v, w) with d(u,w) > d(u,v) + d(v,w), or None."""
    vs = inst.vertices
    for u in vs:
        for w in vs:
            if w <= u:
                continue
            duw = inst.d(u, w)
            for v in vs:
                if v == u or v == w:
                    continue
                if duw > inst.d(u, v) + inst.d(v, w):
                    return (u, v, w)
    return None


# ---------------------------------------------------------------------------
# metric closure


def metric_closure(inst: Instance) -> Instance:
    """All-pairs shortest-path completion of a connected graph instance.

    Records one shortest path per closure edge so trees built on the closure
    can be mapped back onto original edges.
    """
    vs = list(inst.vertices)
    idx = {v: i for i, v in enumerate(vs)}
    n = len(vs)
    inf = None
    dist: list[list[Q | None]] = [[inf] * n for _ in range(n)]
    nxt: list[list[int | None]] = [[None] * n for _ in range(n)]
    for i in range(n):
        dist[i][i] = ZERO
        nxt[i][i] = i
    for (u, v), c in inst.dist.items():
        i, j = idx[u], idx[v]
        if dist[i][j] is None or c < dist[i][j]:
            dist[i][j] = dist[j][i] = c
            nxt[i][j] = j
            nxt[j][i] = i
    for k in range(n):
        dk = dist[k]
        for i in range(n):
            dik = dist[i][k]
            if dik is None:
                continue
            di = dist[i]
            for j in range(n):
                dkj = dk[j]
                if dkj is None:
                    continue
                cand = dik + dkj
                if di[j] is None or cand < di[j]:
                    di[j] = cand
                    nxt[i][j] = nxt[i][k]
    new_dist: dict[tuple[int, int], Q] = {}
    paths: dict[tuple[int, int], tuple[int, ...]] = {}
    for i in range(n):
        for j in range(i + 1, n):
            if dist[i][j] is None:
                raise InstanceError(
                    f"graph is disconnected: no path between {vs[i]} and {vs[j]}"
                )
            new_dist[edge(vs[i], vs[j])] = dist[i][j]
            walk = [i]
            cur = i
            while cur != j:
                cur = nxt[cur][j]
                walk.append(cur)
            paths[edge(vs[i], vs[j])] = tuple(vs[t] for t in walk) if vs[i] < vs[j] else tuple(
                vs[t] for t in reversed(walk)
            )
    return Instance(
        name=inst.name,
        vertices=inst.vertices,
        root=inst.root,
        dist=new_dist,
        penalty=dict(inst.penalty),
        kind=METRIC,
        coords=inst.coords,
        paths=paths,
    )


def is_connected(inst: Instance) -> bool:
    adj: dict[int, list[int]] = {v: [] for v in inst.vertices}
    for u, v in inst.dist:
        adj[u].append(v)
        adj[v].append(u)
    seen = {inst.root}
    stack = [inst.root]
    while stack:
        u = stack.pop()
        for w in adj[u]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return len(seen) == inst.n


# ---------------------------------------------------------------------------
# construction helpers


def from_coordinates(
    points: Iterable[tuple[float, float]] | dict,
    penalties,
    root: int = 0,
    name: str = "euclidean",
) -> Instance:
    """Euclidean instance; distances rounded to denominator 10**6, then closed.

    The closure repairs the (rare) triangle violations that rounding introduces.
    """
    if isinstance(points, dict):
        items = sorted(points.items())
    else:
        items = list(enumerate(points))
    vs = tuple(v for v, _ in items)
    coords = {v: (to_q(x), to_q(y)) for v, (x, y) in items}
    dist = {}
    for a in range(len(items)):
        for b in range(a + 1, len(items)):
            (u, (x1, y1)), (v, (x2, y2)) = items[a], items[b]
            dx = float(to_q(x1)) - float(to_q(x2))
            dy = float(to_q(y1)) - float(to_q(y2))
            dist[edge(u, v)] = snap(math.hypot(dx, dy))
    pen = penalties if isinstance(penalties, dict) else dict(zip(vs, penalties))
    pen = {v: to_q(p) for v, p in pen.items()}
    raw = Instance(name, vs, root, dist, pen, GRAPH, coords)
    closed = metric_closure(raw)
    return Instance(name, vs, root, closed.dist, pen, METRIC, coords)


def generate_instance(
    n: int,
    family: str = "euclidean",
    penalty_scale=1,
    seed: int = 0,
) -> Instance:
    """Seeded random metric instance with root 0 and uniform penalties."""
    if n < 1:
        raise InstanceError("n must be at least 1")
    rng = np.random.default_rng(seed)
    scale = float(to_q(penalty_scale))
    name = f"{family}-n{n}-s{seed}"
    if family == "euclidean":
        pts = rng.random((n, 2))
        pens = [snap(p) for p in rng.random(n) * scale]
        pens[0] = ZERO
        points = [(snap(x), snap(y)) for x, y in pts]
        inst = from_coordinates(points, pens, 0, name)
    elif family == "random-metric":
        weights = rng.uniform(0.1, 1.0, size=(n, n))
        pens = [snap(p) for p in rng.random(n) * scale]
        pens[0] = ZERO
        dist = {edge(i, j): snap(weights[i, j]) for i in range(n) for j in range(i + 1, n)}
        raw = Instance(name, tuple(range(n)), 0, dist, dict(enumerate(pens)), GRAPH)
        closed = metric_closure(raw)
        inst = Instance(name, raw.vertices, 0, closed.dist, raw.penalty, METRIC)
    else:
        raise InstanceError(f"unknown family {family!r}")
    return inst.validate()


def generate_graph_instance(
    n: int,
    extra_edge_prob: float = 0.25,
    penalty_scale=1,
    seed: int = 0,
    max_weight: int = 10,
) -> Instance:
    """Sparse connected non-metric graph: a random spanning tree plus random
    extra edges, integer lengths in [1, max_weight]."""
    if n < 1:
        raise InstanceError("n must be at least 1")
    rng = np.random.default_rng(seed)
    dist: dict[tuple[int, int], Q] = {}
    order = rng.permutation(n)
    for k in range(1, n):
        parent = order[rng.integers(0, k)]
        dist[edge(int(order[k]), int(parent))] = Q(int(rng.integers(1, max_weight + 1)))
    for i in range(n):
        for j in range(i + 1, n):
            if (i, j) not in dist and rng.random() < extra_edge_prob:
                dist[(i, j)] = Q(int(rng.integers(1, max_weight + 1)))
    pens = {v: snap(p) for v, p in enumerate(rng.random(n) * float(to_q(penalty_scale)))}
    pens[0] = ZERO
    return Instance(f"graph-n{n}-s{seed}", tuple(range(n)), 0, dist, pens, GRAPH).validate()


# ---------------------------------------------------------------------------
# JSON / TSPLIB-like I/O


def instance_to_dict(inst: Instance) -> dict:
    verts = []
    for v in inst.vertices:
        rec = {"id": v, "penalty": q_str(inst.penalty[v])}
        if inst.coords is not None and v in inst.coords:
            rec["x"] = q_str(inst.coords[v][0])
            rec["y"] = q_str(inst.coords[v][1])
        verts.append(rec)
    rows = []
    for i, v in enumerate(inst.vertices):
        row = []
        for u in inst.vertices[:i]:
            key = edge(u, v)
            row.append(q_str(inst.dist[key]) if key in inst.dist else None)
        rows.append(row)
    return {
        "name": inst.name,
        "root": inst.root,
        "kind": inst.kind,
        "vertices": verts,
        "dist": rows,
    }


def instance_from_dict(data: dict) -> Instance:
    try:
        name = str(data.get("name", "instance"))
        if "root" not in data:
            raise InstanceError("missing root")
        root = int(data["root"])
        kind = data.get("kind", METRIC)
        verts = data["vertices"]
        vs = tuple(int(r["id"]) for r in verts)
        pen = {int(r["id"]): to_q(r.get("penalty", 0)) for r in verts}
        coords = None
        if all("x" in r and "y" in r for r in verts) and verts:
            coords = {int(r["id"]): (to_q(r["x"]), to_q(r["y"])) for r in verts}
        rows = data.get("dist")
    except InstanceError:
        raise
    except (KeyError, TypeError, ValueError, ZeroDivisionError) as exc:
        raise InstanceError(f"cannot parse instance: {exc}") from exc
    if rows is None:
        if coords is None:
            raise InstanceError("instance needs either 'dist' or coordinates")
        inst = from_coordinates(coords, pen, root, name)
        inst.validate()
        return inst
    dist = _parse_dist_rows(rows, vs)
    inst = Instance(name, vs, root, dist, pen, kind, coords)
    inst.validate()
    return inst


def _parse_dist_rows(rows, vs) -> dict[tuple[int, int], Q]:
    n = len(vs)
    if len(rows) != n:
        raise InstanceError(f"dist has {len(rows)} rows, expected {n}")
    dist = {}
    for i, row in enumerate(rows):
        if len(row) == n:
            # full matrix row: keep lower triangle, check symmetry
            for j in range(n):
                a = rows[i][j]
                b = rows[j][i] if len(rows[j]) == n else None
                if b is not None and a is not None and to_q(a) != to_q(b):
                    raise InstanceError(
                        f"asymmetric distance between {vs[i]} and {vs[j]}"
                    )
            row = row[:i]
        elif len(row) != i:
            raise InstanceError(f"dist row {i} has {len(row)} entries, expected {i}")
        for j, val in enumerate(row):
            if val is None:
                continue
            try:
                dist[edge(vs[j], vs[i])] = to_q(val)
            except (ValueError, ZeroDivisionError) as exc:
                raise InstanceError(f"bad distance {val!r}: {exc}") from exc
    return dist


def dumps_instance(inst: Instance) -> str:
    return json.dumps(instance_to_dict(inst), indent=1) + "\n"


def save_instance(inst: Instance, path) -> None:
    Path(path).write_text(dumps_instance(inst))


def load_instance(path, format: str | None = None) -> Instance:
    """Read an instance from ``json`` (canonical) or ``tsplib-pc`` text."""
    p = Path(path)
    if not p.exists():
        raise InstanceError(f"no such file: {p}")
    text = p.read_text()
    fmt = format or ("json" if p.suffix.lower() == ".json" else "tsplib-pc")
    if fmt == "json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InstanceError(f"cannot parse JSON: {exc}") from exc
        return instance_from_dict(data)
    if fmt == "tsplib-pc":
        return parse_tsplib_pc(text, default_name=p.stem)
    raise InstanceError(f"unknown format {fmt!r}")


_KEY = re.compile(r"^\s*([A-Z_]+)\s*:\s*(.*?)\s*$")


def parse_tsplib_pc(text: str, default_name: str = "tsplib") -> Instance:
    """TSPLIB-style text with an extra PENALTY_SECTION (``id penalty`` lines).

    Supports EDGE_WEIGHT_TYPE EUC_2D (NODE_COORD_SECTION) and EXPLICIT with
    EDGE_WEIGHT_FORMAT FULL_MATRIX or LOWER_DIAG_ROW. Node ids are 1-based in
    the file and shifted to 0-based; ``ROOT`` defaults to the first node.
    """
    header: dict[str, str] = {}
    sections: dict[str, list[str]] = {}
    current = None
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line == "EOF":
            continue
        m = _KEY.match(line)
        if m:
            header[m.group(1)] = m.group(2)
            current = None
            continue
        if line.endswith("_SECTION"):
            current = line
            sections[current] = []
            continue
        if current is None:
            raise InstanceError(f"unexpected line: {line!r}")
        sections[current].append(line)
    try:
        n = int(header["DIMENSION"])
    except (KeyError, ValueError) as exc:
        raise InstanceError("missing or bad DIMENSION") from exc
    vs = tuple(range(n))
    pen = {v: ZERO for v in vs}
    for line in sections.get("PENALTY_SECTION", []):
        i, p = line.split()[:2]
        pen[int(i) - 1] = to_q(p)
    root = int(header.get("ROOT", "1")) - 1
    name = header.get("NAME", default_name)
    wtype = header.get("EDGE_WEIGHT_TYPE", "EUC_2D")
    if wtype == "EUC_2D":
        coords = {}
        for line in sections.get("NODE_COORD_SECTION", []):
            i, x, y = line.split()[:3]
            coords[int(i) - 1] = (to_q(x), to_q(y))
        if len(coords) != n:
            raise InstanceError("NODE_COORD_SECTION does not match DIMENSION")
        inst = from_coordinates(coords, pen, root, name)
    elif wtype == "EXPLICIT":
        nums = " ".join(sections.get("EDGE_WEIGHT_SECTION", [])).split()
        fmt = header.get("EDGE_WEIGHT_FORMAT", "FULL_MATRIX")
        it = iter(nums)
        rows: list[list[str]] = []
        try:
            if fmt == "FULL_MATRIX":
                rows = [[next(it) for _ in range(n)] for _ in range(n)]
            elif fmt == "LOWER_DIAG_ROW":
                rows = [[next(it) for _ in range(i + 1)][:i] for i in range(n)]
            else:
                raise InstanceError(f"unsupported EDGE_WEIGHT_FORMAT {fmt}")
        except StopIteration as exc:
            raise InstanceError("EDGE_WEIGHT_SECTION too short") from exc
        dist = _parse_dist_rows(rows, vs)
        inst = Instance(name, vs, root, dist, pen, METRIC)
    else:
        raise InstanceError(f"unsupported EDGE_WEIGHT_TYPE {wtype}")
    inst.validate()
    return inst


# ---------------------------------------------------------------------------
# root split


@dataclass(frozen=True)
class RootSplit:
    root: int
    copy: int

    def contract(self, v: int) -> int:
        return self.root if v == self.copy else v


def root_split_transform(inst: Instance, sol):
    """Duplicate the root so that the LP point has an edge of weight >= 1 between
    two vertices with y = 1.

    Returns ``(aux_instance, aux_solution, back_map)``. The copy gets penalty 0,
    the same distances as the root and distance 0 to it; every root edge's
    weight is halved onto both copies and the new edge carries
    ``2 - x(delta(root)) / 2``.
    """
    from prizeloop.lp import LpSolution, check_feasible

    check_feasible(inst, sol)
    r = inst.root
    r2 = max(inst.vertices) + 1
    dist = dict(inst.dist)
    for v in inst.vertices:
        if v != r:
            dist[edge(r2, v)] = inst.d(r, v)
    dist[edge(r, r2)] = ZERO
    pen = dict(inst.penalty)
    pen[r2] = ZERO
    coords = None
    if inst.coords is not None:
        coords = dict(inst.coords)
        coords[r2] = inst.coords[r]
    aux = Instance(
        name=inst.name + "+split",
        vertices=inst.vertices + (r2,),
        root=r,
        dist=dist,
        penalty=pen,
        kind=inst.kind,
        coords=coords,
    )
    x = {}
    deg_r = ZERO
    half = Q(1, 2)
    for (a, b), w in sol.x.items():
        if w == 0:
            continue
        if r in (a, b):
            other = b if a == r else a
            deg_r += w
            x[edge(r, other)] = x.get(edge(r, other), ZERO) + w * half
            x[edge(r2, other)] = x.get(edge(r2, other), ZERO) + w * half
        else:
            x[(a, b)] = w
    x[edge(r, r2)] = TWO - deg_r * half
    y = dict(sol.y)
    y[r2] = ONE
    aux_sol = LpSolution(
        x=x,
        y=y,
        objective=sol.objective,
        relaxation=sol.relaxation,
        certified_optimal=False,
    )
    return aux, aux_sol, RootSplit(r, r2)


def unsplit_cycle(cycle: list[int], back: RootSplit) -> list[int]:
    """Contract the root copy into the root and shortcut repeats."""
    seen = set()
    out = []
    for v in cycle:
        v = back.contract(v)
        if v == back.root and out:
            continue
        if v in seen:
            continue
        seen.add(v)
        out.append(v)
    if len(out) > 1:
        out.append(back.root)
    return out
