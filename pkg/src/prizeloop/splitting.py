"""Weighted splitting-off at a vertex, with revertible logs, and LP boosting.

A split ``(e={v,u}, f={v,w}, delta)`` at ``v`` moves ``delta`` of weight from
``e`` and ``f`` onto ``{u,w}``. When ``u == w`` it is degenerate and simply
removes ``delta`` from ``e``.

Connectivity requirements are lists of ``Requirement(a, b, need)``: every cut
separating ``a`` from ``b`` must keep capacity at least ``need``. Two flavours
are provided: all pairwise min-cut values among the other vertices (the
general contract), and root-anchored requirements ``lambda(root, t) >= need_t``
used by boosting and decomposition, which is exactly what their feasibility
arguments rely on and needs far fewer flow computations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from prizeloop.cuts import CapacityGraph, CutError, min_cut
from prizeloop.rational import ONE, TWO, ZERO, Q, edge, q_str, to_q


class SplitError(RuntimeError):
    pass


@dataclass(frozen=True)
class Requirement:
    a: int
    b: int
    need: Q


@dataclass(frozen=True)
class SplitOp:
    at: int
    e: tuple[int, int]
    f: tuple[int, int]
    delta: Q

    @property
    def degenerate(self) -> bool:
        return self.e == self.f

    def others(self) -> tuple[int, int]:
        u = self.e[0] if self.e[1] == self.at else self.e[1]
        w = self.f[0] if self.f[1] == self.at else self.f[1]
        return u, w

    def to_dict(self) -> dict:
        return {
            "at": self.at,
            "e": list(self.e),
            "f": list(self.f),
            "delta": q_str(self.delta),
            "degenerate": self.degenerate,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SplitOp":
        return cls(int(d["at"]), tuple(d["e"]), tuple(d["f"]), to_q(d["delta"]))


@dataclass
class SplitLog:
    at: int
    ops: list[SplitOp] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.ops)

    def replay(self, g: CapacityGraph) -> CapacityGraph:
        out = g.copy()
        for op in self.ops:
            apply_split(out, op)
        return out

    def revert(self, g: CapacityGraph) -> CapacityGraph:
        out = g.copy()
        for op in reversed(self.ops):
            undo_split(out, op)
        return out

    def to_dict(self) -> dict:
        return {"at": self.at, "ops": [op.to_dict() for op in self.ops]}

    @classmethod
    def from_dict(cls, d: dict) -> "SplitLog":
        return cls(int(d["at"]), [SplitOp.from_dict(o) for o in d["ops"]])


def apply_split(g: CapacityGraph, op: SplitOp) -> None:
    v = op.at
    u, w = op.others()
    if op.degenerate:
        g.add(v, u, -op.delta)
        return
    g.add(v, u, -op.delta)
    g.add(v, w, -op.delta)
    g.add(u, w, op.delta)


def undo_split(g: CapacityGraph, op: SplitOp) -> None:
    v = op.at
    u, w = op.others()
    if op.degenerate:
        g.add(v, u, op.delta)
        return
    g.add(u, w, -op.delta)
    g.add(v, u, op.delta)
    g.add(v, w, op.delta)


# ---------------------------------------------------------------------------
# requirements


def pairwise_requirements(g: CapacityGraph, v: int) -> list[Requirement]:
    """Current min-cut value of every pair of vertices other than ``v``."""
    vs = [a for a in g.vertices if a != v]
    out = []
    for i, a in enumerate(vs):
        for b in vs[i + 1:]:
            val, _ = min_cut(g, a, b)
            if val > 0:
                out.append(Requirement(a, b, val))
    return out


def rooted_requirements(
    v: int, root: int, need: dict[int, Q], beta=ZERO
) -> list[Requirement]:
    """``lambda(root, t) >= need[t]`` for every t other than v and root, plus
    ``lambda(root, v) >= beta`` so the residual weight at v stays reachable."""
    out = [Requirement(root, t, q) for t, q in sorted(need.items()) if t not in (v, root) and q > 0]
    if beta > 0 and v != root:
        out.append(Requirement(root, v, Q(beta)))
    return out


def violated_requirements(g: CapacityGraph, reqs: list[Requirement]) -> list[tuple[Requirement, Q]]:
    bad = []
    for req in reqs:
        val, _ = min_cut(g, req.a, req.b, limit=req.need)
        if val < req.need:
            bad.append((req, val))
    return bad


def _split_worst_violation(g: CapacityGraph, reqs: list[Requirement]) -> Q:
    worst = ZERO
    for req in reqs:
        val, _ = min_cut(g, req.a, req.b, limit=req.need)
        if req.need - val > worst:
            worst = req.need - val
    return worst


def _check_incident(g: CapacityGraph, v: int, e, f) -> tuple[int, int]:
    e = edge(*e)
    f = edge(*f)
    if v not in e or v not in f:
        raise SplitError(f"edges {e} and {f} must both be incident to {v}")
    u = e[0] if e[1] == v else e[1]
    w = f[0] if f[1] == v else f[1]
    return u, w


def max_feasible_delta(
    g: CapacityGraph,
    v: int,
    e,
    f,
    requirements: list[Requirement] | None = None,
    cap=None,
) -> Q:
    """Largest delta for which splitting (e, f, delta) at v keeps every
    requirement (default: all pairwise min-cut values among V minus v).

    Trial-and-shrink: apply the largest admissible delta, find the worst
    requirement deficit, and shrink delta by the deficit divided by the cut's
    slope. Every deficit comes from a cut whose value falls linearly in delta,
    so each step lands exactly on the next breakpoint and the loop ends at the
    exact maximum.
    """
    u, w = _check_incident(g, v, e, f)
    if requirements is None:
        requirements = pairwise_requirements(g, v)
    degenerate = u == w
    slope = ONE if degenerate else TWO
    delta = g.weight(v, u) if degenerate else min(g.weight(v, u), g.weight(v, w))
    if cap is not None:
        delta = min(delta, Q(cap))
    if delta <= 0:
        return ZERO
    while delta > 0:
        trial = g.copy()
        apply_split(trial, SplitOp(v, edge(v, u), edge(v, w), delta))
        worst = _split_worst_violation(trial, requirements)
        if worst == 0:
            return delta
        delta -= worst / slope
    return ZERO


def complete_split(
    g: CapacityGraph,
    v: int,
    beta=ZERO,
    requirements: list[Requirement] | None = None,
    *,
    allow_degenerate: bool = True,
    max_ops: int | None = None,
) -> tuple[CapacityGraph, SplitLog]:
    """Split off at v until its weighted degree equals beta.

    Neighbour pairs are scanned in lexicographic order, each split by its
    maximum feasible amount (capped by the remaining excess), and the scan is
    repeated until the degree reaches beta. Degenerate splits are only tried
    when a full scan makes no progress.
    """
    beta = Q(beta)
    deg = g.degree(v)
    if beta < 0 or beta > deg:
        raise SplitError(f"beta {beta} outside [0, {deg}]")
    out = g.copy()
    log = SplitLog(v)
    if deg == beta:
        return out, log
    if requirements is None:
        requirements = pairwise_requirements(g, v)
    if max_ops is None:
        max_ops = 4 * len(g.vertices) ** 3 + 16
    while out.degree(v) > beta:
        progressed = False
        nbrs = out.neighbors(v)
        for i, u in enumerate(nbrs):
            for w in nbrs[i + 1:]:
                excess = (out.degree(v) - beta) / 2
                if excess <= 0:
                    break
                if out.weight(v, u) == 0 or out.weight(v, w) == 0:
                    continue
                d = max_feasible_delta(out, v, (v, u), (v, w), requirements, cap=excess)
                if d > 0:
                    op = SplitOp(v, edge(v, u), edge(v, w), d)
                    apply_split(out, op)
                    log.ops.append(op)
                    progressed = True
            if out.degree(v) <= beta:
                break
        if not progressed and allow_degenerate:
            for u in out.neighbors(v):
                excess = out.degree(v) - beta
                if excess <= 0:
                    break
                d = max_feasible_delta(out, v, (v, u), (v, u), requirements, cap=excess)
                if d > 0:
                    op = SplitOp(v, edge(v, u), edge(v, u), d)
                    apply_split(out, op)
                    log.ops.append(op)
                    progressed = True
        if not progressed:
            raise SplitError(
                f"no feasible split at {v}: degree {out.degree(v)} still above {beta}"
            )
        if len(log.ops) > max_ops:
            raise SplitError(f"complete split at {v} exceeded {max_ops} operations")
    return out, log


# ---------------------------------------------------------------------------
# degree reduction and boosting


def reduce_degrees(
    g: CapacityGraph,
    root: int,
    targets: dict[int, Q],
    cover: dict[int, Q],
    *,
    allow_degenerate: bool = False,
    root_first: bool = False,
) -> tuple[CapacityGraph, list[SplitLog]]:
    """Split every vertex whose degree exceeds its target down to the target.

    Non-root vertices go first in id order, the root last. Throughout, each
    vertex t keeps ``lambda(root, t) >= cover[t]``; at the root the same
    requirement is enforced directly on the sets that lose weight.
    """
    out = g.copy()
    logs = []
    others = [t for t in out.vertices if t != root]
    order = [root] + others if root_first else others + [root]
    for s in order:
        tgt = Q(targets[s])
        if out.degree(s) <= tgt:
            continue
        if s == root:
            # sets losing weight at the root are exactly the sets X without
            # the root that contain both partners, so lambda(root, t) is
            # still the right quantity to watch
            reqs = [Requirement(root, t, q) for t, q in sorted(cover.items()) if t != root and q > 0]
        else:
            reqs = rooted_requirements(s, root, cover, tgt)
        out, log = complete_split(out, s, tgt, reqs, allow_degenerate=allow_degenerate)
        logs.append(log)
    return out, logs


def boost_solution(inst, sol, lam):
    """Scale x by lam, cap y at 1, and split off to restore the degree rows.

    Returns a new ``LpSolution`` feasible for the PCTSP relaxation with
    ``y_new = min(1, lam * y)`` and edge cost at most ``lam`` times the old.
    """
    from prizeloop.lp import LpSolution, check_feasible, lp_objective

    lam = to_q(lam)
    if lam < 1:
        raise ValueError("boost factor must be at least 1")
    check_feasible(inst, sol)
    r = inst.root
    if lam == 1:
        return LpSolution(dict(sol.x), dict(sol.y), sol.objective, sol.relaxation, False)
    y = {v: min(ONE, lam * sol.y.get(v, ZERO)) for v in inst.vertices}
    y[r] = ONE
    g = CapacityGraph(inst.vertices, {e: lam * w for e, w in sol.x.items() if w})
    targets = {v: 2 * y[v] for v in inst.vertices}
    targets[r] = min(TWO, g.degree(r))
    cover = {v: 2 * y[v] for v in inst.vertices if v != r}
    try:
        # root edges are not pinned by a degree row, so a degenerate split
        # on them can be the only way forward; it only lowers the root degree
        g, _ = reduce_degrees(g, r, targets, cover, allow_degenerate=True)
    except (SplitError, CutError) as exc:  # pragma: no cover - feasible splits always exist here
        raise SplitError(f"boosting failed: {exc}") from exc
    x = g.weights()
    return LpSolution(x, y, lp_objective(inst, x, y), sol.relaxation, False)
