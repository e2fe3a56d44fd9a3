"""Walk families on the anchor graph and pipage rounding in the spanning-tree
polytope.

Every anchored tree contributes two walks between its anchors: the backbone
plus doubled limbs with weight 3/4 of the tree, and the bare backbone with the
remaining 1/4. Each walk becomes a parallel edge of the anchor multigraph and
the weights form a point of its spanning-tree polytope; pipage rounding turns
that point into a spanning tree, and the union of the selected walks is H.

Tight sets (z(E[S]) = |S| - 1) are found either by scanning all vertex subsets
(small anchor graphs) or by a min-cut on the set function |S| - z(E[S]).
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import mpmath
import numpy as np

from prizeloop.cuts import directed_max_flow
from prizeloop.decomposition import AnchoredTreeDecomposition, backbone_limbs
from prizeloop.instance import Instance
from prizeloop.rational import ONE, ZERO, Q, edge, q_str
from prizeloop.tour import Multigraph

BACKBONE_LIMBS = "backbone+limbs"
BACKBONE = "backbone"
RANDOMIZED = "randomized"
DETERMINISTIC = "deterministic"

ENUMERATION_LIMIT = 16
REL_TOL = 1e-12


class RoundingError(RuntimeError):
    pass


class PolytopeError(ValueError):
    pass


# ---------------------------------------------------------------------------
# walk families


@dataclass(frozen=True)
class Walk:
    edges: tuple  # sorted edge keys, repeated for doubled limbs
    ends: tuple[int, int]
    nu: Q
    tree: int
    variant: str

    @property
    def vertices(self) -> set[int]:
        out = set(self.ends)
        for a, b in self.edges:
            out.add(a)
            out.add(b)
        return out

    def cost(self, inst: Instance) -> Q:
        return sum((inst.d(a, b) for a, b in self.edges), ZERO)

    def to_dict(self) -> dict:
        return {
            "ends": list(self.ends),
            "edges": [list(e) for e in self.edges],
            "nu": q_str(self.nu),
            "tree": self.tree,
            "variant": self.variant,
        }


@dataclass
class WalkFamily:
    walks: list[Walk]
    vertices: tuple  # anchor set, sorted
    e0: tuple[int, int]
    coverage: dict = field(default_factory=dict)  # y of the decomposed point

    @property
    def base_edges(self) -> list[tuple[int, int]]:
        """Anchor-graph edges: one per walk, then e0."""
        return [w.ends for w in self.walks] + [self.e0]

    def z0(self) -> list[Q]:
        return [w.nu for w in self.walks] + [ZERO]

    def to_dict(self) -> dict:
        return {
            "vertices": list(self.vertices),
            "e0": list(self.e0),
            "walks": [w.to_dict() for w in self.walks],
        }


def build_walk_family(dec: AnchoredTreeDecomposition, *, check: bool = True) -> WalkFamily:
    walks = []
    for k, tree in enumerate(dec.trees):
        if not 0 < tree.weight <= 1:
            raise RoundingError(f"tree {k} has weight {tree.weight}")
        a, b = tree.anchors
        if a == b or a not in dec.U or b not in dec.U:
            raise RoundingError(f"tree {k} anchors {tree.anchors} invalid")
        if len(tree.vertices & dec.U) != 2:
            raise RoundingError(f"tree {k} meets the anchor set in more than two vertices")
        bb, limbs = backbone_limbs(tree)
        long = tuple(sorted(list(bb) + [e for e in limbs for _ in range(2)]))
        short = tuple(sorted(bb))
        ends = edge(a, b)
        walks.append(Walk(long, ends, tree.weight * Q(3, 4), k, BACKBONE_LIMBS))
        walks.append(Walk(short, ends, tree.weight * Q(1, 4), k, BACKBONE))
    fam = WalkFamily(walks, tuple(sorted(dec.U)), tuple(dec.e0), dict(dec.origin.y))
    if check:
        bad = walk_family_violations(fam)
        if bad:
            raise RoundingError("; ".join(bad))
    return fam


def walk_family_violations(fam: WalkFamily) -> list[str]:
    from prizeloop.cuts import held_karp_violation

    out = []
    by_tree: dict[int, dict[str, Q]] = {}
    for w in fam.walks:
        by_tree.setdefault(w.tree, {})[w.variant] = w.nu
        deg = Counter()
        for a, b in w.edges:
            deg[a] += 1
            deg[b] += 1
        odd = {v for v, d in deg.items() if d % 2}
        if odd != set(w.ends):
            out.append(f"walk of tree {w.tree} ({w.variant}) has odd vertices {sorted(odd)}")
    for t, nus in by_tree.items():
        if nus.get(BACKBONE_LIMBS, ZERO) != 3 * nus.get(BACKBONE, ZERO):
            out.append(f"tree {t} walk weights are not in ratio 3:1")
    # z0 + e0 is in the Held-Karp polytope of the anchor graph, hence z0 lies
    # in the spanning-tree polytope
    z = [(a, b, w) for (a, b), w in zip(fam.base_edges, fam.z0())]
    z.append((fam.e0[0], fam.e0[1], ONE))
    hk = held_karp_violation(z, fam.vertices, fam.e0[0])
    if hk is not None:
        out.append(f"anchor point with e0 violates Held-Karp: {hk.kind} {sorted(hk.vertices)}")
    return out


# ---------------------------------------------------------------------------
# tight sets


def _check_point(z, ends, vertices) -> None:
    if len(z) != len(ends):
        raise PolytopeError(f"{len(z)} weights for {len(ends)} edges")
    vs = set(vertices)
    for k, ((a, b), w) in enumerate(zip(ends, z)):
        if a == b or a not in vs or b not in vs:
            raise PolytopeError(f"edge {k} = {(a, b)} is not an edge on the vertex set")
        if w < 0 or w > 1:
            raise PolytopeError(f"edge {k} weight {w} outside [0, 1]")


class _SubsetOracle:
    """Slack |S| - 1 - z(E[S]) of every vertex subset, as a table."""

    def __init__(self, z, ends, vertices):
        vs = sorted(vertices)
        self.vs = vs
        self.pos = {v: i for i, v in enumerate(vs)}
        k = len(vs)
        den = 1
        for w in z:
            den = math.lcm(den, int(w.denominator))
        total = sum(z, ZERO)
        if den * (int(total) + k + 2) >= 2**62:
            raise OverflowError("weights too fine for the subset table")
        self.den = den
        masks = np.arange(1 << k, dtype=np.int64)
        size = np.zeros(1 << k, dtype=np.int64)
        bits = []
        for i in range(k):
            b = (masks >> i) & 1
            bits.append(b)
            size += b
        inner = np.zeros(1 << k, dtype=np.int64)
        agg: dict[tuple[int, int], int] = {}
        for (a, b), w in zip(ends, z):
            if w:
                key = (self.pos[a], self.pos[b])
                agg[key] = agg.get(key, 0) + int(w * den)
        for (i, j), w in agg.items():
            inner += w * (bits[i] & bits[j])
        self.masks = masks
        self.slack = (size - 1) * den - inner
        self.slack[0] = 0

    def _mask(self, vertices) -> int:
        m = 0
        for v in vertices:
            m |= 1 << self.pos[v]
        return m

    def _members(self, mask: int) -> frozenset:
        return frozenset(v for i, v in enumerate(self.vs) if mask >> i & 1)

    def min_slack(self, need, avoid=()) -> Q:
        """Least slack over sets containing ``need`` and missing some vertex of ``avoid``."""
        req = self._mask(need)
        sel = (self.masks & req) == req
        av = self._mask(avoid)
        if av & ~req == 0 and avoid:
            return None
        if avoid:
            sel &= (self.masks & av) != av
        return Q(int(self.slack[sel].min()), self.den)

    def minimal_tight(self, need) -> frozenset:
        req = self._mask(need)
        sel = ((self.masks & req) == req) & (self.slack == 0)
        cand = self.masks[sel]
        if cand.size == 0:
            raise PolytopeError("no tight set contains the given vertices")
        m = int(np.bitwise_and.reduce(cand))
        if self.slack[m] != 0:
            raise PolytopeError("tight sets are not closed under intersection; point outside polytope")
        return self._members(m)

    def min_over_all(self) -> tuple[Q, frozenset]:
        """Least slack over non-empty sets (negative means outside the polytope)."""
        s = self.slack.copy()
        s[0] = np.iinfo(np.int64).max
        m = int(np.argmin(s))
        return Q(int(s[m]), self.den), self._members(m)


class _CutOracle:
    """Minimises f(S) = |S| - z(E[S]) over constrained S by one s-t min cut.

    f(S) = sum_{v in S} (1 - d_z(v)/2) + z(delta(S))/2, a cut function plus a
    modular term, so the minimal minimiser is the residual source side.
    """

    SRC = -1
    SNK = -2

    def __init__(self, z, ends, vertices):
        self.vs = sorted(vertices)
        agg: dict[tuple[int, int], Q] = {}
        deg = {v: ZERO for v in self.vs}
        for (a, b), w in zip(ends, z):
            if w:
                key = edge(a, b)
                agg[key] = agg.get(key, ZERO) + w
                deg[a] += w
                deg[b] += w
        self.agg = agg
        self.deg = deg

    def _minimise(self, forced_in, forced_out=()) -> tuple[Q, frozenset]:
        arcs: dict = {}
        const = ZERO
        total = ZERO
        for v in self.vs:
            m = 1 - self.deg[v] / 2
            if m > 0:
                arcs[(v, self.SNK)] = m
                total += m
            elif m < 0:
                arcs[(self.SRC, v)] = -m
                const += m
                total -= m
        for (a, b), w in self.agg.items():
            arcs[(a, b)] = arcs.get((a, b), ZERO) + w / 2
            arcs[(b, a)] = arcs.get((b, a), ZERO) + w / 2
            total += w
        big = total + 1
        for v in forced_in:
            arcs[(self.SRC, v)] = arcs.get((self.SRC, v), ZERO) + big
        for v in forced_out:
            arcs[(v, self.SNK)] = arcs.get((v, self.SNK), ZERO) + big
        value, side = directed_max_flow(arcs, self.SRC, self.SNK)
        return value + const, frozenset(side - {self.SRC})

    def min_slack(self, need, avoid=()) -> Q:
        need = set(need)
        outs = [v for v in avoid if v not in need]
        if avoid and not outs:
            return None
        if not avoid:
            val, _ = self._minimise(need)
            return val - 1
        return min(self._minimise(need, (v,))[0] for v in outs) - 1

    def minimal_tight(self, need) -> frozenset:
        val, side = self._minimise(set(need))
        if val != 1:
            raise PolytopeError(f"least value {val} of |S| - z(E[S]) over sets containing {sorted(need)}")
        return side

    def min_over_all(self) -> tuple[Q, frozenset]:
        best = None
        for v in self.vs:
            val, side = self._minimise({v})
            if best is None or val - 1 < best[0]:
                best = (val - 1, side)
        return best


def _oracle(z, ends, vertices, method: str):
    if method not in ("auto", "enumerate", "cut"):
        raise ValueError(f"unknown tight-set method {method!r}")
    if method == "enumerate" or (method == "auto" and len(vertices) <= ENUMERATION_LIMIT):
        try:
            return _SubsetOracle(z, ends, vertices)
        except OverflowError:
            if method == "enumerate":
                raise
    return _CutOracle(z, ends, vertices)


def spanning_tree_violation(z, ends, vertices, method: str = "auto") -> str | None:
    """None iff z lies in the spanning-tree polytope of the multigraph."""
    z = [Q(w) for w in z]
    vertices = sorted(set(vertices))
    try:
        _check_point(z, ends, vertices)
    except PolytopeError as exc:
        return str(exc)
    total = sum(z, ZERO)
    if total != len(vertices) - 1:
        return f"total weight {total} differs from {len(vertices) - 1}"
    slack, side = _oracle(z, ends, vertices, method).min_over_all()
    if slack < 0:
        return f"set {sorted(side)} has slack {slack}"
    return None


def minimal_tight_set(z, ends, vertices, e: int, method: str = "auto") -> frozenset:
    """Inclusion-minimal tight set containing both endpoints of edge ``e``."""
    z = [Q(w) for w in z]
    if not 0 < z[e] < 1:
        raise PolytopeError(f"edge {e} is not fractional")
    return _oracle(z, ends, sorted(set(vertices)), method).minimal_tight(ends[e])


# ---------------------------------------------------------------------------
# pipage rounding


@dataclass
class PipageStep:
    i: int
    j: int
    tight: frozenset
    up: Q
    down: Q
    moved: Q  # signed change of z_i


def _inside(tight: frozenset, e) -> bool:
    return e[0] in tight and e[1] in tight


def _pick_pair(z, ends, oracle) -> tuple[int, int, frozenset]:
    frac = [k for k, w in enumerate(z) if 0 < w < 1]
    tight = oracle.minimal_tight(ends[frac[0]])
    # shrink to a tight set that is minimal among those spanning a fractional
    # edge; inside it both swap directions have positive room
    checked = {frac[0]}
    changed = True
    while changed:
        changed = False
        for k in frac:
            if k in checked or not _inside(tight, ends[k]):
                continue
            checked.add(k)
            sub = oracle.minimal_tight(ends[k])
            if sub < tight:
                tight = sub
                changed = True
                break
    inside = [k for k in frac if _inside(tight, ends[k])]
    if len(inside) < 2:
        raise PolytopeError("tight set with a single fractional edge; point outside polytope")
    return inside[0], inside[1], tight


def _room(z, ends, oracle, i: int, j: int) -> Q:
    """Largest t with z + t(e_i - e_j) still in the polytope."""
    t = min(1 - z[i], z[j])
    s = oracle.min_slack(ends[i], ends[j])
    if s is not None:
        t = min(t, s)
    return t


def _choose_float_then_exact(objective, a, b) -> int:
    """0 if g(a) <= g(b), else 1; floats first, exact on near ties."""
    ga = objective.value(a)
    gb = objective.value(b)
    scale = max(abs(ga), abs(gb), 1.0)
    if abs(ga - gb) > REL_TOL * scale:
        return 0 if ga < gb else 1
    return 0 if objective.exact(a) <= objective.exact(b) else 1


def _no_increase(objective, old, new) -> bool:
    go = objective.value(old)
    gn = objective.value(new)
    if gn < go - REL_TOL * max(abs(go), 1.0):
        return True
    return objective.exact(new) <= objective.exact(old)


def pipage_round(
    z,
    ends,
    vertices,
    *,
    mode: str = RANDOMIZED,
    rng: np.random.Generator | None = None,
    objective=None,
    method: str = "auto",
    check: bool = True,
    steps: list | None = None,
) -> list[int]:
    """Round a spanning-tree-polytope point to a spanning tree; returns edge indices.

    Each step swaps weight between the two lowest-index fractional edges of a
    tight set that is minimal among those containing a fractional edge, moving
    by the full room in one of the two directions. Randomized mode moves up with
    probability down/(up+down), which keeps every marginal; deterministic mode
    moves to the endpoint with the smaller ``objective`` value.
    """
    z = [Q(w) for w in z]
    vertices = sorted(set(vertices))
    _check_point(z, ends, vertices)
    if check:
        bad = spanning_tree_violation(z, ends, vertices, method)
        if bad:
            raise PolytopeError(bad)
    if mode == RANDOMIZED:
        if rng is None:
            raise ValueError("randomized pipage needs an explicit rng")
    elif mode == DETERMINISTIC:
        if objective is None:
            raise ValueError("deterministic pipage needs an objective")
    else:
        raise ValueError(f"unknown mode {mode!r}")
    while any(0 < w < 1 for w in z):
        oracle = _oracle(z, ends, vertices, method)
        i, j, tight = _pick_pair(z, ends, oracle)
        up = _room(z, ends, oracle, i, j)
        down = _room(z, ends, oracle, j, i)
        if up <= 0 or down <= 0:
            raise RoundingError(f"no room to swap edges {i} and {j}")
        hi = list(z)
        hi[i] += up
        hi[j] -= up
        lo = list(z)
        lo[i] -= down
        lo[j] += down
        p_up = down / (up + down)
        # the two outcomes average back to z
        assert p_up * up - (1 - p_up) * down == 0
        if mode == RANDOMIZED:
            go_up = rng.random() < float(p_up)
        else:
            go_up = _choose_float_then_exact(objective, hi, lo) == 0
            new = hi if go_up else lo
            if not _no_increase(objective, z, new):
                raise RoundingError("objective increased during deterministic pipage")
        z = hi if go_up else lo
        if steps is not None:
            steps.append(PipageStep(i, j, tight, up, down, up if go_up else -down))
    chosen = [k for k, w in enumerate(z) if w == 1]
    if len(chosen) != len(vertices) - 1:
        raise RoundingError(f"rounded support has {len(chosen)} edges, expected {len(vertices) - 1}")
    if not Multigraph(vertices, [ends[k] for k in chosen]).is_connected():
        raise RoundingError("rounded support is not spanning")
    return chosen


# ---------------------------------------------------------------------------
# walk objective and selection


class WalkObjective:
    """g(z) = sum_W c(W) z_W + sum_{v outside the anchors} pi_v prod_{W containing v} (1 - z_W).

    ``z`` is indexed like ``fam.base_edges``; the e0 coordinate is ignored.
    """

    def __init__(self, fam: WalkFamily, inst: Instance, penalties=None):
        self.fam = fam
        if penalties is None:
            penalties = inst.penalty
        self.costs = [w.cost(inst) for w in fam.walks]
        anchors = set(fam.vertices)
        self.terms = []
        for v in sorted(penalties):
            if v in anchors:
                continue
            p = Q(penalties[v])
            if p == 0:
                continue
            self.terms.append((p, [k for k, w in enumerate(fam.walks) if v in w.vertices]))
        self.fcosts = [float(c) for c in self.costs]

    def _check(self, z) -> None:
        if len(z) != len(self.fam.walks) + 1:
            raise ValueError(f"point has {len(z)} coordinates, family has {len(self.fam.walks) + 1} edges")

    def value(self, z) -> float:
        self._check(z)
        zf = [float(w) for w in z]
        total = sum(c * w for c, w in zip(self.fcosts, zf))
        for p, ws in self.terms:
            prod = 1.0
            for k in ws:
                prod *= 1.0 - zf[k]
            total += float(p) * prod
        return total

    def exact(self, z) -> Q:
        self._check(z)
        total = sum((c * Q(w) for c, w in zip(self.costs, z)), ZERO)
        for p, ws in self.terms:
            prod = ONE
            for k in ws:
                prod *= 1 - Q(z[k])
            total += p * prod
        return total


def walk_objective_g(z, fam: WalkFamily, inst: Instance, penalties=None) -> float:
    return WalkObjective(fam, inst, penalties).value(z)


@dataclass
class WalkSelection:
    H: Multigraph
    chosen: list[int]  # indices into fam.walks
    steps: list = field(default_factory=list)

    def cost_plus_penalty(self, inst: Instance) -> Q:
        covered = self.H.vertices
        pen = sum((p for v, p in inst.penalty.items() if v not in covered), ZERO)
        return self.H.cost(inst) + pen


def select_walks(
    fam: WalkFamily,
    inst: Instance,
    mode: str = DETERMINISTIC,
    rng: np.random.Generator | None = None,
    *,
    method: str = "auto",
    check: bool = True,
    record: bool = False,
) -> WalkSelection:
    """Round z0 to a spanning tree of the anchor graph and replace each chosen
    parallel edge by its walk."""
    steps = [] if record else None
    obj = WalkObjective(fam, inst) if mode == DETERMINISTIC else None
    chosen = pipage_round(
        fam.z0(),
        fam.base_edges,
        fam.vertices,
        mode=mode,
        rng=rng,
        objective=obj,
        method=method,
        check=check,
        steps=steps,
    )
    e0_index = len(fam.walks)
    if e0_index in chosen:
        raise RoundingError("e0 carries no weight and cannot be selected")
    H = Multigraph(fam.vertices)
    for k in chosen:
        for a, b in fam.walks[k].edges:
            H.add(a, b)
    if check:
        odd = set(H.odd_vertices())
        if not odd <= set(fam.vertices):
            raise RoundingError(f"H has odd vertices {sorted(odd - set(fam.vertices))} outside the anchors")
        if not H.is_connected():
            raise RoundingError("H is disconnected")
    return WalkSelection(H, chosen, steps or [])


@dataclass
class WalkBound:
    """Rational part plus a sum of penalty * exp(-3y/4) terms with y > 0."""

    exact: Q
    terms: list  # (penalty, y) pairs

    def mp(self, dps: int = 50):
        with mpmath.workdps(dps):
            total = mpmath.mpf(int(self.exact.numerator)) / int(self.exact.denominator)
            for p, y in self.terms:
                mp = mpmath.mpf(int(p.numerator)) / int(p.denominator)
                my = mpmath.mpf(int(y.numerator)) / int(y.denominator)
                total += mp * mpmath.exp(-3 * my / 4)
            return +total

    def __float__(self) -> float:
        return float(self.mp())

    def admits(self, value: Q, dps: int = 50) -> bool:
        """Exact rational ``value`` <= bound (exact when no exponential remains)."""
        rest = value - self.exact
        if not self.terms:
            return rest <= 0
        if rest <= 0:
            return True
        with mpmath.workdps(dps):
            v = mpmath.mpf(int(rest.numerator)) / int(rest.denominator)
            return bool(v <= self.mp(dps) - mpmath.mpf(int(self.exact.numerator)) / int(self.exact.denominator))


def walk_bound(fam: WalkFamily, inst: Instance, dec: AnchoredTreeDecomposition) -> WalkBound:
    """Closed-form bound on c(H) + pi(V minus V[H]):
    sum_T mu_T (c(backbone) + 3/2 c(limbs)) + sum_{v outside anchors} pi_v exp(-3 y_v / 4)."""
    lin = ZERO
    for tree in dec.trees:
        bb, limbs = backbone_limbs(tree)
        cb = sum((inst.d(a, b) for a, b in bb), ZERO)
        cl = sum((inst.d(a, b) for a, b in limbs), ZERO)
        lin += tree.weight * (cb + Q(3, 2) * cl)
    anchors = set(fam.vertices)
    terms = []
    for v in inst.vertices:
        if v in anchors:
            continue
        p = inst.penalty.get(v, ZERO)
        if p == 0:
            continue
        y = fam.coverage.get(v, ZERO)
        if y == 0:
            lin += p
        else:
            terms.append((p, y))
    return WalkBound(lin, terms)


def within_bound(value: Q, bound: WalkBound, dps: int = 50) -> bool:
    return bound.admits(value, dps)
