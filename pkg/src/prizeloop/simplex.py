"""Dense-tableau exact rational simplex with Bland's rule.

Problems are given as ``min c.x`` subject to sparse rows ``a.x (<=|>=|=) b``
and ``x >= 0``. Slack/surplus columns are appended internally, after the
structural columns, in row order. A starting basis (in the extended column
space) may be supplied; if it is primal feasible, phase 1 is skipped.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from prizeloop.rational import ZERO, Q


class LpError(RuntimeError):
    pass


@dataclass
class Row:
    coefs: dict[int, Q]
    sense: str  # "<=", ">=", "="
    rhs: Q
    tag: object = None


@dataclass
class LpResult:
    status: str  # optimal | infeasible | unbounded
    x: list[Q] = field(default_factory=list)  # structural + slack columns
    objective: Q | None = None
    basis: list[int] = field(default_factory=list)
    duals: list[Q] = field(default_factory=list)  # one per row, sign as in a.x ? b
    pivots: int = 0


def standard_form(ncols: int, rows: list[Row]) -> tuple[list[dict[int, Q]], list[Q], int]:
    """Equality rows over structural + slack columns (slack j = ncols + row index)."""
    eq_rows = []
    rhs = []
    for i, row in enumerate(rows):
        coefs = dict(row.coefs)
        if row.sense == "<=":
            coefs[ncols + i] = Q(1)
        elif row.sense == ">=":
            coefs[ncols + i] = Q(-1)
        elif row.sense != "=":
            raise LpError(f"bad sense {row.sense!r}")
        eq_rows.append(coefs)
        rhs.append(Q(row.rhs))
    return eq_rows, rhs, ncols + len(rows)


class Tableau:
    """Row-reduced tableau ``[B^-1 A | B^-1 b]`` plus a reduced-cost row."""

    def __init__(self, eq_rows: list[dict[int, Q]], rhs: list[Q], ncols: int):
        self.m = len(eq_rows)
        self.n = ncols
        self.T: list[list[Q]] = []
        for coefs, b in zip(eq_rows, rhs):
            row = [ZERO] * (ncols + 1)
            for j, a in coefs.items():
                row[j] = Q(a)
            row[ncols] = Q(b)
            self.T.append(row)
        self.basis: list[int] = [-1] * self.m
        self.pivots = 0

    def pivot(self, r: int, j: int) -> None:
        T = self.T
        prow = T[r]
        p = prow[j]
        if p != 1:
            inv = 1 / p
            prow = [v * inv if v else v for v in prow]
            T[r] = prow
        nz = [l for l, v in enumerate(prow) if v]
        for k in range(self.m):
            if k == r:
                continue
            row = T[k]
            f = row[j]
            if f:
                for l in nz:
                    row[l] -= f * prow[l]
        self.basis[r] = j
        self.pivots += 1

    def install_basis(self, basis: list[int]) -> bool:
        """Gauss-Jordan onto the given columns; False if they are singular."""
        used = [False] * self.m
        assigned = [-1] * self.m
        for j in basis:
            r = None
            for k in range(self.m):
                if not used[k] and self.T[k][j] != 0:
                    r = k
                    break
            if r is None:
                return False
            self.pivot(r, j)
            used[r] = True
            assigned[r] = j
        self.basis = assigned
        return all(b >= 0 for b in assigned)

    def reduced_costs(self, c: list[Q]) -> tuple[list[Q], Q]:
        d = list(c) + [ZERO]
        for r, j in enumerate(self.basis):
            cb = c[j]
            if cb:
                row = self.T[r]
                for l in range(self.n + 1):
                    if row[l]:
                        d[l] -= cb * row[l]
        return d[: self.n], -d[self.n]

    def run(self, c: list[Q], allowed: list[bool] | None = None, max_pivots: int = 100000) -> str:
        """Primal simplex from the current (feasible) basis; Bland's rule."""
        d, _ = self.reduced_costs(c)
        n = self.n
        while True:
            j = -1
            for l in range(n):
                if d[l] < 0 and (allowed is None or allowed[l]):
                    j = l
                    break
            if j < 0:
                return "optimal"
            r = -1
            best = None
            for k in range(self.m):
                a = self.T[k][j]
                if a > 0:
                    ratio = self.T[k][n] / a
                    if (
                        best is None
                        or ratio < best
                        or (ratio == best and self.basis[k] < self.basis[r])
                    ):
                        best = ratio
                        r = k
            if r < 0:
                return "unbounded"
            self.pivot(r, j)
            f = d[j]
            prow = self.T[r]
            for l in range(n):
                if prow[l]:
                    d[l] -= f * prow[l]
            if self.pivots > max_pivots:
                raise LpError("pivot limit exceeded")

    def solution(self) -> list[Q]:
        x = [ZERO] * self.n
        for r, j in enumerate(self.basis):
            x[j] = self.T[r][self.n]
        return x


def solve(
    ncols: int,
    rows: list[Row],
    c: list[Q],
    start_basis: list[int] | None = None,
) -> LpResult:
    """Solve ``min c.x`` over the rows with x >= 0 exactly.

    ``c`` covers structural columns only; slack columns cost nothing.
    """
    eq_rows, rhs, ntot = standard_form(ncols, rows)
    m = len(eq_rows)
    cost = [Q(v) for v in c] + [ZERO] * (ntot - ncols)
    if start_basis is not None and len(start_basis) == m:
        tab = Tableau(eq_rows, rhs, ntot)
        if tab.install_basis(start_basis) and all(tab.T[k][ntot] >= 0 for k in range(m)):
            status = tab.run(cost)
            return _finish(tab, status, cost, ntot, ncols, rows)
    # phase 1: flip rows to b >= 0, artificial per row without a +1 slack
    flipped_rows = []
    flipped_rhs = []
    for coefs, b in zip(eq_rows, rhs):
        if b < 0:
            coefs = {j: -a for j, a in coefs.items()}
            b = -b
        flipped_rows.append(coefs)
        flipped_rhs.append(b)
    basis = []
    art_cols = []
    ext_rows = []
    nart = 0
    for i, coefs in enumerate(flipped_rows):
        s = ncols + i
        coefs = dict(coefs)
        if coefs.get(s, ZERO) == 1:
            basis.append(s)
        else:
            a = ntot + nart
            coefs[a] = Q(1)
            art_cols.append(a)
            basis.append(a)
            nart += 1
        ext_rows.append(coefs)
    nfull = ntot + nart
    tab = Tableau(ext_rows, flipped_rhs, nfull)
    tab.basis = basis
    if nart:
        c1 = [ZERO] * ntot + [Q(1)] * nart
        tab.run(c1)
        x = tab.solution()
        if any(x[a] != 0 for a in art_cols):
            return LpResult("infeasible", pivots=tab.pivots)
        # drive artificials out of the basis
        for r, j in enumerate(tab.basis):
            if j >= ntot:
                for l in range(ntot):
                    if tab.T[r][l] != 0:
                        tab.pivot(r, l)
                        break
        # redundant rows keep an artificial at zero; forbid it from re-entering
    allowed = [True] * ntot + [False] * nart
    cost_full = cost + [ZERO] * nart
    status = tab.run(cost_full, allowed)
    return _finish(tab, status, cost_full, nfull, ncols, rows, ntot)


def _finish(tab: Tableau, status, cost, nfull, ncols, rows, ntot=None) -> LpResult:
    ntot = nfull if ntot is None else ntot
    if status != "optimal":
        return LpResult(status, pivots=tab.pivots)
    x = tab.solution()[:ntot]
    obj = sum((cost[j] * x[j] for j in range(ntot) if x[j]), ZERO)
    d, _ = tab.reduced_costs(cost)
    # dual of row i from its slack column: d_s = 0 - y_i * (+-1)
    duals = []
    for i, row in enumerate(rows):
        s = ncols + i
        if row.sense == "<=":
            duals.append(-d[s])
        elif row.sense == ">=":
            duals.append(d[s])
        else:
            duals.append(None)
    return LpResult("optimal", x, obj, [j for j in tab.basis], duals, tab.pivots)


def certify(
    ncols: int, rows: list[Row], c: list[Q], basis: list[int]
) -> tuple[list[Q] | None, bool, bool]:
    """Solve the basis system exactly; report (x, primal_feasible, dual_feasible).

    ``basis`` indexes the structural+slack column space. Returns x=None when
    the basis matrix is singular.
    """
    eq_rows, rhs, ntot = standard_form(ncols, rows)
    cost = [Q(v) for v in c] + [ZERO] * (ntot - ncols)
    tab = Tableau(eq_rows, rhs, ntot)
    if len(basis) != len(eq_rows) or not tab.install_basis(basis):
        return None, False, False
    x = tab.solution()
    primal = all(v >= 0 for v in x)
    d, _ = tab.reduced_costs(cost)
    dual = all(v >= 0 for v in d)
    return x, primal, dual
