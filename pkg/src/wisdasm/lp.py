"""Soft-constraint weight solving, exact over the rationals.

Each inferred constraint ``diff > 0`` becomes a soft row ``diff . w + s >= 1``
with slack ``s >= 0`` (for integer weights, strict positivity is equivalent to
``>= 1``); the solver minimizes the total slack subject to the registry's
sign classes (positive-class weights >= 0, negative-class <= 0). A zero
objective means every constraint is strictly satisfiable.

After substituting ``w = -v`` for negative-class weights, the primal is

    min sum(s)   s.t.  A x + s >= 1,  x >= 0,  s >= 0

whose dual is the bounded problem

    max sum(y)   s.t.  A^T y <= 0,  0 <= y <= 1.

The dual has one row per heuristic (a dozen) and one column per constraint
(tens of thousands), so a revised simplex over exact fractions stays fast:
the basis is tiny, and column pricing is screened with floats before exact
verification. The optimal primal weights are recovered from the final basis
multipliers, which are provably non-negative at optimality, then scaled to
the smallest integer vector; the reported objective and per-constraint
satisfaction are re-verified with exact integer arithmetic.

Total slack alone leaves the weight vector badly underdetermined: any vertex
of the optimal face satisfies the training constraints, but an extremal one
(a few huge weights, the rest zero) flips decisions on inputs the training
set never pinned down. A second pass therefore minimizes ``sum(s) + eps *
sum(x)`` — dual bound ``A^T y <= eps`` — and keeps the result when its exact
total slack still equals the first pass's optimum, shrinking ``eps``
otherwise. That refinement is the lexicographic optimum (slack first, then
L1 mass), and because ``min {sum(x) : A x >= r}`` scales linearly in ``r``,
minimal L1 mass per unit of margin is the same direction as maximal worst
margin per unit of L1 mass: the returned weights are the L1-normalized
max-margin solution over the satisfiable constraints.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import gcd, lcm

import numpy as np

from .heuristics import INT64_MAX, REGISTRY, WeightOverflow, check_weights
from .model import ModelError

BLAND_TRIGGER = 24  # consecutive degenerate pivots before Bland's rule kicks in
SCREEN_WIDTH = 32  # float-screened candidate columns verified exactly per pivot
MAX_ITERATIONS = 500_000
REFINE_EPSILON = Fraction(1, 64)  # initial L1 perturbation weight
REFINE_SHRINK = 64  # epsilon divisor per refinement retry
REFINE_ROUNDS = 32  # retries before concluding the solver is inconsistent


class SolverInternalError(ModelError):
    """The simplex reached a state that exact arithmetic should preclude."""


@dataclass(frozen=True)
class SolveReport:
    weights: dict  # heuristic name -> integer weight, sign classes respected
    objective: Fraction  # exact optimal total slack; 0 iff all satisfiable
    satisfied: int  # constraints with diff > 0 under the integer weights
    violated: int  # constraints with diff <= 0 under the integer weights
    iterations: int
    used_bland: bool


def build_rows(constraints, registry=REGISTRY):
    """Integer coefficient rows (one per constraint) in registry order, with
    negative-class columns negated so every variable is >= 0."""
    names = [h.name for h in registry]
    signs = [1 if h.positive else -1 for h in registry]
    rows = []
    for con in constraints:
        row = [con.diff.coeff(n) * s for n, s in zip(names, signs)]
        rows.append(tuple(row))
    return rows


class _DualSimplex:
    """Bounded-variable revised simplex for: max sum(y), A y <= b, 0 <= y <= 1.

    Columns 0..n-1 are the y variables (bounds [0, 1], objective 1); columns
    n..n+m-1 are slacks (bounds [0, inf), objective 0). The right-hand side
    b = bound * ones is non-negative, so the all-slack basis with y = 0 is
    feasible. bound = 0 solves the pure slack minimum; bound = eps solves the
    L1-perturbed variant (primal objective sum(s) + eps * sum(x)).
    """

    def __init__(self, rows, bound=Fraction(0)):
        self.bound = Fraction(bound)
        self.n = len(rows)
        self.m = len(rows[0]) if rows else 0
        self.cols = [tuple(row) for row in rows]  # y column i = constraint row i
        self.float_cols = (
            np.array(self.cols, dtype=float).T if self.n else np.zeros((self.m, 0))
        )
        self.basis = list(range(self.n, self.n + self.m))  # slack columns
        self.in_basis = [False] * self.n + [True] * self.m
        self.at_upper = [False] * self.n  # nonbasic y position (upper vs lower)
        self.rhs = [0] * self.m  # running sum of columns nonbasic at upper
        self.binv = [
            [Fraction(int(i == j)) for j in range(self.m)] for i in range(self.m)
        ]
        self.iterations = 0
        self.used_bland = False

    def _toggle_upper(self, j, to_upper):
        """Flip a y column's nonbasic bound, keeping the rhs sum in sync."""
        if self.at_upper[j] == to_upper:
            return
        self.at_upper[j] = to_upper
        col = self.cols[j]
        sign = 1 if to_upper else -1
        for k in range(self.m):
            if col[k]:
                self.rhs[k] += sign * col[k]

    def _column(self, j):
        if j < self.n:
            return self.cols[j]
        unit = [0] * self.m
        unit[j - self.n] = 1
        return unit

    def _obj_coeff(self, j):
        return 1 if j < self.n else 0

    def _pi(self):
        pi = [Fraction(0)] * self.m
        for r, j in enumerate(self.basis):
            c = self._obj_coeff(j)
            if c:
                for k in range(self.m):
                    pi[k] += c * self.binv[r][k]
        return pi

    def _basic_values(self):
        """x_B = B^-1 * (b - sum of columns nonbasic at upper)."""
        diffs = [self.bound - self.rhs[k] for k in range(self.m)]
        return [
            sum(self.binv[r][k] * d for k, d in enumerate(diffs) if d)
            for r in range(self.m)
        ]

    def _reduced_cost(self, j, pi):
        col = self._column(j)
        return self._obj_coeff(j) - sum(p * a for p, a in zip(pi, col) if a)

    def _eligible(self, j, rc):
        if self.in_basis[j]:
            return False
        if j < self.n and self.at_upper[j]:
            return rc < 0
        return rc > 0

    def _pick_entering(self, pi):
        # Float screen: rank columns by apparent reduced-cost merit, then
        # verify exactly. Falls back to a full exact scan when the screen
        # finds nothing (so optimality is always certified exactly).
        if self.n:
            pi_f = np.array([float(p) for p in pi])
            rc_f = 1.0 - pi_f @ self.float_cols
            merit = np.where(
                [not self.in_basis[j] and self.at_upper[j] for j in range(self.n)],
                -rc_f,
                rc_f,
            )
            order = np.argsort(-merit, kind="stable")[:SCREEN_WIDTH]
            best = None
            for j in map(int, order):
                if self.in_basis[j] or merit[j] <= 1e-9:
                    continue
                rc = self._reduced_cost(j, pi)
                if self._eligible(j, rc) and (best is None or abs(rc) > abs(best[1])):
                    best = (j, rc)
            if best is not None:
                return best
        for j in range(self.n + self.m):  # exact full scan
            if self.in_basis[j]:
                continue
            rc = self._reduced_cost(j, pi)
            if self._eligible(j, rc):
                return (j, rc)
        return None

    def _pick_entering_bland(self, pi):
        for j in range(self.n + self.m):
            if self.in_basis[j]:
                continue
            rc = self._reduced_cost(j, pi)
            if self._eligible(j, rc):
                return (j, rc)
        return None

    def _pivot(self, entering, rc):
        col = self._column(entering)
        direction = [
            sum(self.binv[r][k] * col[k] for k in range(self.m) if col[k])
            for r in range(self.m)
        ]
        values = self._basic_values()
        increasing = rc > 0  # from lower bound up, else from upper bound down
        sign = 1 if increasing else -1

        limit = None  # (t, leaving row or None for a bound flip)
        if entering < self.n:
            limit = (Fraction(1), None)
        for r in range(self.m):
            d = sign * direction[r]
            jb = self.basis[r]
            if d > 0:
                t = values[r] / d  # basic variable falls to its lower bound 0
            elif d < 0 and jb < self.n:
                t = (1 - values[r]) / (-d)  # basic y rises to its upper bound
            else:
                continue
            if limit is None or t < limit[0] or (t == limit[0] and limit[1] is not None and jb < self.basis[limit[1]]):
                limit = (t, r)
        if limit is None:
            raise SolverInternalError("unbounded direction in a bounded dual")

        t, leaving_row = limit
        degenerate = t == 0
        if leaving_row is None:
            self._toggle_upper(entering, not self.at_upper[entering])
            return degenerate
        leaving = self.basis[leaving_row]
        d = sign * direction[leaving_row]
        self.in_basis[leaving] = False
        self.in_basis[entering] = True
        self.basis[leaving_row] = entering
        if leaving < self.n:
            self.at_upper[leaving] = False
            self._toggle_upper(leaving, d < 0)  # rose to upper vs fell to lower
        if entering < self.n:
            self._toggle_upper(entering, False)  # basic now; drop from the sum
        piv = direction[leaving_row]
        if piv == 0:
            raise SolverInternalError("zero pivot element")
        row = [x / piv for x in self.binv[leaving_row]]
        self.binv[leaving_row] = row
        for r in range(self.m):
            if r != leaving_row and direction[r]:
                f = direction[r]
                self.binv[r] = [a - f * b for a, b in zip(self.binv[r], row)]
        return degenerate

    def solve(self):
        streak = 0
        while True:
            self.iterations += 1
            if self.iterations > MAX_ITERATIONS:
                raise SolverInternalError("iteration limit exceeded")
            pi = self._pi()
            if streak >= BLAND_TRIGGER:
                self.used_bland = True
                pick = self._pick_entering_bland(pi)
            else:
                pick = self._pick_entering(pi)
            if pick is None:
                return pi
            degenerate = self._pivot(*pick)
            streak = streak + 1 if degenerate else 0

    def objective(self):
        values = self._basic_values()
        total = Fraction(0)
        for r, j in enumerate(self.basis):
            if j < self.n:
                total += values[r]
        for j in range(self.n):
            if not self.in_basis[j] and self.at_upper[j]:
                total += 1
        return total


def _integerize(fractions_by_name):
    nonzero = [f for f in fractions_by_name.values() if f]
    if not nonzero:
        return {n: 0 for n in fractions_by_name}
    scale = lcm(*(f.denominator for f in nonzero))
    ints = {n: int(f * scale) for n, f in fractions_by_name.items()}
    shrink = gcd(*(abs(v) for v in ints.values()))
    if shrink > 1:
        ints = {n: v // shrink for n, v in ints.items()}
    if any(abs(v) > INT64_MAX for v in ints.values()):
        raise WeightOverflow("scaled weights exceed the signed 64-bit range")
    return ints


def _recover_primal(simplex, rows, registry):
    """Solve, pull the primal weights out of the basis multipliers, and
    certify them by exact strong duality. Returns (primal, total slack)."""
    pi = simplex.solve()
    # Multipliers are the primal variables; optimality of the slack columns
    # (reduced cost -pi_k <= 0) guarantees pi >= 0.
    if any(p < 0 for p in pi):
        raise SolverInternalError("negative basis multiplier at optimality")
    primal = {h.name: pi[k] for k, h in enumerate(registry)}
    slack_total = Fraction(0)
    for row in rows:
        act = sum(c * primal[h.name] for c, h in zip(row, registry))
        slack_total += max(Fraction(0), 1 - act)
    if slack_total + simplex.bound * sum(pi) != simplex.objective():
        raise SolverInternalError("primal/dual objective mismatch")
    return primal, slack_total


def solve_weights(constraints, registry=REGISTRY):
    """Exact soft-constraint optimum as integer weights plus a report."""
    constraints = list(constraints)
    rows = build_rows(constraints, registry)
    if not rows:
        weights = {h.name: 0 for h in registry}
        return SolveReport(weights, Fraction(0), 0, 0, 0, False)

    simplex = _DualSimplex(rows)
    primal, objective = _recover_primal(simplex, rows, registry)
    iterations = simplex.iterations
    used_bland = simplex.used_bland

    # Refine to the lexicographic optimum (total slack first, then L1 mass):
    # the perturbed solve minimizes sum(s) + eps * sum(x), so whenever its
    # exact slack total matches the true optimum, its L1 mass is minimal
    # among all slack-optimal vectors; otherwise eps was too coarse.
    eps = REFINE_EPSILON
    for _ in range(REFINE_ROUNDS):
        refiner = _DualSimplex(rows, bound=eps)
        refined, slack_total = _recover_primal(refiner, rows, registry)
        iterations += refiner.iterations
        used_bland = used_bland or refiner.used_bland
        if slack_total == objective:
            primal = refined
            break
        eps /= REFINE_SHRINK
    else:
        raise SolverInternalError("refinement never reached the slack optimum")

    ints = _integerize(primal)
    weights = {}
    for h in registry:
        v = ints[h.name]
        weights[h.name] = v if h.positive else -v
    check_weights(weights, registry)

    satisfied = sum(1 for con in constraints if con.satisfied(weights))
    return SolveReport(
        weights=weights,
        objective=objective,
        satisfied=satisfied,
        violated=len(constraints) - satisfied,
        iterations=iterations,
        used_bland=used_bland,
    )
