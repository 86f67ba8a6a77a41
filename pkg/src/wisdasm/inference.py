"""Constraint inference: which weight vectors make the labeled schedule win.

Given candidate blocks labeled against ground truth (true / false /
undetermined), these algorithms enumerate symbolic schedules -- tuples of
(symbolic weight, score) -- and emit strict linear inequalities stating that
a chosen maximal-score schedule outweighs every lower-score alternative.

Two variants: a naive reference that materializes every schedule, and the
production variant that decomposes the problem into independent sub-problems,
collapses the frontier at true blocks, and prunes with schedule/constraint
subsumption. The optimized output need not be syntactically equal to the
naive output, but any weights satisfying it make the exact resolver pick an
optimal schedule.
"""

from __future__ import annotations

from dataclasses import dataclass

from .heuristics import REGISTRY
from .linexpr import Constraint, LinearExpr, provably_nonneg
from .model import ModelError, block_order

NAIVE_CAP = 1 << 18
FRONTIER_CAP = 4096

TRUE_LABEL = 1
FALSE_LABEL = -1
UNDET_LABEL = 0


class NoOptimalSchedule(ModelError):
    """No schedule can contain every true block (overlap or forced false block)."""


class InstanceTooLarge(ModelError):
    """The naive enumeration exceeded its schedule-count cap."""


class ScheduleCapExceeded(ModelError):
    """An optimized sub-problem frontier exceeded its cap after simplification."""


def update_score(score, label):
    """Incremental score update: poison sticks, true blocks count."""
    if score == -1 or label == FALSE_LABEL:
        return -1
    if label == TRUE_LABEL:
        return score + 1
    return score


@dataclass(frozen=True)
class SymbolicSchedule:
    weight: LinearExpr
    score: int
    members: tuple  # sorted 1-based block indices (canonical problem order)

    def sort_key(self, registry=REGISTRY):
        return (-self.score, -self.weight.positive_class_sum(), self.members)


EMPTY_SCHEDULE = SymbolicSchedule(LinearExpr.zero(), 0, ())


def subsumes_schedule(a, b, registry=REGISTRY):
    """True when a's weight provably dominates b's and a's score is <= b's,
    making b redundant for constraint generation."""
    return a.score <= b.score and provably_nonneg(a.weight - b.weight, registry)


def subsumes_constraint(c1, c2, registry=REGISTRY):
    """True when c1 implies c2: the difference of differences is provably >= 0."""
    return provably_nonneg(c2.diff - c1.diff, registry)


@dataclass(frozen=True)
class ScheduleProblem:
    """Labeled, canonically ordered instance of the scheduling DP."""

    order: tuple  # blocks in canonical order
    pred: tuple  # 1-based predecessor index per block
    exprs: tuple  # symbolic weight per block
    labels: tuple  # TRUE_LABEL / FALSE_LABEL / UNDET_LABEL per block

    @property
    def size(self):
        return len(self.order)

    @property
    def true_count(self):
        return sum(1 for l in self.labels if l == TRUE_LABEL)


def build_problem(blocks, partition, counts, registry=REGISTRY):
    """Assemble a ScheduleProblem from labeled candidate blocks.

    `counts` maps block -> {heuristic name: match count}; labels come from
    the partition's true/false sets, everything else undetermined.
    """
    from .schedule import compute_pred  # local import to avoid a cycle

    order = tuple(block_order(blocks))
    pred = tuple(compute_pred(order))
    exprs = tuple(
        LinearExpr.from_counts(counts.get(b, {}), b.size, registry) for b in order
    )
    labels = []
    for blk in order:
        if blk in partition.true_blocks:
            labels.append(TRUE_LABEL)
        elif blk in partition.false_blocks:
            labels.append(FALSE_LABEL)
        else:
            labels.append(UNDET_LABEL)
    return ScheduleProblem(order, pred, exprs, tuple(labels))


def _dedup(schedules):
    """Collapse equal (weight, score) tuples, keeping the smallest member set."""
    best = {}
    for s in schedules:
        key = (s.weight, s.score)
        kept = best.get(key)
        if kept is None or s.members < kept.members:
            best[key] = s
    return sorted(best.values(), key=lambda s: s.sort_key())


def best_schedule(schedules, registry=REGISTRY):
    """Maximal score, then highest positive-class coefficient sum, then the
    lexicographically smallest member set."""
    return min(
        schedules,
        key=lambda s: (-s.score, -s.weight.positive_class_sum(), s.members),
    )


def _extend(sched, index, expr, label):
    return SymbolicSchedule(
        sched.weight + expr,
        update_score(sched.score, label),
        sched.members + (index,),
    )


def simplify_schedules(schedules, registry=REGISTRY):
    """Drop every schedule that some other (deduped) schedule subsumes."""
    pool = _dedup(schedules)
    kept = []
    for s in pool:
        if not any(o is not s and subsumes_schedule(o, s, registry) for o in pool):
            kept.append(s)
    return kept


def simplify_constraints(constraints, registry=REGISTRY):
    """Canonicalize, dedupe, and drop constraints implied by another one."""
    pool = sorted({c.canonical() for c in constraints}, key=lambda c: c.sort_key(registry))
    kept = []
    for c in pool:
        if not any(o is not c and subsumes_constraint(o, c, registry) for o in pool):
            kept.append(c)
    return kept


def infer_naive(problem, cap=NAIVE_CAP, registry=REGISTRY):
    """Full schedule enumeration (reference semantics, exponential)."""
    frontier = [EMPTY_SCHEDULE]
    history = [frontier]
    for i in range(1, problem.size + 1):
        expr = problem.exprs[i - 1]
        label = problem.labels[i - 1]
        take = [_extend(s, i, expr, label) for s in history[problem.pred[i - 1]]]
        merged = _dedup(take + history[i - 1])
        if len(merged) > cap:
            raise InstanceTooLarge(
                f"enumeration reached {len(merged)} schedules at block {i} (cap {cap})"
            )
        history.append(merged)
    final = history[problem.size]
    best = best_schedule(final, registry)
    if best.score != problem.true_count:
        raise NoOptimalSchedule(
            f"best schedule score {best.score} < {problem.true_count} true blocks"
        )
    out = {
        Constraint.greater(best.weight, r.weight)
        for r in final
        if r.score < best.score
    }
    return tuple(sorted(out, key=lambda c: c.sort_key(registry)))


def decompose(problem):
    """Split into independent sub-problems: cut after index i (1-based) when
    every later block's predecessor is at or past i. Returns (lo, hi) ranges."""
    n = problem.size
    if n == 0:
        return []
    suffix_min = [n + 1] * (n + 2)
    for j in range(n, 0, -1):
        suffix_min[j] = min(suffix_min[j + 1], problem.pred[j - 1])
    ranges = []
    lo = 1
    for i in range(1, n):
        if suffix_min[i + 1] >= i:
            ranges.append((lo, i))
            lo = i + 1
    ranges.append((lo, n))
    return ranges


def _sub_problem(problem, lo, hi):
    offset = lo - 1
    pred = []
    for j in range(lo, hi + 1):
        p = problem.pred[j - 1]
        if p < offset:
            raise ModelError("decomposition produced a dangling predecessor")
        pred.append(p - offset)
    return (
        ScheduleProblem(
            problem.order[lo - 1 : hi],
            tuple(pred),
            problem.exprs[lo - 1 : hi],
            problem.labels[lo - 1 : hi],
        ),
        offset,
    )


def _infer_sub(problem, offset, cap, registry):
    """Algorithm over one sub-problem; member indices are globalized via offset."""
    frontier = [[EMPTY_SCHEDULE]]
    constraints = [set()]
    for i in range(1, problem.size + 1):
        expr = problem.exprs[i - 1]
        label = problem.labels[i - 1]
        pred_i = problem.pred[i - 1]
        take = [_extend(s, offset + i, expr, label) for s in frontier[pred_i]]
        leave = frontier[i - 1]
        if label == TRUE_LABEL:
            best = best_schedule(take, registry)
            new_cs = {Constraint.greater(best.weight, r.weight) for r in leave}
            frontier.append([best])
            constraints.append(set(simplify_constraints(constraints[pred_i] | new_cs, registry)))
        else:
            merged = simplify_schedules(take + leave, registry)
            if len(merged) > cap:
                raise ScheduleCapExceeded(
                    f"frontier reached {len(merged)} schedules at block {offset + i} (cap {cap})"
                )
            frontier.append(merged)
            constraints.append(
                set(simplify_constraints(constraints[pred_i] | constraints[i - 1], registry))
            )
    final = frontier[problem.size]
    best = best_schedule(final, registry)
    if best.score != problem.true_count:
        raise NoOptimalSchedule(
            f"best schedule score {best.score} < {problem.true_count} true blocks"
        )
    new_cs = {
        Constraint.greater(best.weight, r.weight)
        for r in final
        if r.score < best.score
    }
    return simplify_constraints(new_cs | constraints[problem.size], registry)


def infer_optimized(problem, cap=FRONTIER_CAP, registry=REGISTRY):
    """Decomposed, subsumption-pruned inference (production variant)."""
    out = set()
    for lo, hi in decompose(problem):
        sub, offset = _sub_problem(problem, lo, hi)
        out.update(_infer_sub(sub, offset, cap, registry))
    final = simplify_constraints(out, registry)
    return tuple(sorted(final, key=lambda c: c.sort_key(registry)))
